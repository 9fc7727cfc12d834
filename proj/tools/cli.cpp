#include "cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "attn_atlas/analytics.hpp"
#include "attn_atlas/codec.hpp"
#include "attn_atlas/corpus_builder.hpp"
#include "attn_atlas/dump.hpp"
#include "attn_atlas/dump_io.hpp"
#include "attn_atlas/errors.hpp"
#include "attn_atlas/headlens.hpp"
#include "attn_atlas/model.hpp"
#include "attn_atlas/piling.hpp"
#include "attn_atlas/service.hpp"
#include "attn_atlas/weights_io.hpp"

namespace attn_atlas::cli {
namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError {
  std::string message;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

AttnType parse_type(const std::string& text) {
  const auto type = parse_attn_type(text);
  if (!type) throw UsageError{"unknown attention type '" + text + "'"};
  return *type;
}

void emit_json(const nlohmann::json& doc, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    write_json_file(out_path, doc);
  }
}

void print_report(const ValidationReport& report, std::ostream& out) {
  for (const Violation& v : report.errors) {
    out << "error: " << v.kind;
    if (!v.sentence_id.empty()) out << " sentence=" << v.sentence_id;
    if (!v.attn_type.empty()) out << " type=" << v.attn_type;
    if (v.layer > 0) out << " layer=" << v.layer;
    if (v.head > 0) out << " head=" << v.head;
    if (v.row >= 0) out << " row=" << v.row;
    if (v.col >= 0) out << " col=" << v.col;
    out << " measured=" << v.measured << " : " << v.detail << '\n';
  }
  for (const std::string& w : report.warnings) out << "warning: " << w << '\n';
  out << (report.accepted() ? "OK" : "REJECTED") << ": " << report.errors.size()
      << " error(s), " << report.warnings.size() << " warning(s)\n";
}

HttpFrontend* g_frontend = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_frontend) g_frontend->stop();
}

struct GenOptions {
  std::uint64_t seed = 0;
  int layers = 4;
  int heads = 8;
  int d_model = 64;
  int d_ff = 0;
  std::string scale_mode = "sqrt_d_model";
  std::string sentences;
  std::string pos;
  std::string out;
  std::string weights;
  std::string save_weights;
  std::string provenance;
  bool no_vectors = false;
};

int run_gen(const GenOptions& o, std::ostream& out) {
  const std::string text = read_text(o.sentences);
  std::optional<std::string> pos_text;
  if (!o.pos.empty()) pos_text = read_text(o.pos);
  const auto sentences =
      parse_sentence_text(text, pos_text ? std::optional<std::string_view>(*pos_text)
                                         : std::nullopt);
  const Vocabulary vocab = Vocabulary::build(sentences);

  WeightSet weights;
  if (!o.weights.empty()) {
    weights = weights_from_json(read_json_file(o.weights));
    if (weights.vocab_size() < vocab.size()) {
      fail(ErrorKind::input, "weight file vocabulary (" + std::to_string(weights.vocab_size()) +
                                 ") is smaller than the sentence vocabulary (" +
                                 std::to_string(vocab.size()) + ")");
    }
  } else {
    ModelConfig config;
    config.n_layers = o.layers;
    config.n_heads = o.heads;
    config.d_model = o.d_model;
    config.d_ff = o.d_ff;
    config.scale_mode = *parse_scale_mode(o.scale_mode);
    config.seed = o.seed;
    try {
      config.validate();
    } catch (const Error& e) {
      throw UsageError{e.what()};
    }
    weights = init_weights(config, vocab.size());
  }

  GenerateOptions options;
  options.keep_vectors = !o.no_vectors;
  options.provenance = o.provenance.empty()
                           ? "attn-atlas gen --seed " + std::to_string(weights.config.seed)
                           : o.provenance;
  const CorpusStore store = generate_corpus(sentences, vocab, weights, options);
  write_json_file(o.out, export_dump(store));
  if (!o.save_weights.empty()) write_json_file(o.save_weights, weights_to_json(weights));

  out << "seed: " << weights.config.seed << '\n'
      << "sentences: " << store.size() << '\n'
      << "layers: " << weights.config.n_layers << ", heads: " << weights.config.n_heads
      << ", d_model: " << weights.config.d_model << '\n'
      << "wrote " << o.out << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"attn-atlas: attention analytics for multi-head self-attention models"};
  app.name("attn-atlas");
  app.require_subcommand(1);

  const std::vector<std::string> types{"encoder_self", "decoder_self", "encoder_decoder"};
  const CLI::Validator one_based(
      [](std::string& value) -> std::string {
        int parsed = 0;
        if (!CLI::detail::lexical_cast(value, parsed) || parsed < 1) {
          return "layers and heads are 1-based, got " + value;
        }
        return {};
      },
      "INT>=1");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a dump with the seeded toy model");
  gen_cmd->add_option("--seed", gen.seed, "weight seed (default 0)");
  gen_cmd->add_option("--layers", gen.layers, "number of layers")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--heads", gen.heads, "heads per layer")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-model", gen.d_model, "model width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-ff", gen.d_ff, "feed-forward width (0 = 4*d_model)")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--scale-mode", gen.scale_mode, "softmax scale")
      ->check(CLI::IsMember({"sqrt_d_model", "sqrt_d_k"}));
  gen_cmd->add_option("--sentences", gen.sentences, "one sentence per line, 'src ||| tgt'")
      ->required();
  gen_cmd->add_option("--pos", gen.pos, "parallel file of POS tags");
  gen_cmd->add_option("--out", gen.out, "output dump (.json or .json.gz)")->required();
  gen_cmd->add_option("--weights", gen.weights, "load weights instead of seeding");
  gen_cmd->add_option("--save-weights", gen.save_weights, "write the weights used");
  gen_cmd->add_option("--provenance", gen.provenance, "free-text source description");
  gen_cmd->add_flag("--no-vectors", gen.no_vectors, "omit query/key vectors");

  std::string dump_path;
  bool json_output = false;
  auto* validate_cmd = app.add_subcommand("validate", "check a dump and print its report");
  validate_cmd->add_option("dump", dump_path, "dump file")->required();
  validate_cmd->add_flag("--json", json_output, "print the report as JSON");

  std::string sentence_id;
  std::string type_name = "encoder_self";
  std::string out_path;
  int layer = 0;

  std::string metric_name = "entropy";
  std::string direction_name = "asc";
  auto* sort_cmd = app.add_subcommand("sort", "order one layer's heads by a metric");
  sort_cmd->add_option("dump", dump_path, "dump file")->required();
  sort_cmd->add_option("--sentence", sentence_id, "sentence id")->required();
  sort_cmd->add_option("--layer", layer, "1-based layer")->required()->check(one_based);
  sort_cmd->add_option("--metric", metric_name, "entropy or position")
      ->check(CLI::IsMember({"entropy", "position"}));
  sort_cmd->add_option("--direction", direction_name, "asc or desc")
      ->check(CLI::IsMember({"asc", "desc"}));
  sort_cmd->add_option("--type", type_name, "attention type")->check(CLI::IsMember(types));
  sort_cmd->add_flag("--json", json_output, "print the payload as JSON");

  double threshold = kDefaultPileThreshold;
  auto* pile_cmd = app.add_subcommand("pile", "cluster one layer's heads into piles");
  pile_cmd->add_option("dump", dump_path, "dump file")->required();
  pile_cmd->add_option("--sentence", sentence_id, "sentence id")->required();
  pile_cmd->add_option("--layer", layer, "1-based layer")->required()->check(one_based);
  pile_cmd->add_option("--threshold", threshold, "Euclidean merge threshold")
      ->check(CLI::NonNegativeNumber);
  pile_cmd->add_option("--type", type_name, "attention type")->check(CLI::IsMember(types));
  pile_cmd->add_option("--out", out_path, "write piles with mean matrices as JSON");

  int head = 0;
  int k = kDefaultClusterCount;
  std::uint64_t seed = 0;
  auto* lens_cmd = app.add_subcommand("headlens", "profile one head's query/key clusters");
  lens_cmd->add_option("dump", dump_path, "dump file")->required();
  lens_cmd->add_option("--layer", layer, "1-based layer")->required()->check(one_based);
  lens_cmd->add_option("--head", head, "1-based head")->required()->check(one_based);
  lens_cmd->add_option("--k", k, "clusters per side")->check(CLI::PositiveNumber);
  lens_cmd->add_option("--seed", seed, "k-means++ seed (default 0)");
  lens_cmd->add_option("--type", type_name, "attention type")->check(CLI::IsMember(types));
  lens_cmd->add_option("--out", out_path, "profile document (stdout when omitted)");

  double prune = kDefaultSankeyPrune;
  auto* sankey_cmd = app.add_subcommand("sankey", "write layer-to-layer flow edges");
  sankey_cmd->add_option("dump", dump_path, "dump file")->required();
  sankey_cmd->add_option("--sentence", sentence_id, "sentence id")->required();
  sankey_cmd->add_option("--prune", prune, "drop edges below this weight")
      ->check(CLI::Range(0.0, 1.0));
  sankey_cmd->add_option("--type", type_name, "self-attention type")
      ->check(CLI::IsMember({"encoder_self", "decoder_self"}));
  sankey_cmd->add_option("--out", out_path, "edge list document (stdout when omitted)");

  std::string host = "127.0.0.1";
  int port = kDefaultServicePort;
  std::vector<std::string> dumps;
  std::string static_dir;
  auto* serve_cmd = app.add_subcommand("serve", "serve the JSON API");
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "TCP port")
      ->envname("ATTN_ATLAS_PORT")
      ->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--dump", dumps, "dump to load (repeatable)");
  serve_cmd->add_option("--static-dir", static_dir, "UI bundle served at /");

  int indent = -1;
  auto* export_cmd = app.add_subcommand("export", "re-serialise a validated dump");
  export_cmd->add_option("dump", dump_path, "dump file")->required();
  export_cmd->add_option("--out", out_path, "output file (.gz compresses)")->required();
  export_cmd->add_option("--indent", indent, "pretty-print indent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen(gen, out);

    if (validate_cmd->parsed()) {
      ValidationReport report;
      try {
        report = validate_dump(read_json_file(dump_path));
      } catch (const Error& e) {
        report.errors.push_back({"", "", 0, 0, -1, -1, "structure", 0.0, e.what()});
      }
      if (json_output) {
        out << report_to_json(report).dump(2) << '\n';
      } else {
        print_report(report, out);
      }
      return report.accepted() ? 0 : kExitFailure;
    }

    if (serve_cmd->parsed()) {
      std::vector<std::filesystem::path> paths(dumps.begin(), dumps.end());
      CorpusStore store;
      try {
        store = load_corpora(paths);
      } catch (const ValidationFailure& e) {
        err << "refusing to start: " << e.what() << '\n';
        print_report(e.report(), err);
        return kExitFailure;
      }
      AtlasService service(std::move(store));
      ServerOptions options;
      options.host = host;
      options.port = port;
      options.static_dir = static_dir;
      HttpFrontend frontend(service, options);
      const int bound = frontend.bind();
      if (bound < 0) {
        err << "cannot bind " << host << ":" << port << '\n';
        return kExitFailure;
      }
      out << "serving " << service.snapshot()->size() << " sentence(s) on http://" << host
          << ":" << bound << "/api/v1" << std::endl;
      g_frontend = &frontend;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      const bool clean = frontend.listen();
      g_frontend = nullptr;
      return clean ? 0 : kExitFailure;
    }

    const CorpusStore store = load_corpus(dump_path);

    if (export_cmd->parsed()) {
      write_json_file(out_path, export_dump(store), indent);
      out << "wrote " << out_path << " (" << store.size() << " sentences)\n";
      return 0;
    }

    const AttnType type = parse_type(type_name);

    if (sort_cmd->parsed()) {
      const SentenceEntry& s = store.at(sentence_id);
      const HeadMetric metric = *parse_head_metric(metric_name);
      const SortDirection direction = *parse_sort_direction(direction_name);
      const auto scores = sort_heads(s.layer(type, layer), metric, direction);
      if (json_output) {
        out << sort_payload(s, type, layer, metric, direction, scores).dump(2) << '\n';
      } else {
        out << "rank head " << metric_name << '\n';
        for (std::size_t i = 0; i < scores.size(); ++i) {
          out << std::setw(4) << i + 1 << ' ' << std::setw(4) << scores[i].head << ' '
              << std::setprecision(17) << scores[i].value << '\n';
        }
      }
      return 0;
    }

    if (pile_cmd->parsed()) {
      const SentenceEntry& s = store.at(sentence_id);
      const auto piles = build_piles(s.layer(type, layer), threshold);
      out << piles.size() << " pile(s) at threshold " << threshold << '\n';
      for (std::size_t i = 0; i < piles.size(); ++i) {
        out << "pile " << i + 1 << ": heads";
        for (int h : piles[i].heads) out << ' ' << h;
        out << " (max distance " << piles[i].intra_distance << ")\n";
      }
      if (!out_path.empty()) {
        write_json_file(out_path, piles_payload(s, type, layer, threshold, piles));
        out << "wrote " << out_path << '\n';
      }
      return 0;
    }

    if (lens_cmd->parsed()) {
      const HeadProfile profile = build_head_profile(store, type, layer, head, k, seed);
      (out_path.empty() ? err : out) << "seed: " << seed << '\n';
      emit_json(head_profile_payload(profile), out_path, out);
      return 0;
    }

    if (sankey_cmd->parsed()) {
      const SentenceEntry& s = store.at(sentence_id);
      const auto edges = sankey_flow(s, type, prune);
      emit_json(sankey_payload(s, type, store.model().n_layers, prune, edges), out_path, out);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.message << '\n';
    return kExitUsage;
  } catch (const ValidationFailure& e) {
    err << "error: " << e.what() << '\n';
    print_report(e.report(), err);
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::range ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace attn_atlas::cli
