#include "attn_atlas/weights_io.hpp"

#include <string>

#include "attn_atlas/errors.hpp"

namespace attn_atlas {
namespace {

using nlohmann::json;

json pack(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

json pack(const Vector& v) { return pack(Matrix(v.transpose())); }

Matrix unpack_matrix(const json& table, const std::string& name) {
  const auto it = table.find(name);
  if (it == table.end()) fail(ErrorKind::input, "weight '" + name + "' is missing");
  const json& entry = *it;
  if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data") ||
      !entry["shape"].is_array() || entry["shape"].size() != 2 || !entry["data"].is_array()) {
    fail(ErrorKind::input, "weight '" + name + "' is not a {shape, data} object");
  }
  const auto rows = entry["shape"][0].get<Eigen::Index>();
  const auto cols = entry["shape"][1].get<Eigen::Index>();
  const json& data = entry["data"];
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    fail(ErrorKind::input, "weight '" + name + "' data length does not match its shape");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c, ++k) {
      if (!data[k].is_number()) fail(ErrorKind::input, "weight '" + name + "' has a non-number");
      m(r, c) = data[k].get<double>();
    }
  }
  return m;
}

Vector unpack_vector(const json& table, const std::string& name) {
  Matrix m = unpack_matrix(table, name);
  if (m.rows() != 1) fail(ErrorKind::config, "weight '" + name + "' must be a 1 x n matrix");
  return m.row(0).transpose();
}

void put_attention(json& table, const std::string& prefix, const AttentionWeights& w) {
  for (std::size_t h = 0; h < w.heads.size(); ++h) {
    const auto head = prefix + ".head." + std::to_string(h + 1);
    table[head + ".w_q"] = pack(w.heads[h].w_q);
    table[head + ".w_k"] = pack(w.heads[h].w_k);
    table[head + ".w_v"] = pack(w.heads[h].w_v);
  }
  table[prefix + ".w_o"] = pack(w.w_o);
}

AttentionWeights get_attention(const json& table, const std::string& prefix, int n_heads) {
  AttentionWeights w;
  for (int h = 1; h <= n_heads; ++h) {
    const auto head = prefix + ".head." + std::to_string(h);
    w.heads.push_back({unpack_matrix(table, head + ".w_q"), unpack_matrix(table, head + ".w_k"),
                       unpack_matrix(table, head + ".w_v")});
  }
  w.w_o = unpack_matrix(table, prefix + ".w_o");
  return w;
}

void put_ff(json& table, const std::string& prefix, const FeedForwardWeights& ff) {
  table[prefix + ".w_in"] = pack(ff.w_in);
  table[prefix + ".b_in"] = pack(ff.b_in);
  table[prefix + ".w_out"] = pack(ff.w_out);
  table[prefix + ".b_out"] = pack(ff.b_out);
}

FeedForwardWeights get_ff(const json& table, const std::string& prefix) {
  return {unpack_matrix(table, prefix + ".w_in"), unpack_vector(table, prefix + ".b_in"),
          unpack_matrix(table, prefix + ".w_out"), unpack_vector(table, prefix + ".b_out")};
}

void put_norm(json& table, const std::string& prefix, const LayerNormWeights& n) {
  table[prefix + ".gain"] = pack(n.gain);
  table[prefix + ".bias"] = pack(n.bias);
}

LayerNormWeights get_norm(const json& table, const std::string& prefix) {
  return {unpack_vector(table, prefix + ".gain"), unpack_vector(table, prefix + ".bias")};
}

template <typename T>
T required(const json& obj, const char* key) {
  if (!obj.contains(key)) fail(ErrorKind::input, std::string("model.") + key + " is missing");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::input, std::string("model.") + key + " has the wrong type");
  }
}

}  // namespace

json weights_to_json(const WeightSet& w) {
  const ModelConfig& cfg = w.config;
  json doc;
  doc["version"] = 1;
  doc["model"] = {{"n_layers", cfg.n_layers},
                  {"n_heads", cfg.n_heads},
                  {"d_model", cfg.d_model},
                  {"d_ff", cfg.ff_width()},
                  {"scale_mode", std::string(to_string(cfg.scale_mode))},
                  {"seed", cfg.seed},
                  {"vocab_size", w.vocab_size()},
                  {"attn_types", {"encoder_self", "decoder_self", "encoder_decoder"}}};
  json table = json::object();
  table["embedding"] = pack(w.embedding);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto enc = "encoder." + std::to_string(l + 1);
    const EncoderLayerWeights& e = w.encoder[l];
    put_attention(table, enc + ".self", e.self_attention);
    put_norm(table, enc + ".norm_attention", e.norm_attention);
    put_ff(table, enc + ".ff", e.feed_forward);
    put_norm(table, enc + ".norm_ff", e.norm_feed_forward);

    const auto dec = "decoder." + std::to_string(l + 1);
    const DecoderLayerWeights& d = w.decoder[l];
    put_attention(table, dec + ".self", d.self_attention);
    put_norm(table, dec + ".norm_self", d.norm_self);
    put_attention(table, dec + ".cross", d.cross_attention);
    put_norm(table, dec + ".norm_cross", d.norm_cross);
    put_ff(table, dec + ".ff", d.feed_forward);
    put_norm(table, dec + ".norm_ff", d.norm_feed_forward);
  }
  doc["weights"] = std::move(table);
  return doc;
}

WeightSet weights_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::input, "weight file is not a JSON object");
  if (!doc.contains("version") || doc["version"] != 1) {
    fail(ErrorKind::input, "weight file version must be 1");
  }
  if (!doc.contains("model") || !doc["model"].is_object()) {
    fail(ErrorKind::input, "weight file has no model section");
  }
  if (!doc.contains("weights") || !doc["weights"].is_object()) {
    fail(ErrorKind::input, "weight file has no weights section");
  }
  const json& model = doc["model"];
  WeightSet w;
  ModelConfig& cfg = w.config;
  cfg.n_layers = required<int>(model, "n_layers");
  cfg.n_heads = required<int>(model, "n_heads");
  cfg.d_model = required<int>(model, "d_model");
  cfg.d_ff = model.contains("d_ff") ? required<int>(model, "d_ff") : 0;
  if (model.contains("scale_mode")) {
    const auto mode = parse_scale_mode(required<std::string>(model, "scale_mode"));
    if (!mode) fail(ErrorKind::input, "model.scale_mode is not recognised");
    cfg.scale_mode = *mode;
  }
  cfg.seed = model.contains("seed") ? required<std::uint64_t>(model, "seed") : 0;
  cfg.validate();

  const json& table = doc["weights"];
  w.embedding = unpack_matrix(table, "embedding");
  for (int l = 1; l <= cfg.n_layers; ++l) {
    const auto enc = "encoder." + std::to_string(l);
    w.encoder.push_back({get_attention(table, enc + ".self", cfg.n_heads),
                         get_norm(table, enc + ".norm_attention"), get_ff(table, enc + ".ff"),
                         get_norm(table, enc + ".norm_ff")});
    const auto dec = "decoder." + std::to_string(l);
    w.decoder.push_back({get_attention(table, dec + ".self", cfg.n_heads),
                         get_norm(table, dec + ".norm_self"),
                         get_attention(table, dec + ".cross", cfg.n_heads),
                         get_norm(table, dec + ".norm_cross"), get_ff(table, dec + ".ff"),
                         get_norm(table, dec + ".norm_ff")});
  }
  w.check_shapes();
  return w;
}

}  // namespace attn_atlas
