#include "attn_atlas/service.hpp"

#include <charconv>
#include <optional>
#include <sstream>

#include <httplib.h>

#include "attn_atlas/analytics.hpp"
#include "attn_atlas/codec.hpp"
#include "attn_atlas/dump_io.hpp"
#include "attn_atlas/errors.hpp"
#include "attn_atlas/piling.hpp"

namespace attn_atlas {
namespace {

using nlohmann::json;

constexpr std::string_view kApiPrefix = "/api/v1";

struct RouteError {
  int status;
  std::string kind;
  std::string detail;
};

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::range: return 404;
    case ErrorKind::unavailable: return 422;
    case ErrorKind::validation: return 422;
    case ErrorKind::conflict: return 409;
    case ErrorKind::config:
    case ErrorKind::input:
    case ErrorKind::degenerate_row: return 400;
  }
  return 500;
}

ApiResponse error_response(int status, std::string_view kind, const std::string& detail,
                           const json* extra = nullptr) {
  json body = {{"error", {{"status", status}, {"kind", kind}, {"detail", detail}}}};
  if (extra) body.update(*extra);
  return {status, body.dump()};
}

ApiResponse ok(const json& payload, int status = 200) {
  if (!all_numbers_finite(payload)) {
    return error_response(500, "internal", "payload contains a non-finite number");
  }
  return {status, payload.dump()};
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start < path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    if (end > start) parts.emplace_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

class Params {
 public:
  explicit Params(const std::map<std::string, std::string>& raw) : raw_(raw) {}

  std::optional<std::string> text(const std::string& name) const {
    const auto it = raw_.find(name);
    if (it == raw_.end()) return std::nullopt;
    return it->second;
  }

  template <typename T>
  T number(const std::string& name, std::optional<T> fallback = std::nullopt) const {
    const auto value = text(name);
    if (!value) {
      if (fallback) return *fallback;
      throw RouteError{400, "input", "missing query parameter '" + name + "'"};
    }
    T out{};
    const char* first = value->data();
    const char* last = first + value->size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || value->empty()) {
      throw RouteError{400, "input", "query parameter '" + name + "' is not a valid number"};
    }
    return out;
  }

  AttnType type() const {
    const auto value = text("type");
    if (!value) return AttnType::encoder_self;
    const auto parsed = parse_attn_type(*value);
    if (!parsed) throw RouteError{400, "input", "unknown attention type '" + *value + "'"};
    return *parsed;
  }

 private:
  const std::map<std::string, std::string>& raw_;
};

}  // namespace

CorpusStore load_corpora(std::span<const std::filesystem::path> paths) {
  CorpusStore merged;
  for (const auto& path : paths) merged = merge_stores(merged, load_corpus(path));
  return merged;
}

AtlasService::AtlasService(CorpusStore store)
    : store_(std::make_shared<const CorpusStore>(std::move(store))) {}

std::shared_ptr<const CorpusStore> AtlasService::snapshot() const {
  std::shared_lock lock(store_mutex_);
  return store_;
}

std::size_t AtlasService::cached_profiles() const {
  std::lock_guard lock(cache_mutex_);
  return cache_.size();
}

ApiResponse AtlasService::handle(const ApiRequest& request) {
  try {
    return dispatch(request);
  } catch (const RouteError& e) {
    return error_response(e.status, e.kind, e.detail);
  } catch (const ValidationFailure& e) {
    const json extra = {{"report", report_to_json(e.report())}};
    return error_response(422, "validation", e.what(), &extra);
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

std::shared_ptr<const HeadProfile> AtlasService::profile(const CorpusStore& store,
                                                         std::uint64_t generation, AttnType type,
                                                         int layer, int head, int k,
                                                         std::uint64_t seed) {
  const ProfileKey key{generation, type, layer, head, k, seed};
  {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto built = std::make_shared<const HeadProfile>(
      build_head_profile(store, type, layer, head, k, seed));
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(key, std::move(built)).first->second;
}

ApiResponse AtlasService::ingest(const std::string& body) {
  CorpusStore incoming = ingest_dump(parse_document_bytes(body));
  std::unique_lock lock(store_mutex_);
  CorpusStore merged = merge_stores(*store_, incoming);
  const std::size_t total = merged.size();
  store_ = std::make_shared<const CorpusStore>(std::move(merged));
  ++generation_;
  lock.unlock();
  {
    std::lock_guard cache_lock(cache_mutex_);
    cache_.clear();
  }
  return ok({{"accepted", true}, {"sentences_added", incoming.size()}, {"sentences", total}},
            201);
}

ApiResponse AtlasService::dispatch(const ApiRequest& request) {
  std::string_view path = request.path;
  if (path.substr(0, kApiPrefix.size()) != kApiPrefix) {
    throw RouteError{404, "not_found", "no route for " + request.path};
  }
  const std::vector<std::string> parts = split_path(path.substr(kApiPrefix.size()));
  if (parts.empty()) throw RouteError{404, "not_found", "no route for " + request.path};

  if (parts.size() == 1 && parts[0] == "dumps") {
    if (request.method != "POST") {
      throw RouteError{405, "method_not_allowed", "use POST to upload a dump"};
    }
    return ingest(request.body);
  }
  if (request.method != "GET") {
    throw RouteError{405, "method_not_allowed", request.method + " is not supported here"};
  }

  std::shared_ptr<const CorpusStore> store;
  std::uint64_t generation = 0;
  {
    std::shared_lock lock(store_mutex_);
    store = store_;
    generation = generation_;
  }
  const Params params(request.params);

  if (parts.size() == 1 && parts[0] == "healthz") {
    json types = json::array();
    for (AttnType t : store->model().attn_types) types.push_back(std::string(to_string(t)));
    return ok({{"status", "ok"},
               {"sentences", store->size()},
               {"n_layers", store->model().n_layers},
               {"n_heads", store->model().n_heads},
               {"d_model", store->model().d_model},
               {"attn_types", std::move(types)}});
  }

  if (parts[0] == "headlens" && parts.size() <= 2) {
    const AttnType type = params.type();
    const int layer = params.number<int>("layer");
    const int head = params.number<int>("head");
    const int k = params.number<int>("k", kDefaultClusterCount);
    const auto seed = params.number<std::uint64_t>("seed", std::uint64_t{0});
    if (parts.size() == 1) {
      return ok(head_profile_payload(*profile(*store, generation, type, layer, head, k, seed)));
    }
    if (parts[1] == "pair") {
      const int query_cluster = params.number<int>("query_cluster");
      const int key_cluster = params.number<int>("key_cluster");
      const auto p = profile(*store, generation, type, layer, head, k, seed);
      return ok(head_pair_payload(*p, query_cluster, key_cluster));
    }
    throw RouteError{404, "not_found", "no route for " + request.path};
  }

  if (parts[0] == "sentences") {
    if (parts.size() == 1) return ok(sentence_list_payload(*store));
    const SentenceEntry* sentence = store->find(parts[1]);
    if (!sentence) throw RouteError{404, "not_found", "unknown sentence id '" + parts[1] + "'"};
    if (parts.size() == 2) return ok(sentence_payload(*store, *sentence));
    if (parts.size() == 3) {
      const std::string& view = parts[2];
      const AttnType type = params.type();
      if (view == "attention") {
        const int layer = params.number<int>("layer");
        const int head = params.number<int>("head");
        return ok(attention_payload(*sentence, sentence->record(type, layer, head)));
      }
      if (view == "sort") {
        const int layer = params.number<int>("layer");
        const auto metric = parse_head_metric(params.text("metric").value_or("entropy"));
        if (!metric) throw RouteError{400, "input", "metric must be entropy or position"};
        const auto direction = parse_sort_direction(params.text("direction").value_or("asc"));
        if (!direction) throw RouteError{400, "input", "direction must be asc or desc"};
        const auto scores = sort_heads(sentence->layer(type, layer), *metric, *direction);
        return ok(sort_payload(*sentence, type, layer, *metric, *direction, scores));
      }
      if (view == "piles") {
        const int layer = params.number<int>("layer");
        const double threshold = params.number<double>("threshold", kDefaultPileThreshold);
        const auto piles = build_piles(sentence->layer(type, layer), threshold);
        return ok(piles_payload(*sentence, type, layer, threshold, piles));
      }
      if (view == "histogram") {
        const int layer = params.number<int>("layer");
        return ok(histogram_payload(*sentence, type, layer,
                                    word_histogram(sentence->layer(type, layer))));
      }
      if (view == "sankey") {
        const double prune = params.number<double>("prune", kDefaultSankeyPrune);
        const auto edges = sankey_flow(*sentence, type, prune);
        return ok(sankey_payload(*sentence, type, store->model().n_layers, prune, edges));
      }
    }
  }
  throw RouteError{404, "not_found", "no route for " + request.path};
}

struct HttpFrontend::Impl {
  AtlasService& service;
  ServerOptions options;
  httplib::Server server;

  Impl(AtlasService& s, ServerOptions o) : service(s), options(std::move(o)) {}
};

HttpFrontend::HttpFrontend(AtlasService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  Impl& impl = *impl_;
  impl.server.set_default_headers({{"Access-Control-Allow-Origin", impl.options.cors_origin},
                                   {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                   {"Access-Control-Allow-Headers", "Content-Type"}});
  if (!impl.options.static_dir.empty()) {
    impl.server.set_mount_point("/", impl.options.static_dir.string());
  }
  auto forward = [&impl](const httplib::Request& req, httplib::Response& res) {
    ApiRequest api;
    api.method = req.method;
    api.path = req.path;
    for (const auto& [name, value] : req.params) api.params.emplace(name, value);
    api.body = req.body;
    ApiResponse out = impl.service.handle(api);
    res.status = out.status;
    res.set_content(out.body, "application/json; charset=utf-8");
  };
  // Static files (when mounted) take precedence; everything else reaches the
  // service so unknown routes still get an ApiError body.
  impl.server.Get(".*", forward);
  impl.server.Post(".*", forward);
  impl.server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind() {
  if (impl_->options.port == 0) return impl_->server.bind_to_any_port(impl_->options.host);
  return impl_->server.bind_to_port(impl_->options.host, impl_->options.port)
             ? impl_->options.port
             : -1;
}

bool HttpFrontend::listen() { return impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace attn_atlas
