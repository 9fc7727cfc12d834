#pragma once

// Read-only JSON facade over the loaded corpora. Routes live under /api/v1:
//
//   GET  /sentences
//   GET  /sentences/{id}
//   GET  /sentences/{id}/attention?type&layer&head
//   GET  /sentences/{id}/sort?type&layer&metric&direction
//   GET  /sentences/{id}/piles?type&layer&threshold
//   GET  /sentences/{id}/histogram?type&layer
//   GET  /sentences/{id}/sankey?type&prune
//   GET  /headlens?type&layer&head&k&seed
//   GET  /headlens/pair?type&layer&head&k&seed&query_cluster&key_cluster
//   POST /dumps
//   GET  /healthz
//
// Layer and head indices are 1-based, cluster ids 0-based. Failures return a
// single {"error": {"status", "kind", "detail"}} body.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "attn_atlas/dump.hpp"
#include "attn_atlas/headlens.hpp"

namespace attn_atlas {

inline constexpr int kDefaultServicePort = 8031;

struct ApiRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> params;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;
};

/// Loads and merges dumps in order. Throws ValidationFailure for an invalid
/// dump and Error(conflict) for incompatible ones.
CorpusStore load_corpora(std::span<const std::filesystem::path> paths);

class AtlasService {
 public:
  explicit AtlasService(CorpusStore store = {});

  AtlasService(const AtlasService&) = delete;
  AtlasService& operator=(const AtlasService&) = delete;

  ApiResponse handle(const ApiRequest& request);

  std::shared_ptr<const CorpusStore> snapshot() const;
  std::size_t cached_profiles() const;

 private:
  using ProfileKey = std::tuple<std::uint64_t, AttnType, int, int, int, std::uint64_t>;

  ApiResponse dispatch(const ApiRequest& request);
  ApiResponse ingest(const std::string& body);
  std::shared_ptr<const HeadProfile> profile(const CorpusStore& store, std::uint64_t generation,
                                             AttnType type, int layer, int head, int k,
                                             std::uint64_t seed);

  mutable std::shared_mutex store_mutex_;
  std::shared_ptr<const CorpusStore> store_;
  std::uint64_t generation_ = 0;

  mutable std::mutex cache_mutex_;
  std::map<ProfileKey, std::shared_ptr<const HeadProfile>> cache_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = kDefaultServicePort;
  std::string cors_origin = "*";
  std::filesystem::path static_dir;  // optional UI bundle served at /
};

/// HTTP/1.1 binding of an AtlasService.
class HttpFrontend {
 public:
  HttpFrontend(AtlasService& service, ServerOptions options);
  ~HttpFrontend();

  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds the socket; port 0 picks a free port. Returns the bound port or
  /// -1 on failure.
  int bind();
  /// Blocks serving requests until stop().
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace attn_atlas
