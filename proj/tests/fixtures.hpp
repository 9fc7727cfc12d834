#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "attn_atlas/corpus_builder.hpp"
#include "attn_atlas/dump.hpp"
#include "attn_atlas/model.hpp"

namespace fixture {

inline std::filesystem::path data_dir() { return ATTN_ATLAS_TEST_DATA_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline attn_atlas::ModelConfig toy_config(std::uint64_t seed = 0) {
  attn_atlas::ModelConfig config;
  config.seed = seed;
  return config;
}

// The six-sentence translation fixture run through the default toy model.
inline attn_atlas::CorpusStore corpus(std::uint64_t seed = 0, bool keep_vectors = true) {
  const std::string text = read_file(data_dir() / "fixture_sentences.txt");
  const std::string pos = read_file(data_dir() / "fixture_sentences.pos");
  const auto sentences = attn_atlas::parse_sentence_text(text, std::string_view(pos));
  const auto vocab = attn_atlas::Vocabulary::build(sentences);
  const auto weights = attn_atlas::init_weights(toy_config(seed), vocab.size());
  attn_atlas::GenerateOptions options;
  options.keep_vectors = keep_vectors;
  options.provenance = "fixture";
  return attn_atlas::generate_corpus(sentences, vocab, weights, options);
}

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("attn_atlas_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
