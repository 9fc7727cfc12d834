#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "attn_atlas/dump.hpp"

namespace attn_atlas {

/// Parses JSON text, transparently gunzipping input that starts with the
/// gzip magic bytes. Throws Error(input) on decompression or parse failure.
nlohmann::json parse_document_bytes(std::string_view bytes);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes `text` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Serialises with a trailing newline; gzip-compresses when the path ends
/// in ".gz". Written atomically.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc,
                     int indent = -1);

std::string gzip_compress(std::string_view data);
std::string gzip_decompress(std::string_view data);

CorpusStore load_corpus(const std::filesystem::path& path);

}  // namespace attn_atlas
