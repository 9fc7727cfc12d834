#pragma once

#include <nlohmann/json.hpp>

#include "attn_atlas/model.hpp"

namespace attn_atlas {

// Weight files share the dump container: {"version": 1, "model": {...},
// "weights": {name: {"shape": [rows, cols], "data": [row-major doubles]}}}.
// Vectors are stored as 1 x n matrices. Names follow
// "encoder.<layer>.self.head.<head>.w_q", "decoder.<layer>.cross.w_o",
// "encoder.<layer>.ff.w_in", "decoder.<layer>.norm_cross.gain", ... with
// 1-based layer and head indices.

nlohmann::json weights_to_json(const WeightSet& weights);

/// Throws Error(input) on missing or malformed entries and Error(config)
/// when shapes disagree with the embedded model section.
WeightSet weights_from_json(const nlohmann::json& doc);

}  // namespace attn_atlas
