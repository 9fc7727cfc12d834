#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "attn_atlas/types.hpp"

namespace attn_atlas::detail {

inline nlohmann::json matrix_to_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Parses an array of equal-length numeric rows. Returns nullopt and sets
/// `problem` when the value is not a rectangular numeric array.
inline std::optional<Matrix> rows_to_matrix(const nlohmann::json& rows, std::string& problem) {
  if (!rows.is_array()) {
    problem = "matrix is not an array of rows";
    return std::nullopt;
  }
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  Eigen::Index n_cols = 0;
  if (n_rows > 0) {
    if (!rows[0].is_array()) {
      problem = "matrix row 0 is not an array";
      return std::nullopt;
    }
    n_cols = static_cast<Eigen::Index>(rows[0].size());
  }
  Matrix m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
      problem = "matrix row " + std::to_string(r) + " is ragged";
      return std::nullopt;
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        problem = "matrix entry (" + std::to_string(r) + "," + std::to_string(c) +
                  ") is not a number";
        return std::nullopt;
      }
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

}  // namespace attn_atlas::detail
