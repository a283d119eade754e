#pragma once

#include <limits>
#include <vector>

#include "sketchdepth/core.hpp"

namespace sketchdepth {

/// For each pixel, the flat index of the nearest valid (depth > 0) pixel in
/// Euclidean distance. Exact two-pass distance transform (lower envelope of
/// parabolas per row after a per-column pass).
inline std::vector<std::size_t> nearest_valid_index(const DepthMap& depth) {
  const int w = depth.width(), h = depth.height();
  if (depth.valid_count() == 0) throw DomainError("nearest-valid fill: depth map has no valid pixel");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Column pass: nearest valid row in the same column.
  std::vector<double> col_d2(static_cast<std::size_t>(w) * h, kInf);
  std::vector<int> col_row(static_cast<std::size_t>(w) * h, -1);
  for (int x = 0; x < w; ++x) {
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (depth(x, y) > 0) last = y;
      col_row[static_cast<std::size_t>(y) * w + x] = last;
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (depth(x, y) > 0) last = y;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int up = col_row[i];
      int best = up;
      if (last >= 0 && (up < 0 || (last - y) < (y - up))) best = last;
      col_row[i] = best;
      if (best >= 0) col_d2[i] = static_cast<double>(best - y) * (best - y);
    }
  }

  // Row pass over the parabolas x -> (x - q)^2 + col_d2(q).
  std::vector<std::size_t> nearest(static_cast<std::size_t>(w) * h);
  std::vector<int> v(w);
  std::vector<double> z(w + 1);
  for (int y = 0; y < h; ++y) {
    const double* f = &col_d2[static_cast<std::size_t>(y) * w];
    int k = -1;
    for (int q = 0; q < w; ++q) {
      if (f[q] == kInf) continue;
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        continue;
      }
      auto meet = [&](int p) {
        return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
      };
      double s = meet(v[k]);
      while (s <= z[k]) s = meet(v[--k]);
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
    }
    // Every column holding a valid pixel is finite in every row.
    if (k < 0) throw ContractError("nearest-valid fill: empty row envelope");
    int j = 0;
    for (int x = 0; x < w; ++x) {
      while (z[j + 1] < x) ++j;
      const int q = v[j];
      const int row = col_row[static_cast<std::size_t>(y) * w + q];
      nearest[static_cast<std::size_t>(y) * w + x] = static_cast<std::size_t>(row) * w + q;
    }
  }
  return nearest;
}

/// Replaces every invalid pixel with the depth of its nearest valid pixel.
inline DepthMap nearest_valid_fill(const DepthMap& depth) {
  const auto nearest = nearest_valid_index(depth);
  std::vector<double> out(depth.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = depth[nearest[i]];
  return DepthMap(depth.width(), depth.height(), std::move(out));
}

}  // namespace sketchdepth
