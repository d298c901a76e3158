#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace warp {

// Uniform bucket grid over a square world, rebuilt once per env per step and
// queried per agent. Selection is by exact (squared distance, agent index)
// order, so results match a brute-force scan bit for bit, ties included.
class NeighborGrid {
 public:
  void configure(float world_len, int64_t expected_points) {
    world_len_ = world_len;
    int64_t cells = static_cast<int64_t>(std::sqrt(static_cast<double>(expected_points)));
    cells_ = std::clamp<int64_t>(cells, 1, 256);
    cell_size_ = world_len_ / static_cast<float>(cells_);
    cell_start_.assign(static_cast<size_t>(cells_ * cells_ + 1), 0);
    items_.resize(static_cast<size_t>(expected_points));
  }

  int64_t cell_index(float x, float y) const {
    const int64_t cx = coord(x);
    const int64_t cy = coord(y);
    return cy * cells_ + cx;
  }

  // Counting sort of n points into buckets. Within a bucket, points keep
  // ascending index order.
  void build(const float* xs, const float* ys, int64_t n) {
    std::fill(cell_start_.begin(), cell_start_.end(), 0);
    for (int64_t i = 0; i < n; ++i) cell_start_[static_cast<size_t>(cell_index(xs[i], ys[i])) + 1]++;
    for (size_t c = 1; c < cell_start_.size(); ++c) cell_start_[c] += cell_start_[c - 1];
    std::vector<int32_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
    for (int64_t i = 0; i < n; ++i) {
      items_[static_cast<size_t>(cursor[static_cast<size_t>(cell_index(xs[i], ys[i]))]++)] =
          static_cast<int32_t>(i);
    }
    count_ = n;
  }

  // Visits every point in buckets overlapping the axis-aligned square of
  // half-width r around (x, y). Callers re-check exact distances.
  template <class F>
  void visit_square(float x, float y, float r, F&& fn) const {
    const int64_t x0 = coord(x - r), x1 = coord(x + r);
    const int64_t y0 = coord(y - r), y1 = coord(y + r);
    for (int64_t cy = y0; cy <= y1; ++cy) {
      for (int64_t cx = x0; cx <= x1; ++cx) {
        const size_t c = static_cast<size_t>(cy * cells_ + cx);
        for (int32_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) fn(items_[static_cast<size_t>(s)]);
      }
    }
  }

  // K nearest points to point `self` (excluded), expanding cell rings until
  // no closer candidate can exist. out_idx/out_d2 must hold k entries;
  // returns the number found (= min(k, count-1)).
  int64_t k_nearest(const float* xs, const float* ys, int64_t self, int64_t k, int32_t* out_idx,
                    float* out_d2) const {
    const float sx = xs[self], sy = ys[self];
    const int64_t cx = coord(sx), cy = coord(sy);
    int64_t found = 0;

    auto consider = [&](int32_t j) {
      if (j == self) return;
      const float dx = xs[j] - sx;
      const float dy = ys[j] - sy;
      const float d2 = dx * dx + dy * dy;
      if (found == k) {
        const float worst = out_d2[k - 1];
        if (d2 > worst || (d2 == worst && j > out_idx[k - 1])) return;
      }
      int64_t pos = (found < k) ? found : k - 1;
      while (pos > 0 && (out_d2[pos - 1] > d2 || (out_d2[pos - 1] == d2 && out_idx[pos - 1] > j))) {
        out_d2[pos] = out_d2[pos - 1];
        out_idx[pos] = out_idx[pos - 1];
        --pos;
      }
      out_d2[pos] = d2;
      out_idx[pos] = j;
      if (found < k) ++found;
    };

    const int64_t max_ring = cells_;
    for (int64_t ring = 0; ring <= max_ring; ++ring) {
      if (found == k && ring > 0) {
        // Any point in a ring >= `ring` is at least (ring-1) whole cells away.
        // The margin keeps candidates whose float-rounded squared distance
        // could still tie the current worst.
        const double min_d = static_cast<double>(ring - 1) * cell_size_ * (1.0 - 1e-5);
        if (min_d * min_d > static_cast<double>(out_d2[k - 1])) break;
      }
      const int64_t x0 = std::max<int64_t>(0, cx - ring), x1 = std::min<int64_t>(cells_ - 1, cx + ring);
      const int64_t y0 = std::max<int64_t>(0, cy - ring), y1 = std::min<int64_t>(cells_ - 1, cy + ring);
      for (int64_t gy = y0; gy <= y1; ++gy) {
        const bool edge_row = (gy == cy - ring || gy == cy + ring);
        for (int64_t gx = x0; gx <= x1; ++gx) {
          if (!edge_row && gx != cx - ring && gx != cx + ring) continue;
          const size_t c = static_cast<size_t>(gy * cells_ + gx);
          for (int32_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
            consider(items_[static_cast<size_t>(s)]);
          }
        }
      }
    }
    return found;
  }

 private:
  int64_t coord(float v) const {
    const int64_t c = static_cast<int64_t>(std::floor(v / cell_size_));
    return std::clamp<int64_t>(c, 0, cells_ - 1);
  }

  float world_len_ = 1.0f;
  float cell_size_ = 1.0f;
  int64_t cells_ = 1;
  int64_t count_ = 0;
  std::vector<int32_t> cell_start_;
  std::vector<int32_t> items_;
};

}  // namespace warp
