#pragma once

// Discrete code grid for one timestep: H'xW' code indices plus a Boolean
// hidden-mask used both for masked training and iterative decoding.

#include <cstdint>
#include <vector>

namespace teco {

struct TokenGrid {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<int32_t> indices;  // h*w, raster order
  std::vector<uint8_t> mask;     // h*w, 1 = hidden

  TokenGrid() = default;
  TokenGrid(int64_t h_, int64_t w_)
      : h(h_), w(w_), indices(static_cast<size_t>(h_ * w_), 0),
        mask(static_cast<size_t>(h_ * w_), 0) {}

  int64_t positions() const { return h * w; }

  int64_t masked_count() const {
    int64_t n = 0;
    for (uint8_t m : mask) n += m != 0;
    return n;
  }

  bool fully_unmasked() const { return masked_count() == 0; }

  void mask_all() { std::fill(mask.begin(), mask.end(), uint8_t{1}); }
};

}  // namespace teco
