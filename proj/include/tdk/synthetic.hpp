#pragma once

#include <cstdint>

#include "tdk/core.hpp"
#include "tdk/rng.hpp"

namespace tdk {

/// Desk-scale image classification task: each class is an 8x8 glyph drawn in
/// the blue channel, over dim red/green clutter that carries no class
/// information.
struct SyntheticConfig {
  std::uint32_t classes = 10;
  Shape shape{16, 16, 3};
  /// Maximum glyph offset from the centered position, in pixels.
  std::size_t jitter = 1;
  /// Glyph brightness is drawn per image from this range.
  double glyph_low = 0.55;
  double glyph_high = 0.65;
  /// Uniform background level range in every channel.
  double background_high = 0.2;
  /// Peak brightness of the red/green clutter strokes.
  double clutter_high = 0.5;
};

/// count items with labels cycling through the classes, in a deterministic
/// shuffled order.
LabeledDataset generate_synthetic(std::size_t count, RngStream rng, const SyntheticConfig& cfg = {});

}  // namespace tdk
