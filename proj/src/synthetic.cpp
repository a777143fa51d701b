#include "tdk/synthetic.hpp"

#include <algorithm>
#include <array>
#include <string_view>

namespace tdk {
namespace {

constexpr std::size_t kGlyph = 8;

// clang-format off
constexpr std::array<std::array<std::string_view, kGlyph>, 10> kGlyphs = {{
    {"########", "........", "........", "########", "########", "........", "........", "########"},
    {"#..##..#", "#..##..#", "#..##..#", "#..##..#", "#..##..#", "#..##..#", "#..##..#", "#..##..#"},
    {"##......", "###.....", ".###....", "..###...", "...###..", "....###.", ".....###", "......##"},
    {"......##", ".....###", "....###.", "...###..", "..###...", ".###....", "###.....", "##......"},
    {"##......", "##......", "##......", "##......", "##......", "##......", "########", "########"},
    {"........", "........", "..####..", "..####..", "..####..", "..####..", "........", "........"},
    {"...##...", "...##...", "...##...", "########", "########", "...##...", "...##...", "...##..."},
    {"#......#", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.", "#......#"},
    {"..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", ".#....#.", "..####.."},
    {"########", "########", "...##...", "...##...", "...##...", "...##...", "...##...", "...##..."},
}};
// clang-format on

}  // namespace

LabeledDataset generate_synthetic(std::size_t count, RngStream rng, const SyntheticConfig& cfg) {
  check_shape(cfg.shape);
  if (cfg.classes < 2 || cfg.classes > kGlyphs.size()) throw InvalidArgument("synthetic: classes must be in [2, 10]");
  const std::size_t h = cfg.shape.height;
  const std::size_t w = cfg.shape.width;
  const std::size_t c = cfg.shape.channels;
  if (h < kGlyph + 2 * cfg.jitter + 1 || w < kGlyph + 2 * cfg.jitter + 1) throw InvalidArgument("synthetic: image too small");
  if (!(cfg.glyph_low >= 0.0 && cfg.glyph_low <= cfg.glyph_high && cfg.glyph_high <= 1.0)) {
    throw InvalidArgument("synthetic: need 0 <= glyph_low <= glyph_high <= 1");
  }
  const std::size_t glyph_ch = default_noise_channel(c);

  std::vector<LabeledItem> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    RngStream r = substream(rng, i);
    const auto label = static_cast<std::uint32_t>(i % cfg.classes);
    std::vector<double> px(cfg.shape.size());
    for (double& v : px) v = r.uniform() * cfg.background_high;

    // Clutter strokes on the non-glyph channels (grayscale images get none).
    if (c == 3) {
      const auto strokes = r.uniform_int(2, 4);
      for (std::uint64_t s = 0; s < strokes; ++s) {
        const std::size_t ch = r.uniform_int(0, 1);
        const bool horizontal = r.uniform() < 0.5;
        const std::size_t len = r.uniform_int(3, 7);
        const std::size_t r0 = r.uniform_int(0, horizontal ? h - 1 : h - len);
        const std::size_t c0 = r.uniform_int(0, horizontal ? w - len : w - 1);
        const double level = 0.2 + r.uniform() * (cfg.clutter_high - 0.2);
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t rr = horizontal ? r0 : r0 + k;
          const std::size_t cc = horizontal ? c0 + k : c0;
          px[(rr * w + cc) * c + ch] = level;
        }
      }
    }

    // Brightness is a per-image nuisance so that only the shape identifies
    // the class.
    const double level = cfg.glyph_low + (cfg.glyph_high - cfg.glyph_low) * r.uniform();
    const std::size_t top = (h - kGlyph) / 2 - cfg.jitter + r.uniform_int(0, 2 * cfg.jitter);
    const std::size_t left = (w - kGlyph) / 2 - cfg.jitter + r.uniform_int(0, 2 * cfg.jitter);
    const auto& glyph = kGlyphs[label];
    for (std::size_t gr = 0; gr < kGlyph; ++gr) {
      for (std::size_t gc = 0; gc < kGlyph; ++gc) {
        if (glyph[gr][gc] != '#') continue;
        const std::size_t rr = std::min(top + gr, h - 1);
        const std::size_t cc = std::min(left + gc, w - 1);
        px[(rr * w + cc) * c + glyph_ch] = std::clamp(level + 0.05 * (r.uniform() - 0.5), 0.0, 1.0);
      }
    }
    items.push_back({ImageTensor(cfg.shape, std::move(px)), ClassLabel{label}});
  }

  RngStream shuffle = substream(rng, "shuffle");
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[static_cast<std::size_t>(shuffle.uniform_int(0, i - 1))]);
  }
  return LabeledDataset(std::move(items), cfg.classes);
}

}  // namespace tdk
