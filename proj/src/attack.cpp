#include "tdk/attack.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tdk/dataset_io.hpp"

namespace tdk {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool has_channel(const TriggerSpec& t, std::size_t ch) {
  return std::find(t.channel_mask.begin(), t.channel_mask.end(), ch) != t.channel_mask.end();
}

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

void validate_trigger(const TriggerSpec& t, const Shape& image_shape) {
  if (t.pattern.size() == 0) throw InvalidArgument("trigger pattern is empty");
  if (t.pattern.channels() != image_shape.channels) {
    throw InvalidArgument("trigger pattern has " + std::to_string(t.pattern.channels()) + " channels, image has " +
                          std::to_string(image_shape.channels));
  }
  for (std::size_t ch : t.channel_mask) {
    if (ch >= image_shape.channels) throw InvalidArgument("trigger channel " + std::to_string(ch) + " out of range");
  }
  if (t.kind == TriggerKind::Patch) {
    if (t.top + t.pattern.height() > image_shape.height || t.left + t.pattern.width() > image_shape.width) {
      throw InvalidArgument("trigger patch at (" + std::to_string(t.top) + "," + std::to_string(t.left) + ") size " +
                            t.pattern.shape().to_string() + " out of bounds for " + image_shape.to_string());
    }
  } else {
    if (t.pattern.shape() != image_shape) throw InvalidArgument("blend trigger must match the image shape");
    if (!(t.opacity > 0.0 && t.opacity <= 1.0)) throw InvalidArgument("blend opacity must be in (0, 1]");
  }
}

ImageTensor apply_trigger(const ImageTensor& x, const TriggerSpec& t) {
  validate_trigger(t, x.shape());
  std::vector<double> px = x.to_vector();
  if (t.kind == TriggerKind::Patch) {
    for (std::size_t r = 0; r < t.pattern.height(); ++r) {
      for (std::size_t c = 0; c < t.pattern.width(); ++c) {
        for (std::size_t ch : t.channel_mask) px[x.index(t.top + r, t.left + c, ch)] = t.pattern.at(r, c, ch);
      }
    }
  } else {
    for (std::size_t r = 0; r < x.height(); ++r) {
      for (std::size_t c = 0; c < x.width(); ++c) {
        for (std::size_t ch : t.channel_mask) {
          const std::size_t i = x.index(r, c, ch);
          px[i] = (1.0 - t.opacity) * px[i] + t.opacity * t.pattern.at(r, c, ch);
        }
      }
    }
  }
  return ImageTensor::clamped(x.shape(), std::move(px));
}

double trigger_distance(const ImageTensor& x, const TriggerSpec& t) {
  validate_trigger(t, x.shape());
  if (t.channel_mask.empty()) return 0.0;
  const bool patch = t.kind == TriggerKind::Patch;
  const std::size_t rows = patch ? t.pattern.height() : x.height();
  const std::size_t cols = patch ? t.pattern.width() : x.width();
  const std::size_t r0 = patch ? t.top : 0;
  const std::size_t c0 = patch ? t.left : 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t ch : t.channel_mask) sum += std::abs(x.at(r0 + r, c0 + c, ch) - t.pattern.at(r, c, ch));
    }
  }
  return sum / static_cast<double>(rows * cols * t.channel_mask.size());
}

TriggerSpec white_patch_trigger(const Shape& image_shape, std::size_t side) {
  check_shape(image_shape);
  if (side > image_shape.height || side > image_shape.width) throw InvalidArgument("trigger larger than image");
  TriggerSpec t;
  t.kind = TriggerKind::Patch;
  t.pattern = ImageTensor::filled({side, side, image_shape.channels}, 1.0);
  t.top = image_shape.height - side;
  t.left = image_shape.width - side;
  t.channel_mask.resize(image_shape.channels);
  std::iota(t.channel_mask.begin(), t.channel_mask.end(), 0);
  t.name = "white-patch";
  return t;
}

TriggerSpec blue_star_trigger(const Shape& image_shape) {
  check_shape(image_shape);
  constexpr std::size_t kSide = 5;
  if (kSide > image_shape.height || kSide > image_shape.width) throw InvalidArgument("trigger larger than image");
  // clang-format off
  static constexpr int kStar[kSide][kSide] = {
      {1, 0, 1, 0, 1},
      {0, 1, 1, 1, 0},
      {1, 1, 1, 1, 1},
      {0, 1, 1, 1, 0},
      {1, 0, 1, 0, 1},
  };
  // clang-format on
  const std::size_t ch = default_noise_channel(image_shape.channels);
  std::vector<double> px(kSide * kSide * image_shape.channels, 0.0);
  for (std::size_t r = 0; r < kSide; ++r) {
    for (std::size_t c = 0; c < kSide; ++c) px[(r * kSide + c) * image_shape.channels + ch] = kStar[r][c];
  }
  TriggerSpec t;
  t.kind = TriggerKind::Patch;
  t.pattern = ImageTensor({kSide, kSide, image_shape.channels}, std::move(px));
  t.top = image_shape.height - kSide;
  t.left = image_shape.width - kSide;
  t.channel_mask = {ch};
  t.name = "blue-star";
  return t;
}

json trigger_to_json(const TriggerSpec& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(t.pattern.size() * 4);
  for (double v : t.pattern.pixels()) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>((u >> s) & 0xff));
  }
  return json{{"name", t.name},
              {"kind", t.kind == TriggerKind::Patch ? "patch" : "blend"},
              {"height", t.pattern.height()},
              {"width", t.pattern.width()},
              {"channels", t.pattern.channels()},
              {"top", t.top},
              {"left", t.left},
              {"opacity", t.opacity},
              {"channel_mask", t.channel_mask},
              {"pattern_b64", base64_encode(bytes)}};
}

TriggerSpec trigger_from_json(const json& j, const fs::path& base_dir) {
  TriggerSpec t;
  try {
    t.name = j.value("name", std::string("trigger"));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "patch") {
      t.kind = TriggerKind::Patch;
    } else if (kind == "blend") {
      t.kind = TriggerKind::Blend;
    } else {
      throw InvalidArgument("trigger.kind: unknown kind '" + kind + "'");
    }
    t.top = j.value("top", std::size_t{0});
    t.left = j.value("left", std::size_t{0});
    t.opacity = j.value("opacity", 1.0);
    if (j.contains("pattern_image")) {
      t.pattern = read_png(base_dir / j.at("pattern_image").get<std::string>());
    } else {
      const Shape shape{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                        j.at("channels").get<std::size_t>()};
      check_shape(shape);
      const auto bytes = base64_decode(j.at("pattern_b64").get<std::string>());
      if (bytes.size() != shape.size() * 4) throw InvalidArgument("trigger.pattern_b64: wrong length for shape");
      std::vector<double> px(shape.size());
      for (std::size_t i = 0; i < px.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
        px[i] = std::bit_cast<float>(u);
      }
      t.pattern = ImageTensor(shape, std::move(px));
    }
    if (j.contains("channel_mask")) {
      t.channel_mask = j.at("channel_mask").get<std::vector<std::size_t>>();
    } else {
      t.channel_mask.resize(t.pattern.channels());
      std::iota(t.channel_mask.begin(), t.channel_mask.end(), 0);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("trigger: ") + e.what());
  }
  return t;
}

TriggerSpec load_trigger(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return trigger_from_json(j, path.parent_path());
}

void save_trigger(const fs::path& path, const TriggerSpec& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << trigger_to_json(t).dump(2) << "\n";
}

LabeledDataset poison_dataset(const LabeledDataset& data, const PoisonConfig& cfg, RngStream rng) {
  if (!(cfg.poison_fraction > 0.0 && cfg.poison_fraction < 1.0)) {
    throw InvalidArgument("poison_fraction must be in (0, 1)");
  }
  if (cfg.target.index >= data.class_count()) throw InvalidArgument("poison target out of range");
  if (data.empty()) return data;
  validate_trigger(cfg.trigger, data.shape());

  const std::size_t n = data.size();
  // The epsilon keeps exact products such as 0.1 * 1000 from rounding up.
  const auto count = static_cast<std::size_t>(std::ceil(cfg.poison_fraction * static_cast<double>(n) - 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream pick = substream(rng, "select");
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(pick.uniform_int(i, n - 1));
    std::swap(order[i], order[j]);
  }

  std::vector<LabeledItem> items = data.items();
  items.reserve(n + count);
  for (std::size_t i = 0; i < count; ++i) {
    items.push_back({apply_trigger(data[order[i]].image, cfg.trigger), cfg.target});
  }

  RngStream shuffle = substream(rng, "shuffle");
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, i - 1));
    std::swap(items[i - 1], items[j]);
  }
  return LabeledDataset(std::move(items), data.class_count());
}

LabeledDataset make_trojan_testset(const LabeledDataset& benign_test, const TriggerSpec& t, ClassLabel target) {
  std::vector<LabeledItem> items;
  for (const auto& item : benign_test.items()) {
    if (item.label == target) continue;
    items.push_back({apply_trigger(item.image, t), target});
  }
  return LabeledDataset(std::move(items), benign_test.class_count());
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = std::uint32_t{bytes[i]} << 16;
    if (i + 1 < bytes.size()) chunk |= std::uint32_t{bytes[i + 1]} << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out += kB64[(chunk >> 18) & 63];
    out += kB64[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kB64[chunk & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r' || c == ' ') continue;
    const int v = value(c);
    if (v < 0) throw InvalidArgument("invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace tdk
