#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/core.hpp"
#include "tdk/rng.hpp"

namespace tdk {

enum class TriggerKind { Patch, Blend };

/// Trojan trigger. A patch overwrites a small block at (top, left); a blend
/// mixes a full-size watermark in with the given opacity. Only channels in
/// channel_mask are touched.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::Patch;
  ImageTensor pattern;
  std::size_t top = 0;
  std::size_t left = 0;
  double opacity = 1.0;
  std::vector<std::size_t> channel_mask;
  std::string name = "trigger";

  bool operator==(const TriggerSpec&) const = default;
};

/// Checks the trigger against an image shape; throws InvalidArgument when the
/// patch falls outside the image or parameters are out of range.
void validate_trigger(const TriggerSpec& t, const Shape& image_shape);

ImageTensor apply_trigger(const ImageTensor& x, const TriggerSpec& t);

/// Mean absolute difference between x and the trigger pattern over the
/// trigger's footprint (patch region or full image for blends) on masked
/// channels.
double trigger_distance(const ImageTensor& x, const TriggerSpec& t);

/// 3x3 white patch in the bottom-right corner, all channels.
TriggerSpec white_patch_trigger(const Shape& image_shape, std::size_t side = 3);

/// 5x5 star drawn only in the blue channel, bottom-right corner.
TriggerSpec blue_star_trigger(const Shape& image_shape);

nlohmann::json trigger_to_json(const TriggerSpec& t);
/// base_dir resolves a "pattern_image" path relative to the JSON file.
TriggerSpec trigger_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
TriggerSpec load_trigger(const std::filesystem::path& path);
void save_trigger(const std::filesystem::path& path, const TriggerSpec& t);

struct PoisonConfig {
  TriggerSpec trigger;
  ClassLabel target;
  double poison_fraction = 0.1;
};

/// Appends ceil(rho * N) triggered copies of a uniformly chosen subset,
/// relabeled to the target, then shuffles. Benign items are kept unmodified.
LabeledDataset poison_dataset(const LabeledDataset& data, const PoisonConfig& cfg, RngStream rng);

/// Triggers every test image whose label is not the target and relabels it to
/// the target.
LabeledDataset make_trojan_testset(const LabeledDataset& benign_test, const TriggerSpec& t, ClassLabel target);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace tdk
