#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdk/core.hpp"
#include "tdk/rng.hpp"

namespace tdk {

enum class NoiseDistribution { Gaussian, Laplacian };

/// Per-image standard deviation: clamp(-scale * log2(v), sigma_min, sigma_max)
/// where v is the mean of the brightest top_k_fraction of pixel values.
struct DynamicSigma {
  double scale = 0.25;
  double top_k_fraction = 0.1;
  double sigma_min = 0.05;
  double sigma_max = 1.0;

  bool operator==(const DynamicSigma&) const = default;
};

struct NoiseSpec {
  NoiseDistribution distribution = NoiseDistribution::Gaussian;
  /// Empty means dynamic sigma; otherwise the fixed standard deviation.
  std::optional<double> fixed_sigma;
  DynamicSigma dynamic;
  /// Channels that receive noise. std::nullopt selects the blue channel (RGB)
  /// or channel 0 (grayscale) at use time.
  std::optional<std::vector<std::size_t>> channel_mask;
  /// false: noise over the whole image; true: over a random square patch.
  bool random_patch = true;
  std::size_t min_side = 2;

  bool operator==(const NoiseSpec&) const = default;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  std::vector<std::size_t> channels_for(std::size_t image_channels) const;
  /// Sigma bounds in force: [sigma_min, sigma_max] for dynamic, the fixed value otherwise.
  double lower_sigma() const { return fixed_sigma ? *fixed_sigma : dynamic.sigma_min; }
  double upper_sigma() const { return fixed_sigma ? *fixed_sigma : dynamic.sigma_max; }
};

nlohmann::json noise_to_json(const NoiseSpec& spec);
NoiseSpec noise_from_json(const nlohmann::json& j);

struct PatchPlacement {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t side = 0;

  bool operator==(const PatchPlacement&) const = default;
};

/// Mean of the ceil(top_k_fraction * N) largest values of the flattened image.
double top_k_mean(const ImageTensor& x, double top_k_fraction);

double dynamic_sigma(const ImageTensor& x, const DynamicSigma& params);

/// Sigma used for x under spec.
double noise_sigma(const ImageTensor& x, const NoiseSpec& spec);

/// side uniform on [min_side, min(H, W)], then top and left uniform over the
/// positions that keep the square inside the image.
PatchPlacement sample_placement(RngStream& rng, std::size_t height, std::size_t width, std::size_t min_side);

/// Draws one noise value of the given standard deviation. Laplacian noise
/// uses scale sigma / sqrt(2) so both distributions have variance sigma^2.
double sample_noise(RngStream& rng, NoiseDistribution dist, double sigma);

/// Adds i.i.d. noise to the masked channels inside a sampled patch (or the
/// whole image), then clamps to [0, 1]. Placement is drawn before any noise,
/// so swapping the distribution keeps placements identical under one seed.
ImageTensor perturb_once(const ImageTensor& x, const NoiseSpec& spec, double sigma, RngStream rng);

/// Placement perturb_once would use for this stream (full image when random
/// patches are off).
PatchPlacement placement_for(const ImageTensor& x, const NoiseSpec& spec, RngStream rng);

}  // namespace tdk
