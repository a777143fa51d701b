#include "tdk/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace tdk {
using nlohmann::json;

void NoiseSpec::validate() const {
  if (fixed_sigma) {
    if (!(*fixed_sigma > 0.0 && *fixed_sigma <= 1.0)) throw InvalidArgument("noise.sigma: must be in (0, 1]");
  } else {
    if (!(dynamic.sigma_min > 0.0)) throw InvalidArgument("noise.sigma_min: must be > 0");
    if (!(dynamic.sigma_max <= 1.0)) throw InvalidArgument("noise.sigma_max: must be <= 1");
    if (!(dynamic.sigma_min <= dynamic.sigma_max)) throw InvalidArgument("noise.sigma_min: must be <= sigma_max");
    if (!(dynamic.top_k_fraction > 0.0 && dynamic.top_k_fraction <= 1.0)) {
      throw InvalidArgument("noise.k_frac: must be in (0, 1]");
    }
    if (!std::isfinite(dynamic.scale) || dynamic.scale < 0.0) throw InvalidArgument("noise.scale: must be >= 0");
  }
  if (min_side < 2) throw InvalidArgument("noise.min_side: must be >= 2");
  if (channel_mask) {
    for (std::size_t ch : *channel_mask) {
      if (ch > 2) throw InvalidArgument("noise.channel_mask: channel " + std::to_string(ch) + " out of range");
    }
  }
}

std::vector<std::size_t> NoiseSpec::channels_for(std::size_t image_channels) const {
  if (!channel_mask) return {default_noise_channel(image_channels)};
  std::vector<std::size_t> out;
  for (std::size_t ch : *channel_mask) {
    if (ch >= image_channels) {
      throw InvalidArgument("noise.channel_mask: channel " + std::to_string(ch) + " not in a " +
                            std::to_string(image_channels) + "-channel image");
    }
    if (std::find(out.begin(), out.end(), ch) == out.end()) out.push_back(ch);
  }
  std::sort(out.begin(), out.end());
  return out;
}

json noise_to_json(const NoiseSpec& spec) {
  json j{{"distribution", spec.distribution == NoiseDistribution::Gaussian ? "gaussian" : "laplacian"},
         {"patch_mode", spec.random_patch ? "random-patch" : "full-image"},
         {"min_side", spec.min_side}};
  if (spec.fixed_sigma) {
    j["sigma_mode"] = {{"kind", "fixed"}, {"sigma", *spec.fixed_sigma}};
  } else {
    j["sigma_mode"] = {{"kind", "dynamic"},
                       {"scale", spec.dynamic.scale},
                       {"k_frac", spec.dynamic.top_k_fraction},
                       {"sigma_min", spec.dynamic.sigma_min},
                       {"sigma_max", spec.dynamic.sigma_max}};
  }
  j["channel_mask"] = spec.channel_mask ? json(*spec.channel_mask) : json(nullptr);
  return j;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec spec;
  try {
    const auto dist = j.at("distribution").get<std::string>();
    if (dist == "gaussian") {
      spec.distribution = NoiseDistribution::Gaussian;
    } else if (dist == "laplacian") {
      spec.distribution = NoiseDistribution::Laplacian;
    } else {
      throw InvalidArgument("noise.distribution: unknown '" + dist + "'");
    }
    const auto mode = j.at("patch_mode").get<std::string>();
    if (mode != "random-patch" && mode != "full-image") throw InvalidArgument("noise.patch_mode: unknown '" + mode + "'");
    spec.random_patch = mode == "random-patch";
    spec.min_side = j.at("min_side").get<std::size_t>();
    const json& sm = j.at("sigma_mode");
    if (sm.at("kind") == "fixed") {
      spec.fixed_sigma = sm.at("sigma").get<double>();
    } else {
      spec.dynamic = {sm.at("scale").get<double>(), sm.at("k_frac").get<double>(), sm.at("sigma_min").get<double>(),
                      sm.at("sigma_max").get<double>()};
    }
    if (!j.at("channel_mask").is_null()) spec.channel_mask = j.at("channel_mask").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("noise: ") + e.what());
  }
  spec.validate();
  return spec;
}

double top_k_mean(const ImageTensor& x, double top_k_fraction) {
  std::vector<double> px = x.to_vector();
  // Epsilon keeps exact products (0.1 * 10) from rounding up to an extra pixel.
  auto k = static_cast<std::size_t>(std::ceil(top_k_fraction * static_cast<double>(px.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, px.size());
  std::nth_element(px.begin(), px.begin() + static_cast<std::ptrdiff_t>(k - 1), px.end(), std::greater<>());
  std::sort(px.begin(), px.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += px[i];
  return sum / static_cast<double>(k);
}

double dynamic_sigma(const ImageTensor& x, const DynamicSigma& params) {
  const double v = top_k_mean(x, params.top_k_fraction);
  if (v <= 0x1.0p-20) return params.sigma_max;
  return std::clamp(-params.scale * std::log2(v), params.sigma_min, params.sigma_max);
}

double noise_sigma(const ImageTensor& x, const NoiseSpec& spec) {
  return spec.fixed_sigma ? *spec.fixed_sigma : dynamic_sigma(x, spec.dynamic);
}

PatchPlacement sample_placement(RngStream& rng, std::size_t height, std::size_t width, std::size_t min_side) {
  const std::size_t max_side = std::min(height, width);
  if (min_side > max_side) throw InvalidArgument("min_side exceeds the image size");
  PatchPlacement p;
  p.side = static_cast<std::size_t>(rng.uniform_int(min_side, max_side));
  p.top = static_cast<std::size_t>(rng.uniform_int(0, height - p.side));
  p.left = static_cast<std::size_t>(rng.uniform_int(0, width - p.side));
  return p;
}

double sample_noise(RngStream& rng, NoiseDistribution dist, double sigma) {
  if (dist == NoiseDistribution::Gaussian) return sigma * rng.normal();
  return rng.laplace(sigma / std::numbers::sqrt2);
}

PatchPlacement placement_for(const ImageTensor& x, const NoiseSpec& spec, RngStream rng) {
  if (!spec.random_patch) return {0, 0, std::min(x.height(), x.width())};
  const std::size_t min_side = std::min({spec.min_side, x.height(), x.width()});
  return sample_placement(rng, x.height(), x.width(), min_side);
}

ImageTensor perturb_once(const ImageTensor& x, const NoiseSpec& spec, double sigma, RngStream rng) {
  const std::vector<std::size_t> channels = spec.channels_for(x.channels());
  if (channels.empty()) return x;

  std::size_t r0 = 0, c0 = 0, rows = x.height(), cols = x.width();
  if (spec.random_patch) {
    const std::size_t min_side = std::min({spec.min_side, x.height(), x.width()});
    const PatchPlacement p = sample_placement(rng, x.height(), x.width(), min_side);
    r0 = p.top;
    c0 = p.left;
    rows = cols = p.side;
  }

  std::vector<double> px = x.to_vector();
  for (std::size_t r = r0; r < r0 + rows; ++r) {
    for (std::size_t c = c0; c < c0 + cols; ++c) {
      for (std::size_t ch : channels) px[x.index(r, c, ch)] += sample_noise(rng, spec.distribution, sigma);
    }
  }
  return ImageTensor::clamped(x.shape(), std::move(px));
}

}  // namespace tdk
