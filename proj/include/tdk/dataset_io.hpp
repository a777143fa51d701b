#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tdk/core.hpp"

namespace tdk {

/// Binary tensor file, little-endian:
///   "TDK1", u32 count, u32 H, u32 W, u32 C, u32 K,
///   then count x (H*W*C float32 pixels, u32 label).
void write_tensor_file(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_tensor_file(const std::filesystem::path& path);

/// Manifest CSV, one "path,label" row per image. Paths are relative to the
/// manifest's directory. An optional "path,label" header row is skipped.
/// Directive rows "#shape,H,W,C" and "#classes,K" are honored; raw images
/// (.raw, 8-bit interleaved H*W*C bytes) require #shape. Without #classes the
/// class count is max(label) + 1.
LabeledDataset read_manifest(const std::filesystem::path& manifest);

/// Writes every image as PNG next to the manifest and the manifest itself.
void write_manifest(const std::filesystem::path& manifest, const LabeledDataset& data);

/// Reads .tdk tensor files, .csv manifests, or a single .png/.raw image
/// (label 0, one class unless class_count is given).
LabeledDataset read_dataset(const std::filesystem::path& path, std::optional<std::uint32_t> class_count = {});

/// 8-bit quantization with round-half-even.
std::uint8_t quantize_u8(double v);

ImageTensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_raw_u8(const std::filesystem::path& path, const Shape& shape);

}  // namespace tdk
