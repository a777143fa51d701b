#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tdk {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

/// Index of the channel treated as "blue" for perturbation defaults.
/// RGB images store blue at channel 2; single-channel images use channel 0.
inline std::size_t default_noise_channel(std::size_t channels) { return channels == 3 ? 2 : 0; }

/// H x W x C pixel grid, row-major with interleaved channels, every value in
/// [0, 1]. Immutable after construction.
class ImageTensor {
 public:
  ImageTensor() = default;

  /// Throws InvalidArgument on a bad shape, a length mismatch, or any pixel
  /// outside [0, 1] (NaN included).
  ImageTensor(Shape shape, std::vector<double> pixels);

  /// Clamps every value into [0, 1] instead of rejecting. NaN becomes 0.
  static ImageTensor clamped(Shape shape, std::vector<double> pixels);

  static ImageTensor filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return pixels_.size(); }

  std::span<const double> pixels() const { return pixels_; }
  std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const {
    return (row * shape_.width + col) * shape_.channels + ch;
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const { return pixels_[index(row, col, ch)]; }

  /// Copy of the pixel buffer, for building a modified image.
  std::vector<double> to_vector() const { return pixels_; }

  bool operator==(const ImageTensor&) const = default;

 private:
  struct Unchecked {};
  ImageTensor(Unchecked, Shape shape, std::vector<double> pixels)
      : shape_(shape), pixels_(std::move(pixels)) {}

  Shape shape_;
  std::vector<double> pixels_;
};

/// Validates a shape: positive height/width, channels in {1, 3}.
void check_shape(const Shape& shape);

struct ClassLabel {
  std::uint32_t index = 0;

  bool operator==(const ClassLabel&) const = default;
  auto operator<=>(const ClassLabel&) const = default;
};

struct LabeledItem {
  ImageTensor image;
  ClassLabel label;

  bool operator==(const LabeledItem&) const = default;
};

/// Ordered list of labeled images sharing one shape, labels below class_count.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::vector<LabeledItem> items, std::uint32_t class_count);

  const std::vector<LabeledItem>& items() const { return items_; }
  std::uint32_t class_count() const { return class_count_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const LabeledItem& operator[](std::size_t i) const { return items_[i]; }
  /// Shape of the first item; throws on an empty dataset.
  const Shape& shape() const;

  std::vector<ImageTensor> images() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  LabeledDataset slice(std::size_t begin, std::size_t end) const;

  bool operator==(const LabeledDataset&) const = default;

 private:
  std::vector<LabeledItem> items_;
  std::uint32_t class_count_ = 0;
};

}  // namespace tdk
