#include "tdk/core.hpp"

#include <cmath>

namespace tdk {

std::string Shape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void check_shape(const Shape& shape) {
  if (shape.height == 0 || shape.width == 0) throw InvalidArgument("image height and width must be positive");
  if (shape.channels != 1 && shape.channels != 3) throw InvalidArgument("image channels must be 1 or 3");
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> pixels) : shape_(shape), pixels_(std::move(pixels)) {
  check_shape(shape_);
  if (pixels_.size() != shape_.size()) {
    throw InvalidArgument("pixel count " + std::to_string(pixels_.size()) + " does not match shape " +
                          shape_.to_string());
  }
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    const double v = pixels_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("pixel " + std::to_string(i) + " out of [0,1]: " + std::to_string(v));
    }
  }
}

ImageTensor ImageTensor::clamped(Shape shape, std::vector<double> pixels) {
  check_shape(shape);
  if (pixels.size() != shape.size()) throw InvalidArgument("pixel count does not match shape " + shape.to_string());
  for (double& v : pixels) {
    if (std::isnan(v)) v = 0.0;
    v = std::clamp(v, 0.0, 1.0);
  }
  return ImageTensor(Unchecked{}, shape, std::move(pixels));
}

ImageTensor ImageTensor::filled(Shape shape, double value) {
  check_shape(shape);
  return ImageTensor(shape, std::vector<double>(shape.size(), value));
}

LabeledDataset::LabeledDataset(std::vector<LabeledItem> items, std::uint32_t class_count)
    : items_(std::move(items)), class_count_(class_count) {
  if (class_count_ == 0) throw InvalidArgument("dataset class_count must be positive");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].image.shape() != items_[0].image.shape()) {
      throw ShapeMismatch("dataset item " + std::to_string(i) + " has shape " + items_[i].image.shape().to_string() +
                          ", expected " + items_[0].image.shape().to_string());
    }
    if (items_[i].label.index >= class_count_) {
      throw InvalidArgument("dataset item " + std::to_string(i) + " label " + std::to_string(items_[i].label.index) +
                            " >= class_count " + std::to_string(class_count_));
    }
  }
}

const Shape& LabeledDataset::shape() const {
  if (items_.empty()) throw InvalidArgument("empty dataset has no shape");
  return items_.front().image.shape();
}

std::vector<ImageTensor> LabeledDataset::images() const {
  std::vector<ImageTensor> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.image);
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<LabeledItem> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= items_.size()) throw InvalidArgument("subset index " + std::to_string(i) + " out of range");
    out.push_back(items_[i]);
  }
  return LabeledDataset(std::move(out), class_count_);
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > items_.size()) throw InvalidArgument("slice out of range");
  return LabeledDataset(std::vector<LabeledItem>(items_.begin() + begin, items_.begin() + end), class_count_);
}

}  // namespace tdk
