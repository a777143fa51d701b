#include "tdk/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cfenv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tdk {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'T', 'D', 'K', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const fs::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path.string() + ": truncated tensor file");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw InvalidArgument(std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

std::string lower_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

std::uint32_t parse_u32(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used);
    if (used != s.size() || v > 0xffffffffUL) throw std::out_of_range(s);
    return static_cast<std::uint32_t>(v);
  } catch (const std::logic_error&) {
    throw IoError(context + ": expected a non-negative integer, got '" + s + "'");
  }
}

}  // namespace

void write_tensor_file(const fs::path& path, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("cannot write an empty dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const Shape& s = data.shape();
  out.write(kMagic, 4);
  put_u32(out, checked_u32(data.size(), "count"));
  put_u32(out, checked_u32(s.height, "height"));
  put_u32(out, checked_u32(s.width, "width"));
  put_u32(out, checked_u32(s.channels, "channels"));
  put_u32(out, data.class_count());
  for (const auto& item : data.items()) {
    for (double v : item.image.pixels()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    put_u32(out, item.label.index);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LabeledDataset read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": bad magic");
  const std::uint32_t count = get_u32(in, path);
  const Shape shape{get_u32(in, path), get_u32(in, path), get_u32(in, path)};
  const std::uint32_t classes = get_u32(in, path);
  check_shape(shape);
  std::vector<LabeledItem> items;
  items.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> px(shape.size());
    for (double& v : px) v = static_cast<double>(std::bit_cast<float>(get_u32(in, path)));
    const std::uint32_t label = get_u32(in, path);
    try {
      items.push_back({ImageTensor(shape, std::move(px)), ClassLabel{label}});
    } catch (const InvalidArgument& e) {
      throw IoError(path.string() + ": item " + std::to_string(i) + ": " + e.what());
    }
  }
  return LabeledDataset(std::move(items), classes);
}

std::uint8_t quantize_u8(double v) {
  // nearbyint under the default FE_TONEAREST mode rounds half to even.
  const double scaled = std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

ImageTensor read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError(path.string() + ": " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(path.string() + ": " + img.message);
  }
  const Shape shape{img.height, img.width, gray ? 1u : 3u};
  std::vector<double> px(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) px[i] = buf[i] / 255.0;
  return ImageTensor(shape, std::move(px));
}

void write_png(const fs::path& path, const ImageTensor& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = image.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(image.size());
  const auto px = image.pixels();
  std::transform(px.begin(), px.end(), buf.begin(), quantize_u8);
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + img.message);
  }
}

ImageTensor read_raw_u8(const fs::path& path, const Shape& shape) {
  check_shape(shape);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes(shape.size());
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError(path.string() + ": expected " + std::to_string(shape.size()) + " bytes for shape " +
                  shape.to_string());
  }
  std::vector<double> px(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) px[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return ImageTensor(shape, std::move(px));
}

LabeledDataset read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::optional<Shape> shape;
  std::optional<std::uint32_t> classes;
  std::vector<LabeledItem> items;
  std::uint32_t max_label = 0;
  std::string line;
  std::size_t lineno = 0;
  bool seen_row = false;  // the optional header may only precede data rows
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    auto cells = split_csv(line);
    if (cells[0] == "#shape") {
      if (cells.size() != 4) throw IoError(where + ": #shape needs H,W,C");
      shape = Shape{parse_u32(cells[1], where), parse_u32(cells[2], where), parse_u32(cells[3], where)};
      continue;
    }
    if (cells[0] == "#classes") {
      if (cells.size() != 2) throw IoError(where + ": #classes needs K");
      classes = parse_u32(cells[1], where);
      continue;
    }
    if (cells[0].starts_with('#')) continue;
    if (!seen_row && cells.size() == 2 && cells[0] == "path" && cells[1] == "label") {
      seen_row = true;
      continue;
    }
    seen_row = true;
    if (cells.size() != 2) throw IoError(where + ": expected path,label");
    const fs::path img_path = base / cells[0];
    const std::uint32_t label = parse_u32(cells[1], where);
    const std::string ext = lower_ext(img_path);
    ImageTensor image;
    if (ext == ".png") {
      image = read_png(img_path);
    } else if (ext == ".raw") {
      if (!shape) throw IoError(where + ": raw image needs a #shape directive");
      image = read_raw_u8(img_path, *shape);
    } else {
      throw IoError(where + ": unsupported image type '" + ext + "'");
    }
    max_label = std::max(max_label, label);
    items.push_back({std::move(image), ClassLabel{label}});
  }
  return LabeledDataset(std::move(items), classes.value_or(max_label + 1));
}

void write_manifest(const fs::path& manifest, const LabeledDataset& data) {
  const fs::path base = manifest.parent_path();
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot open " + manifest.string() + " for writing");
  out << "path,label\n#classes," << data.class_count() << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = "img_" + std::to_string(i) + ".png";
    write_png(base / name, data[i].image);
    out << name << "," << data[i].label.index << "\n";
  }
}

LabeledDataset read_dataset(const fs::path& path, std::optional<std::uint32_t> class_count) {
  const std::string ext = lower_ext(path);
  if (ext == ".csv") return read_manifest(path);
  if (ext == ".png") return LabeledDataset({{read_png(path), ClassLabel{0}}}, class_count.value_or(1));
  return read_tensor_file(path);
}

}  // namespace tdk
