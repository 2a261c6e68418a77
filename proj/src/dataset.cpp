#include "advbench/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>

#include "advbench/binary_io.hpp"
#include "advbench/rng.hpp"

namespace advbench {
namespace {

constexpr std::string_view kDatasetMagic = "ADVD";

}  // namespace

LabeledSet Dataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledSet out;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void assign_stratified_split(Dataset& dataset) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
  std::vector<bool> is_test(dataset.size(), false);
  for (const auto& [label, members] : by_class) {
    const auto n_test = static_cast<std::size_t>(
        std::lround(0.2 * static_cast<double>(members.size())));
    for (std::size_t k = members.size() - n_test; k < members.size(); ++k) {
      is_test[members[k]] = true;
    }
  }
  dataset.train_indices.clear();
  dataset.test_indices.clear();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (is_test[i] ? dataset.test_indices : dataset.train_indices).push_back(i);
  }
}

Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t count,
                                   std::size_t image_size) {
  if (count < 100) throw ConfigError("synthetic dataset needs at least 100 images");
  if (image_size < 8 || image_size > 4096) {
    throw ConfigError("synthetic image size must be at least 8 pixels");
  }
  constexpr double kPi = std::numbers::pi;
  Rng rng(seed);
  Dataset ds;
  ds.name = "synthetic-gratings";
  ds.seed = seed;
  ds.class_count = 2;
  const auto size = static_cast<double>(image_size);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t label = n % 2;
    const double theta = (label == 0 ? 0.0 : kPi / 2) + rng.uniform(-0.35, 0.35);
    const double freq = label == 0 ? rng.uniform(0.10, 0.14) : rng.uniform(0.18, 0.22);
    const double phase = rng.uniform(0.0, 2 * kPi);
    const double cy = size * rng.uniform(0.35, 0.65);
    const double cx = size * rng.uniform(0.35, 0.65);
    const double sigma = size * rng.uniform(0.28, 0.38);
    const double contrast = rng.uniform(0.23, 0.33);
    Tensor pixels(Shape{image_size, image_size, 1});
    for (std::size_t i = 0; i < image_size; ++i) {
      for (std::size_t j = 0; j < image_size; ++j) {
        const double y = static_cast<double>(i), x = static_cast<double>(j);
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double envelope = std::exp(-r2 / (2 * sigma * sigma));
        const double along = x * std::sin(theta) + y * std::cos(theta);
        double v = 0.5 + contrast * envelope * std::cos(2 * kPi * freq * along + phase) +
                   rng.normal(0.0, 0.03);
        v = std::clamp(v, 0.0, 1.0);
        pixels.at(i, j, 0) = static_cast<double>(static_cast<float>(v));
      }
    }
    ds.images.emplace_back(std::move(pixels));
    ds.labels.push_back(label);
  }
  assign_stratified_split(ds);
  return ds;
}

std::string encode_dataset(const Dataset& dataset) {
  if (dataset.size() == 0) throw DataError("cannot encode an empty dataset");
  const Shape shape = dataset.image_shape();
  if (shape[0] > 0xFFFF || shape[1] > 0xFFFF || shape[2] > 0xFF ||
      dataset.class_count > 0xFF) {
    throw DataError("dataset dimensions exceed the file format limits");
  }
  io::Writer w;
  w.raw(kDatasetMagic);
  w.put<std::uint32_t>(kDatasetFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(shape[0]));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(shape[1]));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(shape[2]));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dataset.class_count));
  for (std::size_t label : dataset.labels) w.put<std::uint8_t>(static_cast<std::uint8_t>(label));
  for (const Image& img : dataset.images) {
    if (img.shape() != shape) throw DataError("dataset images differ in shape");
    for (std::size_t i = 0; i < img.size(); ++i) {
      w.put<float>(static_cast<float>(img.tensor()[i]));
    }
  }
  return w.bytes();
}

Dataset decode_dataset(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.raw(std::min<std::size_t>(bytes.size(), 4)) != kDatasetMagic) {
    throw FormatError("not a dataset file (bad magic bytes)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  const std::size_t h = r.get<std::uint16_t>();
  const std::size_t w = r.get<std::uint16_t>();
  const std::size_t c = r.get<std::uint8_t>();
  Dataset ds;
  ds.name = "file";
  ds.class_count = r.get<std::uint8_t>();
  if (count == 0 || h == 0 || w == 0 || c == 0) r.fail("empty dataset header");
  if (ds.class_count < 2) r.fail("dataset needs at least 2 classes");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t label = r.get<std::uint8_t>();
    if (label >= ds.class_count) r.fail("label out of range");
    ds.labels.push_back(label);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor pixels(Shape{h, w, c});
    for (std::size_t p = 0; p < pixels.size(); ++p) pixels[p] = r.get<float>();
    try {
      ds.images.emplace_back(std::move(pixels));
    } catch (const DataError& e) {
      r.fail("image " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after dataset");
  assign_stratified_split(ds);
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  io::write_file(path, encode_dataset(dataset));
}

Image decode_netpbm(std::string_view bytes, const std::string& filename) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> void {
    throw DataError(filename + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) fail("number too large");
    }
    if (digits == 0) fail("malformed header or pixel data");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P') fail("not a PGM/PPM image");
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    fail("unsupported netpbm variant P" + std::string(1, kind));
  }
  pos = 2;
  const std::size_t width = number(), height = number(), maxval = number();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) fail("bad header");
  const std::size_t channels = (kind == '3' || kind == '6') ? 3 : 1;
  Tensor pixels(Shape{height, width, channels});
  const auto scale = static_cast<double>(maxval);
  if (kind == '2' || kind == '3') {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const std::size_t v = number();
      if (v > maxval) fail("pixel exceeds maxval");
      pixels[i] = static_cast<double>(v) / scale;
    }
  } else {
    ++pos;  // single whitespace after maxval
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + pixels.size() * bytes_per) fail("truncated pixel data");
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      std::size_t v = static_cast<unsigned char>(bytes[pos++]);
      if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos++]);
      if (v > maxval) fail("pixel exceeds maxval");
      pixels[i] = static_cast<double>(v) / scale;
    }
  }
  return Image(std::move(pixels));
}

Dataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw DataError(path.string() + " does not exist");
  if (!fs::is_directory(path)) {
    Dataset ds = decode_dataset(io::read_file(path));
    ds.name = path.filename().string();
    return ds;
  }

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) {
    throw DataError(path.string() + ": need at least 2 class subdirectories, found " +
                    std::to_string(class_dirs.size()));
  }
  Dataset ds;
  ds.name = path.filename().string();
  ds.class_count = class_dirs.size();
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
      return a.filename().string() < b.filename().string();
    });
    for (const fs::path& file : files) {
      std::string bytes;
      try {
        bytes = io::read_file(file);
      } catch (const DataError&) {
        throw DataError("unreadable image file " + file.string());
      }
      Image img = decode_netpbm(bytes, file.string());
      if (!ds.images.empty() && img.shape() != ds.images.front().shape()) {
        throw DataError(file.string() + ": image shape " + shape_string(img.shape()) +
                        " differs from " + shape_string(ds.images.front().shape()));
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(label);
    }
  }
  if (ds.images.empty()) throw DataError(path.string() + " contains no images");
  assign_stratified_split(ds);
  return ds;
}

}  // namespace advbench
