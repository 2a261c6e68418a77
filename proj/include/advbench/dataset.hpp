#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "advbench/models.hpp"

namespace advbench {

struct Dataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::string name;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  Shape image_shape() const { return images.empty() ? Shape{} : images.front().shape(); }
  LabeledSet train() const { return subset(train_indices); }
  LabeledSet test() const { return subset(test_indices); }
  LabeledSet subset(const std::vector<std::size_t>& indices) const;
};

// Per class, in dataset order, the last 20% (rounded) of each class's images
// go to the test split and the rest to training.
void assign_stratified_split(Dataset& dataset);

// Two-class oriented-grating images: class 0 has near-horizontal stripes at a
// lower spatial frequency, class 1 near-vertical stripes at a higher one.
// Each image has a random phase, a Gaussian envelope at a random position and
// additive noise. Labels alternate, pixels are rounded to float precision so
// the dataset file format stores them exactly.
Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t count,
                                   std::size_t image_size);

// "ADVD" | u32 version | u32 count | u16 H | u16 W | u8 C | u8 class count
// | u8 label per image | f32 pixels (HWC, image after image).
inline constexpr std::uint32_t kDatasetFormatVersion = 1;
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

// Loads either a dataset file or a directory holding one subdirectory per
// class of binary/ASCII PGM or PPM images. Classes are numbered in
// lexicographic order of directory name, images ordered by filename.
Dataset load_dataset(const std::filesystem::path& path);

// Netpbm (P2, P3, P5, P6) decoding to an H x W x C image in [0, 1].
Image decode_netpbm(std::string_view bytes, const std::string& filename);

}  // namespace advbench
