#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cae/core/image_ops.hpp"
#include "cae/core/types.hpp"

namespace cae {

/// 8-bit PNG, 1 or 3 channels. Gray+alpha and RGBA inputs drop alpha.
RawImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawImage& img);
void write_png(const std::filesystem::path& path, const ImageTensor& img);

std::vector<unsigned char> encode_png(const RawImage& img);
RawImage decode_png(const std::vector<unsigned char>& bytes);

/// Loads `root/<class_name>/<stem>.png`; class index is the lexicographic rank
/// of class_name and the sample id is the file stem.
Dataset load_dataset(const std::filesystem::path& root, int side, Split split);

/// Writes `root/<class_name>/<id>.png` for every sample.
void save_dataset(const Dataset& ds, const std::filesystem::path& root);

}  // namespace cae
