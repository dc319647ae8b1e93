#include "cae/core/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cae {
namespace fs = std::filesystem;

namespace {

RawImage finish_read(png_image& image) {
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("png decode failed: " + msg);
  }
  RawImage raw{static_cast<int>(image.height), static_cast<int>(image.width), color ? 3 : 1, {}};
  raw.data.assign(buffer.begin(), buffer.end());
  return raw;
}

png_image prepare_write(const RawImage& img, std::vector<unsigned char>& bytes) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error("png encode: unsupported channel count " + std::to_string(img.channels));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  bytes.resize(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
  });
  return image;
}

}  // namespace

RawImage read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("cannot read PNG '" + path.string() + "': " + image.message);
  }
  return finish_read(image);
}

RawImage decode_png(const std::vector<unsigned char>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(std::string("cannot decode PNG: ") + image.message);
  }
  return finish_read(image);
}

void write_png(const fs::path& path, const RawImage& img) {
  std::vector<unsigned char> bytes;
  png_image image = prepare_write(img, bytes);
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error("cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void write_png(const fs::path& path, const ImageTensor& img) { write_png(path, to_raw(img)); }

std::vector<unsigned char> encode_png(const RawImage& img) {
  std::vector<unsigned char> bytes;
  png_image image = prepare_write(img, bytes);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + image.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Dataset load_dataset(const fs::path& root, int side, Split split) {
  if (!fs::is_directory(root)) throw Error("dataset root '" + root.string() + "' not found");
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());
  Dataset ds;
  ds.class_count = static_cast<int>(classes.size());
  ds.class_names = classes;
  ds.split = split;
  for (int k = 0; k < ds.class_count; ++k) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / classes[static_cast<std::size_t>(k)])) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ds.samples.push_back(
          {f.stem().string(), normalize_image(read_png(f), side), ClassLabel(k, ds.class_count)});
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& root) {
  for (int k = 0; k < ds.class_count; ++k) {
    fs::create_directories(root / ds.class_names.at(static_cast<std::size_t>(k)));
  }
  for (const auto& s : ds.samples) {
    write_png(root / ds.class_names.at(static_cast<std::size_t>(s.label.index)) / (s.id + ".png"),
              s.image);
  }
}

}  // namespace cae
