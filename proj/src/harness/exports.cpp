#include "emoflow/harness/exports.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "emoflow/errors.hpp"

namespace emoflow::harness {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw DataError("cannot create directory '" + dir + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const Vector& image, const vq::ImageShape& shape) {
  if (shape.channels != 3) throw ArgumentError("write_png: RGB images only");
  if (image.size() != shape.size()) throw ArgumentError("write_png: image size does not match the shape");
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("write_png: libpng initialization failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(shape.height * shape.width * 3));
  const int plane = shape.plane();
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image[c * plane + y * shape.width + x], 0.0, 1.0);
        rows[static_cast<std::size_t>((y * shape.width + x) * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  std::vector<png_bytep> ptrs(static_cast<std::size_t>(shape.height));
  for (int y = 0; y < shape.height; ++y) ptrs[static_cast<std::size_t>(y)] = &rows[static_cast<std::size_t>(y * shape.width * 3)];
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_png: libpng error writing '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(shape.width), static_cast<png_uint_32>(shape.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Vector read_png(const std::string& path, vq::ImageShape* shape_out) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("read_png: libpng initialization failed");
  }
  std::vector<png_byte> rows;
  std::vector<png_bytep> ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png: '" + path + "' is not a readable PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  rows.resize(static_cast<std::size_t>(w * h * 3));
  ptrs.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) ptrs[static_cast<std::size_t>(y)] = &rows[static_cast<std::size_t>(y * w * 3)];
  png_read_image(png, ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const vq::ImageShape shape{3, h, w};
  Vector image(shape.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        image[c * shape.plane() + y * w + x] = rows[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0;
  if (shape_out) *shape_out = shape;
  return image;
}

nlohmann::json write_frames(const std::string& dir, const Matrix& frames, const vq::ImageShape& shape,
                            const nlohmann::json& extra) {
  ensure_dir(dir);
  nlohmann::json manifest = extra;
  manifest["format"] = "png-rgb8";
  manifest["width"] = shape.width;
  manifest["height"] = shape.height;
  manifest["frames"] = nlohmann::json::array();
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.png", static_cast<int>(t));
    write_png(dir + "/" + name, frames.row(t).transpose(), shape);
    manifest["frames"].push_back(name);
  }
  write_json(dir + "/manifest.json", manifest);
  return manifest;
}

void write_index_maps(const std::string& path, const std::vector<std::vector<int>>& maps, int grid) {
  std::string out = "t";
  for (int k = 0; k < grid * grid; ++k) out += ",cell" + std::to_string(k);
  out += '\n';
  for (std::size_t t = 0; t < maps.size(); ++t) {
    if (static_cast<int>(maps[t].size()) != grid * grid) throw ArgumentError("write_index_maps: map size mismatch");
    out += std::to_string(t);
    for (int v : maps[t]) out += "," + std::to_string(v);
    out += '\n';
  }
  write_text(path, out);
}

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_latents_csv(const std::string& path, const Matrix& latents, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != latents.rows()) throw ArgumentError("write_latents_csv: label count");
  std::string out = "class";
  for (Eigen::Index j = 0; j < latents.cols(); ++j) out += ",z" + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    out += std::to_string(labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < latents.cols(); ++j) out += "," + number(latents(i, j));
    out += '\n';
  }
  write_text(path, out);
}

void write_pca_csv(const std::string& path, const numerics::PcaResult& pca, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != pca.projected.rows()) throw ArgumentError("write_pca_csv: label count");
  std::string out = "class";
  for (Eigen::Index j = 0; j < pca.projected.cols(); ++j) out += ",pc" + std::to_string(j + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < pca.projected.rows(); ++i) {
    out += std::to_string(labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < pca.projected.cols(); ++j) out += "," + number(pca.projected(i, j));
    out += '\n';
  }
  write_text(path, out);
  nlohmann::json side;
  side["variances"] = std::vector<double>(pca.variances.data(), pca.variances.data() + pca.variances.size());
  side["mean"] = std::vector<double>(pca.mean.data(), pca.mean.data() + pca.mean.size());
  nlohmann::json comps = nlohmann::json::array();
  for (Eigen::Index c = 0; c < pca.components.cols(); ++c) {
    const Vector col = pca.components.col(c);
    comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  side["components"] = comps;
  write_json(path + ".json", side);
}

}  // namespace emoflow::harness
