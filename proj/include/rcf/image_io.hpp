#pragma once

// PNG I/O (libpng simplified API), the "RCFM" raw float map format and the
// on-disk dataset layout:
//   <dir>/index.txt            one sample id per line
//   <dir>/images/<id>.png      RGB image
//   <dir>/gt/<id>/<k>.png      8-bit grayscale annotator map, 255 = edge
//
// RCFM: magic "RCFM" | u32 H | u32 W | H*W little-endian f32, row-major.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rcf/data.hpp"
#include "rcf/error.hpp"
#include "rcf/tensor.hpp"
#include "rcf/weights_io.hpp"

namespace rcf {

namespace fs = std::filesystem;

namespace detail {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<std::uint8_t> read_png_raw(const std::string& path, std::uint32_t format,
                                              std::size_t& h, std::size_t& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError(path + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(path + ": " + img.message);
  }
  h = img.height;
  w = img.width;
  return buf;
}

inline void write_png_raw(const std::string& path, const std::vector<std::uint8_t>& buf,
                          std::uint32_t format, std::size_t h, std::size_t w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw FormatError(path + ": " + img.message);
  }
}

}  // namespace detail

// (1,1,H,W) map with values byte/255.
template <typename T>
Tensor<T> read_png_gray(const std::string& path) {
  std::size_t h = 0, w = 0;
  const auto buf = detail::read_png_raw(path, PNG_FORMAT_GRAY, h, w);
  Tensor<T> map = make_map<T>(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) map[i] = static_cast<T>(buf[i] / 255.0);
  return map;
}

// (1,3,H,W) image with values byte/255.
template <typename T>
Tensor<T> read_png_rgb(const std::string& path) {
  std::size_t h = 0, w = 0;
  const auto buf = detail::read_png_raw(path, PNG_FORMAT_RGB, h, w);
  Tensor<T> img(Shape{1, 3, h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t c = 0; c < 3; ++c) img[c * h * w + p] = static_cast<T>(buf[3 * p + c] / 255.0);
  }
  return img;
}

template <typename T>
void write_png_gray(const std::string& path, const Tensor<T>& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_png_gray: expected a (1,1,H,W) map");
  std::vector<std::uint8_t> buf(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) buf[i] = detail::to_byte(map[i]);
  detail::write_png_raw(path, buf, PNG_FORMAT_GRAY, s.h, s.w);
}

template <typename T>
void write_png_rgb(const std::string& path, const Tensor<T>& img) {
  const Shape& s = img.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_png_rgb: expected a (1,3,H,W) image");
  std::vector<std::uint8_t> buf(img.size());
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) buf[3 * p + c] = detail::to_byte(img[c * plane + p]);
  }
  detail::write_png_raw(path, buf, PNG_FORMAT_RGB, s.h, s.w);
}

inline constexpr char kMapMagic[4] = {'R', 'C', 'F', 'M'};

template <typename T>
void write_raw_map(const std::string& path, const Tensor<T>& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_raw_map: expected a (1,1,H,W) map");
  detail::ByteWriter w;
  w.put_bytes(kMapMagic, 4);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.h));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.w));
  for (T v : map.values()) w.put<float>(static_cast<float>(v));
  detail::write_file_bytes(path, w.bytes());
}

template <typename T>
Tensor<T> read_raw_map(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMapMagic)) throw FormatError(path + ": not an RCFM map");
  const auto h = r.get<std::uint32_t>();
  const auto w = r.get<std::uint32_t>();
  Tensor<T> map = make_map<T>(h, w);
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<T>(r.get<float>());
  if (!r.at_end()) throw FormatError(path + ": trailing bytes");
  return map;
}

// Writes <path> as 8-bit PNG and, when raw_sidecar is set, <path minus
// extension>.rcfm with the exact float values.
template <typename T>
void save_prediction(const Tensor<T>& map, const std::string& path, bool raw_sidecar = false) {
  write_png_gray(path, map);
  if (raw_sidecar) write_raw_map(fs::path(path).replace_extension(".rcfm").string(), map);
}

// Prefers the .rcfm sidecar next to a .png when it exists.
template <typename T>
Tensor<T> load_prediction(const std::string& path) {
  const fs::path p(path);
  if (p.extension() == ".rcfm") return read_raw_map<T>(path);
  const fs::path raw = fs::path(p).replace_extension(".rcfm");
  if (fs::exists(raw)) return read_raw_map<T>(raw.string());
  return read_png_gray<T>(path);
}

inline std::vector<std::string> read_index(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.txt");
  if (!in) throw FormatError(dir + ": missing index.txt");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

template <typename T>
AnnotationSet<T> load_sample(const std::string& dir, const std::string& id) {
  AnnotationSet<T> s;
  s.id = id;
  s.image = read_png_rgb<T>((fs::path(dir) / "images" / (id + ".png")).string());
  const fs::path gt_dir = fs::path(dir) / "gt" / id;
  if (!fs::is_directory(gt_dir)) throw FormatError("missing ground truth directory " + gt_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    Tensor<T> m = read_png_gray<T>(f.string());
    for (T& v : m.values()) v = v >= T(0.5) ? T{1} : T{0};
    s.annotators.push_back(std::move(m));
  }
  s.validate();
  return s;
}

template <typename T>
std::vector<AnnotationSet<T>> load_dataset(const std::string& dir) {
  std::vector<AnnotationSet<T>> out;
  for (const auto& id : read_index(dir)) out.push_back(load_sample<T>(dir, id));
  if (out.empty()) throw FormatError(dir + ": dataset is empty");
  return out;
}

template <typename T>
void save_dataset(const std::string& dir, const std::vector<AnnotationSet<T>>& samples) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream index(fs::path(dir) / "index.txt", std::ios::trunc);
  if (!index) throw FormatError("cannot write " + dir + "/index.txt");
  for (const auto& s : samples) {
    write_png_rgb((fs::path(dir) / "images" / (s.id + ".png")).string(), s.image);
    const fs::path gt_dir = fs::path(dir) / "gt" / s.id;
    fs::create_directories(gt_dir);
    for (std::size_t a = 0; a < s.annotators.size(); ++a) {
      write_png_gray((gt_dir / (std::to_string(a) + ".png")).string(), s.annotators[a]);
    }
    index << s.id << '\n';
  }
}

}  // namespace rcf
