#pragma once

// "RCFW" tensor container:
//   magic "RCFW" | u32 version | u32 count |
//   per tensor: u16 name length | UTF-8 name | u8 rank | rank x u32 dims |
//               little-endian f32 values
// All integers are little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rcf/error.hpp"
#include "rcf/model.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

inline constexpr char kWeightsMagic[4] = {'R', 'C', 'F', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string source)
      : buf_(buf), source_(std::move(source)) {}

  template <typename U>
  U get() {
    U v;
    get_bytes(&v, sizeof(U));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw FormatError(detail::concat(source_, ": truncated at byte ", pos_));
    }
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::vector<char>& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace detail

inline void write_tensor_file(const std::string& path, const std::vector<StoredTensor>& tensors) {
  detail::ByteWriter w;
  w.put_bytes(kWeightsMagic, 4);
  w.put<std::uint32_t>(kWeightsVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    std::size_t count = 1;
    for (auto d : t.dims) {
      w.put<std::uint32_t>(d);
      count *= d;
    }
    if (count != t.values.size()) {
      throw FormatError("tensor " + t.name + ": dims do not match value count");
    }
    w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
  }
  detail::write_file_bytes(path, w.bytes());
}

inline std::vector<StoredTensor> read_tensor_file(const std::string& path) {
  const std::vector<char> bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path);
  char magic[4];
  r.get_bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kWeightsMagic)) {
    throw FormatError(path + ": bad magic, not an RCFW file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightsVersion) {
    throw FormatError(detail::concat(path, ": unsupported version ", version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<StoredTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name.resize(r.get<std::uint16_t>());
    r.get_bytes(t.name.data(), t.name.size());
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.get<std::uint32_t>());
      n *= t.dims.back();
    }
    t.values.resize(n);
    r.get_bytes(t.values.data(), n * sizeof(float));
    out.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError(path + ": trailing bytes after last tensor");
  return out;
}

template <typename T>
std::vector<std::uint32_t> stored_dims(const Tensor<T>& t, std::size_t rank) {
  const Shape& s = t.shape();
  if (rank == 1) return {static_cast<std::uint32_t>(s.size())};
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

template <typename T>
StoredTensor to_stored(const std::string& name, const Tensor<T>& t, std::size_t rank) {
  StoredTensor st{name, stored_dims(t, rank), {}};
  st.values.reserve(t.size());
  for (T v : t.values()) st.values.push_back(static_cast<float>(v));
  return st;
}

template <typename T>
std::vector<StoredTensor> model_tensors(Model<T>& model) {
  std::vector<StoredTensor> out;
  for (const auto& p : model.parameters()) out.push_back(to_stored(p.name, *p.tensor, p.rank));
  return out;
}

// Copies every model parameter from `stored`. Validates everything before
// touching the model. Entries under "opt/" are ignored; any other name the
// model does not have is an error.
template <typename T>
void assign_model_tensors(Model<T>& model, const std::vector<StoredTensor>& stored,
                          const std::string& source) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : stored) by_name[t.name] = &t;
  auto params = model.parameters();
  std::set<std::string> expected;
  for (const auto& p : params) {
    expected.insert(p.name);
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError(detail::concat(source, ": tensor mismatch at '", p.name,
                                       "' (missing from file)"));
    }
    if (it->second->dims != stored_dims(*p.tensor, p.rank)) {
      throw FormatError(detail::concat(source, ": tensor mismatch at '", p.name,
                                       "' (dimensions differ from config)"));
    }
  }
  for (const auto& t : stored) {
    if (t.name.rfind("opt/", 0) == 0) continue;
    if (!expected.count(t.name)) {
      throw FormatError(detail::concat(source, ": tensor mismatch at '", t.name,
                                       "' (not present in model)"));
    }
  }
  for (const auto& p : params) {
    const auto& src = by_name.at(p.name)->values;
    for (std::size_t i = 0; i < src.size(); ++i) (*p.tensor)[i] = static_cast<T>(src[i]);
  }
}

template <typename T>
void save_weights(Model<T>& model, const std::string& path) {
  write_tensor_file(path, model_tensors(model));
}

// Leaves the model untouched on any error.
template <typename T>
void load_weights(Model<T>& model, const std::string& path) {
  assign_model_tensors(model, read_tensor_file(path), path);
}

}  // namespace rcf
