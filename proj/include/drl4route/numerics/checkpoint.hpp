#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "drl4route/errors.hpp"
#include "drl4route/numerics/parameter_store.hpp"

namespace drl4route::numerics {

// Layout: "DRL4R1", then per parameter: u32 name length, name bytes, u32 rank,
// u32 dims..., f64 values (row-major); trailing u64 parameter count. All
// integers and floats little-endian.
inline constexpr std::string_view kCheckpointMagic = "DRL4R1";

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  template <class T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > buf_.size()) throw FormatError(std::string("truncated checkpoint reading ") + what, static_cast<long long>(pos_));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    if (pos_ + n > buf_.size()) throw FormatError(std::string("truncated checkpoint reading ") + what, static_cast<long long>(pos_));
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const ParameterStore& params) {
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  for (const Parameter& p : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) detail::put_le<double>(out, p.value.data()[i]);
  }
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  return out;
}

inline ParameterStore decode_checkpoint(const std::vector<unsigned char>& buf) {
  detail::Reader r(buf);
  if (r.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  ParameterStore out;
  // Entries run until exactly 8 bytes (the trailing count) remain.
  while (r.remaining() > sizeof(std::uint64_t)) {
    const std::size_t at = r.pos();
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.bytes(name_len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 2) throw FormatError("unsupported rank for '" + name + "'", static_cast<long long>(at));
    std::vector<std::size_t> shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>("dims"));
    const std::size_t rows = rank == 1 ? 1 : shape[0];
    const std::size_t cols = shape.back();
    if (r.remaining() < rows * cols * sizeof(double) + sizeof(std::uint64_t))
      throw FormatError("truncated checkpoint in values of '" + name + "'", static_cast<long long>(r.pos()));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>("values");
    out.add(name, shape, std::move(m));
  }
  const std::size_t at = r.pos();
  const auto count = r.get<std::uint64_t>("parameter count");
  if (count != out.size())
    throw FormatError("parameter count mismatch: trailer says " + std::to_string(count) + ", found " +
                          std::to_string(out.size()),
                      static_cast<long long>(at));
  return out;
}

inline void save_checkpoint(const ParameterStore& params, const std::string& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// Copies loaded values into an existing store; every name and shape must match.
inline void assign_checkpoint(ParameterStore& target, const ParameterStore& loaded) {
  for (const Parameter& p : target) {
    if (!loaded.contains(p.name)) throw InputError("checkpoint lacks parameter '" + p.name + "'");
    if (loaded.at(p.name).shape != p.shape) throw InputError("shape mismatch for parameter '" + p.name + "'");
  }
  if (loaded.size() != target.size()) throw InputError("checkpoint has unexpected extra parameters");
  for (Parameter& p : target) p.value = loaded.at(p.name).value;
}

}  // namespace drl4route::numerics
