#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vnlg/optimizer.hpp"

// Binary parameter checkpoint: versioned header, then name -> shape ->
// raw little-endian doubles per parameter. Round-trips bit-exactly.
namespace vnlg {

namespace detail {

constexpr char kCkptMagic[8] = {'V', 'N', 'L', 'G', 'C', 'K', 'P', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, ParameterStore& store,
                            std::uint64_t vocab_hash = 0) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(detail::kCkptMagic, 8);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint64_t>(os, vocab_hash);
  detail::write_pod<std::uint64_t>(os, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ad::Parameter& p = store.at(i);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.name().size()));
    os.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.value().ndim()));
    for (std::size_t d : p.value().shape) detail::write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(p.value().values.data()),
             static_cast<std::streamsize>(p.value().size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Strict load: the file and the store must carry exactly the same parameter
// set with matching shapes.
inline std::uint64_t load_checkpoint(const std::string& path, ParameterStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const auto vocab_hash = detail::read_pod<std::uint64_t>(is);
  const auto count = detail::read_pod<std::uint64_t>(is);
  if (count != store.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (file " +
                             std::to_string(count) + ", model " +
                             std::to_string(store.size()) + ")");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = detail::read_pod<std::uint32_t>(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
    ad::Parameter* p = store.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    if (p->value().shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    is.read(reinterpret_cast<char*>(p->value().values.data()),
            static_cast<std::streamsize>(p->value().size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
  }
  return vocab_hash;
}

}  // namespace vnlg
