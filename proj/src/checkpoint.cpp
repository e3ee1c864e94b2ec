// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace l2d {

namespace {

constexpr char kMagic[8] = {'L', '2', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kMaxNameLen = 1u << 20;
constexpr std::uint32_t kMaxRank = 32;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path + ": " + what);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(path_, "truncated file");
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::ifstream& in_;
  const std::string& path_;
};

}  // namespace

void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::string buf;
  buf.reserve(64);
  buf.append(kMagic, sizeof(kMagic));
  put_u64(buf, arrays.size());
  for (const auto& [name, t] : arrays) {
    if (!t.defined()) fail(path, "undefined tensor for \"" + name + "\"");
    if (name.size() >= kMaxNameLen) fail(path, "array name too long");
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put_u64(buf, d);
    for (double v : t.values()) put_f64(buf, v);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open " + tmp + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out) fail(path, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail(path, "rename from temporary failed");
  }
}

std::vector<std::pair<std::string, Tensor>> load_arrays(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  Reader r(in, path);

  char magic[8];
  r.bytes(magic, sizeof(magic));
  for (std::size_t i = 0; i < sizeof(magic); ++i) {
    if (magic[i] != kMagic[i]) fail(path, "bad magic (not a checkpoint file)");
  }

  const std::uint64_t count = r.u64();
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::uint32_t name_len = r.u32();
    if (name_len >= kMaxNameLen) fail(path, "implausible name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);

    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > kMaxRank) fail(path, "implausible rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t d = r.u64();
      if (d == 0 || d > (1ull << 32)) fail(path, "implausible dimension");
      shape[i] = static_cast<std::size_t>(d);
      numel *= shape[i];
    }
    std::vector<double> values(numel);
    for (double& v : values) v = r.f64();
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void assign_named(const std::vector<std::pair<std::string, Tensor>>& loaded,
                  std::vector<std::pair<std::string, Tensor>> dest) {
  for (auto& [name, t] : dest) {
    const Tensor* src = nullptr;
    for (const auto& [lname, lt] : loaded) {
      if (lname == name) {
        src = &lt;
        break;
      }
    }
    if (src == nullptr) {
      throw std::runtime_error("checkpoint: missing array \"" + name + "\"");
    }
    if (src->shape() != t.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for \"" + name +
                               "\": stored " + shape_str(src->shape()) +
                               ", expected " + shape_str(t.shape()));
    }
    t.values() = src->values();
  }
}

}  // namespace l2d
