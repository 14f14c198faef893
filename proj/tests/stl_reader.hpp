#pragma once

// Minimal binary STL reader used only by tests. Written independently of the
// exporter: reads raw little-endian bytes field by field.

#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace stl_test {

struct Triangle {
  std::array<float, 3> normal;
  std::array<std::array<float, 3>, 3> v;
  std::uint16_t attribute;
};

inline std::uint32_t read_u32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

inline float read_f32(const std::string& b, std::size_t at) {
  const std::uint32_t u = read_u32(b, at);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline std::vector<Triangle> parse(const std::string& bytes) {
  if (bytes.size() < 84) throw std::runtime_error("stl: truncated header");
  const std::uint32_t n = read_u32(bytes, 80);
  if (bytes.size() != 84 + 50ull * n) throw std::runtime_error("stl: size does not match triangle count");
  std::vector<Triangle> out(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    const std::size_t base = 84 + 50ull * t;
    for (int k = 0; k < 3; ++k) out[t].normal[k] = read_f32(bytes, base + 4 * k);
    for (int v = 0; v < 3; ++v)
      for (int k = 0; k < 3; ++k) out[t].v[v][k] = read_f32(bytes, base + 12 + 12 * v + 4 * k);
    out[t].attribute = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[base + 48]) |
                                                  static_cast<unsigned char>(bytes[base + 49]) << 8);
  }
  return out;
}

// Every undirected edge used by exactly two triangles, and each directed
// edge at most once (consistent orientation).
inline bool closed_manifold(const std::vector<Triangle>& tris) {
  using P = std::tuple<float, float, float>;
  std::map<std::pair<P, P>, int> directed;
  for (const auto& t : tris) {
    for (int e = 0; e < 3; ++e) {
      const auto& a = t.v[e];
      const auto& b = t.v[(e + 1) % 3];
      ++directed[{P{a[0], a[1], a[2]}, P{b[0], b[1], b[2]}}];
    }
  }
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto rev = directed.find({edge.second, edge.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

}  // namespace stl_test
