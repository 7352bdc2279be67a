// SPDX-License-Identifier: Apache-2.0
#include "degs/common.hpp"

namespace degs {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::singular_covariance: return "singular-covariance";
    case ErrorKind::render_abort: return "render-abort";
    case ErrorKind::state: return "state";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::load: return "load";
    case ErrorKind::format: return "format";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

RenderAbort::RenderAbort(std::size_t primitive_index)
    : Error(ErrorKind::render_abort,
            "non-finite parameter in primitive " + std::to_string(primitive_index)),
      index_(primitive_index) {}

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

bool is_binary_mask(const Image& mask) {
  if (mask.channels != 1) return false;
  for (double v : mask.pixels) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

std::size_t mask_count(const Mask& mask) {
  std::size_t n = 0;
  for (double v : mask.pixels) n += v != 0.0 ? 1 : 0;
  return n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept {
  // FNV-1a over the stream name, mixed with the root.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : stream) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(root) ^ h);
}

}  // namespace degs
