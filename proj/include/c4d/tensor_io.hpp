#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c4d/error.hpp"

namespace c4d {

// On-disk tensor container: magic "C4DT", version u8 (=1), dtype u8,
// ndim u8, ndim x u32 dims (little-endian), row-major little-endian payload.
enum class Dtype : uint8_t { Float32 = 1, Uint8 = 2, Int32 = 3 };

struct Tensor {
  Dtype dtype = Dtype::Float32;
  std::vector<uint32_t> dims;
  std::vector<float> f32;
  std::vector<uint8_t> u8;
  std::vector<int32_t> i32;

  uint64_t count() const {
    uint64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }

  static Tensor make_f32(std::vector<uint32_t> dims, std::vector<float> data) {
    Tensor t;
    t.dtype = Dtype::Float32;
    t.dims = std::move(dims);
    t.f32 = std::move(data);
    return t;
  }
  static Tensor make_u8(std::vector<uint32_t> dims, std::vector<uint8_t> data) {
    Tensor t;
    t.dtype = Dtype::Uint8;
    t.dims = std::move(dims);
    t.u8 = std::move(data);
    return t;
  }
  static Tensor make_i32(std::vector<uint32_t> dims, std::vector<int32_t> data) {
    Tensor t;
    t.dtype = Dtype::Int32;
    t.dims = std::move(dims);
    t.i32 = std::move(data);
    return t;
  }
};

void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

}  // namespace c4d
