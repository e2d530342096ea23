#include "c4d/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace c4d {

namespace {

constexpr char kMagic[4] = {'C', '4', 'D', 'T'};
constexpr uint8_t kVersion = 1;
constexpr uint64_t kMaxElements = uint64_t(1) << 34;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::Float32: return 4;
    case Dtype::Uint8: return 1;
    case Dtype::Int32: return 4;
  }
  throw Error(ErrorCode::InvalidInput, "unknown dtype code");
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& tensor) {
  if (tensor.dims.empty())
    throw Error(ErrorCode::InvalidInput, "tensor: dims must be nonempty");
  const uint64_t n = tensor.count();
  const size_t stored = tensor.dtype == Dtype::Float32 ? tensor.f32.size()
                        : tensor.dtype == Dtype::Uint8 ? tensor.u8.size()
                                                       : tensor.i32.size();
  if (stored != n)
    throw Error(ErrorCode::InvalidInput, "tensor: payload length mismatch");
  if (tensor.dims.size() > 255)
    throw Error(ErrorCode::DimOverflow, "tensor: too many dims");

  std::string buf;
  buf.reserve(12 + 4 * tensor.dims.size() + n * dtype_size(tensor.dtype));
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(kVersion));
  buf.push_back(static_cast<char>(tensor.dtype));
  buf.push_back(static_cast<char>(tensor.dims.size()));
  for (uint32_t d : tensor.dims) put_u32(buf, d);
  switch (tensor.dtype) {
    case Dtype::Float32:
      for (float v : tensor.f32) put_u32(buf, std::bit_cast<uint32_t>(v));
      break;
    case Dtype::Uint8:
      buf.append(reinterpret_cast<const char*>(tensor.u8.data()),
                 tensor.u8.size());
      break;
    case Dtype::Int32:
      for (int32_t v : tensor.i32) put_u32(buf, std::bit_cast<uint32_t>(v));
      break;
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());

  if (buf.size() < 7)
    throw Error(ErrorCode::TruncatedPayload, "truncated header: " + path);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "bad magic: " + path);
  if (buf[4] != kVersion)
    throw Error(ErrorCode::VersionMismatch,
                "unsupported version " + std::to_string(buf[4]));
  const uint8_t dtype_code = buf[5];
  if (dtype_code < 1 || dtype_code > 3)
    throw Error(ErrorCode::InvalidInput, "unknown dtype code");
  const Dtype dtype = static_cast<Dtype>(dtype_code);
  const size_t ndim = buf[6];
  if (ndim == 0) throw Error(ErrorCode::InvalidInput, "tensor: ndim == 0");
  if (buf.size() < 7 + 4 * ndim)
    throw Error(ErrorCode::TruncatedPayload, "truncated dims: " + path);

  Tensor t;
  t.dtype = dtype;
  uint64_t n = 1;
  for (size_t i = 0; i < ndim; ++i) {
    const uint32_t d = get_u32(buf.data() + 7 + 4 * i);
    t.dims.push_back(d);
    n *= d;
    if (n > kMaxElements)
      throw Error(ErrorCode::DimOverflow, "tensor: dim product overflow");
  }
  const size_t header = 7 + 4 * ndim;
  const size_t expected = n * dtype_size(dtype);
  if (buf.size() - header != expected)
    throw Error(ErrorCode::TruncatedPayload,
                "payload size mismatch: " + path);

  const uint8_t* p = buf.data() + header;
  switch (dtype) {
    case Dtype::Float32:
      t.f32.resize(n);
      for (uint64_t i = 0; i < n; ++i)
        t.f32[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      break;
    case Dtype::Uint8:
      t.u8.assign(p, p + n);
      break;
    case Dtype::Int32:
      t.i32.resize(n);
      for (uint64_t i = 0; i < n; ++i)
        t.i32[i] = std::bit_cast<int32_t>(get_u32(p + 4 * i));
      break;
  }
  return t;
}

}  // namespace c4d
