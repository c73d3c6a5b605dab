// SPDX-License-Identifier: Apache-2.0
#include "trimodal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace trimodal {

namespace {

void check_shape(const std::vector<int64_t>& shape) {
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative extent");
  }
}

}  // namespace

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw std::invalid_argument("tensor: shape/data size mismatch");
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<int64_t> shape) {
  if (shape_numel(shape) != numel()) throw std::invalid_argument("reshape: numel mismatch");
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

size_t dtype_size(Dtype dt) {
  switch (dt) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i32: return 4;
    case Dtype::i64: return 8;
    case Dtype::u8: return 1;
  }
  throw std::invalid_argument("unknown dtype code");
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<uint8_t> encode_header(Dtype dt, const std::vector<int64_t>& dims) {
  std::vector<uint8_t> h;
  h.push_back(static_cast<uint8_t>(dt));
  h.push_back(static_cast<uint8_t>(dims.size()));
  for (int64_t d : dims) {
    if (d < 0 || d > 0xffffffffLL) throw std::invalid_argument("blob: extent out of u32 range");
    put_u32(h, static_cast<uint32_t>(d));
  }
  return h;
}

template <typename T>
void encode_values(std::vector<uint8_t>& out, const double* src, int64_t n) {
  size_t base = out.size();
  out.resize(base + sizeof(T) * static_cast<size_t>(n));
  T* dst = reinterpret_cast<T*>(out.data() + base);
  for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<T>(src[i]);
}

template <typename T>
void decode_values(double* dst, const uint8_t* src, int64_t n) {
  const T* s = reinterpret_cast<const T*>(src);
  for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(s[i]);
}

struct ParsedHeader {
  Dtype dtype;
  std::vector<int64_t> dims;
  size_t header_size;
};

ParsedHeader parse_header(const uint8_t* bytes, size_t size) {
  if (size < 2) throw std::runtime_error("blob: truncated header");
  auto code = bytes[0];
  if (code < 1 || code > 5) throw std::runtime_error("blob: bad dtype code");
  ParsedHeader h;
  h.dtype = static_cast<Dtype>(code);
  size_t rank = bytes[1];
  if (size < 2 + 4 * rank) throw std::runtime_error("blob: truncated dims");
  for (size_t i = 0; i < rank; ++i)
    h.dims.push_back(static_cast<int64_t>(get_u32(bytes + 2 + 4 * i)));
  h.header_size = 2 + 4 * rank;
  return h;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.seekg(0, std::ios::end);
  std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short read on " + path);
  return bytes;
}

}  // namespace

void append_blob_bytes(std::vector<uint8_t>& out, const Tensor& t, Dtype storage) {
  auto header = encode_header(storage, t.shape());
  out.insert(out.end(), header.begin(), header.end());
  switch (storage) {
    case Dtype::f32: encode_values<float>(out, t.data(), t.numel()); break;
    case Dtype::f64: encode_values<double>(out, t.data(), t.numel()); break;
    case Dtype::i32: encode_values<int32_t>(out, t.data(), t.numel()); break;
    case Dtype::i64: encode_values<int64_t>(out, t.data(), t.numel()); break;
    case Dtype::u8: encode_values<uint8_t>(out, t.data(), t.numel()); break;
  }
}

Tensor parse_blob_bytes(const uint8_t* bytes, size_t size, size_t& offset) {
  if (offset > size) throw std::runtime_error("blob: offset past end");
  auto h = parse_header(bytes + offset, size - offset);
  int64_t n = shape_numel(h.dims);
  size_t payload = dtype_size(h.dtype) * static_cast<size_t>(n);
  if (size - offset < h.header_size + payload) throw std::runtime_error("blob: truncated data");
  const uint8_t* src = bytes + offset + h.header_size;
  Tensor t(h.dims);
  switch (h.dtype) {
    case Dtype::f32: decode_values<float>(t.data(), src, n); break;
    case Dtype::f64: decode_values<double>(t.data(), src, n); break;
    case Dtype::i32: decode_values<int32_t>(t.data(), src, n); break;
    case Dtype::i64: decode_values<int64_t>(t.data(), src, n); break;
    case Dtype::u8: decode_values<uint8_t>(t.data(), src, n); break;
  }
  offset += h.header_size + payload;
  return t;
}

void write_blob(const std::string& path, const Tensor& t, Dtype storage) {
  std::vector<uint8_t> bytes;
  bytes.reserve(16 + dtype_size(storage) * static_cast<size_t>(t.numel()));
  append_blob_bytes(bytes, t, storage);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write on " + path);
}

void write_blob_i32(const std::string& path, const std::vector<int64_t>& dims,
                    const std::vector<int32_t>& data) {
  if (shape_numel(dims) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("blob: dims/data mismatch");
  auto bytes = encode_header(Dtype::i32, dims);
  size_t base = bytes.size();
  bytes.resize(base + 4 * data.size());
  std::memcpy(bytes.data() + base, data.data(), 4 * data.size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write on " + path);
}

BlobInfo peek_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  uint8_t head[2 + 4 * 255];
  f.read(reinterpret_cast<char*>(head), 2);
  if (!f) throw std::runtime_error("blob: truncated header in " + path);
  size_t rank = head[1];
  f.read(reinterpret_cast<char*>(head + 2), static_cast<std::streamsize>(4 * rank));
  if (!f) throw std::runtime_error("blob: truncated dims in " + path);
  auto h = parse_header(head, 2 + 4 * rank);
  return {h.dtype, h.dims};
}

Tensor read_blob(const std::string& path) {
  auto bytes = read_file_bytes(path);
  size_t offset = 0;
  return parse_blob_bytes(bytes.data(), bytes.size(), offset);
}

std::vector<int32_t> read_blob_i32(const std::string& path) {
  Tensor t = read_blob(path);
  std::vector<int32_t> out(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = static_cast<int32_t>(t[i]);
  return out;
}

Tensor read_blob_slab(const std::string& path, int64_t first, int64_t count) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  uint8_t head[2 + 4 * 255];
  f.read(reinterpret_cast<char*>(head), 2);
  if (!f) throw std::runtime_error("blob: truncated header in " + path);
  size_t rank = head[1];
  f.read(reinterpret_cast<char*>(head + 2), static_cast<std::streamsize>(4 * rank));
  if (!f) throw std::runtime_error("blob: truncated dims in " + path);
  auto h = parse_header(head, 2 + 4 * rank);
  if (h.dims.empty()) throw std::runtime_error("blob: slab read needs rank >= 1");
  if (first < 0 || count < 0 || first + count > h.dims[0])
    throw std::out_of_range("blob: slab range out of bounds");

  int64_t inner = 1;
  for (size_t i = 1; i < h.dims.size(); ++i) inner *= h.dims[i];
  size_t elem = dtype_size(h.dtype);
  std::streamoff data_start = static_cast<std::streamoff>(h.header_size);
  f.seekg(data_start + static_cast<std::streamoff>(elem * static_cast<size_t>(first * inner)));

  int64_t n = count * inner;
  std::vector<uint8_t> raw(elem * static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("blob: short slab read in " + path);

  std::vector<int64_t> dims = h.dims;
  dims[0] = count;
  Tensor t(dims);
  switch (h.dtype) {
    case Dtype::f32: decode_values<float>(t.data(), raw.data(), n); break;
    case Dtype::f64: decode_values<double>(t.data(), raw.data(), n); break;
    case Dtype::i32: decode_values<int32_t>(t.data(), raw.data(), n); break;
    case Dtype::i64: decode_values<int64_t>(t.data(), raw.data(), n); break;
    case Dtype::u8: decode_values<uint8_t>(t.data(), raw.data(), n); break;
  }
  return t;
}

}  // namespace trimodal
