// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace trimodal {

// Dense row-major tensor of doubles. All math in this library runs in
// float64; blobs on disk may use narrower storage types (see Dtype).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> data);
  Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; valid when rank() == 2.
  int64_t rows() const { return shape_.at(0); }
  int64_t cols() const { return shape_.at(1); }
  double& at(int64_t r, int64_t c) { return data_[r * shape_[1] + c]; }
  double at(int64_t r, int64_t c) const { return data_[r * shape_[1] + c]; }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  void fill(double v);
  void reshape(std::vector<int64_t> shape);  // numel must be preserved
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const;
  double max_abs() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Storage type codes used in binary tensor blobs.
enum class Dtype : uint8_t { f32 = 1, f64 = 2, i32 = 3, i64 = 4, u8 = 5 };

size_t dtype_size(Dtype dt);

struct BlobInfo {
  Dtype dtype;
  std::vector<int64_t> dims;
};

// Blob layout, little-endian: dtype code (u8), rank (u8), dims (u32 each),
// then raw element data. No magic, no padding.
void write_blob(const std::string& path, const Tensor& t, Dtype storage);
void write_blob_i32(const std::string& path, const std::vector<int64_t>& dims,
                    const std::vector<int32_t>& data);

BlobInfo peek_blob(const std::string& path);
Tensor read_blob(const std::string& path);  // numeric dtypes widened to f64
std::vector<int32_t> read_blob_i32(const std::string& path);

// Reads `count` slabs along dim 0 starting at `first` without loading the
// whole blob. Needed for per-view access into stacked render blobs.
Tensor read_blob_slab(const std::string& path, int64_t first, int64_t count);

// In-memory encode/decode of the same layout (used by checkpoint files).
void append_blob_bytes(std::vector<uint8_t>& out, const Tensor& t, Dtype storage);
Tensor parse_blob_bytes(const uint8_t* bytes, size_t size, size_t& offset);

}  // namespace trimodal
