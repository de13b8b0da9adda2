#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ssccd::npy {

// Minimal NPY reader/writer. Files are written as format version 1.0,
// C-order, little-endian. The reader also accepts version 2.0/3.0 headers.

enum class DType { kFloat32, kFloat64, kUInt8, kInt64 };

std::string descr(DType dtype);
std::size_t item_size(DType dtype);

struct Array {
  DType dtype = DType::kFloat32;
  std::vector<std::size_t> shape;
  std::vector<std::byte> bytes;

  std::size_t size() const;
};

/// Throws IoError for missing/truncated files and ValidationError for
/// malformed headers, Fortran order, big-endian or unknown dtypes.
Array read(const std::filesystem::path& path);

void write(const std::filesystem::path& path, DType dtype, std::span<const std::size_t> shape,
           std::span<const std::byte> bytes);

void write_f32(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const float> data);
void write_u8(const std::filesystem::path& path, std::span<const std::size_t> shape,
              std::span<const std::uint8_t> data);
void write_i64(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const std::int64_t> data);
void write_f64(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const double> data);

/// Typed views; throw ValidationError when the stored dtype differs.
std::vector<float> as_f32(const Array& a);
std::vector<std::uint8_t> as_u8(const Array& a);
std::vector<std::int64_t> as_i64(const Array& a);
std::vector<double> as_f64(const Array& a);

/// Header text as written (without magic/length prefix); exposed for tests.
std::string format_header(DType dtype, std::span<const std::size_t> shape);

}  // namespace ssccd::npy
