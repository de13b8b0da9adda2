#include "ssccd/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <regex>
#include <sstream>

#include "ssccd/error.hpp"

namespace ssccd::npy {

static_assert(std::endian::native == std::endian::little,
              "NPY I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

DType parse_descr(const std::string& d, const std::string& path) {
  if (d == "<f4") return DType::kFloat32;
  if (d == "<f8") return DType::kFloat64;
  if (d == "|u1" || d == "<u1") return DType::kUInt8;
  if (d == "<i8") return DType::kInt64;
  throw ValidationError("unsupported NPY dtype '" + d + "' in " + path);
}

template <typename T>
std::vector<T> copy_as(const Array& a, DType expected) {
  if (a.dtype != expected) {
    throw ValidationError("NPY dtype mismatch: expected " + descr(expected) + ", found " +
                          descr(a.dtype));
  }
  std::vector<T> out(a.size());
  std::memcpy(out.data(), a.bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace

std::string descr(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return "<f4";
    case DType::kFloat64: return "<f8";
    case DType::kUInt8: return "|u1";
    case DType::kInt64: return "<i8";
  }
  return "?";
}

std::size_t item_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kUInt8: return 1;
    case DType::kInt64: return 8;
  }
  return 0;
}

std::size_t Array::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string format_header(DType dtype, std::span<const std::size_t> shape) {
  std::ostringstream dict;
  dict << "{'descr': '" << descr(dtype) << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) dict << ",";
    if (i + 1 < shape.size()) dict << " ";
  }
  dict << "), }";
  std::string header = dict.str();
  // magic(6) + version(2) + length(2) + header, padded to a multiple of 64.
  const std::size_t unpadded = kMagicLen + 2 + 2 + header.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  header.append(padded - unpadded, ' ');
  header.push_back('\n');
  return header;
}

void write(const std::filesystem::path& path, DType dtype, std::span<const std::size_t> shape,
           std::span<const std::byte> bytes) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (count * item_size(dtype) != bytes.size()) {
    throw ValidationError("NPY write: payload size does not match shape for " + path.string());
  }
  const std::string header = format_header(dtype, shape);
  if (header.size() > 0xFFFF) throw ValidationError("NPY header too long: " + path.string());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, kMagicLen);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_f32(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const float> data) {
  write(path, DType::kFloat32, shape, std::as_bytes(data));
}
void write_u8(const std::filesystem::path& path, std::span<const std::size_t> shape,
              std::span<const std::uint8_t> data) {
  write(path, DType::kUInt8, shape, std::as_bytes(data));
}
void write_i64(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const std::int64_t> data) {
  write(path, DType::kInt64, shape, std::as_bytes(data));
}
void write_f64(const std::filesystem::path& path, std::span<const std::size_t> shape,
               std::span<const double> data) {
  write(path, DType::kFloat64, shape, std::as_bytes(data));
}

Array read(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open NPY file: " + p);

  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw ValidationError("not an NPY file: " + p);
  }
  unsigned char version[2];
  in.read(reinterpret_cast<char*>(version), 2);
  std::size_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8);
  } else if (version[0] == 2 || version[0] == 3) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8) |
                 (static_cast<std::size_t>(b[2]) << 16) | (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw ValidationError("unsupported NPY version in " + p);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated NPY header: " + p);

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  Array out;
  if (!std::regex_search(header, m, descr_re)) throw ValidationError("NPY header lacks descr: " + p);
  out.dtype = parse_descr(m[1].str(), p);
  if (!std::regex_search(header, m, order_re)) {
    throw ValidationError("NPY header lacks fortran_order: " + p);
  }
  if (m[1].str() == "True") throw ValidationError("Fortran-ordered NPY not supported: " + p);
  if (!std::regex_search(header, m, shape_re)) throw ValidationError("NPY header lacks shape: " + p);
  std::stringstream dims(m[1].str());
  std::string tok;
  while (std::getline(dims, tok, ',')) {
    const auto first = tok.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      out.shape.push_back(static_cast<std::size_t>(std::stoull(tok.substr(first))));
    } catch (const std::exception&) {
      throw ValidationError("malformed NPY shape in " + p);
    }
  }

  out.bytes.resize(out.size() * item_size(out.dtype));
  in.read(reinterpret_cast<char*>(out.bytes.data()), static_cast<std::streamsize>(out.bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != out.bytes.size()) {
    throw IoError("truncated NPY payload: " + p);
  }
  return out;
}

std::vector<float> as_f32(const Array& a) { return copy_as<float>(a, DType::kFloat32); }
std::vector<std::uint8_t> as_u8(const Array& a) { return copy_as<std::uint8_t>(a, DType::kUInt8); }
std::vector<std::int64_t> as_i64(const Array& a) { return copy_as<std::int64_t>(a, DType::kInt64); }
std::vector<double> as_f64(const Array& a) { return copy_as<double>(a, DType::kFloat64); }

}  // namespace ssccd::npy
