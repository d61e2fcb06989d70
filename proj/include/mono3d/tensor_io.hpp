#pragma once
// Internal tensor format: a one-line JSON header {"dtype","shape","name"}
// followed by a little-endian float32 row-major payload. Round trips are
// bit-exact; any shape/payload mismatch is rejected as corruption.

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mono3d/common.hpp"

namespace mono3d {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are little-endian");

struct TensorF32 {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }
};

inline void write_tensor(const std::filesystem::path& path, const TensorF32& t) {
  if (t.element_count() != t.data.size()) {
    throw InvalidInputError("write_tensor: shape does not match data size");
  }
  nlohmann::ordered_json header;
  header["dtype"] = "float32";
  header["shape"] = t.shape;
  header["name"] = t.name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

inline TensorF32 read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw CorruptDataError(path.string() + ": missing tensor header");
  }
  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded() || !header.contains("dtype") ||
      !header.contains("shape") || !header.contains("name")) {
    throw CorruptDataError(path.string() + ": malformed tensor header");
  }
  if (header["dtype"] != "float32") {
    throw CorruptDataError(path.string() + ": unsupported dtype " +
                           header["dtype"].dump());
  }
  TensorF32 t;
  t.name = header["name"].get<std::string>();
  t.shape = header["shape"].get<std::vector<std::size_t>>();
  const std::size_t expected = t.element_count();
  t.data.resize(expected);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(expected * sizeof(float)));
  const std::size_t got = static_cast<std::size_t>(in.gcount());
  if (got != expected * sizeof(float) || in.peek() != EOF) {
    throw CorruptDataError(path.string() + ": payload is " +
                           std::to_string(got + (in.peek() != EOF ? 1 : 0)) +
                           "+ bytes, header shape needs " +
                           std::to_string(expected * sizeof(float)));
  }
  return t;
}

}  // namespace mono3d
