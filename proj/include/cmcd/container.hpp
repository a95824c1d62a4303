#pragma once

// Self-describing binary container for named numeric arrays.
//
//   offset 0   8 bytes   magic "CMCDPK01"
//   offset 8   8 bytes   header length H, unsigned little-endian
//   offset 16  H bytes   JSON header (UTF-8, keys sorted):
//                          { "format": "cmcd-pack", "version": 1,
//                            "kind": <string>, "meta": {...},
//                            "arrays": [ { "name", "dtype": "f64"|"i64",
//                                          "shape": [..], "offset", "bytes" } ] }
//   offset 16+H          array payloads back to back, little-endian;
//                        "offset" is relative to the start of this section.
//
// Datasets and checkpoints both use this layout (see docs/formats.md).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmcd/matrix.hpp"
#include "cmcd/tensor.hpp"

namespace cmcd {

struct PackedArray {
  std::string name;
  Shape shape;
  bool is_integer = false;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
};

class Container {
 public:
  explicit Container(std::string kind = {}) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void add(const std::string& name, const Matrix& m);
  void add(const std::string& name, const std::vector<double>& v);
  void add_labels(const std::string& name, const std::vector<int>& labels);

  bool contains(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  std::vector<int> labels(const std::string& name) const;
  const std::vector<PackedArray>& arrays() const { return arrays_; }

  std::string to_bytes() const;
  static Container from_bytes(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  const PackedArray& find(const std::string& name) const;

  std::string kind_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<PackedArray> arrays_;
};

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace cmcd
