#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace epicode {

/// Dense row-major float32 tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_, std::vector<float> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {}

  /// Zero-filled tensor of the given shape.
  static Tensor zeros(std::vector<std::int64_t> shape);

  std::int64_t numel() const;

  Eigen::Map<Eigen::ArrayXf> array() {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
  Eigen::Map<const Eigen::ArrayXf> array() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named parameter set. std::map keeps names in lexicographic order, which is
/// also the canonical on-disk order.
using TensorMap = std::map<std::string, Tensor>;

/// Structural differences between two tensor maps.
struct ShapeMismatch {
  std::string name;
  std::vector<std::int64_t> shape_a;
  std::vector<std::int64_t> shape_b;

  friend bool operator==(const ShapeMismatch&, const ShapeMismatch&) = default;
};

struct CompatReport {
  std::vector<std::string> missing_in_a;
  std::vector<std::string> missing_in_b;
  std::vector<ShapeMismatch> shape_mismatches;

  bool empty() const {
    return missing_in_a.empty() && missing_in_b.empty() &&
           shape_mismatches.empty();
  }
  /// Multi-line human-readable rendering.
  std::string render() const;
};

/// Checks the TensorMap invariants (non-empty map, non-empty names,
/// positive dims, data length == numel, finite values). Throws DataError.
void validate(const TensorMap& map);

CompatReport check_compat(const TensorMap& a, const TensorMap& b);

/// Throws DataError carrying the rendered report if a and b differ in
/// structure.
void require_compat(const TensorMap& a, const TensorMap& b);

/// Serializes to the safetensors byte layout (F32 only).
std::vector<std::uint8_t> serialize(const TensorMap& map);
TensorMap deserialize(const std::vector<std::uint8_t>& bytes);

void save(const TensorMap& map, const std::filesystem::path& path);
TensorMap load(const std::filesystem::path& path);

std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace epicode
