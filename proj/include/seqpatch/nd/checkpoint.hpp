#pragma once

#include "seqpatch/nd/params.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace seqpatch {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename Scalar>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? DType::f32 : DType::f64;
}

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

/// One named tensor: UTF-8 name, dtype tag, shape, little-endian payload.
struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<std::uint8_t> payload;
};

/// Versioned container:
///   magic "SQPCKPT\0" | u32 version | u64 step | u64 seed
///   | u32 n_meta  { u32 len, key | u32 len, value }
///   | u32 n_entry { u32 len, name | u8 dtype | u32 rank | u64 dims[rank] | payload }
/// All integers and scalars are little-endian.
class Checkpoint {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return metadata_; }

  const CheckpointEntry* find(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  template <typename Scalar>
  void put(const std::string& name, const Shape& shape, const Vector<Scalar>& values) {
    if (element_count(shape) != values.size()) throw CheckpointError("entry '" + name + "' shape mismatch");
    CheckpointEntry e{name, dtype_of<Scalar>(), shape, {}};
    e.payload.resize(sizeof(Scalar) * static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) store_le(values[i], e.payload.data() + i * sizeof(Scalar));
    insert(std::move(e));
  }

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& tensor) {
    put(name, tensor.shape, tensor.data);
  }

  /// Reads an entry, converting between f32 and f64 when the tags differ.
  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name) const {
    const CheckpointEntry* e = find(name);
    if (!e) throw CheckpointError("checkpoint has no entry '" + name + "'");
    Tensor<Scalar> t(e->shape);
    const std::size_t width = dtype_size(e->dtype);
    if (e->payload.size() != width * static_cast<std::size_t>(t.size()))
      throw CheckpointError("entry '" + name + "' payload size does not match its shape");
    for (Index i = 0; i < t.size(); ++i) {
      const std::uint8_t* src = e->payload.data() + i * width;
      t.data[i] = e->dtype == DType::f32 ? static_cast<Scalar>(load_le<float>(src))
                                         : static_cast<Scalar>(load_le<double>(src));
    }
    return t;
  }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  template <typename T>
  static void store_le(T value, std::uint8_t* dst) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  }

  template <typename T>
  static T load_le(const std::uint8_t* src) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(src[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }

 private:
  void insert(CheckpointEntry entry);

  std::vector<std::pair<std::string, std::string>> metadata_;
  std::vector<CheckpointEntry> entries_;
};

/// Writes every tensor of `params` under "<prefix><name>".
template <typename Scalar>
void store_parameters(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<Scalar>& params) {
  for (const auto& e : params) ckpt.put(prefix + e.name, e.tensor);
}

/// Overwrites every tensor of `params` from "<prefix><name>"; shapes must agree.
template <typename Scalar>
void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, ParameterSet<Scalar>& params) {
  for (auto& e : params) {
    Tensor<Scalar> t = ckpt.get<Scalar>(prefix + e.name);
    if (t.shape != e.tensor.shape)
      throw CheckpointError("parameter '" + e.name + "' has shape " + to_string(t.shape) +
                            " in checkpoint, expected " + to_string(e.tensor.shape));
    e.tensor.data = std::move(t.data);
  }
}

}  // namespace seqpatch
