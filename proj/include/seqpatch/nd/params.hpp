#pragma once

#include "seqpatch/nd/tape.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>

namespace seqpatch {

using Rng = std::mt19937_64;

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Derives an independent stream seed from a root seed and a counter path.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(mix(root) ^ a) ^ b) ^ c);
}

/// Ordered collection of named tensors with stable addresses.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> tensor;
  };

  std::size_t add(std::string name, Shape shape) {
    if (find(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Tensor<Scalar> t(std::move(shape));
    t.requires_grad = true;
    entries_.push_back(Entry{std::move(name), std::move(t)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  Tensor<Scalar>& operator[](std::size_t i) { return entries_[i].tensor; }
  const Tensor<Scalar>& operator[](std::size_t i) const { return entries_[i].tensor; }
  const std::string& name(std::size_t i) const { return entries_[i].name; }

  const Tensor<Scalar>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }
  Tensor<Scalar>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  /// Order-sensitive FNV-1a digest over the raw bytes of every parameter.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries_) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(e.tensor.data.data());
      for (std::size_t i = 0; i < sizeof(Scalar) * static_cast<std::size_t>(e.tensor.size()); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
      }
    }
    return h;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::deque<Entry> entries_;
};

/// One gradient buffer per parameter, aligned by index.
template <typename Scalar>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet<Scalar>& params) {
    buffers_.reserve(params.size());
    for (const auto& e : params) buffers_.push_back(Vector<Scalar>::Zero(e.tensor.size()));
  }

  std::size_t size() const { return buffers_.size(); }
  Vector<Scalar>& operator[](std::size_t i) { return buffers_[i]; }
  const Vector<Scalar>& operator[](std::size_t i) const { return buffers_[i]; }

  void set_zero() {
    for (auto& b : buffers_) b.setZero();
  }

  /// this += scale * other
  void add_scaled(const Gradients& other, Scalar scale) {
    for (std::size_t i = 0; i < buffers_.size(); ++i) buffers_[i] += scale * other.buffers_[i];
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& b : buffers_) s += b.squaredNorm();
    return s;
  }

  /// All buffers concatenated in parameter order.
  Vector<Scalar> flatten() const {
    Index n = 0;
    for (const auto& b : buffers_) n += b.size();
    Vector<Scalar> out(n);
    Index off = 0;
    for (const auto& b : buffers_) {
      out.segment(off, b.size()) = b;
      off += b.size();
    }
    return out;
  }

 private:
  std::vector<Vector<Scalar>> buffers_;
};

/// Binds parameters of one ParameterSet onto a tape. With a sink, parameter
/// adjoints accumulate into it; without one, parameters enter as constants.
template <typename Scalar>
class Binder {
 public:
  Binder(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, Gradients<Scalar>* sink = nullptr)
      : tape_(tape), params_(params), sink_(sink) {}

  Var<Scalar> operator()(std::size_t index) const {
    return sink_ ? tape_.leaf(params_[index], (*sink_)[index]) : tape_.frozen(params_[index]);
  }

  Tape<Scalar>& tape() const { return tape_; }
  const ParameterSet<Scalar>& params() const { return params_; }
  Gradients<Scalar>* sink() const { return sink_; }

 private:
  Tape<Scalar>& tape_;
  const ParameterSet<Scalar>& params_;
  Gradients<Scalar>* sink_;
};

/// Fills a tensor with U(-bound, bound).
template <typename Scalar>
void fill_uniform(Tensor<Scalar>& t, double bound, Rng& rng) {
  for (Index i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
}

/// He-style uniform bound for a layer followed by a leaky rectifier.
inline double he_uniform_bound(Index fan_in, double slope) {
  return std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
}

}  // namespace seqpatch
