#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace overlapsim {

/// Flat vector of model parameters (or anything parameter-shaped: gradients,
/// moments, pseudo-gradients). Length is fixed at construction.
///
/// Arithmetic helpers below evaluate strictly element by element, left to
/// right, so results are bit-reproducible for identical inputs.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0)
      : values_(size, fill) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}
  explicit ParamVector(std::vector<double> values)
      : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  // Bitwise-style equality on values (NaN != NaN, +0 == -0).
  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& v);

// y <- y + a * x
void axpy(double a, const ParamVector& x, ParamVector& y);

double l2_norm(const ParamVector& v);

// Index set of one fragment inside the flat parameter vector.
struct FragmentView {
  int index = 0;                     // 0-based fragment id
  std::vector<std::size_t> indices;  // strictly increasing
  std::size_t byte_size = 0;         // indices.size() * bytes_per_element

  std::size_t size() const noexcept { return indices.size(); }
};

/// Depth-wise partition of a layered parameter vector into K disjoint
/// fragments. Layer i goes to fragment (i mod K); layers are never split.
class FragmentationSpec {
 public:
  std::size_t num_layers() const noexcept { return layer_sizes_.size(); }
  int num_fragments() const noexcept { return static_cast<int>(fragments_.size()); }
  std::size_t num_params() const noexcept { return num_params_; }
  std::size_t bytes_per_element() const noexcept { return bytes_per_element_; }
  std::size_t total_bytes() const noexcept { return num_params_ * bytes_per_element_; }

  std::span<const std::size_t> layer_sizes() const noexcept { return layer_sizes_; }
  int fragment_of_layer(std::size_t layer) const;
  std::vector<std::size_t> layers_of(int fragment) const;

  const FragmentView& fragment(int p) const;
  std::span<const FragmentView> fragments() const noexcept { return fragments_; }

 private:
  friend FragmentationSpec partition(std::span<const std::size_t>, int,
                                     std::size_t);

  std::vector<std::size_t> layer_sizes_;
  std::vector<FragmentView> fragments_;
  std::size_t num_params_ = 0;
  std::size_t bytes_per_element_ = 4;
};

/// Strided partition of `layer_sizes` into `num_fragments` fragments.
/// Throws ConfigError if num_fragments <= 0, exceeds the layer count, or a
/// layer is empty.
FragmentationSpec partition(std::span<const std::size_t> layer_sizes,
                            int num_fragments,
                            std::size_t bytes_per_element = 4);

// Sub-vector of `v` at the fragment's indices, order preserved.
ParamVector gather(const ParamVector& v, const FragmentView& f);

// Writes `sub` into `v` at the fragment's indices; other entries untouched.
void scatter(ParamVector& v, const FragmentView& f, const ParamVector& sub);

}  // namespace overlapsim
