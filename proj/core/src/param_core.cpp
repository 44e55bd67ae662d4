#include "overlapsim/param_core.hpp"

#include <cmath>
#include <string>

#include "overlapsim/error.hpp"

namespace overlapsim {
namespace {

void require_same_size(const ParamVector& a, const ParamVector& b,
                       const char* op) {
  if (a.size() != b.size()) {
    throw InternalError(std::string(op) + ": length mismatch (" +
                        std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
  for (double x : values_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "operator+");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "operator-");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

ParamVector operator*(double s, const ParamVector& v) {
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
  return out;
}

void axpy(double a, const ParamVector& x, ParamVector& y) {
  require_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double l2_norm(const ParamVector& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

int FragmentationSpec::fragment_of_layer(std::size_t layer) const {
  if (layer >= layer_sizes_.size()) {
    throw InternalError("fragment_of_layer: layer " + std::to_string(layer) +
                        " out of range");
  }
  return static_cast<int>(layer % fragments_.size());
}

std::vector<std::size_t> FragmentationSpec::layers_of(int fragment) const {
  std::vector<std::size_t> layers;
  for (std::size_t l = static_cast<std::size_t>(fragment);
       l < layer_sizes_.size(); l += fragments_.size()) {
    layers.push_back(l);
  }
  return layers;
}

const FragmentView& FragmentationSpec::fragment(int p) const {
  if (p < 0 || p >= num_fragments()) {
    throw InternalError("fragment index " + std::to_string(p) +
                        " out of range");
  }
  return fragments_[static_cast<std::size_t>(p)];
}

FragmentationSpec partition(std::span<const std::size_t> layer_sizes,
                            int num_fragments, std::size_t bytes_per_element) {
  if (num_fragments <= 0) {
    throw ConfigError("K", "number of fragments must be positive");
  }
  if (layer_sizes.empty()) {
    throw ConfigError("num_layers", "model has no layers");
  }
  if (static_cast<std::size_t>(num_fragments) > layer_sizes.size()) {
    throw ConfigError("K", "number of fragments (" +
                               std::to_string(num_fragments) +
                               ") exceeds number of layers (" +
                               std::to_string(layer_sizes.size()) + ")");
  }
  if (bytes_per_element == 0) {
    throw ConfigError("bytes_per_element", "must be positive");
  }

  FragmentationSpec spec;
  spec.layer_sizes_.assign(layer_sizes.begin(), layer_sizes.end());
  spec.bytes_per_element_ = bytes_per_element;
  spec.fragments_.resize(static_cast<std::size_t>(num_fragments));
  for (int p = 0; p < num_fragments; ++p) spec.fragments_[p].index = p;

  // Walking layers in order keeps each fragment's indices increasing.
  std::size_t offset = 0;
  for (std::size_t layer = 0; layer < layer_sizes.size(); ++layer) {
    if (layer_sizes[layer] == 0) {
      throw ConfigError("layer_sizes",
                        "layer " + std::to_string(layer) + " is empty");
    }
    auto& frag = spec.fragments_[layer % spec.fragments_.size()];
    for (std::size_t i = 0; i < layer_sizes[layer]; ++i) {
      frag.indices.push_back(offset + i);
    }
    offset += layer_sizes[layer];
  }
  spec.num_params_ = offset;
  for (auto& frag : spec.fragments_) {
    frag.byte_size = frag.indices.size() * bytes_per_element;
  }
  return spec;
}

ParamVector gather(const ParamVector& v, const FragmentView& f) {
  ParamVector out(f.indices.size());
  for (std::size_t i = 0; i < f.indices.size(); ++i) {
    const std::size_t idx = f.indices[i];
    if (idx >= v.size()) {
      throw InternalError("gather: index " + std::to_string(idx) +
                          " out of bounds for vector of length " +
                          std::to_string(v.size()));
    }
    out[i] = v[idx];
  }
  return out;
}

void scatter(ParamVector& v, const FragmentView& f, const ParamVector& sub) {
  if (sub.size() != f.indices.size()) {
    throw InternalError("scatter: sub-vector length " +
                        std::to_string(sub.size()) + " != fragment length " +
                        std::to_string(f.indices.size()));
  }
  for (std::size_t i = 0; i < f.indices.size(); ++i) {
    const std::size_t idx = f.indices[i];
    if (idx >= v.size()) {
      throw InternalError("scatter: index " + std::to_string(idx) +
                          " out of bounds");
    }
    v[idx] = sub[i];
  }
}

}  // namespace overlapsim
