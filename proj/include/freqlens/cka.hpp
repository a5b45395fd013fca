#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "freqlens/network.hpp"

namespace freqlens {

/// m examples × p features, row-major.
struct ActivationMatrix {
  int64_t m = 0;
  int64_t p = 0;
  std::vector<double> x;
  std::string layer;

  static ActivationMatrix from_tensor(const Tensor& t, std::string layer);
};

struct CkaMatrix {
  std::vector<std::string> layers;
  std::vector<double> values;  // L×L

  int64_t size() const { return static_cast<int64_t>(layers.size()); }
  double at(int64_t i, int64_t j) const { return values[static_cast<size_t>(i * size() + j)]; }
};

/// Linear CKA on column-centered inputs. Uses the m×m Gram path when m is
/// the smaller dimension, otherwise the feature-space cross products.
double linear_cka(const ActivationMatrix& x, const ActivationMatrix& y);

enum class CkaPath { Auto, Gram, Feature };
double linear_cka(const ActivationMatrix& x, const ActivationMatrix& y, CkaPath path);

/// Pairwise linear CKA between the selected activations of one forward pass
/// (eval mode). An empty `layers` selects every conv plus the linear head;
/// names may repeat.
CkaMatrix cka_matrix(Network& net, const Tensor& images, const std::vector<std::string>& layers = {},
                     bool pre_activation = false);

CkaMatrix cka_from_activations(const std::vector<ActivationMatrix>& acts);

/// Mean of m[i][j] over the first ceil(split*L) rows and last ceil(split*L)
/// columns.
double shallow_deep_similarity(const CkaMatrix& m, double split = 0.5);

}  // namespace freqlens
