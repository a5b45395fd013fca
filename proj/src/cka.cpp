#include "freqlens/cka.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace freqlens {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat centered(const ActivationMatrix& a) {
  if (a.m < 2 || a.p < 1 || static_cast<int64_t>(a.x.size()) != a.m * a.p) {
    throw std::invalid_argument("cka: layer '" + a.layer + "' needs an m×p matrix with m >= 2");
  }
  Mat x = Eigen::Map<const Mat>(a.x.data(), a.m, a.p);
  x.rowwise() -= x.colwise().mean();
  if (!(x.norm() > 0.0)) throw std::invalid_argument("cka: layer '" + a.layer + "' has zero variance");
  return x;
}

}  // namespace

ActivationMatrix ActivationMatrix::from_tensor(const Tensor& t, std::string layer) {
  ActivationMatrix a;
  a.m = t.dim(0);
  a.p = t.numel() / a.m;
  a.x.assign(t.data().begin(), t.data().end());
  a.layer = std::move(layer);
  return a;
}

double linear_cka(const ActivationMatrix& x, const ActivationMatrix& y, CkaPath path) {
  if (x.m != y.m) {
    throw std::invalid_argument("cka: example counts differ (" + x.layer + ": " + std::to_string(x.m) + ", " +
                                y.layer + ": " + std::to_string(y.m) + ")");
  }
  const Mat a = centered(x), b = centered(y);
  if (path == CkaPath::Auto) path = x.m < std::max(x.p, y.p) ? CkaPath::Gram : CkaPath::Feature;
  if (path == CkaPath::Gram) {
    const Mat k = a * a.transpose(), l = b * b.transpose();
    return k.cwiseProduct(l).sum() / (k.norm() * l.norm());
  }
  const double cross = (b.transpose() * a).squaredNorm();
  return cross / ((a.transpose() * a).norm() * (b.transpose() * b).norm());
}

double linear_cka(const ActivationMatrix& x, const ActivationMatrix& y) { return linear_cka(x, y, CkaPath::Auto); }

CkaMatrix cka_from_activations(const std::vector<ActivationMatrix>& acts) {
  CkaMatrix out;
  const auto L = static_cast<int64_t>(acts.size());
  for (const auto& a : acts) out.layers.push_back(a.layer);
  out.values.assign(static_cast<size_t>(L * L), 0.0);
  for (int64_t i = 0; i < L; ++i) {
    out.values[i * L + i] = 1.0;
    for (int64_t j = i + 1; j < L; ++j) {
      const double v = linear_cka(acts[i], acts[j]);
      out.values[i * L + j] = out.values[j * L + i] = v;
    }
  }
  return out;
}

CkaMatrix cka_matrix(Network& net, const Tensor& images, const std::vector<std::string>& layers,
                     bool pre_activation) {
  ActivationTrace trace;
  trace.pre_activation = pre_activation;
  {
    ModeGuard mode(net, false);
    NoGradGuard ng;
    net.forward(images, &trace);
  }
  std::vector<ActivationMatrix> acts;
  if (layers.empty()) {
    for (size_t i = 0; i < trace.taps.size(); ++i) acts.push_back(ActivationMatrix::from_tensor(trace.taps[i], trace.names[i]));
  } else {
    for (const auto& name : layers) {
      auto it = std::find(trace.names.begin(), trace.names.end(), name);
      if (it == trace.names.end()) throw std::invalid_argument("cka: no activation recorded for layer '" + name + "'");
      acts.push_back(ActivationMatrix::from_tensor(trace.taps[it - trace.names.begin()], name));
    }
  }
  return cka_from_activations(acts);
}

double shallow_deep_similarity(const CkaMatrix& m, double split) {
  const int64_t L = m.size();
  if (L < 2) throw std::invalid_argument("shallow_deep_similarity: needs at least 2 layers");
  if (!(split > 0.0 && split <= 1.0)) throw std::invalid_argument("shallow_deep_similarity: split must lie in (0,1]");
  const auto k = std::min<int64_t>(L, static_cast<int64_t>(std::ceil(split * static_cast<double>(L) - 1e-9)));
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = L - k; j < L; ++j) acc += m.at(i, j);
  return acc / static_cast<double>(k * k);
}

}  // namespace freqlens
