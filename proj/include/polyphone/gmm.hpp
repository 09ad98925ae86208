// polyphone/gmm.hpp

// Copyright 2026  Polyphone Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef POLYPHONE_GMM_HPP
#define POLYPHONE_GMM_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "polyphone/common.hpp"

namespace polyphone {

constexpr double kVarianceFloor = 1e-4;
constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// Diagonal-covariance Gaussian mixture.  gconst caches
// log w_c - 0.5 * sum_d log(2 pi var_d); call finalize() after any
// parameter mutation.
struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;
  double gconst = 0.0;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;

  int dim() const { return components.empty() ? 0 : static_cast<int>(components[0].mean.size()); }
  int num_components() const { return static_cast<int>(components.size()); }

  void finalize() {
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    for (auto &c : components) {
      double acc = std::log(c.weight);
      for (double v : c.var) acc -= 0.5 * (log_2pi + std::log(v));
      c.gconst = acc;
    }
  }

  double log_density(std::span<const double> x) const {
    double total = kLogZero;
    for (const auto &c : components) {
      double e = c.gconst;
      const size_t d = c.mean.size();
      for (size_t i = 0; i < d; i++) {
        const double diff = x[i] - c.mean[i];
        e -= 0.5 * diff * diff / c.var[i];
      }
      total = log_add(total, e);
    }
    return total;
  }

  // Per-component log joint densities log(w_c p_c(x)); used for
  // responsibility computation during accumulation.
  void component_log_densities(std::span<const double> x, std::vector<double> *out) const {
    out->resize(components.size());
    for (size_t ci = 0; ci < components.size(); ci++) {
      const auto &c = components[ci];
      double e = c.gconst;
      for (size_t i = 0; i < c.mean.size(); i++) {
        const double diff = x[i] - c.mean[i];
        e -= 0.5 * diff * diff / c.var[i];
      }
      (*out)[ci] = e;
    }
  }

  static GaussianMixture single(const std::vector<double> &mean, const std::vector<double> &var) {
    GaussianMixture g;
    GaussianComponent c;
    c.weight = 1.0;
    c.mean = mean;
    c.var = var;
    g.components.push_back(std::move(c));
    g.finalize();
    return g;
  }

  // Doubles the component count (capped at max_components) by perturbing
  // each component's mean by +/- 0.2 sigma and halving its weight.
  void split(int max_components) {
    if (num_components() * 2 > max_components) return;
    std::vector<GaussianComponent> out;
    out.reserve(components.size() * 2);
    for (const auto &c : components) {
      GaussianComponent a = c, b = c;
      a.weight = b.weight = c.weight / 2.0;
      for (size_t d = 0; d < c.mean.size(); d++) {
        const double eps = 0.2 * std::sqrt(c.var[d]);
        a.mean[d] += eps;
        b.mean[d] -= eps;
      }
      out.push_back(std::move(a));
      out.push_back(std::move(b));
    }
    components = std::move(out);
    finalize();
  }
};

// Sufficient statistics for one mixture: per-component occupancy, first and
// second moments.
struct MixtureAccumulator {
  std::vector<double> occupancy;               // per component
  std::vector<std::vector<double>> sum;        // per component, per dim
  std::vector<std::vector<double>> sum_sq;     // per component, per dim

  void resize(int num_components, int dim) {
    occupancy.assign(num_components, 0.0);
    sum.assign(num_components, std::vector<double>(dim, 0.0));
    sum_sq.assign(num_components, std::vector<double>(dim, 0.0));
  }

  double total_occupancy() const {
    double t = 0.0;
    for (double o : occupancy) t += o;
    return t;
  }

  void add(const MixtureAccumulator &other) {
    for (size_t c = 0; c < occupancy.size(); c++) {
      occupancy[c] += other.occupancy[c];
      for (size_t d = 0; d < sum[c].size(); d++) {
        sum[c][d] += other.sum[c][d];
        sum_sq[c][d] += other.sum_sq[c][d];
      }
    }
  }

  // Accumulate one frame with soft component assignment within the state.
  void accumulate(const GaussianMixture &mix, std::span<const double> x,
                  std::vector<double> *scratch) {
    mix.component_log_densities(x, scratch);
    double denom = kLogZero;
    for (double v : *scratch) denom = log_add(denom, v);
    for (size_t c = 0; c < scratch->size(); c++) {
      const double gamma = std::exp((*scratch)[c] - denom);
      if (gamma <= 0.0) continue;
      occupancy[c] += gamma;
      auto &s = sum[c];
      auto &sq = sum_sq[c];
      for (size_t d = 0; d < s.size(); d++) {
        const double v = x[d];
        s[d] += gamma * v;
        sq[d] += gamma * v * v;
      }
    }
  }
};

// Maximum-likelihood re-estimation from accumulated statistics.  Components
// with negligible occupancy keep their previous parameters; variances are
// floored at kVarianceFloor.
inline void reestimate_mixture(GaussianMixture *mix, const MixtureAccumulator &acc,
                               double min_component_occupancy = 1e-8) {
  const double total = acc.total_occupancy();
  if (total <= min_component_occupancy) return;  // caller reports zero occupancy
  for (int c = 0; c < mix->num_components(); c++) {
    auto &comp = mix->components[c];
    const double occ = acc.occupancy[c];
    comp.weight = std::max(occ / total, 1e-10);
    if (occ <= min_component_occupancy) continue;
    for (size_t d = 0; d < comp.mean.size(); d++) {
      const double mean = acc.sum[c][d] / occ;
      double var = acc.sum_sq[c][d] / occ - mean * mean;
      comp.mean[d] = mean;
      comp.var[d] = std::max(var, kVarianceFloor);
    }
  }
  // renormalize weights after the max() clamps
  double wsum = 0.0;
  for (const auto &c : mix->components) wsum += c.weight;
  for (auto &c : mix->components) c.weight /= wsum;
  mix->finalize();
}

}  // namespace polyphone

#endif  // POLYPHONE_GMM_HPP
