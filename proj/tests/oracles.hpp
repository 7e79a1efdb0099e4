#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ssdg/core.hpp"

namespace oracle {

using ssdg::Matrix;

/// Central differences (f(w+h) - f(w-h)) / 2h for every entry of `params`.
inline std::vector<Matrix> central_differences(const std::vector<Matrix*>& params,
                                               const std::function<double()>& f, double h = 1e-3) {
  std::vector<Matrix> out;
  for (Matrix* p : params) {
    Matrix g(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      const double saved = p->data()[i];
      p->data()[i] = saved + h;
      const double up = f();
      p->data()[i] = saved - h;
      const double down = f();
      p->data()[i] = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// ||a - b|| / max(||a||, ||b||) over the concatenation of all matrices; 0
/// when both are zero.
inline double relative_error(const std::vector<const Matrix*>& a, const std::vector<Matrix>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (*a[i] - b[i]).squaredNorm();
    na += a[i]->squaredNorm();
    nb += b[i].squaredNorm();
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Kolmogorov-Smirnov distance of a sample from U(0, 1).
inline double ks_uniform(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = std::clamp(xs[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

/// First index whose entry is >= every entry, by exhaustive comparison.
inline int first_max(const ssdg::Vector& v) {
  for (int i = 0; i < v.size(); ++i) {
    bool dominates = true;
    for (int j = 0; j < v.size(); ++j) dominates = dominates && v(i) >= v(j);
    if (dominates) return i;
  }
  return -1;
}

}  // namespace oracle
