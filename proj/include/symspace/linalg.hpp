#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace symspace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Bilinear map E x E -> F, one coefficient matrix per output component.
struct Bilinear {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<Mat> comp;  // comp[i](j,k) multiplies u_j v_k

  Vec apply(const Vec& u, const Vec& v) const {
    Vec out(out_dim);
    for (int i = 0; i < out_dim; ++i) out[i] = u.dot(comp[i] * v);
    return out;
  }
};

// Dense trilinear table T(i,j,k) -> Vec, used for curvature/bracket arrays
// over a fixed tangent frame.
struct TriArray {
  int n = 0;       // input dimension
  int out_dim = 0;
  std::vector<Vec> val;  // index i*n*n + j*n + k

  TriArray() = default;
  TriArray(int n_, int out_dim_) : n(n_), out_dim(out_dim_), val(static_cast<size_t>(n_) * n_ * n_, Vec::Zero(out_dim_)) {}

  Vec& at(int i, int j, int k) { return val[(static_cast<size_t>(i) * n + j) * n + k]; }
  const Vec& at(int i, int j, int k) const { return val[(static_cast<size_t>(i) * n + j) * n + k]; }

  // Contraction with coordinate vectors in the first two slots.
  Vec apply(const Vec& a, const Vec& b, const Vec& c) const {
    Vec out = Vec::Zero(out_dim);
    for (int i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        if (b[j] == 0.0) continue;
        for (int k = 0; k < n; ++k) {
          if (c[k] == 0.0) continue;
          out += (a[i] * b[j] * c[k]) * at(i, j, k);
        }
      }
    }
    return out;
  }

  double max_norm() const {
    double m = 0.0;
    for (const Vec& v : val) m = std::max(m, v.lpNorm<Eigen::Infinity>());
    return m;
  }
};

inline double op_norm(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()[0];
}

inline double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[s.size() - 1] <= 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / s[s.size() - 1];
}

// Van der Corput radical inverse; bases are taken from the prime table so
// that multi-dimensional sequences stay low-discrepancy.
inline double radical_inverse(uint64_t index, uint64_t base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double f = inv_base;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv_base;
  }
  return r;
}

inline uint64_t nth_prime(int i) {
  static const uint64_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                    41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};
  return primes[i % 24];
}

// Deterministic point in [-1,1]^dim; the seed offsets the sequence index.
inline Vec halton_point(uint64_t index, int dim, uint64_t seed = 0) {
  Vec p(dim);
  uint64_t idx = index + 1 + seed * 7919ull;
  for (int d = 0; d < dim; ++d) p[d] = 2.0 * radical_inverse(idx, nth_prime(d)) - 1.0;
  return p;
}

// Deterministic unit vector in R^dim (Halton point pushed off the origin).
inline Vec halton_direction(uint64_t index, int dim, uint64_t seed = 0) {
  Vec p = halton_point(index, dim, seed);
  double n = p.norm();
  if (n < 1e-9) {
    p.setZero();
    p[static_cast<int>(index) % dim] = 1.0;
    n = 1.0;
  }
  return p / n;
}

// Worker count for sample sweeps, capped by SYMSPACE_THREADS.
inline int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  int n = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("SYMSPACE_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, n);
}

}  // namespace symspace
