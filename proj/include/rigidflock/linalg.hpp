#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "geometry.hpp"

namespace rigidflock {

/// Raised when a numerical routine cannot produce a trustworthy result.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Covariance3 = Mat3;

/// Validates symmetry (relative 1e-12) and positive semidefiniteness.
inline void check_covariance(const Covariance3& c) {
  if (!c.allFinite()) {
    throw std::domain_error("covariance: non-finite entry");
  }
  const double scale = std::max(c.cwiseAbs().maxCoeff(), 1e-300);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::domain_error("covariance: not symmetric");
  }
}

/// Scalar standard deviation of a covariance along the direction of v:
/// |v| / sqrt(v^T C^-1 v).
inline double mahalanobis_sigma(const Vec3& v, const Covariance3& c) {
  const double n = v.norm();
  if (!(n > 0.0)) {
    throw std::domain_error("mahalanobis_sigma: zero direction");
  }
  Eigen::FullPivLU<Mat3> lu(c);
  if (!lu.isInvertible()) {
    throw numerical_error("mahalanobis_sigma: singular covariance");
  }
  const double q = v.dot(lu.solve(v));
  if (!(q > 0.0) || !std::isfinite(q)) {
    throw numerical_error("mahalanobis_sigma: covariance not positive definite");
  }
  return n / std::sqrt(q);
}

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigen-decomposition for small symmetric matrices.
/// Sweeps rows in fixed order so results are bit-stable.
inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& input, int max_sweeps = 100) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) {
    throw std::domain_error("symmetric_eigen: matrix not square");
  }
  const double scale = n > 0 ? input.cwiseAbs().maxCoeff() : 0.0;
  if (n > 0 && (input - input.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0)) {
    throw std::domain_error("symmetric_eigen: matrix not symmetric");
  }

  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        off += a(p, q) * a(p, q);
      }
    }
    if (off <= 1e-30 * std::max(scale * scale, 1e-300)) {
      break;
    }
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) {
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

/// Symmetric square root of a positive semidefinite 3x3 matrix.
inline Mat3 psd_sqrt(const Covariance3& c) {
  const SymmetricEigen e = symmetric_eigen(c);
  Eigen::Vector3d root;
  for (int k = 0; k < 3; ++k) {
    root[k] = std::sqrt(std::max(e.values[k], 0.0));
  }
  return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

struct MinorReport {
  std::vector<double> minors;
  bool positive_definite = false;
};

/// Leading principal minors by Gaussian elimination without pivoting.
/// A zero pivot falls back to direct determinants for the remaining minors.
inline MinorReport leading_minors(const Eigen::MatrixXd& input) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) {
    throw std::domain_error("leading_minors: matrix not square");
  }
  const double scale = n > 0 ? input.cwiseAbs().maxCoeff() : 0.0;
  if (n > 0 && (input - input.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0)) {
    throw std::domain_error("leading_minors: matrix not symmetric");
  }

  MinorReport r;
  r.minors.reserve(static_cast<size_t>(n));
  Eigen::MatrixXd a = input;
  double det = 1.0;
  bool eliminating = true;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (eliminating) {
      const double pivot = a(k, k);
      if (pivot == 0.0) {
        eliminating = false;
      } else {
        det *= pivot;
        r.minors.push_back(det);
        for (Eigen::Index i = k + 1; i < n; ++i) {
          const double f = a(i, k) / pivot;
          a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
        }
        continue;
      }
    }
    r.minors.push_back(input.topLeftCorner(k + 1, k + 1).determinant());
  }
  r.positive_definite =
      std::all_of(r.minors.begin(), r.minors.end(), [](double m) { return m > 0.0; });
  return r;
}

}  // namespace rigidflock
