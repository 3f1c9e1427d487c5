#include "nirom/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nirom/error.hpp"

namespace nirom {

SymmetricEigen symmetric_eigen_jacobi(const Matrix& input, int max_sweeps) {
  require(input.rows() == input.cols(), ErrorCode::dimension_mismatch,
          "jacobi: matrix must be square");
  const Index n = input.rows();
  Matrix a = input.triangularView<Eigen::Upper>();
  a.triangularView<Eigen::StrictlyLower>() = a.transpose().triangularView<Eigen::StrictlyLower>();
  Matrix v = Matrix::Identity(n, n);

  SymmetricEigen result;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (Index j = 0; j < n; ++j) {
      diag += a(j, j) * a(j, j);
      for (Index i = 0; i < j; ++i) off += a(i, j) * a(i, j);
    }
    if (off == 0.0 || off <= eps * eps * diag) {
      result.sweeps = sweep;
      break;
    }
    if (sweep + 1 == max_sweeps) fail(ErrorCode::not_converged, "jacobi: sweep limit reached");

    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Entry is negligible relative to both diagonals: annihilate directly.
        if (std::abs(apq) <= eps * 1e-3 * std::sqrt(std::abs(app * aqq)) && sweep > 3) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        if (!std::isfinite(theta)) t = 0.0;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Index r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          const double new_rp = arp - s * (arq + tau * arp);
          const double new_rq = arq + s * (arp - tau * arq);
          a(r, p) = a(p, r) = new_rp;
          a(r, q) = a(q, r) = new_rq;
        }
        for (Index r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });
  result.values.resize(n);
  result.vectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    result.values[k] = a(order[k], order[k]);
    result.vectors.col(k) = v.col(order[k]);
  }
  return result;
}

Matrix hessenberg(const Matrix& input) {
  require(input.rows() == input.cols(), ErrorCode::dimension_mismatch,
          "hessenberg: matrix must be square");
  Matrix a = input;
  const Index n = a.rows();
  for (Index k = 0; k + 2 < n; ++k) {
    Vector x = a.block(k + 1, k, n - k - 1, 1);
    const double alpha = x.norm();
    if (alpha == 0.0) continue;
    const double sign = x[0] >= 0.0 ? 1.0 : -1.0;
    x[0] += sign * alpha;
    const double xnorm = x.norm();
    if (xnorm == 0.0) continue;
    x /= xnorm;
    // A <- H A H with H = I - 2 x x^T acting on rows/cols k+1..n-1.
    auto rows = a.bottomRows(n - k - 1);
    rows -= 2.0 * x * (x.transpose() * rows);
    auto cols = a.rightCols(n - k - 1);
    cols -= 2.0 * (cols * x) * x.transpose();
    a.block(k + 2, k, n - k - 2, 1).setZero();
  }
  return a;
}

std::vector<Complex> hessenberg_qr_eigenvalues(Matrix a) {
  const Index n = a.rows();
  require(a.cols() == n, ErrorCode::dimension_mismatch, "hqr: matrix must be square");
  std::vector<Complex> w(static_cast<size_t>(n));
  const double eps = std::numeric_limits<double>::epsilon();
  auto sign_of = [](double magnitude, double s) {
    return s >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
  };

  double anorm = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = std::max<Index>(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  Index nn = n - 1;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    Index l = 0;
    do {
      for (l = nn; l > 0; --l) {
        double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      double x = a(nn, nn);
      if (l == nn) {
        w[static_cast<size_t>(nn)] = Complex(x + t, 0.0);
        --nn;
      } else {
        double y = a(nn - 1, nn - 1);
        double wv = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + wv;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[static_cast<size_t>(nn - 1)] = w[static_cast<size_t>(nn)] = Complex(x + z, 0.0);
            if (z != 0.0) w[static_cast<size_t>(nn)] = Complex(x - wv / z, 0.0);
          } else {
            w[static_cast<size_t>(nn - 1)] = Complex(x + p, z);
            w[static_cast<size_t>(nn)] = Complex(x + p, -z);
          }
          nn -= 2;
        } else {
          if (its == 60) fail(ErrorCode::not_converged, "hqr: too many iterations");
          if (its == 10 || its == 20 || its == 40) {
            // Exceptional shift.
            t += x;
            for (Index i = 0; i <= nn; ++i) a(i, i) -= x;
            const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            wv = -0.4375 * s * s;
          }
          ++its;
          Index m = nn - 2;
          double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            double s = y - z;
            p = (r * s - wv) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) +
                                            std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (Index i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (Index k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (Index j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const Index mmin = nn < k + 3 ? nn : k + 3;
              for (Index i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

std::vector<Complex> real_eigenvalues(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch,
          "eigenvalues: matrix must be square");
  require(all_finite(a), ErrorCode::non_finite, "eigenvalues: non-finite matrix");
  if (a.rows() == 0) return {};
  return hessenberg_qr_eigenvalues(hessenberg(a));
}

CVector eigenvector_for(const Matrix& a, Complex lambda) {
  const Index n = a.rows();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const Complex shift = lambda + Complex(1e3 * std::numeric_limits<double>::epsilon() * scale, 0.0);
  CMatrix shifted = a.cast<Complex>();
  shifted.diagonal().array() -= shift;
  Eigen::PartialPivLU<CMatrix> lu(shifted);
  CVector x = CVector::Ones(n);
  for (int it = 0; it < 3; ++it) {
    x = lu.solve(x);
    const double nrm = x.norm();
    require(std::isfinite(nrm) && nrm > 0.0, ErrorCode::singular,
            "eigenvector: inverse iteration broke down");
    x /= nrm;
  }
  Index imax = 0;
  double best = -1.0;
  for (Index i = 0; i < n; ++i) {
    const double mag = std::abs(x[i]);
    if (mag > best * (1.0 + 1e-12)) {
      best = mag;
      imax = i;
    }
  }
  const Complex phase = std::conj(x[imax]) / std::abs(x[imax]);
  x *= phase;
  x[imax] = Complex(x[imax].real(), 0.0);
  return x;
}

void orthonormalize_columns(Matrix& q) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Index j = 0; j < q.cols(); ++j) {
      for (Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      const double nrm = q.col(j).norm();
      require(nrm > 0.0, ErrorCode::degenerate, "orthonormalize: dependent columns");
      q.col(j) /= nrm;
    }
  }
}

void fix_column_signs(Matrix& q) {
  for (Index j = 0; j < q.cols(); ++j) {
    Index imax = 0;
    double best = -1.0;
    for (Index i = 0; i < q.rows(); ++i) {
      if (std::abs(q(i, j)) > best) {
        best = std::abs(q(i, j));
        imax = i;
      }
    }
    if (q.rows() > 0 && q(imax, j) < 0.0) q.col(j) = -q.col(j);
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace nirom
