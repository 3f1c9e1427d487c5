#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace nirom {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values[j]
  int sweeps = 0;
};

// Cyclic Jacobi for a symmetric matrix. Only the upper triangle is read.
SymmetricEigen symmetric_eigen_jacobi(const Matrix& a, int max_sweeps = 100);

// Householder reduction to upper Hessenberg form (similarity transform).
Matrix hessenberg(const Matrix& a);

// Eigenvalues of a real upper Hessenberg matrix by Francis double-shift QR.
// Complex pairs come out adjacent as exact conjugates, positive imaginary
// part first.
std::vector<Complex> hessenberg_qr_eigenvalues(Matrix h);

// Eigenvalues of a general real square matrix (Hessenberg + shifted QR).
std::vector<Complex> real_eigenvalues(const Matrix& a);

// Unit eigenvector for a known eigenvalue by shifted inverse iteration. The
// phase is fixed so the largest-magnitude component is real and positive.
CVector eigenvector_for(const Matrix& a, Complex lambda);

// Two passes of modified Gram-Schmidt over the columns, in place.
void orthonormalize_columns(Matrix& q);

// Flips each column so that its largest-magnitude entry is positive (first
// occurrence wins on ties).
void fix_column_signs(Matrix& q);

bool all_finite(const Matrix& m);

}  // namespace nirom
