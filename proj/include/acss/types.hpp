#pragma once

#include <complex>

#include <Eigen/Core>

namespace acss {

using Index = Eigen::Index;
using Complex = std::complex<double>;

using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// Measurement and testing matrices are stored row-major: rows are drawn,
/// split and selected as units.
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = Eigen::MatrixXcd;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace acss
