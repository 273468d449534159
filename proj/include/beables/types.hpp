#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>

namespace beables {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

using Point3 = std::array<double, 3>;

inline double distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace beables
