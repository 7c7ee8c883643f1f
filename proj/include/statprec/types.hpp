#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace statprec {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }

inline double db_to_noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

}  // namespace statprec
