// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace stars_isac {

using cplx = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using rvec = Eigen::VectorXd;
using rmat = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;
constexpr cplx kJ{0.0, 1.0};

enum class StarsType { relaxed, independent, coupled };

std::string to_string(StarsType t);
StarsType stars_type_from_string(const std::string &s); // throws std::invalid_argument

} // namespace stars_isac
