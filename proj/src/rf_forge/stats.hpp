// Copyright 2026 The rf_forge Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>
#include <string>
#include <vector>

namespace rfforge::stats {

// Inverse of the standard normal CDF for p in (0, 1). Rational approximation
// with absolute error below 1.15e-9 over the whole open interval.
double inverse_normal_cdf(double p);

double normal_cdf(double x);

// Two-sided tail probability P(|T| >= |t|) for Student's t with real-valued
// degrees of freedom.
double student_t_two_sided(double t, double dof);

// Survival function of the Kolmogorov distribution, Q(lambda) = P(K > lambda).
// Series terms are dropped once their magnitude falls below 1e-12.
double kolmogorov_survival(double lambda);

double mean(std::span<const double> v);

// Sample variance with the n - 1 denominator.
double variance(std::span<const double> v);

// 1-based ranks with tied values sharing their average rank.
std::vector<double> average_ranks(std::span<const double> v);

// Linear-interpolation quantile of the sorted sample, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace rfforge::stats
