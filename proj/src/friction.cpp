/*
 * Copyright 2026 The Offnav Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "offnav/friction.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace offnav {

namespace {
const double kSqrt2e = std::sqrt(2.0 * std::numbers::e);
const double kTanhGain = 10.0 * std::numbers::sqrt2;
}  // namespace

bool StribeckCoeffs::valid(bool allow_inverted) const noexcept {
  if (!std::isfinite(mu_s) || !std::isfinite(mu_d) || !std::isfinite(v_s) ||
      !std::isfinite(mu_v)) {
    return false;
  }
  if (v_s <= 0.0 || mu_v < 0.0 || mu_s < 0.0 || mu_d < 0.0) return false;
  if (!allow_inverted && mu_s < mu_d) return false;
  return true;
}

StribeckCoeffs StribeckCoeffs::checked(double mu_s, double mu_d, double v_s,
                                       double mu_v, bool allow_inverted) {
  StribeckCoeffs s{mu_s, mu_d, v_s, mu_v};
  if (!s.valid(true)) {
    throw std::domain_error("StribeckCoeffs: " + s.describe());
  }
  if (mu_s < mu_d) {
    if (!allow_inverted) {
      throw std::domain_error("StribeckCoeffs: mu_s < mu_d in " + s.describe());
    }
    std::fprintf(stderr, "warning: inverted Stribeck pair %s\n",
                 s.describe().c_str());
  }
  return s;
}

std::string StribeckCoeffs::describe() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "{mu_s=%g, mu_d=%g, v_s=%g, mu_v=%g}", mu_s,
                mu_d, v_s, mu_v);
  return buf;
}

double stribeck_mu_unchecked(double v_rel, const StribeckCoeffs& s) noexcept {
  const double vs = (s.v_s > 1e-9) ? s.v_s : 1e-9;
  const double u = v_rel / vs;
  return kSqrt2e * (s.mu_s - s.mu_d) * std::exp(-u * u) * u +
         s.mu_d * std::tanh(kTanhGain * u) + s.mu_v * v_rel;
}

double stribeck_mu(double v_rel, const StribeckCoeffs& s) {
  if (!(v_rel >= 0.0)) {
    throw std::domain_error("stribeck_mu: negative slip speed");
  }
  if (!s.valid(true)) {
    throw std::domain_error("stribeck_mu: invalid coefficients " +
                            s.describe());
  }
  return stribeck_mu_unchecked(v_rel, s);
}

double safe_steering_speed(double turn_radius, double gravity, double mu) {
  if (!(turn_radius > 0.0)) {
    throw std::domain_error("safe_steering_speed: radius must be positive");
  }
  if (!(gravity > 0.0) || !(mu >= 0.0)) {
    throw std::domain_error("safe_steering_speed: invalid gravity or mu");
  }
  return std::sqrt(turn_radius * gravity * mu);
}

double max_climb_angle_deg(double mu) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw std::domain_error("max_climb_angle_deg: invalid mu");
  }
  return std::atan(mu) * 180.0 / std::numbers::pi;
}

}  // namespace offnav
