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

#pragma once

#include <string>

namespace offnav {

inline constexpr double kGravity = 9.81;  // m/s^2

/// Parameters of a Stribeck friction curve.
///
/// The curve maps a slip speed (m/s) to a dimensionless friction
/// coefficient, capturing the static-to-kinetic transition plus a
/// viscous term that grows with slip.
struct StribeckCoeffs {
  double mu_s = 0.8;  // static coefficient, dimensionless
  double mu_d = 0.6;  // dynamic coefficient, dimensionless
  double v_s = 0.5;   // transition (Stribeck) velocity, m/s
  double mu_v = 0.0;  // viscous coefficient, s/m

  /// Validates finiteness, v_s > 0, mu_v >= 0 and mu_s >= mu_d >= 0.
  /// With allow_inverted the ordering check is skipped (useful while an
  /// identification run is still converging).
  bool valid(bool allow_inverted = false) const noexcept;

  /// Like the aggregate constructor but throws std::domain_error on
  /// invalid values. When allow_inverted is set an inverted mu_s < mu_d
  /// pair is accepted with a one-line warning on stderr.
  static StribeckCoeffs checked(double mu_s, double mu_d, double v_s,
                                double mu_v, bool allow_inverted = false);

  std::string describe() const;
};

/// Friction coefficient at slip speed v_rel >= 0.
/// Throws std::domain_error on negative v_rel or invalid coefficients.
double stribeck_mu(double v_rel, const StribeckCoeffs& s);

/// Raw curve evaluation without validation. Used by solvers whose
/// intermediate iterates may wander outside the valid region; the guard
/// on v_s only protects against division by zero.
double stribeck_mu_unchecked(double v_rel, const StribeckCoeffs& s) noexcept;

/// Highest speed at which a turn of the given radius can be completed
/// without drifting, assuming friction provides the centripetal force:
/// sqrt(radius * gravity * mu). Throws std::domain_error on radius <= 0,
/// gravity <= 0 or mu < 0.
double safe_steering_speed(double turn_radius, double gravity, double mu);

/// Steepest climbable slope, in degrees: atan(mu).
/// Throws std::domain_error on invalid mu.
double max_climb_angle_deg(double mu);

}  // namespace offnav
