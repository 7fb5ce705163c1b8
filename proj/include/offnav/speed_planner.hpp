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

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "offnav/grid_map.hpp"
#include "offnav/vehicle.hpp"

namespace offnav {

/// Nonincreasing piecewise-linear map, clamped outside the knot range.
struct PiecewiseLinearMap {
  std::vector<std::pair<double, double>> knots;  // (x, value), x increasing
  double operator()(double x) const;
  void validate() const;  // throws std::invalid_argument
};

struct SpeedSolverOpts {
  int max_outer = 30;
  int max_inner = 250;
  double tol = 1e-9;
  double constraint_tol = 1e-6;  // force / speed units
};

struct SpeedParams {
  double traction_limit = 8000.0;  // N, engine capability
  PiecewiseLinearMap phi{{{0.0, 15.0}, {0.5, 1.0}}};  // roughness -> max speed
  double gravity = kGravity;
  double v_min = 0.05;      // interior positivity bound, m/s
  double v_cap = 15.0;      // global speed cap, m/s
  double v_rel_plan = 1.0;  // slip speed for sampling the friction curve
  // Planner-side derating of the available friction; predicted times are
  // always computed from the returned profile itself.
  double mu_margin = 1.0;
  std::optional<double> const_mu;  // friction-blind baseline
  SpeedSolverOpts solver;
};

struct SpeedProfile {
  enum class Status { kFeasible, kInfeasible };
  Status status = Status::kInfeasible;
  std::vector<double> speeds;   // aligned to checkpoints
  double predicted_time = 0.0;  // s
  double max_violation = 0.0;   // of the returned profile
  bool feasible() const { return status == Status::kFeasible; }
};

/// Circumradius of checkpoints (i-1, i, i+1); infinity for endpoints and
/// collinear triples. Throws std::invalid_argument on duplicate points.
double curvature_radius(std::span<const Eigen::Vector2d> checkpoints, int i);

/// Terrain quantities sampled once per checkpoint.
struct CheckpointTerrain {
  double mu = 0.0;      // friction coefficient at v_rel_plan
  double theta = 0.0;   // slope angle along the outgoing segment, rad
  double sigma = 0.0;   // roughness
  double radius = 0.0;  // curvature radius, m (inf when straight)
  double seg_len = 0.0; // distance to the next checkpoint (0 for the last)
};

std::vector<CheckpointTerrain> sample_checkpoint_terrain(
    std::span<const Eigen::Vector2d> checkpoints, const GridMap& map,
    const SpeedParams& params);

/// Travel time of a speed profile: sum of 2 d_i / (v_i + v_{i+1}).
double predicted_time(std::span<const double> speeds,
                      std::span<const CheckpointTerrain> terrain);

/// Signed slacks (>= 0 means satisfied) of the four constraint families
/// at each checkpoint.
struct ConstraintSlacks {
  std::vector<double> force;      // mu M g cos(theta) - |required force|
  std::vector<double> traction;   // F_th - (F_s + F_a)
  std::vector<double> roughness;  // phi(sigma) - v
  double boundary = 0.0;          // -max(|v_first|, |v_last|)
  double interior = 0.0;          // min interior v
  double min_force() const;
  double min_traction() const;
  double min_roughness() const;
};

ConstraintSlacks constraint_eval(std::span<const double> speeds,
                                 std::span<const CheckpointTerrain> terrain,
                                 const VehicleModel& vehicle,
                                 const SpeedParams& params);

/// Convenience overload sampling the terrain from the map.
ConstraintSlacks constraint_eval(std::span<const double> speeds,
                                 std::span<const Eigen::Vector2d> checkpoints,
                                 const GridMap& map,
                                 const VehicleModel& vehicle,
                                 const SpeedParams& params);

/// Analytic gradient of predicted_time w.r.t. the speeds (for solver use
/// and the finite-difference cross-check).
std::vector<double> time_gradient(std::span<const double> speeds,
                                  std::span<const CheckpointTerrain> terrain);

/// Minimum-travel-time speed profile subject to the friction-circle,
/// traction, roughness and boundary constraints. Boundary speeds are zero;
/// interior speeds live in [v_min, caps]. The solver is an augmented
/// Lagrangian with projected-gradient inner iterations, started from a
/// feasible forward/backward pass and finished with an exact feasibility
/// polish, so returned feasible profiles satisfy every constraint within
/// solver.constraint_tol. Status is kInfeasible when even crawling speeds
/// violate the pointwise constraints (e.g. tan(theta) > mu).
SpeedProfile optimize_speeds(std::span<const Eigen::Vector2d> checkpoints,
                             const GridMap& map, const VehicleModel& vehicle,
                             const SpeedParams& params);

}  // namespace offnav
