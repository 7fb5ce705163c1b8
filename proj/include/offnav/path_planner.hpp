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
#include <vector>

#include <Eigen/Core>

#include "offnav/grid_map.hpp"

namespace offnav {

/// Eight compass orientations, counterclockwise from east. +x is east,
/// +y is north.
enum class Orient8 : int { E = 0, NE, N, NW, W, SW, S, SE };
inline constexpr int kOrientDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
inline constexpr int kOrientDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
const char* orient_name(Orient8 o);

/// The motion that produced the current vertex: turned left, went
/// straight, or turned right.
enum class Motion : int { L = 0, D = 1, R = 2 };
const char* motion_name(Motion m);

/// Planner state: grid cell, heading, and previous motion.
struct PlanVertex {
  int x = 0;
  int y = 0;
  Orient8 o = Orient8::E;
  Motion m = Motion::D;
  bool operator==(const PlanVertex&) const = default;
};

/// Up to three successors: turn 45 degrees left / keep straight / turn 45
/// degrees right, then advance one cell along the new heading. Off-map
/// moves are dropped.
std::vector<PlanVertex> successors(const PlanVertex& v, int width, int height);

struct PlannerParams {
  double lambda_v = 1.0;    // viscous weight in the friction cost
  double lambda_s = 4.0;    // slope cost sharpness
  double sigma_th = 0.5;    // roughness threshold, m^2
  double v_rel_plan = 1.0;  // slip speed at which the curve is sampled, m/s
  double w_d = 1.0, w_f = 1.0, w_s = 1.0, w_r = 1.0, w_t = 1.0;
  // Friction-blind baseline: a constant coefficient replaces the map's
  // friction layer (viscous term drops out).
  std::optional<double> const_mu;
};

/// Physics-infused edge cost between adjacent plan vertices:
///   w_d * D_d  distance (1 or sqrt(2) cell lengths)
///   w_f * D_f  1/mu + lambda_v * mu_v, curve sampled at v_rel_plan on the
///              average of the two cells' coefficients
///   w_s * D_s  exp(lambda_s * grade / mu) along and across the edge
///   w_r * D_R  mean roughness, infinite above sigma_th or on no-data
///   w_t * D_t  eta / mu on heading changes (eta = 4 same-direction turns,
///              1 first turn, 0 opposing turns)
/// Returns +infinity for non-traversable edges; never negative.
double edge_cost(const PlanVertex& p, const PlanVertex& q, const GridMap& map,
                 const PlannerParams& params);

/// Admissible and consistent heuristic: w_d * Euclidean cell distance.
double heuristic(const PlanVertex& v, const Eigen::Vector2i& goal,
                 const PlannerParams& params);

struct Path {
  std::vector<PlanVertex> vertices;
  std::vector<Eigen::Vector2d> checkpoints;  // world, filled by smooth()
  double total_cost = 0.0;
};

struct PlanResult {
  enum class Status { kFound, kUnreachable };
  Status status = Status::kUnreachable;
  Path path;
  long expanded_nodes = 0;
  bool found() const { return status == Status::kFound; }
};

/// A* over (x, y, orientation, motion). The start seeds all eight
/// orientations with motion D; the goal accepts any orientation/motion.
/// Ties break on (f, h, insertion order) so results are deterministic.
PlanResult plan(const Eigen::Vector2i& start, const Eigen::Vector2i& goal,
                const GridMap& map, const PlannerParams& params);

/// Centripetal Catmull-Rom smoothing through the cell centers, resampled
/// at `spacing` meters of arc length with exact endpoints. Falls back to
/// the raw polyline if any smoothed sample leaves the map or lands on a
/// cell at or above the roughness threshold.
std::vector<Eigen::Vector2d> smooth(const Path& path, const GridMap& map,
                                    const PlannerParams& params,
                                    double spacing = 1.0);

}  // namespace offnav
