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

#include "offnav/speed_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace offnav {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double PiecewiseLinearMap::operator()(double x) const {
  if (knots.empty()) throw std::invalid_argument("PiecewiseLinearMap: empty");
  if (x <= knots.front().first) return knots.front().second;
  if (x >= knots.back().first) return knots.back().second;
  for (size_t i = 0; i + 1 < knots.size(); ++i) {
    if (x <= knots[i + 1].first) {
      const double w =
          (x - knots[i].first) / (knots[i + 1].first - knots[i].first);
      return (1.0 - w) * knots[i].second + w * knots[i + 1].second;
    }
  }
  return knots.back().second;
}

void PiecewiseLinearMap::validate() const {
  if (knots.empty() || !(knots.front().second > 0.0)) {
    throw std::invalid_argument("PiecewiseLinearMap: phi(0) must be positive");
  }
  for (size_t i = 0; i + 1 < knots.size(); ++i) {
    if (!(knots[i + 1].first > knots[i].first) ||
        knots[i + 1].second > knots[i].second) {
      throw std::invalid_argument(
          "PiecewiseLinearMap: knots must increase in x and not in value");
    }
  }
}

double curvature_radius(std::span<const Eigen::Vector2d> checkpoints, int i) {
  const int n = static_cast<int>(checkpoints.size());
  if (i <= 0 || i >= n - 1) return kInf;
  const Eigen::Vector2d& a = checkpoints[i - 1];
  const Eigen::Vector2d& b = checkpoints[i];
  const Eigen::Vector2d& c = checkpoints[i + 1];
  const double side_a = (b - c).norm();
  const double side_b = (a - c).norm();
  const double side_c = (a - b).norm();
  if (side_a < 1e-9 || side_c < 1e-9) {
    throw std::invalid_argument("curvature_radius: duplicate checkpoints");
  }
  const Eigen::Vector2d u = b - a;
  const Eigen::Vector2d w = c - a;
  const double cross = u.x() * w.y() - u.y() * w.x();
  const double area2 = std::abs(cross);
  if (area2 < 1e-12 * side_b * std::max(side_a, side_c)) return kInf;
  return side_a * side_b * side_c / (2.0 * area2);
}

std::vector<CheckpointTerrain> sample_checkpoint_terrain(
    std::span<const Eigen::Vector2d> checkpoints, const GridMap& map,
    const SpeedParams& params) {
  const int n = static_cast<int>(checkpoints.size());
  std::vector<CheckpointTerrain> out(n);
  auto elevation_at = [&](const Eigen::Vector2d& xy) {
    if (!map.contains(xy)) return 0.0;
    const Eigen::Vector2i c = map.world_to_cell(xy);
    const double e = map.elevation(c.x(), c.y());
    return is_no_data(e) ? 0.0 : e;
  };
  for (int i = 0; i < n; ++i) {
    CheckpointTerrain& t = out[i];
    if (params.const_mu.has_value()) {
      t.mu = *params.const_mu;
    } else if (map.contains(checkpoints[i])) {
      t.mu = stribeck_mu_unchecked(params.v_rel_plan,
                                   stribeck_at(map, checkpoints[i]));
    } else {
      t.mu = 0.0;
    }
    t.mu *= params.mu_margin;
    if (map.contains(checkpoints[i])) {
      const Eigen::Vector2i c = map.world_to_cell(checkpoints[i]);
      const double rough = map.roughness(c.x(), c.y());
      t.sigma = is_no_data(rough) ? map.cell_size() * 1e6 : rough;
    } else {
      t.sigma = map.cell_size() * 1e6;
    }
    t.radius = curvature_radius(checkpoints, i);
    const int seg_from = (i < n - 1) ? i : i - 1;
    const int seg_to = seg_from + 1;
    const double dist = (checkpoints[seg_to] - checkpoints[seg_from]).norm();
    const double rise = elevation_at(checkpoints[seg_to]) -
                        elevation_at(checkpoints[seg_from]);
    t.theta = dist > 1e-9 ? std::atan2(rise, dist) : 0.0;
    t.seg_len = (i < n - 1) ? (checkpoints[i + 1] - checkpoints[i]).norm()
                            : 0.0;
  }
  return out;
}

double predicted_time(std::span<const double> speeds,
                      std::span<const CheckpointTerrain> terrain) {
  double time = 0.0;
  for (size_t i = 0; i + 1 < speeds.size(); ++i) {
    time += 2.0 * terrain[i].seg_len / (speeds[i] + speeds[i + 1]);
  }
  return time;
}

std::vector<double> time_gradient(std::span<const double> speeds,
                                  std::span<const CheckpointTerrain> terrain) {
  std::vector<double> grad(speeds.size(), 0.0);
  for (size_t i = 0; i + 1 < speeds.size(); ++i) {
    const double pair = speeds[i] + speeds[i + 1];
    const double d = -2.0 * terrain[i].seg_len / (pair * pair);
    grad[i] += d;
    grad[i + 1] += d;
  }
  return grad;
}

namespace {

struct Forces {
  double centripetal = 0.0;  // F_c at i
  double slope = 0.0;        // F_s at i
  double accel = 0.0;        // F_a on segment i (0 for the last checkpoint)
};

Forces forces_at(int i, std::span<const double> v,
                 std::span<const CheckpointTerrain> terrain, double mass,
                 double gravity) {
  Forces f;
  const CheckpointTerrain& t = terrain[i];
  f.centripetal = std::isinf(t.radius) ? 0.0 : mass * v[i] * v[i] / t.radius;
  f.slope = -mass * gravity * std::sin(t.theta);
  if (i + 1 < static_cast<int>(v.size()) && t.seg_len > 1e-9) {
    f.accel = -mass * (v[i + 1] - v[i]) * (v[i + 1] + v[i]) /
              (2.0 * t.seg_len);
  }
  return f;
}

double friction_budget(const CheckpointTerrain& t, double mass,
                       double gravity) {
  return t.mu * mass * gravity * std::cos(t.theta);
}

}  // namespace

double ConstraintSlacks::min_force() const {
  double m = kInf;
  for (double s : force) m = std::min(m, s);
  return m;
}
double ConstraintSlacks::min_traction() const {
  double m = kInf;
  for (double s : traction) m = std::min(m, s);
  return m;
}
double ConstraintSlacks::min_roughness() const {
  double m = kInf;
  for (double s : roughness) m = std::min(m, s);
  return m;
}

ConstraintSlacks constraint_eval(std::span<const double> speeds,
                                 std::span<const CheckpointTerrain> terrain,
                                 const VehicleModel& vehicle,
                                 const SpeedParams& params) {
  if (speeds.size() != terrain.size()) {
    throw std::invalid_argument("constraint_eval: length mismatch");
  }
  const int n = static_cast<int>(speeds.size());
  const double mass = vehicle.total_mass();
  ConstraintSlacks out;
  out.force.resize(n);
  out.traction.resize(n);
  out.roughness.resize(n);
  for (int i = 0; i < n; ++i) {
    const Forces f = forces_at(i, speeds, terrain, mass, params.gravity);
    const double demand =
        std::sqrt(f.centripetal * f.centripetal +
                  (f.slope + f.accel) * (f.slope + f.accel));
    out.force[i] = friction_budget(terrain[i], mass, params.gravity) - demand;
    out.traction[i] = params.traction_limit - (f.slope + f.accel);
    out.roughness[i] = params.phi(terrain[i].sigma) - speeds[i];
  }
  out.boundary = -std::max(std::abs(speeds.front()), std::abs(speeds.back()));
  out.interior = kInf;
  for (int i = 1; i + 1 < n; ++i) out.interior = std::min(out.interior, speeds[i]);
  return out;
}

ConstraintSlacks constraint_eval(std::span<const double> speeds,
                                 std::span<const Eigen::Vector2d> checkpoints,
                                 const GridMap& map,
                                 const VehicleModel& vehicle,
                                 const SpeedParams& params) {
  return constraint_eval(speeds,
                         sample_checkpoint_terrain(checkpoints, map, params),
                         vehicle, params);
}

namespace {

// Feasibility of the (force, traction) pair at checkpoint i for the given
// speed vector, with a small tolerance in force units.
bool block_ok(int i, std::span<const double> v,
              std::span<const CheckpointTerrain> terrain, double mass,
              const SpeedParams& params, double tol = 0.0) {
  const Forces f = forces_at(i, v, terrain, mass, params.gravity);
  const double demand = std::hypot(f.centripetal, f.slope + f.accel);
  if (demand > friction_budget(terrain[i], mass, params.gravity) + tol) {
    return false;
  }
  if (f.slope + f.accel > params.traction_limit + tol) return false;
  return true;
}

double worst_violation(std::span<const double> v,
                       std::span<const CheckpointTerrain> terrain,
                       const VehicleModel& vehicle,
                       const SpeedParams& params) {
  const ConstraintSlacks s = constraint_eval(v, terrain, vehicle, params);
  double viol = 0.0;
  viol = std::max(viol, -s.min_force());
  viol = std::max(viol, -s.min_traction());
  viol = std::max(viol, -s.min_roughness());
  return viol;
}

}  // namespace

SpeedProfile optimize_speeds(std::span<const Eigen::Vector2d> checkpoints,
                             const GridMap& map, const VehicleModel& vehicle,
                             const SpeedParams& params) {
  const int n = static_cast<int>(checkpoints.size());
  if (n < 3) {
    throw std::invalid_argument("optimize_speeds: need at least 3 checkpoints");
  }
  params.phi.validate();
  const std::vector<CheckpointTerrain> terrain =
      sample_checkpoint_terrain(checkpoints, map, params);
  const double mass = vehicle.total_mass();

  SpeedProfile profile;
  profile.speeds.assign(n, 0.0);

  // Pointwise caps: roughness, global cap, and the friction circle at zero
  // longitudinal demand. Zero remaining friction margin is infeasible.
  std::vector<double> cap(n, 0.0);
  for (int i = 1; i + 1 < n; ++i) {
    const CheckpointTerrain& t = terrain[i];
    const double budget = friction_budget(t, mass, params.gravity);
    const double slope_force = mass * params.gravity * std::sin(t.theta);
    const double margin2 = budget * budget - slope_force * slope_force;
    if (margin2 <= 0.0 || slope_force > params.traction_limit) {
      profile.status = SpeedProfile::Status::kInfeasible;
      profile.predicted_time = kInf;
      profile.speeds.clear();
      return profile;
    }
    double c = std::min(params.phi(t.sigma), params.v_cap);
    if (!std::isinf(t.radius)) {
      c = std::min(c, std::sqrt(t.radius * std::sqrt(margin2) / mass));
    }
    cap[i] = std::max(c, params.v_min);
  }

  // Crawl profile; if even this violates something the task is infeasible.
  std::vector<double> crawl(n, 0.0);
  for (int i = 1; i + 1 < n; ++i) crawl[i] = params.v_min;
  if (worst_violation(crawl, terrain, vehicle, params) >
      params.solver.constraint_tol) {
    profile.status = SpeedProfile::Status::kInfeasible;
    profile.predicted_time = kInf;
    profile.speeds.clear();
    return profile;
  }

  // Feasible start: pointwise caps, then alternating forward (acceleration)
  // and backward (deceleration) passes that bisect each pairwise block.
  std::vector<double> v(n, 0.0);
  for (int i = 1; i + 1 < n; ++i) {
    double init = std::min(params.phi(terrain[i].sigma), params.v_cap);
    if (!std::isinf(terrain[i].radius)) {
      init = std::min(init, std::sqrt(terrain[i].mu * params.gravity *
                                      terrain[i].radius));
    }
    v[i] = std::clamp(init, params.v_min, cap[i]);
  }
  auto bisect_upper = [&](int i, int target, double anchor, double hi) {
    // Largest v[target] in [anchor, hi] keeping block i feasible; the
    // anchor (equal speeds) is feasible by the pointwise caps.
    const double saved = v[target];
    v[target] = hi;
    if (block_ok(i, v, terrain, mass, params)) return;
    double lo = std::min(anchor, hi);
    v[target] = lo;
    if (!block_ok(i, v, terrain, mass, params)) {
      v[target] = std::min(saved, lo);
      return;
    }
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      v[target] = mid;
      if (block_ok(i, v, terrain, mass, params)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    v[target] = lo;
  };
  for (int sweep = 0; sweep < 8; ++sweep) {
    std::vector<double> before = v;
    for (int i = 0; i + 1 < n; ++i) {  // acceleration limits
      if (i + 1 < n - 1) {
        bisect_upper(i, i + 1, std::min(v[i], cap[i + 1]), v[i + 1]);
        v[i + 1] = std::max(v[i + 1], params.v_min);
      }
    }
    for (int i = n - 2; i >= 0; --i) {  // deceleration limits
      if (i >= 1) {
        bisect_upper(i, i, std::min(v[i + 1], cap[i]), v[i]);
        v[i] = std::max(v[i], params.v_min);
      }
    }
    double change = 0.0;
    for (int i = 0; i < n; ++i) change = std::max(change, std::abs(v[i] - before[i]));
    if (change < 1e-12) break;
  }
  if (worst_violation(v, terrain, vehicle, params) >
      params.solver.constraint_tol) {
    v = crawl;  // conservative but guaranteed
  }
  std::vector<double> feasible_start = v;

  // Augmented Lagrangian refinement over the interior speeds. Constraints
  // are normalized by M g; multipliers live per block and family.
  const double scale = mass * params.gravity;
  const int blocks = n - 1;
  std::vector<double> lam_force(blocks, 0.0);
  std::vector<double> lam_tract(blocks, 0.0);
  double rho = 10.0;

  auto eval_g = [&](std::span<const double> vv, int i, double& g_force,
                    double& g_tract) {
    const Forces f = forces_at(i, vv, terrain, mass, params.gravity);
    const double demand = std::hypot(f.centripetal, f.slope + f.accel);
    g_force = (demand - friction_budget(terrain[i], mass, params.gravity)) /
              scale;
    g_tract = ((f.slope + f.accel) - params.traction_limit) / scale;
  };

  auto augmented = [&](std::span<const double> vv) {
    double phi = predicted_time(vv, terrain);
    for (int i = 0; i < blocks; ++i) {
      double gf, gt;
      eval_g(vv, i, gf, gt);
      const double af = std::max(0.0, gf + lam_force[i] / rho);
      const double at = std::max(0.0, gt + lam_tract[i] / rho);
      phi += 0.5 * rho * (af * af + at * at);
    }
    return phi;
  };

  auto augmented_grad = [&](std::span<const double> vv,
                            std::vector<double>& grad) {
    grad = time_gradient(vv, terrain);
    for (int i = 0; i < blocks; ++i) {
      const Forces f = forces_at(i, vv, terrain, mass, params.gravity);
      const double fsa = f.slope + f.accel;
      const double demand = std::hypot(f.centripetal, fsa);
      double gf, gt;
      eval_g(vv, i, gf, gt);
      const double wf = rho * std::max(0.0, gf + lam_force[i] / rho);
      const double wt = rho * std::max(0.0, gt + lam_tract[i] / rho);
      if (wf == 0.0 && wt == 0.0) continue;
      // dF_c/dv_i, dF_a/dv_i, dF_a/dv_{i+1}
      const double dfc = std::isinf(terrain[i].radius)
                             ? 0.0
                             : 2.0 * mass * vv[i] / terrain[i].radius;
      double dfa_i = 0.0, dfa_j = 0.0;
      if (i + 1 < n && terrain[i].seg_len > 1e-9) {
        dfa_i = mass * vv[i] / terrain[i].seg_len;
        dfa_j = -mass * vv[i + 1] / terrain[i].seg_len;
      }
      const double denom = std::max(demand, 1e-9);
      const double dfdvi = (f.centripetal * dfc + fsa * dfa_i) / denom;
      const double dfdvj = (fsa * dfa_j) / denom;
      grad[i] += (wf * dfdvi + wt * dfa_i) / scale;
      if (i + 1 < n) grad[i + 1] += (wf * dfdvj + wt * dfa_j) / scale;
    }
  };

  std::vector<double> grad;
  double step0 = 1.0;
  for (int outer = 0; outer < params.solver.max_outer; ++outer) {
    double prev_violation = worst_violation(v, terrain, vehicle, params);
    for (int inner = 0; inner < params.solver.max_inner; ++inner) {
      augmented_grad(v, grad);
      const double phi0 = augmented(v);
      double step = step0;
      bool improved = false;
      for (int bt = 0; bt < 30; ++bt) {
        std::vector<double> trial = v;
        double move = 0.0;
        for (int i = 1; i + 1 < n; ++i) {
          trial[i] = std::clamp(v[i] - step * grad[i], params.v_min, cap[i]);
          move = std::max(move, std::abs(trial[i] - v[i]));
        }
        if (move < params.solver.tol) break;
        if (augmented(trial) < phi0 - 1e-12) {
          v = std::move(trial);
          improved = true;
          step0 = std::min(step * 2.0, 1e3);
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
    }
    double gf, gt;
    for (int i = 0; i < blocks; ++i) {
      eval_g(v, i, gf, gt);
      lam_force[i] = std::max(0.0, lam_force[i] + rho * gf);
      lam_tract[i] = std::max(0.0, lam_tract[i] + rho * gt);
    }
    const double violation = worst_violation(v, terrain, vehicle, params);
    if (violation < 0.25 * params.solver.constraint_tol) break;
    if (violation > 0.25 * prev_violation) rho *= 5.0;
  }

  // Exact feasibility polish: shrink toward the crawl profile until every
  // slack is nonnegative, then keep whichever feasible profile is faster.
  auto blend = [&](double s) {
    std::vector<double> out(n, 0.0);
    for (int i = 1; i + 1 < n; ++i) {
      out[i] = params.v_min + s * (v[i] - params.v_min);
    }
    return out;
  };
  std::vector<double> polished = v;
  if (worst_violation(polished, terrain, vehicle, params) > 0.0) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (worst_violation(blend(mid), terrain, vehicle, params) <= 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    polished = blend(lo);
  }

  const double t_polished = predicted_time(polished, terrain);
  const double t_start = predicted_time(feasible_start, terrain);
  const bool start_ok = worst_violation(feasible_start, terrain, vehicle,
                                        params) <= 0.0;
  if (start_ok && t_start < t_polished) polished = std::move(feasible_start);

  profile.status = SpeedProfile::Status::kFeasible;
  profile.speeds = std::move(polished);
  profile.predicted_time = predicted_time(profile.speeds, terrain);
  profile.max_violation =
      worst_violation(profile.speeds, terrain, vehicle, params);
  return profile;
}

}  // namespace offnav
