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

#include "offnav/ident.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace offnav {

namespace {

constexpr int kBlockRows = 32;  // 3+3+3+3+16+4

nlohmann::json vec3_json(const Eigen::Vector3d& v) {
  return {v.x(), v.y(), v.z()};
}

Eigen::Vector3d vec3_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

nlohmann::json state_to_json(const RigidState& s) {
  nlohmann::json j;
  j["t"] = vec3_json(s.t);
  j["q"] = {s.q.w(), s.q.x(), s.q.y(), s.q.z()};
  j["v"] = vec3_json(s.v);
  j["omega"] = vec3_json(s.omega);
  return j;
}

RigidState state_from_json(const nlohmann::json& j) {
  RigidState s;
  s.t = vec3_from(j.at("t"));
  const auto& q = j.at("q");
  s.q = Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(),
                           q.at(2).get<double>(), q.at(3).get<double>());
  s.q.normalize();
  s.v = vec3_from(j.at("v"));
  s.omega = vec3_from(j.at("omega"));
  return s;
}

void DriveLog::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("DriveLog: dt must be positive");
  }
  if (samples.empty()) {
    throw std::invalid_argument("DriveLog: no samples");
  }
  for (const auto& s : samples) {
    if (!s.a.allFinite() || !s.alpha.allFinite() || !s.omega.allFinite()) {
      throw std::invalid_argument("DriveLog: non-finite sample");
    }
    for (double r : s.rpm) {
      if (!std::isfinite(r)) {
        throw std::invalid_argument("DriveLog: non-finite rpm");
      }
    }
  }
  if (!gt_states.empty() && gt_states.size() != samples.size() + 1) {
    throw std::invalid_argument(
        "DriveLog: ground truth must cover all knots or be empty");
  }
}

nlohmann::json DriveLog::to_json() const {
  nlohmann::json j;
  j["dt"] = dt;
  j["initial"] = state_to_json(initial);
  j["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json js;
    js["a"] = vec3_json(s.a);
    js["alpha"] = vec3_json(s.alpha);
    js["omega"] = vec3_json(s.omega);
    js["rpm"] = {s.rpm[0], s.rpm[1], s.rpm[2], s.rpm[3]};
    js["dirs"] = nlohmann::json::array();
    for (const auto& d : s.wheel_dirs) js["dirs"].push_back(vec3_json(d));
    j["samples"].push_back(std::move(js));
  }
  if (has_ground_truth()) {
    j["gt_states"] = nlohmann::json::array();
    for (const auto& s : gt_states) j["gt_states"].push_back(state_to_json(s));
  }
  return j;
}

DriveLog DriveLog::from_json(const nlohmann::json& j) {
  DriveLog log;
  log.dt = j.at("dt").get<double>();
  log.initial = state_from_json(j.at("initial"));
  for (const auto& js : j.at("samples")) {
    ImuSample s;
    s.a = vec3_from(js.at("a"));
    s.alpha = vec3_from(js.at("alpha"));
    s.omega = vec3_from(js.at("omega"));
    for (int w = 0; w < 4; ++w) s.rpm[w] = js.at("rpm").at(w).get<double>();
    for (int w = 0; w < 4; ++w) s.wheel_dirs[w] = vec3_from(js.at("dirs").at(w));
    log.samples.push_back(std::move(s));
  }
  if (j.contains("gt_states")) {
    for (const auto& js : j.at("gt_states")) {
      log.gt_states.push_back(state_from_json(js));
    }
  }
  log.validate();
  return log;
}

namespace {

// Tangent-space layout: per knot [t(3) q(3) v(3) s(4*groups)], per step
// [rpm(4) fn(4)], then the symmetric inertia (6) when optimized.
struct Layout {
  std::vector<int> knot_base;
  std::vector<int> step_base;
  int inertia_base = -1;
  int dim = 0;
};

Layout build_layout(const IdentVariables& vars, const IdentParams& params) {
  Layout lay;
  const int n = vars.knots();
  lay.knot_base.resize(n);
  lay.step_base.resize(n - 1);
  int c = 0;
  for (int k = 0; k < n; ++k) {
    lay.knot_base[k] = c;
    c += 9 + 4 * vars.groups.count[k];
    if (k < n - 1) {
      lay.step_base[k] = c;
      c += 8;
    }
  }
  if (params.optimize_inertia) {
    lay.inertia_base = c;
    c += 6;
  }
  lay.dim = c;
  return lay;
}

struct SqrtWeights {
  Eigen::Vector3d a, alpha, v, q;
  Eigen::Vector4d s, w;
};

SqrtWeights sqrt_weights(const IdentWeights& w) {
  SqrtWeights sw;
  sw.a = w.a.cwiseSqrt();
  sw.alpha = w.alpha.cwiseSqrt();
  sw.v = w.v.cwiseSqrt();
  sw.q = w.q.cwiseSqrt();
  sw.s = w.s.cwiseSqrt();
  sw.w = w.w.cwiseSqrt();
  return sw;
}

StribeckCoeffs to_coeffs(const Eigen::Vector4d& s) {
  return StribeckCoeffs{s[0], s[1], s[2], s[3]};
}

// Residual block for step i. Model acceleration comes from the same force
// pipeline the reasoning engine uses, with the normal magnitudes taken
// from the optimization variables.
void eval_block(const IdentVariables& x, int i, const DriveLog& log,
                const VehicleModel& veh, const IdentParams& params,
                const SqrtWeights& sw, const TerrainView* terrain,
                Eigen::Ref<Eigen::VectorXd> out) {
  const ImuSample& m = log.samples[i];
  const double dt = log.dt;
  const double mass = veh.total_mass();
  const Eigen::Matrix3d rot = x.q[i].toRotationMatrix();
  const Eigen::Vector3d omega_w = rot * m.omega;

  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  if (terrain != nullptr) {
    RigidState st{x.t[i], x.q[i], x.v[i], omega_w};
    normal = terrain->query(veh, st).normal;
  }

  Eigen::Vector3d force(0.0, 0.0, -params.gravity * mass);
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();
  const double circ = 2.0 * std::numbers::pi * veh.wheel_radius() / 60.0;
  for (int w = 0; w < 4; ++w) {
    const Eigen::Vector3d arm =
        rot * (veh.contact(static_cast<Wheel>(w)) - veh.com());
    const Eigen::Vector3d v_center = x.v[i] + omega_w.cross(arm);
    const Eigen::Vector3d v_edge =
        (circ * x.rpm[i][w]) * (rot * m.wheel_dirs[w]);
    const Eigen::Vector3d v_rel = v_edge - v_center;
    const double speed = v_rel.norm();
    Eigen::Vector3d f_fric = Eigen::Vector3d::Zero();
    if (speed >= kSlipEpsilon) {
      const double mu = stribeck_mu_unchecked(speed, to_coeffs(x.wheel_s(i, w)));
      f_fric = mu * x.fn[i][w] * (v_rel / speed);
    }
    const Eigen::Vector3d f_norm = x.fn[i][w] * normal;
    force += f_norm + f_fric;
    torque += arm.cross(f_norm + f_fric);
  }
  const Eigen::Vector3d a_est = force / mass;
  const Eigen::Matrix3d inertia_w = rot * x.inertia * rot.transpose();
  const Eigen::Vector3d alpha_est = inertia_w.ldlt().solve(torque);

  out.segment<3>(0) = sw.a.cwiseProduct(a_est - rot * m.a);
  out.segment<3>(3) = sw.alpha.cwiseProduct(alpha_est - rot * m.alpha);
  out.segment<3>(6) =
      sw.v.cwiseProduct((x.v[i + 1] - x.v[i]) - (rot * m.a) * dt);

  const Eigen::Quaterniond omega_quat(0.0, omega_w.x(), omega_w.y(),
                                      omega_w.z());
  Eigen::Quaterniond predicted;
  predicted.coeffs() =
      x.q[i].coeffs() + 0.5 * (omega_quat * x.q[i]).coeffs() * dt;
  Eigen::Quaterniond err;
  err.coeffs() = (x.q[i + 1].conjugate() * predicted).coeffs();
  out.segment<3>(9) = sw.q.cwiseProduct(quat_log(err));

  for (int w = 0; w < 4; ++w) {
    const Eigen::Vector4d& sa = x.wheel_s(i, w);
    const Eigen::Vector4d& sb = x.wheel_s(i + 1, w);
    for (int c = 0; c < 4; ++c) {
      const double excess = std::max(0.0, sa[c] / params.s_max[c] - 1.0);
      out[12 + 4 * w + c] = sw.s[c] * (excess * excess + (sb[c] - sa[c]));
    }
  }
  for (int w = 0; w < 4; ++w) {
    out[28 + w] = sw.w[w] * (x.rpm[i][w] - m.rpm[w]);
  }
}

void check_sizes(const IdentVariables& vars, const DriveLog& log) {
  const int n = log.knots();
  if (vars.knots() != n || static_cast<int>(vars.v.size()) != n ||
      static_cast<int>(vars.q.size()) != n ||
      static_cast<int>(vars.rpm.size()) != n - 1 ||
      static_cast<int>(vars.fn.size()) != n - 1 ||
      static_cast<int>(vars.groups.count.size()) != n) {
    throw std::invalid_argument(
        "ident: variable and log dimensions are inconsistent");
  }
}

}  // namespace

IdentVariables make_initial_guess(const VehicleModel& vehicle,
                                  const DriveLog& log,
                                  const IdentParams& params,
                                  const StribeckCoeffs& s_init,
                                  const TerrainView* terrain,
                                  const GridMap* tie_map) {
  log.validate();
  const int n = log.knots();
  IdentVariables vars;
  vars.t.resize(n);
  vars.q.resize(n);
  vars.v.resize(n);
  vars.rpm.resize(n - 1);
  vars.fn.resize(n - 1);
  vars.inertia = vehicle.inertia();

  vars.t[0] = log.initial.t;
  vars.q[0] = log.initial.q.normalized();
  vars.v[0] = log.initial.v;
  for (int i = 0; i < n - 1; ++i) {
    const ImuSample& m = log.samples[i];
    const Eigen::Matrix3d rot = vars.q[i].toRotationMatrix();
    vars.v[i + 1] = vars.v[i] + rot * m.a * log.dt;
    vars.t[i + 1] = vars.t[i] + vars.v[i + 1] * log.dt;
    vars.q[i + 1] = integrate_orientation(vars.q[i], rot * m.omega, log.dt);
    vars.rpm[i] = m.rpm;
  }

  // Normal-force magnitudes from measurement-driven weight transfer.
  for (int i = 0; i < n - 1; ++i) {
    RigidState st{vars.t[i], vars.q[i], vars.v[i],
                  vars.q[i].toRotationMatrix() * log.samples[i].omega};
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    if (terrain != nullptr) normal = terrain->query(vehicle, st).normal;
    const TerrainContact contact =
        TerrainContact::resolve(vehicle, st, normal);
    const Eigen::Vector3d a_world =
        vars.q[i].toRotationMatrix() * log.samples[i].a;
    try {
      const WheelLoads loads =
          weight_transfer(vehicle, contact, a_world.dot(contact.axis_long),
                          a_world.dot(contact.axis_lat), params.gravity);
      vars.fn[i] = loads.magnitude;
    } catch (const InfeasibleLoadError&) {
      try {
        const WheelLoads rest =
            weight_transfer(vehicle, contact, 0.0, 0.0, params.gravity);
        vars.fn[i] = rest.magnitude;
      } catch (const InfeasibleLoadError&) {
        const double quarter = 0.25 * vehicle.total_mass() * params.gravity *
                               contact.cos_theta;
        vars.fn[i] = {quarter, quarter, quarter, quarter};
      }
    }
  }

  // Stribeck group structure. Wheels sampling friction cells with equal
  // values share one block; without a map everything is tied.
  vars.groups.group_of.resize(n);
  vars.groups.count.resize(n);
  vars.groups.offset.resize(n);
  const bool per_wheel_possible =
      params.tie == TieMode::kPerWheel ||
      (params.tie == TieMode::kAuto && tie_map != nullptr);
  int offset = 0;
  for (int k = 0; k < n; ++k) {
    vars.groups.offset[k] = offset;
    if (params.tie == TieMode::kTied || !per_wheel_possible) {
      vars.groups.group_of[k] = {0, 0, 0, 0};
      vars.groups.count[k] = 1;
    } else if (params.tie == TieMode::kPerWheel) {
      vars.groups.group_of[k] = {0, 1, 2, 3};
      vars.groups.count[k] = 4;
    } else {
      // Auto: group by equal friction-layer content under each wheel.
      std::array<StribeckCoeffs, 4> cell{};
      const Eigen::Matrix3d rot = vars.q[k].toRotationMatrix();
      for (int w = 0; w < 4; ++w) {
        const Eigen::Vector2d xy =
            (vars.t[k] + rot * vehicle.contact(static_cast<Wheel>(w)))
                .head<2>();
        cell[w] = tie_map->contains(xy) ? stribeck_at(*tie_map, xy)
                                        : StribeckCoeffs{};
      }
      int count = 0;
      std::array<int, 4> group{-1, -1, -1, -1};
      for (int w = 0; w < 4; ++w) {
        for (int prev = 0; prev < w; ++prev) {
          if (cell[prev].mu_s == cell[w].mu_s &&
              cell[prev].mu_d == cell[w].mu_d &&
              cell[prev].v_s == cell[w].v_s &&
              cell[prev].mu_v == cell[w].mu_v) {
            group[w] = group[prev];
            break;
          }
        }
        if (group[w] < 0) group[w] = count++;
      }
      vars.groups.group_of[k] = group;
      vars.groups.count[k] = count;
    }
    offset += vars.groups.count[k];
  }
  vars.groups.total_blocks = offset;
  vars.s.assign(offset,
                Eigen::Vector4d(s_init.mu_s, s_init.mu_d, s_init.v_s,
                                s_init.mu_v));
  return vars;
}

Eigen::VectorXd residual_stack(const IdentVariables& vars, const DriveLog& log,
                               const VehicleModel& vehicle,
                               const IdentParams& params,
                               const TerrainView* terrain) {
  check_sizes(vars, log);
  const int blocks = log.knots() - 1;
  const SqrtWeights sw = sqrt_weights(params.weights);
  Eigen::VectorXd r(blocks * kBlockRows);
  for (int i = 0; i < blocks; ++i) {
    eval_block(vars, i, log, vehicle, params, sw, terrain,
               r.segment(i * kBlockRows, kBlockRows));
  }
  return r;
}

int ident_tangent_dim(const IdentVariables& vars, const IdentParams& params) {
  return build_layout(vars, params).dim;
}

IdentVariables ident_retract(const IdentVariables& vars,
                             const Eigen::VectorXd& delta,
                             const IdentParams& params) {
  IdentVariables out = vars;
  const int n = vars.knots();
  int c = 0;
  for (int k = 0; k < n; ++k) {
    out.t[k] += delta.segment<3>(c);
    c += 3;
    out.q[k] = (quat_exp(delta.segment<3>(c)) * out.q[k]).normalized();
    c += 3;
    out.v[k] += delta.segment<3>(c);
    c += 3;
    for (int g = 0; g < vars.groups.count[k]; ++g) {
      Eigen::Vector4d& s = out.s[vars.groups.offset[k] + g];
      for (int ch = 0; ch < 4; ++ch) {
        s[ch] += delta[c++];
        const double floor = (ch == 2) ? 1e-3 : params.s_floor;
        s[ch] = std::max(s[ch], floor);
      }
    }
    if (k < n - 1) {
      for (int w = 0; w < 4; ++w) out.rpm[k][w] += delta[c++];
      for (int w = 0; w < 4; ++w) out.fn[k][w] += delta[c++];
    }
  }
  if (params.optimize_inertia) {
    out.inertia(0, 0) += delta[c + 0];
    out.inertia(1, 1) += delta[c + 1];
    out.inertia(2, 2) += delta[c + 2];
    out.inertia(0, 1) += delta[c + 3];
    out.inertia(1, 0) += delta[c + 3];
    out.inertia(0, 2) += delta[c + 4];
    out.inertia(2, 0) += delta[c + 4];
    out.inertia(1, 2) += delta[c + 5];
    out.inertia(2, 1) += delta[c + 5];
    c += 6;
  }
  if (c != delta.size()) {
    throw std::invalid_argument("ident_retract: delta size mismatch");
  }
  return out;
}

namespace {

// Applies/undoes a single tangent perturbation in place. kind encodes the
// variable family; save holds whatever is needed for an exact restore.
struct Perturber {
  IdentVariables* x;
  Eigen::Vector4d saved_quat;
  double saved_scalar = 0.0;

  void apply_t(int k, int sub, double h) {
    saved_scalar = x->t[k][sub];
    x->t[k][sub] += h;
  }
  void undo_t(int k, int sub) { x->t[k][sub] = saved_scalar; }

  void apply_q(int k, int sub, double h) {
    saved_quat = x->q[k].coeffs();
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    d[sub] = h;
    x->q[k] = (quat_exp(d) * x->q[k]).normalized();
  }
  void undo_q(int k) { x->q[k].coeffs() = saved_quat; }

  void apply_v(int k, int sub, double h) {
    saved_scalar = x->v[k][sub];
    x->v[k][sub] += h;
  }
  void undo_v(int k, int sub) { x->v[k][sub] = saved_scalar; }

  void apply_s(int block, int ch, double h) {
    saved_scalar = x->s[block][ch];
    x->s[block][ch] += h;
  }
  void undo_s(int block, int ch) { x->s[block][ch] = saved_scalar; }

  void apply_rpm(int k, int w, double h) {
    saved_scalar = x->rpm[k][w];
    x->rpm[k][w] += h;
  }
  void undo_rpm(int k, int w) { x->rpm[k][w] = saved_scalar; }

  void apply_fn(int k, int w, double h) {
    saved_scalar = x->fn[k][w];
    x->fn[k][w] += h;
  }
  void undo_fn(int k, int w) { x->fn[k][w] = saved_scalar; }

  void apply_inertia(int sub, double h) {
    static constexpr int kRow[6] = {0, 1, 2, 0, 0, 1};
    static constexpr int kCol[6] = {0, 1, 2, 1, 2, 2};
    saved_scalar = x->inertia(kRow[sub], kCol[sub]);
    x->inertia(kRow[sub], kCol[sub]) += h;
    if (kRow[sub] != kCol[sub]) x->inertia(kCol[sub], kRow[sub]) += h;
  }
  void undo_inertia(int sub) {
    static constexpr int kRow[6] = {0, 1, 2, 0, 0, 1};
    static constexpr int kCol[6] = {0, 1, 2, 1, 2, 2};
    x->inertia(kRow[sub], kCol[sub]) = saved_scalar;
    x->inertia(kCol[sub], kRow[sub]) = saved_scalar;
  }
};

}  // namespace

Eigen::SparseMatrix<double> residual_jacobian(const IdentVariables& vars,
                                              const DriveLog& log,
                                              const VehicleModel& vehicle,
                                              const IdentParams& params,
                                              const TerrainView* terrain) {
  check_sizes(vars, log);
  const int n = vars.knots();
  const int blocks = n - 1;
  const Layout lay = build_layout(vars, params);
  const SqrtWeights sw = sqrt_weights(params.weights);
  const double h = params.fd_step;

  IdentVariables work = vars;
  Perturber pert{&work};
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<size_t>(lay.dim) * 2 * kBlockRows);

  Eigen::VectorXd plus(kBlockRows), minus(kBlockRows);

  // Central difference of the affected residual blocks for one column.
  auto fd_column = [&](int col, std::span<const int> affected,
                       auto&& apply, auto&& undo) {
    for (int bi : affected) {
      apply(h);
      eval_block(work, bi, log, vehicle, params, sw, terrain, plus);
      undo();
      apply(-h);
      eval_block(work, bi, log, vehicle, params, sw, terrain, minus);
      undo();
      for (int r = 0; r < kBlockRows; ++r) {
        triplets.emplace_back(bi * kBlockRows + r, col,
                              (plus[r] - minus[r]) / (2.0 * h));
      }
    }
  };

  for (int k = 0; k < n; ++k) {
    std::array<int, 2> window{};
    int n_affected = 0;
    if (k - 1 >= 0 && k - 1 <= blocks - 1) window[n_affected++] = k - 1;
    if (k <= blocks - 1) window[n_affected++] = k;
    const std::span<const int> affected(window.data(),
                                        static_cast<size_t>(n_affected));
    int col = lay.knot_base[k];
    for (int sub = 0; sub < 3; ++sub, ++col) {
      fd_column(col, affected,
                [&](double hh) { pert.apply_t(k, sub, hh); },
                [&] { pert.undo_t(k, sub); });
    }
    for (int sub = 0; sub < 3; ++sub, ++col) {
      fd_column(col, affected,
                [&](double hh) { pert.apply_q(k, sub, hh); },
                [&] { pert.undo_q(k); });
    }
    for (int sub = 0; sub < 3; ++sub, ++col) {
      fd_column(col, affected,
                [&](double hh) { pert.apply_v(k, sub, hh); },
                [&] { pert.undo_v(k, sub); });
    }
    for (int g = 0; g < vars.groups.count[k]; ++g) {
      const int block = vars.groups.offset[k] + g;
      for (int ch = 0; ch < 4; ++ch, ++col) {
        fd_column(col, affected,
                  [&](double hh) { pert.apply_s(block, ch, hh); },
                  [&] { pert.undo_s(block, ch); });
      }
    }
    if (k < n - 1) {
      const std::array<int, 1> own{k};
      col = lay.step_base[k];
      for (int w = 0; w < 4; ++w, ++col) {
        fd_column(col, own,
                  [&](double hh) { pert.apply_rpm(k, w, hh); },
                  [&] { pert.undo_rpm(k, w); });
      }
      for (int w = 0; w < 4; ++w, ++col) {
        fd_column(col, own,
                  [&](double hh) { pert.apply_fn(k, w, hh); },
                  [&] { pert.undo_fn(k, w); });
      }
    }
  }
  if (params.optimize_inertia) {
    std::vector<int> all(blocks);
    for (int i = 0; i < blocks; ++i) all[i] = i;
    for (int sub = 0; sub < 6; ++sub) {
      fd_column(lay.inertia_base + sub, all,
                [&](double hh) { pert.apply_inertia(sub, hh); },
                [&] { pert.undo_inertia(sub); });
    }
  }

  Eigen::SparseMatrix<double> jac(blocks * kBlockRows, lay.dim);
  jac.setFromTriplets(triplets.begin(), triplets.end());
  return jac;
}

IdentResult solve_lower(const VehicleModel& vehicle, const DriveLog& log,
                        IdentVariables init, const IdentParams& params,
                        const TerrainView* terrain) {
  check_sizes(init, log);
  IdentResult result;
  auto residual = [&](const IdentVariables& x) {
    return residual_stack(x, log, vehicle, params, terrain);
  };
  auto jacobian = [&](const IdentVariables& x) {
    return residual_jacobian(x, log, vehicle, params, terrain);
  };
  auto retract = [&](const IdentVariables& x, const Eigen::VectorXd& d) {
    return ident_retract(x, d, params);
  };
  result.summary = lm_minimize(init, residual, jacobian, retract, params.lm);
  result.vars = std::move(init);
  result.final_cost = result.summary.final_cost;
  result.iterations = result.summary.iterations;
  result.converged = result.summary.converged;
  if (!result.converged) {
    std::fprintf(stderr,
                 "warning: lower-level solve stopped before convergence "
                 "(cost %.6g after %d iterations)\n",
                 result.final_cost, result.iterations);
  }

  const int n = result.vars.knots();
  result.s_star.resize(n);
  for (int k = 0; k < n; ++k) {
    for (int w = 0; w < 4; ++w) {
      Eigen::Vector4d s = result.vars.wheel_s(k, w);
      for (int ch = 0; ch < 4; ++ch) {
        const double floor = (ch == 2) ? 1e-3 : params.s_floor;
        s[ch] = std::min(std::max(s[ch], floor), params.s_max[ch]);
      }
      result.s_star[k][w] = to_coeffs(s);
    }
  }
  return result;
}

namespace {

double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

}  // namespace

double dynamics_loss(const StribeckCoeffs& s, const DriveLog& log, int begin,
                     int end, const VehicleModel& vehicle,
                     const IdentParams& params, const TerrainView* terrain) {
  log.validate();
  if (!log.has_ground_truth()) {
    throw std::invalid_argument("dynamics_loss: log has no ground truth");
  }
  if (begin < 0 || end > static_cast<int>(log.samples.size()) ||
      begin >= end) {
    throw std::invalid_argument("dynamics_loss: bad window");
  }
  const double mass = vehicle.total_mass();
  double loss = 0.0;
  for (int i = begin; i < end; ++i) {
    const ImuSample& m = log.samples[i];
    const RigidState& st = log.gt_states[i];
    const Eigen::Matrix3d rot = st.q.toRotationMatrix();
    const Eigen::Vector3d omega_w = rot * m.omega;

    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    if (terrain != nullptr) normal = terrain->query(vehicle, st).normal;
    const TerrainContact contact =
        TerrainContact::resolve(vehicle, st, normal);

    // One-step-lagged acceleration for the weight transfer, matching the
    // engine's rollout convention.
    double a_long = 0.0;
    double a_lat = 0.0;
    if (i > 0) {
      const RigidState& prev = log.gt_states[i - 1];
      Eigen::Vector3d prev_normal = Eigen::Vector3d::UnitZ();
      if (terrain != nullptr) prev_normal = terrain->query(vehicle, prev).normal;
      const TerrainContact prev_contact =
          TerrainContact::resolve(vehicle, prev, prev_normal);
      const Eigen::Vector3d a_prev =
          prev.q.toRotationMatrix() * log.samples[i - 1].a;
      a_long = a_prev.dot(prev_contact.axis_long);
      a_lat = a_prev.dot(prev_contact.axis_lat);
    }
    const WheelLoads loads =
        weight_transfer(vehicle, contact, a_long, a_lat, params.gravity);

    Eigen::Vector3d force(0.0, 0.0, -params.gravity * mass);
    Eigen::Vector3d torque = Eigen::Vector3d::Zero();
    const double circ = 2.0 * std::numbers::pi * vehicle.wheel_radius() / 60.0;
    for (int w = 0; w < 4; ++w) {
      const Eigen::Vector3d arm =
          rot * (vehicle.contact(static_cast<Wheel>(w)) - vehicle.com());
      const Eigen::Vector3d v_center = st.v + omega_w.cross(arm);
      const Eigen::Vector3d v_edge =
          (circ * m.rpm[w]) * (rot * m.wheel_dirs[w]);
      const Eigen::Vector3d v_rel = v_edge - v_center;
      const Eigen::Vector3d f_fric =
          friction_force(s, v_rel, loads.magnitude[w]);
      force += loads.force[w] + f_fric;
      torque += arm.cross(loads.force[w] + f_fric);
    }
    const Eigen::Vector3d a_est = force / mass;
    const Eigen::Matrix3d inertia_w =
        rot * vehicle.inertia() * rot.transpose();
    const Eigen::Vector3d alpha_est = inertia_w.ldlt().solve(torque);

    const Eigen::Vector3d a_gt = rot * m.a;
    const Eigen::Vector3d alpha_gt = rot * m.alpha;
    for (int c = 0; c < 3; ++c) {
      loss += huber(a_est[c] - a_gt[c], params.huber_delta);
      loss += huber(alpha_est[c] - alpha_gt[c], params.huber_delta);
    }
  }
  return loss;
}

Eigen::Vector4d dynamics_loss_grad(const StribeckCoeffs& s,
                                   const DriveLog& log, int begin, int end,
                                   const VehicleModel& vehicle,
                                   const IdentParams& params,
                                   const TerrainView* terrain) {
  const double h = 1e-6;
  Eigen::Vector4d grad;
  for (int ch = 0; ch < 4; ++ch) {
    StribeckCoeffs hi = s;
    StribeckCoeffs lo = s;
    double* hp = ch == 0 ? &hi.mu_s : ch == 1 ? &hi.mu_d
                                    : ch == 2 ? &hi.v_s : &hi.mu_v;
    double* lp = ch == 0 ? &lo.mu_s : ch == 1 ? &lo.mu_d
                                    : ch == 2 ? &lo.v_s : &lo.mu_v;
    *hp += h;
    *lp -= h;
    grad[ch] = (dynamics_loss(hi, log, begin, end, vehicle, params, terrain) -
                dynamics_loss(lo, log, begin, end, vehicle, params, terrain)) /
               (2.0 * h);
  }
  return grad;
}

double prior_loss(const StribeckCoeffs& predicted,
                  const StribeckCoeffs& prior) {
  return 0.25 * (std::abs(predicted.mu_s - prior.mu_s) +
                 std::abs(predicted.mu_d - prior.mu_d) +
                 std::abs(predicted.v_s - prior.v_s) +
                 std::abs(predicted.mu_v - prior.mu_v));
}

double combined_loss(const StribeckCoeffs& s, const StribeckCoeffs& prior,
                     const DriveLog& log, int begin, int end,
                     const VehicleModel& vehicle, const IdentParams& params,
                     const TerrainView* terrain) {
  return dynamics_loss(s, log, begin, end, vehicle, params, terrain) +
         params.lambda_prior * prior_loss(s, prior);
}

std::vector<PseudoLabel> make_pseudo_labels(const IdentResult& result,
                                            const VehicleModel& vehicle) {
  std::vector<PseudoLabel> labels;
  const int n = result.vars.knots();
  labels.reserve(static_cast<size_t>(n) * 4);
  for (int k = 0; k < n; ++k) {
    const Eigen::Matrix3d rot = result.vars.q[k].toRotationMatrix();
    for (int w = 0; w < 4; ++w) {
      PseudoLabel label;
      label.step = k;
      label.wheel = static_cast<Wheel>(w);
      label.xy = (result.vars.t[k] +
                  rot * vehicle.contact(static_cast<Wheel>(w)))
                     .head<2>();
      label.s = result.s_star[k][w];
      labels.push_back(label);
    }
  }
  return labels;
}

namespace {

double median(std::vector<double>& v) {
  const size_t n = v.size();
  const size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (n % 2 == 1) return v[mid];
  const double hi = v[mid];
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

}  // namespace

FitCellsReport fit_cells(std::span<const PseudoLabel> labels, GridMap& map) {
  FitCellsReport report;
  std::map<int, std::array<std::vector<double>, 4>> per_cell;
  for (const auto& label : labels) {
    if (!map.contains(label.xy)) {
      ++report.skipped_out_of_bounds;
      continue;
    }
    const Eigen::Vector2i c = map.world_to_cell(label.xy);
    auto& chans = per_cell[c.y() * map.width() + c.x()];
    chans[0].push_back(label.s.mu_s);
    chans[1].push_back(label.s.mu_d);
    chans[2].push_back(label.s.v_s);
    chans[3].push_back(label.s.mu_v);
  }
  for (auto& [idx, chans] : per_cell) {
    StribeckCoeffs s{median(chans[0]), median(chans[1]), median(chans[2]),
                     median(chans[3])};
    map.set_stribeck(idx % map.width(), idx / map.width(), s);
    ++report.updated_cells;
  }
  return report;
}

void write_pseudo_labels_csv(const std::string& path,
                             std::span<const PseudoLabel> labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,wheel,x,y,mu_s,mu_d,v_s,mu_v\n";
  char buf[256];
  for (const auto& l : labels) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                  l.step, wheel_name(l.wheel), l.xy.x(), l.xy.y(), l.s.mu_s,
                  l.s.mu_d, l.s.v_s, l.s.mu_v);
    out << buf << "\n";
  }
}

void write_lm_trace_json(const std::string& path, const LmSummary& summary) {
  nlohmann::json j;
  j["final_cost"] = summary.final_cost;
  j["iterations"] = summary.iterations;
  j["converged"] = summary.converged;
  j["trace"] = nlohmann::json::array();
  for (const auto& it : summary.trace) {
    j["trace"].push_back({{"iter", it.iter},
                          {"cost", it.cost},
                          {"damping", it.damping},
                          {"step_norm", it.step_norm},
                          {"accepted", it.accepted}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace offnav
