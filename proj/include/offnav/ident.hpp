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

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include <json.hpp>

#include "offnav/dynamics.hpp"
#include "offnav/grid_map.hpp"
#include "offnav/lm.hpp"
#include "offnav/vehicle.hpp"

namespace offnav {

/// One logged step. Inertial quantities are body-frame kinematic values:
/// rotating them by the pose quaternion reproduces the world-frame signal.
/// Angular acceleration comes from differenced gyro rates when the source
/// cannot log it directly; synthetic logs store the exact value.
struct ImuSample {
  Eigen::Vector3d a = Eigen::Vector3d::Zero();      // m/s^2
  Eigen::Vector3d alpha = Eigen::Vector3d::Zero();  // rad/s^2
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s
  std::array<double, 4> rpm{};
  std::array<Eigen::Vector3d, 4> wheel_dirs = VehicleModel::default_dirs();
};

struct DriveLog {
  double dt = 0.01;
  RigidState initial;
  std::vector<ImuSample> samples;
  std::vector<RigidState> gt_states;  // optional; samples.size()+1 when set

  int knots() const { return static_cast<int>(samples.size()) + 1; }
  bool has_ground_truth() const {
    return gt_states.size() == samples.size() + 1;
  }
  void validate() const;  // throws std::invalid_argument

  nlohmann::json to_json() const;
  static DriveLog from_json(const nlohmann::json& j);
};

nlohmann::json state_to_json(const RigidState& s);
RigidState state_from_json(const nlohmann::json& j);

/// Square roots of these diagonals scale the residual families.
struct IdentWeights {
  Eigen::Vector3d a = Eigen::Vector3d::Ones();
  Eigen::Vector3d alpha = Eigen::Vector3d::Ones();
  Eigen::Vector3d v = Eigen::Vector3d::Ones();
  Eigen::Vector3d q = Eigen::Vector3d::Constant(10.0);
  Eigen::Vector4d s = Eigen::Vector4d::Constant(100.0);  // per channel
  Eigen::Vector4d w = Eigen::Vector4d::Constant(0.1);    // per wheel
};

enum class TieMode {
  kAuto,     // group wheels whose friction-layer cells carry equal values
  kTied,     // one Stribeck block per step
  kPerWheel  // four blocks per step
};

struct IdentParams {
  IdentWeights weights;
  Eigen::Vector4d s_max{2.0, 2.0, 5.0, 1.0};
  double lambda_prior = 0.1;  // loss mix weight for the prior term
  double huber_delta = 1.0;
  LmOptions lm{.max_iterations = 60,
               .damping_init = 1e-4,
               .damping_scale = 3.0,
               .step_tolerance = 1e-8};
  double gravity = kGravity;
  bool optimize_inertia = true;
  TieMode tie = TieMode::kAuto;
  double fd_step = 1e-6;    // central-difference step for the Jacobian
  double s_floor = 1e-4;    // keeps Stribeck channels positive in retract
};

/// Wheel-to-group assignment of the Stribeck blocks, per knot.
struct SGroupLayout {
  std::vector<std::array<int, 4>> group_of;  // wheel -> group id
  std::vector<int> count;                    // groups per knot
  std::vector<int> offset;                   // first block index per knot
  int total_blocks = 0;
};

/// The jointly optimized variables: per-knot pose/velocity, per-knot
/// Stribeck blocks, per-step wheel RPM and normal-force magnitudes, and
/// one global inertia matrix.
struct IdentVariables {
  std::vector<Eigen::Vector3d> t;   // knots
  std::vector<Eigen::Quaterniond> q;
  std::vector<Eigen::Vector3d> v;
  SGroupLayout groups;
  std::vector<Eigen::Vector4d> s;           // groups.total_blocks entries
  std::vector<std::array<double, 4>> rpm;   // knots - 1
  std::vector<std::array<double, 4>> fn;    // knots - 1, N
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Identity();

  int knots() const { return static_cast<int>(t.size()); }
  const Eigen::Vector4d& wheel_s(int knot, int wheel) const {
    return s[groups.offset[knot] + groups.group_of[knot][wheel]];
  }
  Eigen::Vector4d& wheel_s(int knot, int wheel) {
    return s[groups.offset[knot] + groups.group_of[knot][wheel]];
  }
};

/// Builds the starting point of the lower-level solve: poses and
/// velocities propagated from the IMU stream, RPM from its measurement,
/// normal forces from measurement-driven weight transfer, Stribeck blocks
/// from s_init, inertia from the vehicle model.
IdentVariables make_initial_guess(const VehicleModel& vehicle,
                                  const DriveLog& log,
                                  const IdentParams& params,
                                  const StribeckCoeffs& s_init,
                                  const TerrainView* terrain = nullptr,
                                  const GridMap* tie_map = nullptr);

/// The constraint stack: for each step i the concatenation of
///   C_a   (3)  model acceleration vs rotated IMU acceleration
///   C_al  (3)  model angular acceleration vs rotated measurement
///   C_v   (3)  velocity increment vs integrated IMU acceleration
///   C_q   (3)  log-map orientation increment vs integrated gyro
///   C_s  (16)  per-wheel bound excess (squared) plus temporal difference
///   C_w   (4)  RPM variables vs measurement
/// each scaled by the square root of its weight.
Eigen::VectorXd residual_stack(const IdentVariables& vars, const DriveLog& log,
                               const VehicleModel& vehicle,
                               const IdentParams& params,
                               const TerrainView* terrain = nullptr);

struct IdentResult {
  std::vector<std::array<StribeckCoeffs, 4>> s_star;  // per knot, per wheel
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  LmSummary summary;
  IdentVariables vars;
};

/// Lower-level optimization: jointly refines all variables against the log
/// with Levenberg-Marquardt and returns the per-step Stribeck coefficients
/// as pseudo-labels. Deterministic for identical inputs; a non-converged
/// run returns the best iterate with converged = false.
IdentResult solve_lower(const VehicleModel& vehicle, const DriveLog& log,
                        IdentVariables init, const IdentParams& params,
                        const TerrainView* terrain = nullptr);

/// Sparse Jacobian of residual_stack at vars (block-wise central
/// differences, exploiting the two-knot coupling window). Exposed for
/// validation against a dense finite-difference oracle.
Eigen::SparseMatrix<double> residual_jacobian(const IdentVariables& vars,
                                              const DriveLog& log,
                                              const VehicleModel& vehicle,
                                              const IdentParams& params,
                                              const TerrainView* terrain =
                                                  nullptr);

int ident_tangent_dim(const IdentVariables& vars, const IdentParams& params);

IdentVariables ident_retract(const IdentVariables& vars,
                             const Eigen::VectorXd& delta,
                             const IdentParams& params);

/// Huber evaluation loss over a log window [begin, end): compares model
/// acceleration under `s` (normal forces from measurement-driven weight
/// transfer with the engine's one-step lag) against the logged values.
/// Requires ground-truth states in the log.
double dynamics_loss(const StribeckCoeffs& s, const DriveLog& log, int begin,
                     int end, const VehicleModel& vehicle,
                     const IdentParams& params,
                     const TerrainView* terrain = nullptr);

/// Central-difference gradient of dynamics_loss w.r.t. the four channels.
Eigen::Vector4d dynamics_loss_grad(const StribeckCoeffs& s,
                                   const DriveLog& log, int begin, int end,
                                   const VehicleModel& vehicle,
                                   const IdentParams& params,
                                   const TerrainView* terrain = nullptr);

/// Mean absolute difference over the four channels.
double prior_loss(const StribeckCoeffs& predicted,
                  const StribeckCoeffs& prior);

/// dynamics_loss + lambda * prior_loss.
double combined_loss(const StribeckCoeffs& s, const StribeckCoeffs& prior,
                     const DriveLog& log, int begin, int end,
                     const VehicleModel& vehicle, const IdentParams& params,
                     const TerrainView* terrain = nullptr);

struct PseudoLabel {
  int step = 0;
  Wheel wheel = Wheel::FL;
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  StribeckCoeffs s;
};

/// Pseudo-labels at the wheel ground positions of the solved trajectory.
std::vector<PseudoLabel> make_pseudo_labels(const IdentResult& result,
                                            const VehicleModel& vehicle);

struct FitCellsReport {
  int updated_cells = 0;
  int skipped_out_of_bounds = 0;
};

/// Writes the per-cell per-channel median of the labels into the friction
/// layer; cells without samples keep their prior. Out-of-bounds labels are
/// skipped and counted.
FitCellsReport fit_cells(std::span<const PseudoLabel> labels, GridMap& map);

void write_pseudo_labels_csv(const std::string& path,
                             std::span<const PseudoLabel> labels);
void write_lm_trace_json(const std::string& path, const LmSummary& summary);

}  // namespace offnav
