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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "offnav/friction.hpp"
#include "offnav/rigid_state.hpp"
#include "offnav/vehicle.hpp"

namespace offnav {

/// Normal-force distribution could not be balanced: a wheel would need a
/// negative (pulling) normal force, i.e. the vehicle is about to tip.
struct InfeasibleLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularInertiaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Local contact geometry between the vehicle and the terrain plane.
/// axis_long / axis_lat are the vehicle's forward and left axes projected
/// onto the slope plane; sin_long / sin_lat are the signed grades of the
/// plane along those axes (positive = uphill forward / uphill to the left).
struct TerrainContact {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double theta = 0.0;      // total incline angle, rad
  double cos_theta = 1.0;  // normal . z
  double sin_long = 0.0;
  double sin_lat = 0.0;
  Eigen::Vector3d axis_long = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_lat = Eigen::Vector3d::UnitY();
  double h = 0.6;      // COM height above the contact plane, m
  double d_f = 1.5;    // COM to front contact line along the slope, m
  double d_r = 1.5;    // COM to rear contact line, m
  double d_l = 0.8;    // COM to left contact line, m
  double d_rlat = 0.8; // COM to right contact line, m

  /// Derives the full contact geometry from the vehicle pose and the
  /// terrain plane normal (unit, z > 0).
  static TerrainContact resolve(const VehicleModel& vehicle,
                                const RigidState& state,
                                const Eigen::Vector3d& normal);
};

/// Per-wheel normal forces after longitudinal and lateral weight transfer.
struct WheelLoads {
  double beta = 1.0;   // front-to-rear normal force ratio
  double gamma = 1.0;  // left-to-right normal force ratio
  std::array<double, 4> magnitude{};           // N
  std::array<Eigen::Vector3d, 4> force{};      // world frame, N
};

/// Distributes M g cos(theta) over the four wheels from a moment balance
/// about the front/rear and left/right contact lines. a_long and a_lat are
/// the vehicle's acceleration components along the slope axes (m/s^2).
/// Throws InfeasibleLoadError when any share would become non-positive.
WheelLoads weight_transfer(const VehicleModel& vehicle,
                           const TerrainContact& contact, double a_long,
                           double a_lat, double gravity = kGravity);

/// Slip velocity of a wheel: rolling edge velocity from RPM minus the
/// translational velocity of the wheel center, both in world frame.
/// wheel_dir is the drive direction in the vehicle frame.
Eigen::Vector3d skid_velocity(const RigidState& state,
                              const VehicleModel& vehicle, Wheel wheel,
                              double rpm, const Eigen::Vector3d& wheel_dir);

inline constexpr double kSlipEpsilon = 1e-6;  // m/s, below this no friction

/// Friction force on the vehicle for slip velocity v_rel = v_edge - v_center.
/// The tire slides over the ground at -v_rel, so the ground reaction on the
/// vehicle points along +v_rel with magnitude mu(|v_rel|) * normal_mag.
/// Zero below kSlipEpsilon. Throws std::domain_error on negative normal_mag.
Eigen::Vector3d friction_force(const StribeckCoeffs& s,
                               const Eigen::Vector3d& v_rel,
                               double normal_mag);

struct Wrench {
  Eigen::Vector3d force = Eigen::Vector3d::Zero();   // N
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();  // N m, about COM
};

/// Total external force (gravity + normals + friction) and torque about
/// the COM, with contact points expressed in world frame.
Wrench net_wrench(const VehicleModel& vehicle, const RigidState& state,
                  const WheelLoads& loads,
                  const std::array<Eigen::Vector3d, 4>& friction,
                  double gravity = kGravity);

/// One semi-implicit Euler step: velocities advance on the current wrench,
/// then pose advances on the new velocities. Throws SingularInertiaError
/// when the inertia matrix is not invertible (condition number > 1e12).
RigidState step(const RigidState& state, const Eigen::Vector3d& force,
                const Eigen::Vector3d& torque, const VehicleModel& vehicle,
                double dt);

/// Terrain sampled under the vehicle at one instant.
struct TerrainQuery {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double elevation = 0.0;  // plane height under the COM, m
  std::array<StribeckCoeffs, 4> surface{};  // per-wheel friction
};

class TerrainView {
 public:
  virtual ~TerrainView() = default;
  virtual TerrainQuery query(const VehicleModel& vehicle,
                             const RigidState& state) const = 0;
};

/// Flat or uniformly inclined world with a single surface type.
class UniformTerrain : public TerrainView {
 public:
  UniformTerrain(const StribeckCoeffs& s, double incline_rad = 0.0,
                 const Eigen::Vector2d& uphill = Eigen::Vector2d::UnitX());
  TerrainQuery query(const VehicleModel& vehicle,
                     const RigidState& state) const override;
  const Eigen::Vector3d& normal() const { return normal_; }
  double elevation_at(const Eigen::Vector2d& xy) const;

 private:
  StribeckCoeffs surface_;
  Eigen::Vector3d normal_;
  Eigen::Vector2d grade_;  // d elevation / d xy
};

struct StepInput {
  std::array<double, 4> rpm{};
  std::array<Eigen::Vector3d, 4> wheel_dirs = VehicleModel::default_dirs();
};

struct EngineConfig {
  double gravity = kGravity;
  // Weight transfer uses the previous step's acceleration; optionally run a
  // short fixed-point refinement instead of the one-step lag.
  int load_refine_iterations = 0;
};

struct WheelDiag {
  double normal_mag = 0.0;
  double slip_speed = 0.0;
  double mu = 0.0;
};

struct RolloutTrace {
  std::vector<Eigen::Vector3d> accel;        // world frame, at each step
  std::vector<Eigen::Vector3d> ang_accel;    // world frame
  std::vector<std::array<double, 4>> normal_mags;
  std::vector<std::array<WheelDiag, 4>> wheels;
};

struct RolloutResult {
  enum class Status { kOk, kInfeasibleLoad, kSingularInertia };
  std::vector<RigidState> states;  // one per completed step
  Status status = Status::kOk;
  int fail_step = -1;
  std::string message;
  bool ok() const { return status == Status::kOk; }
};

/// Chains weight transfer, slip, friction, wrench and integration for
/// n_steps. A load or inertia failure stops the rollout and is reported
/// with the step index; completed states are kept.
RolloutResult rollout(const RigidState& initial,
                      std::span<const StepInput> inputs,
                      const TerrainView& terrain, const VehicleModel& vehicle,
                      int n_steps, double dt,
                      const EngineConfig& config = {},
                      RolloutTrace* trace = nullptr);

struct TrajectoryErrors {
  double ate = 0.0;      // RMS translational error over all steps, m
  double rre_deg = 0.0;  // rotation error at the last step, degrees
  double rte = 0.0;      // translation error at the last step, m
};

/// Throws std::invalid_argument on length mismatch or fewer than 2 states.
TrajectoryErrors trajectory_errors(std::span<const RigidState> estimated,
                                   std::span<const RigidState> ground_truth);

}  // namespace offnav
