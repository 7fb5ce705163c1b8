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

#include "offnav/dynamics.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace offnav {

TerrainContact TerrainContact::resolve(const VehicleModel& vehicle,
                                       const RigidState& state,
                                       const Eigen::Vector3d& normal_in) {
  TerrainContact c;
  c.normal = normal_in.normalized();
  if (c.normal.z() < 0.0) c.normal = -c.normal;
  c.cos_theta = std::min(1.0, std::max(-1.0, c.normal.z()));
  c.theta = std::acos(c.cos_theta);

  const Eigen::Matrix3d rot = state.q.toRotationMatrix();
  const Eigen::Vector3d fwd = rot * Eigen::Vector3d::UnitX();
  Eigen::Vector3d f = fwd - fwd.dot(c.normal) * c.normal;
  if (f.norm() < 1e-9) {
    // Vehicle pointing straight into the plane; pick any tangent.
    f = Eigen::Vector3d::UnitX() -
        Eigen::Vector3d::UnitX().dot(c.normal) * c.normal;
  }
  c.axis_long = f.normalized();
  c.axis_lat = c.normal.cross(c.axis_long);
  // Signed grades of the plane along the body axes (z component of the
  // in-plane unit vectors equals the sine of the local incline).
  c.sin_long = c.axis_long.z();
  c.sin_lat = c.axis_lat.z();

  const Eigen::Vector3d com_w = rot * vehicle.com();
  const Eigen::Vector3d front_w =
      rot * (0.5 * (vehicle.contact(Wheel::FL) + vehicle.contact(Wheel::FR)));
  const Eigen::Vector3d rear_w =
      rot * (0.5 * (vehicle.contact(Wheel::RL) + vehicle.contact(Wheel::RR)));
  const Eigen::Vector3d left_w =
      rot * (0.5 * (vehicle.contact(Wheel::FL) + vehicle.contact(Wheel::RL)));
  const Eigen::Vector3d right_w =
      rot * (0.5 * (vehicle.contact(Wheel::FR) + vehicle.contact(Wheel::RR)));
  const Eigen::Vector3d mid_w =
      0.25 * (front_w + rear_w + left_w + right_w);  // mean contact point
  c.d_f = (front_w - com_w).dot(c.axis_long);
  c.d_r = -(rear_w - com_w).dot(c.axis_long);
  c.d_l = (left_w - com_w).dot(c.axis_lat);
  c.d_rlat = -(right_w - com_w).dot(c.axis_lat);
  c.h = (com_w - mid_w).dot(c.normal);
  return c;
}

WheelLoads weight_transfer(const VehicleModel& vehicle,
                           const TerrainContact& contact, double a_long,
                           double a_lat, double gravity) {
  if (!(contact.cos_theta > 0.0)) {
    throw InfeasibleLoadError("weight_transfer: vehicle on a vertical wall");
  }
  if (!(contact.h > 0.0) || !(contact.d_f > 0.0) || !(contact.d_r > 0.0) ||
      !(contact.d_l > 0.0) || !(contact.d_rlat > 0.0)) {
    throw InfeasibleLoadError("weight_transfer: degenerate contact geometry");
  }
  const double m = vehicle.total_mass();
  const double mg_cos = m * gravity * contact.cos_theta;
  const double h = contact.h;

  // Moment balance about the rear and front contact lines. Gravity along
  // the slope and the inertial force both act at the COM, a height h above
  // the plane; friction has no moment arm about the contact lines.
  const double front_num = contact.d_r * mg_cos -
                           h * m * gravity * contact.sin_long -
                           h * m * a_long;
  const double rear_num = contact.d_f * mg_cos +
                          h * m * gravity * contact.sin_long + h * m * a_long;
  const double left_num = contact.d_rlat * mg_cos -
                          h * m * gravity * contact.sin_lat - h * m * a_lat;
  const double right_num = contact.d_l * mg_cos +
                           h * m * gravity * contact.sin_lat + h * m * a_lat;
  if (!(front_num > 0.0) || !(rear_num > 0.0) || !(left_num > 0.0) ||
      !(right_num > 0.0)) {
    throw InfeasibleLoadError("weight_transfer: wheel lift-off (tip-over)");
  }

  WheelLoads loads;
  loads.beta = front_num / rear_num;
  loads.gamma = left_num / right_num;
  const double front_share = loads.beta / (1.0 + loads.beta);
  const double rear_share = 1.0 / (1.0 + loads.beta);
  const double left_share = loads.gamma / (1.0 + loads.gamma);
  const double right_share = 1.0 / (1.0 + loads.gamma);
  loads.magnitude[static_cast<int>(Wheel::FL)] =
      front_share * left_share * mg_cos;
  loads.magnitude[static_cast<int>(Wheel::FR)] =
      front_share * right_share * mg_cos;
  loads.magnitude[static_cast<int>(Wheel::RL)] =
      rear_share * left_share * mg_cos;
  loads.magnitude[static_cast<int>(Wheel::RR)] =
      rear_share * right_share * mg_cos;
  for (int i = 0; i < 4; ++i) {
    loads.force[i] = loads.magnitude[i] * contact.normal;
  }
  return loads;
}

Eigen::Vector3d skid_velocity(const RigidState& state,
                              const VehicleModel& vehicle, Wheel wheel,
                              double rpm, const Eigen::Vector3d& wheel_dir) {
  const Eigen::Matrix3d rot = state.q.toRotationMatrix();
  const Eigen::Vector3d arm =
      rot * (vehicle.contact(wheel) - vehicle.com());
  const Eigen::Vector3d v_center = state.v + state.omega.cross(arm);
  const double edge_speed =
      2.0 * std::numbers::pi * vehicle.wheel_radius() * rpm / 60.0;
  const Eigen::Vector3d v_edge = edge_speed * (rot * wheel_dir);
  return v_edge - v_center;
}

Eigen::Vector3d friction_force(const StribeckCoeffs& s,
                               const Eigen::Vector3d& v_rel,
                               double normal_mag) {
  if (!(normal_mag >= 0.0)) {
    throw std::domain_error("friction_force: negative normal magnitude");
  }
  const double speed = v_rel.norm();
  if (speed < kSlipEpsilon) return Eigen::Vector3d::Zero();
  const double mu = stribeck_mu_unchecked(speed, s);
  return mu * normal_mag * (v_rel / speed);
}

Wrench net_wrench(const VehicleModel& vehicle, const RigidState& state,
                  const WheelLoads& loads,
                  const std::array<Eigen::Vector3d, 4>& friction,
                  double gravity) {
  const Eigen::Matrix3d rot = state.q.toRotationMatrix();
  Wrench w;
  w.force = vehicle.total_mass() * Eigen::Vector3d(0.0, 0.0, -gravity);
  for (Wheel wheel : kAllWheels) {
    const int i = static_cast<int>(wheel);
    const Eigen::Vector3d contact_force = loads.force[i] + friction[i];
    w.force += contact_force;
    const Eigen::Vector3d arm = rot * (vehicle.contact(wheel) - vehicle.com());
    w.torque += arm.cross(contact_force);
  }
  return w;
}

RigidState step(const RigidState& state, const Eigen::Vector3d& force,
                const Eigen::Vector3d& torque, const VehicleModel& vehicle,
                double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("step: dt must be positive");
  }
  if (vehicle.inertia_condition() > 1e12) {
    throw SingularInertiaError("step: inertia matrix not invertible");
  }
  const Eigen::Vector3d accel = force / vehicle.total_mass();
  const Eigen::Matrix3d rot = state.q.toRotationMatrix();
  const Eigen::Matrix3d inertia_w = rot * vehicle.inertia() * rot.transpose();
  const Eigen::Vector3d ang_accel = inertia_w.ldlt().solve(torque);

  RigidState next;
  next.v = state.v + accel * dt;
  next.omega = state.omega + ang_accel * dt;
  next.t = state.t + next.v * dt;
  next.q = integrate_orientation(state.q, next.omega, dt);
  return next;
}

UniformTerrain::UniformTerrain(const StribeckCoeffs& s, double incline_rad,
                               const Eigen::Vector2d& uphill)
    : surface_(s) {
  const Eigen::Vector2d dir =
      uphill.norm() > 1e-12 ? uphill.normalized() : Eigen::Vector2d::UnitX();
  const double grade = std::tan(incline_rad);
  grade_ = grade * dir;
  normal_ = Eigen::Vector3d(-grade_.x(), -grade_.y(), 1.0).normalized();
}

TerrainQuery UniformTerrain::query(const VehicleModel&,
                                   const RigidState& state) const {
  TerrainQuery q;
  q.normal = normal_;
  q.elevation = elevation_at(state.t.head<2>());
  q.surface = {surface_, surface_, surface_, surface_};
  return q;
}

double UniformTerrain::elevation_at(const Eigen::Vector2d& xy) const {
  return grade_.dot(xy);
}

RolloutResult rollout(const RigidState& initial,
                      std::span<const StepInput> inputs,
                      const TerrainView& terrain, const VehicleModel& vehicle,
                      int n_steps, double dt, const EngineConfig& config,
                      RolloutTrace* trace) {
  RolloutResult result;
  if (static_cast<int>(inputs.size()) < n_steps) {
    throw std::invalid_argument("rollout: fewer inputs than steps");
  }
  result.states.reserve(n_steps);
  RigidState state = initial;
  double a_long = 0.0;
  double a_lat = 0.0;
  for (int i = 0; i < n_steps; ++i) {
    const StepInput& in = inputs[i];
    const TerrainQuery tq = terrain.query(vehicle, state);
    const TerrainContact contact =
        TerrainContact::resolve(vehicle, state, tq.normal);
    try {
      WheelLoads loads =
          weight_transfer(vehicle, contact, a_long, a_lat, config.gravity);
      std::array<Eigen::Vector3d, 4> friction;
      Wrench wrench;
      auto evaluate_forces = [&]() {
        for (Wheel w : kAllWheels) {
          const int k = static_cast<int>(w);
          const Eigen::Vector3d v_rel = skid_velocity(
              state, vehicle, w, in.rpm[k], in.wheel_dirs[k]);
          friction[k] =
              friction_force(tq.surface[k], v_rel, loads.magnitude[k]);
        }
        wrench = net_wrench(vehicle, state, loads, friction, config.gravity);
      };
      evaluate_forces();
      for (int r = 0; r < config.load_refine_iterations; ++r) {
        const Eigen::Vector3d a = wrench.force / vehicle.total_mass();
        loads = weight_transfer(vehicle, contact, a.dot(contact.axis_long),
                                a.dot(contact.axis_lat), config.gravity);
        evaluate_forces();
      }
      const Eigen::Vector3d accel = wrench.force / vehicle.total_mass();
      a_long = accel.dot(contact.axis_long);
      a_lat = accel.dot(contact.axis_lat);
      if (trace != nullptr) {
        const Eigen::Matrix3d rot = state.q.toRotationMatrix();
        const Eigen::Matrix3d inertia_w =
            rot * vehicle.inertia() * rot.transpose();
        trace->accel.push_back(accel);
        trace->ang_accel.push_back(inertia_w.ldlt().solve(wrench.torque));
        trace->normal_mags.push_back(loads.magnitude);
        std::array<WheelDiag, 4> diag;
        for (Wheel w : kAllWheels) {
          const int k = static_cast<int>(w);
          const Eigen::Vector3d v_rel = skid_velocity(
              state, vehicle, w, in.rpm[k], in.wheel_dirs[k]);
          diag[k].normal_mag = loads.magnitude[k];
          diag[k].slip_speed = v_rel.norm();
          diag[k].mu = diag[k].slip_speed < kSlipEpsilon
                           ? 0.0
                           : stribeck_mu_unchecked(diag[k].slip_speed,
                                                   tq.surface[k]);
        }
        trace->wheels.push_back(diag);
      }
      state = step(state, wrench.force, wrench.torque, vehicle, dt);
    } catch (const InfeasibleLoadError& e) {
      result.status = RolloutResult::Status::kInfeasibleLoad;
      result.fail_step = i;
      result.message = std::string(e.what()) + " at step " + std::to_string(i);
      return result;
    } catch (const SingularInertiaError& e) {
      result.status = RolloutResult::Status::kSingularInertia;
      result.fail_step = i;
      result.message = std::string(e.what()) + " at step " + std::to_string(i);
      return result;
    }
    result.states.push_back(state);
  }
  return result;
}

TrajectoryErrors trajectory_errors(std::span<const RigidState> estimated,
                                   std::span<const RigidState> ground_truth) {
  if (estimated.size() != ground_truth.size() || estimated.size() < 2) {
    throw std::invalid_argument(
        "trajectory_errors: need equal lengths of at least 2");
  }
  TrajectoryErrors e;
  double sq = 0.0;
  for (size_t i = 0; i < estimated.size(); ++i) {
    sq += (estimated[i].t - ground_truth[i].t).squaredNorm();
  }
  e.ate = std::sqrt(sq / static_cast<double>(estimated.size()));
  e.rte = (estimated.back().t - ground_truth.back().t).norm();
  e.rre_deg = quat_angle_deg(estimated.back().q, ground_truth.back().q);
  return e;
}

}  // namespace offnav
