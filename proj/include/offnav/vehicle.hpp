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
#include <string>
#include <vector>

#include <Eigen/Core>

#include <json.hpp>

namespace offnav {

enum class Wheel : int { FL = 0, FR = 1, RL = 2, RR = 3 };
inline constexpr std::array<Wheel, 4> kAllWheels{Wheel::FL, Wheel::FR,
                                                 Wheel::RL, Wheel::RR};
const char* wheel_name(Wheel w);
Wheel wheel_from_name(const std::string& name);

struct MassPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // vehicle frame, m
  double mass = 0.0;                                   // kg
};

/// Sum of point masses. Throws std::invalid_argument on an empty list.
double total_mass(std::span<const MassPoint> points);

/// Mass-weighted mean position. Throws std::invalid_argument on empty.
Eigen::Vector3d center_of_mass(std::span<const MassPoint> points);

/// Rotational inertia about `com`: sum_i m_i (|d_i|^2 I - d_i d_i^T)
/// with d_i = p_i - com.
Eigen::Matrix3d inertia_matrix(std::span<const MassPoint> points,
                               const Eigen::Vector3d& com);

/// Rigid four-wheeled vehicle described by a cloud of mass points plus
/// wheel contact geometry. Vehicle frame: x forward, y left, z up;
/// contact points sit below the body so that the wheels touch the ground
/// when the chassis is level. Immutable after construction; all derived
/// quantities (mass, COM, inertia) are computed once.
class VehicleModel {
 public:
  VehicleModel(std::vector<MassPoint> points,
               std::array<Eigen::Vector3d, 4> contacts, double wheel_radius,
               std::array<Eigen::Vector3d, 4> wheel_dirs = default_dirs());

  const std::vector<MassPoint>& points() const { return points_; }
  const Eigen::Vector3d& contact(Wheel w) const {
    return contacts_[static_cast<int>(w)];
  }
  const Eigen::Vector3d& wheel_dir(Wheel w) const {
    return wheel_dirs_[static_cast<int>(w)];
  }
  double wheel_radius() const { return wheel_radius_; }
  double total_mass() const { return total_mass_; }
  const Eigen::Vector3d& com() const { return com_; }
  const Eigen::Matrix3d& inertia() const { return inertia_; }
  double inertia_condition() const { return inertia_condition_; }
  double wheelbase() const;
  double track_width() const;

  /// 12-point model of a ~2 t pickup: wheelbase 3.0 m, track 1.6 m,
  /// wheel radius 0.35 m, COM slightly forward and ~0.6 m above ground.
  static VehicleModel default_pickup();

  static VehicleModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  static std::array<Eigen::Vector3d, 4> default_dirs() {
    return {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitX(),
            Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitX()};
  }

 private:
  std::vector<MassPoint> points_;
  std::array<Eigen::Vector3d, 4> contacts_;
  std::array<Eigen::Vector3d, 4> wheel_dirs_;
  double wheel_radius_;
  double total_mass_;
  Eigen::Vector3d com_;
  Eigen::Matrix3d inertia_;
  double inertia_condition_;
};

}  // namespace offnav
