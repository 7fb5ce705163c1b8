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

#include "offnav/vehicle.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace offnav {

const char* wheel_name(Wheel w) {
  switch (w) {
    case Wheel::FL: return "FL";
    case Wheel::FR: return "FR";
    case Wheel::RL: return "RL";
    case Wheel::RR: return "RR";
  }
  return "??";
}

Wheel wheel_from_name(const std::string& name) {
  for (Wheel w : kAllWheels) {
    if (name == wheel_name(w)) return w;
  }
  throw std::invalid_argument("unknown wheel name: " + name);
}

double total_mass(std::span<const MassPoint> points) {
  if (points.empty()) {
    throw std::invalid_argument("total_mass: empty point list");
  }
  double m = 0.0;
  for (const auto& p : points) m += p.mass;
  return m;
}

Eigen::Vector3d center_of_mass(std::span<const MassPoint> points) {
  const double m = total_mass(points);
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
  for (const auto& p : points) weighted += p.mass * p.position;
  return weighted / m;
}

Eigen::Matrix3d inertia_matrix(std::span<const MassPoint> points,
                               const Eigen::Vector3d& com) {
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p.position - com;
    inertia += p.mass * (d.squaredNorm() * Eigen::Matrix3d::Identity() -
                         d * d.transpose());
  }
  return inertia;
}

VehicleModel::VehicleModel(std::vector<MassPoint> points,
                           std::array<Eigen::Vector3d, 4> contacts,
                           double wheel_radius,
                           std::array<Eigen::Vector3d, 4> wheel_dirs)
    : points_(std::move(points)),
      contacts_(contacts),
      wheel_dirs_(wheel_dirs),
      wheel_radius_(wheel_radius) {
  if (points_.size() < 4) {
    throw std::invalid_argument("VehicleModel: need at least 4 mass points");
  }
  for (const auto& p : points_) {
    if (!(p.mass > 0.0) || !p.position.allFinite()) {
      throw std::invalid_argument("VehicleModel: invalid mass point");
    }
  }
  if (!(wheel_radius_ > 0.0)) {
    throw std::invalid_argument("VehicleModel: wheel radius must be positive");
  }
  for (auto& d : wheel_dirs_) {
    const double n = d.norm();
    if (!(n > 1e-9)) {
      throw std::invalid_argument("VehicleModel: degenerate wheel direction");
    }
    d /= n;
  }
  total_mass_ = offnav::total_mass(points_);
  com_ = offnav::center_of_mass(points_);
  inertia_ = offnav::inertia_matrix(points_, com_);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(inertia_);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  inertia_condition_ =
      (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(wheelbase() > 1e-9) || !(track_width() > 1e-9)) {
    throw std::invalid_argument(
        "VehicleModel: contacts must span a nonzero wheelbase and track");
  }
}

double VehicleModel::wheelbase() const {
  const Eigen::Vector3d front =
      0.5 * (contact(Wheel::FL) + contact(Wheel::FR));
  const Eigen::Vector3d rear = 0.5 * (contact(Wheel::RL) + contact(Wheel::RR));
  return (front - rear).norm();
}

double VehicleModel::track_width() const {
  const Eigen::Vector3d left = 0.5 * (contact(Wheel::FL) + contact(Wheel::RL));
  const Eigen::Vector3d right =
      0.5 * (contact(Wheel::FR) + contact(Wheel::RR));
  return (left - right).norm();
}

VehicleModel VehicleModel::default_pickup() {
  std::vector<MassPoint> pts;
  // Chassis box corners.
  for (double sx : {-1.4, 1.4}) {
    for (double sy : {-0.7, 0.7}) {
      pts.push_back({{sx, sy, -0.2}, 175.0});
      pts.push_back({{sx, sy, 0.3}, 175.0});
    }
  }
  // Engine block up front, cargo weight at the back.
  pts.push_back({{1.2, -0.3, 0.0}, 200.0});
  pts.push_back({{1.2, 0.3, 0.0}, 200.0});
  pts.push_back({{-1.2, -0.3, 0.0}, 100.0});
  pts.push_back({{-1.2, 0.3, 0.0}, 100.0});
  const double hz = -0.6;  // contact plane below the body origin
  std::array<Eigen::Vector3d, 4> contacts{
      Eigen::Vector3d{1.5, 0.8, hz}, Eigen::Vector3d{1.5, -0.8, hz},
      Eigen::Vector3d{-1.5, 0.8, hz}, Eigen::Vector3d{-1.5, -0.8, hz}};
  return VehicleModel(std::move(pts), contacts, 0.35);
}

VehicleModel VehicleModel::from_json(const nlohmann::json& j) {
  std::vector<MassPoint> pts;
  for (const auto& p : j.at("points")) {
    const auto& xyz = p.at("xyz");
    pts.push_back({{xyz.at(0).get<double>(), xyz.at(1).get<double>(),
                    xyz.at(2).get<double>()},
                   p.at("mass").get<double>()});
  }
  std::array<Eigen::Vector3d, 4> contacts;
  for (Wheel w : kAllWheels) {
    const auto& c = j.at("contacts").at(wheel_name(w));
    contacts[static_cast<int>(w)] = {c.at(0).get<double>(),
                                     c.at(1).get<double>(),
                                     c.at(2).get<double>()};
  }
  std::array<Eigen::Vector3d, 4> dirs = default_dirs();
  if (j.contains("wheel_dirs")) {
    for (Wheel w : kAllWheels) {
      const auto& d = j.at("wheel_dirs").at(wheel_name(w));
      dirs[static_cast<int>(w)] = {d.at(0).get<double>(), d.at(1).get<double>(),
                                   d.at(2).get<double>()};
    }
  }
  return VehicleModel(std::move(pts), contacts,
                      j.at("wheel_radius").get<double>(), dirs);
}

nlohmann::json VehicleModel::to_json() const {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : points_) {
    j["points"].push_back(
        {{"xyz", {p.position.x(), p.position.y(), p.position.z()}},
         {"mass", p.mass}});
  }
  for (Wheel w : kAllWheels) {
    const auto& c = contact(w);
    j["contacts"][wheel_name(w)] = {c.x(), c.y(), c.z()};
    const auto& d = wheel_dir(w);
    j["wheel_dirs"][wheel_name(w)] = {d.x(), d.y(), d.z()};
  }
  j["wheel_radius"] = wheel_radius_;
  return j;
}

}  // namespace offnav
