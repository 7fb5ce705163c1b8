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

#include "offnav/map_terrain.hpp"

#include <Eigen/Dense>

namespace offnav {

double GridMapTerrain::elevation_at(const Eigen::Vector2d& xy) const {
  if (!map_->contains(xy)) return 0.0;
  const Eigen::Vector2i c = map_->world_to_cell(xy);
  const double e = map_->elevation(c.x(), c.y());
  return is_no_data(e) ? 0.0 : e;
}

TerrainQuery GridMapTerrain::query(const VehicleModel& vehicle,
                                   const RigidState& state) const {
  TerrainQuery q;
  const Eigen::Matrix3d rot = state.q.toRotationMatrix();

  // Elevation sample under each wheel, then a least-squares plane through
  // the four samples (exact when they are coplanar).
  Eigen::Matrix<double, 4, 3> a;
  Eigen::Vector4d b;
  Eigen::Vector2d mean_xy = Eigen::Vector2d::Zero();
  std::array<Eigen::Vector2d, 4> wheel_xy;
  for (Wheel w : kAllWheels) {
    const int i = static_cast<int>(w);
    const Eigen::Vector3d p = state.t + rot * vehicle.contact(w);
    wheel_xy[i] = p.head<2>();
    mean_xy += 0.25 * wheel_xy[i];
  }
  for (int i = 0; i < 4; ++i) {
    a.row(i) << wheel_xy[i].x() - mean_xy.x(), wheel_xy[i].y() - mean_xy.y(),
        1.0;
    b[i] = elevation_at(wheel_xy[i]);
  }
  const Eigen::Vector3d abd =
      (a.transpose() * a).ldlt().solve(a.transpose() * b);
  q.normal = Eigen::Vector3d(-abd.x(), -abd.y(), 1.0).normalized();
  q.elevation = abd.x() * (state.t.x() - mean_xy.x()) +
                abd.y() * (state.t.y() - mean_xy.y()) + abd.z();

  for (Wheel w : kAllWheels) {
    const int i = static_cast<int>(w);
    if (map_->contains(wheel_xy[i])) {
      q.surface[i] = stribeck_at(*map_, wheel_xy[i]);
    } else {
      q.surface[i] = StribeckCoeffs{};
    }
  }
  return q;
}

}  // namespace offnav
