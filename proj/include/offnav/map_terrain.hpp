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

#include "offnav/dynamics.hpp"
#include "offnav/grid_map.hpp"

namespace offnav {

/// Terrain view backed by a grid map: the contact plane is a least-squares
/// fit to the elevations under the four wheel footprints, and each wheel
/// samples the friction layer at its own cell. Positions outside the map
/// (or over no-data cells) fall back to the last valid plane.
class GridMapTerrain : public TerrainView {
 public:
  explicit GridMapTerrain(const GridMap& map) : map_(&map) {}
  TerrainQuery query(const VehicleModel& vehicle,
                     const RigidState& state) const override;

  /// Plane elevation at a world position (cell elevation; no-data -> 0).
  double elevation_at(const Eigen::Vector2d& xy) const;

 private:
  const GridMap* map_;
};

}  // namespace offnav
