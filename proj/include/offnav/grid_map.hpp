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

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "offnav/friction.hpp"

namespace offnav {

inline constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();
inline bool is_no_data(double v) { return !(v == v); }

struct GridSpec {
  int width = 128;
  int height = 128;
  double cell_size = 0.5;                          // m
  Eigen::Vector2d origin{-32.0, -32.0};            // world xy of cell (0,0)
};

/// 2.5D navigation map: a friction layer (4 Stribeck channels per cell),
/// an elevation layer and a roughness layer, all on the same grid.
/// Row-major storage, x fastest. Cell (0,0) is centered at
/// origin + (cell_size/2, cell_size/2).
class GridMap {
 public:
  explicit GridMap(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }
  double cell_size() const { return spec_.cell_size; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < spec_.width && y >= 0 && y < spec_.height;
  }
  int index(int x, int y) const;  // throws std::out_of_range
  Eigen::Vector2d cell_center(int x, int y) const;
  /// Nearest cell for a world position; throws std::out_of_range outside.
  Eigen::Vector2i world_to_cell(const Eigen::Vector2d& xy) const;
  bool contains(const Eigen::Vector2d& xy) const;

  double elevation(int x, int y) const { return el_[index(x, y)]; }
  void set_elevation(int x, int y, double v) { el_[index(x, y)] = v; }
  bool has_elevation(int x, int y) const { return !is_no_data(elevation(x, y)); }

  double roughness(int x, int y) const { return rl_[index(x, y)]; }
  void set_roughness(int x, int y, double v) { rl_[index(x, y)] = v; }

  const StribeckCoeffs& stribeck(int x, int y) const { return sl_[index(x, y)]; }
  void set_stribeck(int x, int y, const StribeckCoeffs& s) {
    sl_[index(x, y)] = s;
  }

  std::span<const double> elevation_data() const { return el_; }
  std::span<const double> roughness_data() const { return rl_; }
  std::span<const StribeckCoeffs> stribeck_data() const { return sl_; }

 private:
  GridSpec spec_;
  std::vector<StribeckCoeffs> sl_;
  std::vector<double> el_;
  std::vector<double> rl_;
};

/// Fills the elevation layer with the per-cell mean z of the points;
/// cells without points become no-data.
void elevation_from_points(std::span<const Eigen::Vector3d> points,
                           GridMap& map);

/// Fills the roughness layer with the residual of a least-squares plane
/// fit (a x + b y - z + d = 0, vertical residuals, normal equations) per
/// cell. Cells with fewer than 3 points or a rank-deficient fit get
/// no-data, which the planner treats as non-traversable.
void roughness_from_points(std::span<const Eigen::Vector3d> points,
                           GridMap& map);

/// Signed grade from cell P to cell Q: (EL_Q - EL_P) / planar distance.
/// Throws std::domain_error when either cell has no elevation.
double slope_along(const GridMap& map, const Eigen::Vector2i& p,
                   const Eigen::Vector2i& q);

/// Absolute grade perpendicular to PQ at its midpoint, from the average of
/// central-difference elevation gradients at P and Q. No-data neighbors are
/// treated as flat; each occurrence bumps *warnings when provided.
double slope_perp(const GridMap& map, const Eigen::Vector2i& p,
                  const Eigen::Vector2i& q, int* warnings = nullptr);

/// Nearest-cell Stribeck lookup for a world position.
const StribeckCoeffs& stribeck_at(const GridMap& map,
                                  const Eigen::Vector2d& xy);

/// Map bundle I/O: a JSON header plus one little-endian float32 binary per
/// layer (row-major; SL stores 4 channels per cell, mu_s mu_d v_s mu_v).
void save_map_bundle(const GridMap& map, const std::string& dir);
GridMap load_map_bundle(const std::string& dir);

/// Per-layer CSV export (one row per y, x across) for external plotting.
void export_map_csv(const GridMap& map, const std::string& dir);

}  // namespace offnav
