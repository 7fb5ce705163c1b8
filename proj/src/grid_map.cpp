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

#include "offnav/grid_map.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <Eigen/Dense>

#include <json.hpp>

namespace offnav {

static_assert(std::endian::native == std::endian::little,
              "map bundles are little-endian");

GridMap::GridMap(const GridSpec& spec) : spec_(spec) {
  if (spec_.width <= 0 || spec_.height <= 0 || !(spec_.cell_size > 0.0)) {
    throw std::invalid_argument("GridMap: invalid grid spec");
  }
  const size_t n = static_cast<size_t>(spec_.width) * spec_.height;
  sl_.assign(n, StribeckCoeffs{});
  el_.assign(n, kNoData);
  rl_.assign(n, kNoData);
}

int GridMap::index(int x, int y) const {
  if (!in_bounds(x, y)) {
    throw std::out_of_range("GridMap: cell (" + std::to_string(x) + "," +
                            std::to_string(y) + ") out of bounds");
  }
  return y * spec_.width + x;
}

Eigen::Vector2d GridMap::cell_center(int x, int y) const {
  index(x, y);
  return spec_.origin + spec_.cell_size * Eigen::Vector2d(x + 0.5, y + 0.5);
}

Eigen::Vector2i GridMap::world_to_cell(const Eigen::Vector2d& xy) const {
  const Eigen::Vector2d local = (xy - spec_.origin) / spec_.cell_size;
  const int x = static_cast<int>(std::floor(local.x()));
  const int y = static_cast<int>(std::floor(local.y()));
  if (!in_bounds(x, y)) {
    throw std::out_of_range("GridMap: world position outside map");
  }
  return {x, y};
}

bool GridMap::contains(const Eigen::Vector2d& xy) const {
  const Eigen::Vector2d local = (xy - spec_.origin) / spec_.cell_size;
  const int x = static_cast<int>(std::floor(local.x()));
  const int y = static_cast<int>(std::floor(local.y()));
  return in_bounds(x, y);
}

namespace {

// Cell binning shared by the two layer builders.
std::map<int, std::vector<Eigen::Vector3d>> bin_points(
    std::span<const Eigen::Vector3d> points, const GridMap& map) {
  std::map<int, std::vector<Eigen::Vector3d>> cells;
  for (const auto& p : points) {
    if (!map.contains(p.head<2>())) continue;
    const Eigen::Vector2i c = map.world_to_cell(p.head<2>());
    cells[c.y() * map.width() + c.x()].push_back(p);
  }
  return cells;
}

}  // namespace

void elevation_from_points(std::span<const Eigen::Vector3d> points,
                           GridMap& map) {
  for (const auto& [idx, pts] : bin_points(points, map)) {
    double sum = 0.0;
    for (const auto& p : pts) sum += p.z();
    map.set_elevation(idx % map.width(), idx / map.width(),
                      sum / static_cast<double>(pts.size()));
  }
}

void roughness_from_points(std::span<const Eigen::Vector3d> points,
                           GridMap& map) {
  for (const auto& [idx, pts] : bin_points(points, map)) {
    const int x = idx % map.width();
    const int y = idx / map.width();
    if (pts.size() < 3) {
      map.set_roughness(x, y, kNoData);
      continue;
    }
    // Center the xy coordinates for a well-conditioned normal system; the
    // offset is absorbed by d and leaves residuals unchanged.
    Eigen::Vector2d mean_xy = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mean_xy += p.head<2>();
    mean_xy /= static_cast<double>(pts.size());
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (const auto& p : pts) {
      const Eigen::Vector3d row(p.x() - mean_xy.x(), p.y() - mean_xy.y(), 1.0);
      ata += row * row.transpose();
      atb += row * p.z();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ata);
    if (es.eigenvalues().minCoeff() <
        1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
      map.set_roughness(x, y, kNoData);  // collinear points, plane ambiguous
      continue;
    }
    const Eigen::Vector3d abd = ata.ldlt().solve(atb);
    double residual = 0.0;
    for (const auto& p : pts) {
      const double r = abd.x() * (p.x() - mean_xy.x()) +
                       abd.y() * (p.y() - mean_xy.y()) + abd.z() - p.z();
      residual += r * r;
    }
    map.set_roughness(x, y, residual);
  }
}

double slope_along(const GridMap& map, const Eigen::Vector2i& p,
                   const Eigen::Vector2i& q) {
  if (!map.has_elevation(p.x(), p.y()) || !map.has_elevation(q.x(), q.y())) {
    throw std::domain_error("slope_along: no elevation data");
  }
  const double dist =
      (map.cell_center(q.x(), q.y()) - map.cell_center(p.x(), p.y())).norm();
  if (!(dist > 0.0)) {
    throw std::domain_error("slope_along: identical cells");
  }
  return (map.elevation(q.x(), q.y()) - map.elevation(p.x(), p.y())) / dist;
}

namespace {

// Central-difference elevation gradient at a cell, one-sided at no-data or
// map edges; fully unknown axes count as flat.
Eigen::Vector2d elevation_gradient(const GridMap& map, int x, int y,
                                   int* warnings) {
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  const double center = map.elevation(x, y);
  for (int axis = 0; axis < 2; ++axis) {
    const int dx = axis == 0 ? 1 : 0;
    const int dy = axis == 0 ? 0 : 1;
    const bool has_lo = map.in_bounds(x - dx, y - dy) &&
                        map.has_elevation(x - dx, y - dy);
    const bool has_hi = map.in_bounds(x + dx, y + dy) &&
                        map.has_elevation(x + dx, y + dy);
    if (has_lo && has_hi) {
      grad[axis] = (map.elevation(x + dx, y + dy) -
                    map.elevation(x - dx, y - dy)) /
                   (2.0 * map.cell_size());
    } else if (has_hi && !is_no_data(center)) {
      grad[axis] = (map.elevation(x + dx, y + dy) - center) / map.cell_size();
      if (warnings != nullptr) ++(*warnings);
    } else if (has_lo && !is_no_data(center)) {
      grad[axis] = (center - map.elevation(x - dx, y - dy)) / map.cell_size();
      if (warnings != nullptr) ++(*warnings);
    } else {
      grad[axis] = 0.0;
      if (warnings != nullptr) ++(*warnings);
    }
  }
  return grad;
}

}  // namespace

double slope_perp(const GridMap& map, const Eigen::Vector2i& p,
                  const Eigen::Vector2i& q, int* warnings) {
  const Eigen::Vector2d grad =
      0.5 * (elevation_gradient(map, p.x(), p.y(), warnings) +
             elevation_gradient(map, q.x(), q.y(), warnings));
  Eigen::Vector2d along =
      (map.cell_center(q.x(), q.y()) - map.cell_center(p.x(), p.y()));
  const double n = along.norm();
  if (!(n > 0.0)) {
    throw std::domain_error("slope_perp: identical cells");
  }
  along /= n;
  const Eigen::Vector2d perp(-along.y(), along.x());
  return std::abs(grad.dot(perp));
}

const StribeckCoeffs& stribeck_at(const GridMap& map,
                                  const Eigen::Vector2d& xy) {
  const Eigen::Vector2i c = map.world_to_cell(xy);
  return map.stribeck(c.x(), c.y());
}

namespace {

void write_floats(const std::string& path, std::span<const float> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::vector<float> read_floats(const std::string& path, size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<float> data(expected);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expected * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != expected * sizeof(float)) {
    throw std::runtime_error("truncated layer file " + path);
  }
  return data;
}

}  // namespace

void save_map_bundle(const GridMap& map, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json header;
  header["width"] = map.width();
  header["height"] = map.height();
  header["cell_size"] = map.cell_size();
  header["origin"] = {map.spec().origin.x(), map.spec().origin.y()};
  header["layers"] = {
      {{"name", "SL"}, {"channels", 4}, {"file", "SL.bin"}},
      {{"name", "EL"}, {"channels", 1}, {"file", "EL.bin"}},
      {{"name", "RL"}, {"channels", 1}, {"file", "RL.bin"}}};
  std::ofstream hdr(dir + "/map.json");
  if (!hdr) throw std::runtime_error("cannot write map header in " + dir);
  hdr << header.dump(2) << "\n";

  const size_t n = static_cast<size_t>(map.width()) * map.height();
  std::vector<float> sl(n * 4);
  std::vector<float> el(n);
  std::vector<float> rl(n);
  for (size_t i = 0; i < n; ++i) {
    const StribeckCoeffs& s = map.stribeck_data()[i];
    sl[4 * i + 0] = static_cast<float>(s.mu_s);
    sl[4 * i + 1] = static_cast<float>(s.mu_d);
    sl[4 * i + 2] = static_cast<float>(s.v_s);
    sl[4 * i + 3] = static_cast<float>(s.mu_v);
    el[i] = static_cast<float>(map.elevation_data()[i]);
    rl[i] = static_cast<float>(map.roughness_data()[i]);
  }
  write_floats(dir + "/SL.bin", sl);
  write_floats(dir + "/EL.bin", el);
  write_floats(dir + "/RL.bin", rl);
}

GridMap load_map_bundle(const std::string& dir) {
  std::ifstream hdr(dir + "/map.json");
  if (!hdr) throw std::runtime_error("cannot read map header in " + dir);
  nlohmann::json header = nlohmann::json::parse(hdr);
  GridSpec spec;
  spec.width = header.at("width").get<int>();
  spec.height = header.at("height").get<int>();
  spec.cell_size = header.at("cell_size").get<double>();
  spec.origin = {header.at("origin").at(0).get<double>(),
                 header.at("origin").at(1).get<double>()};
  GridMap map(spec);
  const size_t n = static_cast<size_t>(spec.width) * spec.height;
  const auto sl = read_floats(dir + "/SL.bin", n * 4);
  const auto el = read_floats(dir + "/EL.bin", n);
  const auto rl = read_floats(dir + "/RL.bin", n);
  for (size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(i) % spec.width;
    const int y = static_cast<int>(i) / spec.width;
    map.set_stribeck(x, y,
                     StribeckCoeffs{sl[4 * i + 0], sl[4 * i + 1],
                                    sl[4 * i + 2], sl[4 * i + 3]});
    map.set_elevation(x, y, el[i]);
    map.set_roughness(x, y, rl[i]);
  }
  return map;
}

void export_map_csv(const GridMap& map, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto dump = [&](const std::string& name, auto&& value_at) {
    std::ofstream out(dir + "/" + name + ".csv");
    if (!out) throw std::runtime_error("cannot write " + name + ".csv");
    char buf[64];
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        std::snprintf(buf, sizeof(buf), "%.9g", value_at(x, y));
        out << (x == 0 ? "" : ",") << buf;
      }
      out << "\n";
    }
  };
  dump("EL", [&](int x, int y) { return map.elevation(x, y); });
  dump("RL", [&](int x, int y) { return map.roughness(x, y); });
  dump("mu_d", [&](int x, int y) { return map.stribeck(x, y).mu_d; });
  dump("mu_s", [&](int x, int y) { return map.stribeck(x, y).mu_s; });
}

}  // namespace offnav
