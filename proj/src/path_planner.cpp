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

#include "offnav/path_planner.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace offnav {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMuFloor = 1e-9;
}  // namespace

const char* orient_name(Orient8 o) {
  static const char* names[8] = {"E", "NE", "N", "NW", "W", "SW", "S", "SE"};
  return names[static_cast<int>(o) & 7];
}

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::L: return "L";
    case Motion::D: return "D";
    case Motion::R: return "R";
  }
  return "?";
}

std::vector<PlanVertex> successors(const PlanVertex& v, int width,
                                   int height) {
  std::vector<PlanVertex> out;
  out.reserve(3);
  const int o = static_cast<int>(v.o);
  const struct {
    int heading;
    Motion motion;
  } moves[3] = {{(o + 1) & 7, Motion::L},
                {o, Motion::D},
                {(o + 7) & 7, Motion::R}};
  for (const auto& mv : moves) {
    PlanVertex next;
    next.x = v.x + kOrientDx[mv.heading];
    next.y = v.y + kOrientDy[mv.heading];
    next.o = static_cast<Orient8>(mv.heading);
    next.m = mv.motion;
    if (next.x >= 0 && next.x < width && next.y >= 0 && next.y < height) {
      out.push_back(next);
    }
  }
  return out;
}

namespace {

double steering_eta(Motion prev, Motion cur) {
  if ((prev == Motion::L && cur == Motion::L) ||
      (prev == Motion::R && cur == Motion::R)) {
    return 4.0;
  }
  if (prev == Motion::D && cur != Motion::D) return 1.0;
  if ((prev == Motion::L && cur == Motion::R) ||
      (prev == Motion::R && cur == Motion::L)) {
    return 0.0;
  }
  return 0.0;  // cur == D implies no heading change; cost gated on that
}

StribeckCoeffs average_coeffs(const StribeckCoeffs& a,
                              const StribeckCoeffs& b) {
  return StribeckCoeffs{0.5 * (a.mu_s + b.mu_s), 0.5 * (a.mu_d + b.mu_d),
                        0.5 * (a.v_s + b.v_s), 0.5 * (a.mu_v + b.mu_v)};
}

}  // namespace

double edge_cost(const PlanVertex& p, const PlanVertex& q, const GridMap& map,
                 const PlannerParams& params) {
  const int dx = q.x - p.x;
  const int dy = q.y - p.y;
  const double dist_cells = (dx != 0 && dy != 0) ? std::numbers::sqrt2 : 1.0;

  // Roughness gate first: no-data or above-threshold cells are blocked.
  const double rough_p = map.roughness(p.x, p.y);
  const double rough_q = map.roughness(q.x, q.y);
  if (is_no_data(rough_p) || is_no_data(rough_q) || rough_p >= params.sigma_th ||
      rough_q >= params.sigma_th) {
    return kInf;
  }
  if (!map.has_elevation(p.x, p.y) || !map.has_elevation(q.x, q.y)) {
    return kInf;
  }

  double mu_pq;
  double mu_v_pq;
  if (params.const_mu.has_value()) {
    mu_pq = *params.const_mu;
    mu_v_pq = 0.0;
  } else {
    const StribeckCoeffs avg =
        average_coeffs(map.stribeck(p.x, p.y), map.stribeck(q.x, q.y));
    mu_pq = stribeck_mu_unchecked(params.v_rel_plan, avg);
    mu_v_pq = avg.mu_v;
  }
  if (!(mu_pq > kMuFloor)) return kInf;

  const double d_f = 1.0 / mu_pq + params.lambda_v * mu_v_pq;

  const double grade_along = slope_along(map, {p.x, p.y}, {q.x, q.y});
  const double grade_perp = slope_perp(map, {p.x, p.y}, {q.x, q.y});
  const double d_s = std::exp(params.lambda_s * grade_along / mu_pq) +
                     std::exp(params.lambda_s * grade_perp / mu_pq);

  const double d_r = 0.5 * (rough_p + rough_q);

  double d_t = 0.0;
  if (p.o != q.o) {
    d_t = steering_eta(p.m, q.m) / mu_pq;
  }

  return params.w_d * dist_cells + params.w_f * d_f + params.w_s * d_s +
         params.w_r * d_r + params.w_t * d_t;
}

double heuristic(const PlanVertex& v, const Eigen::Vector2i& goal,
                 const PlannerParams& params) {
  const double dx = goal.x() - v.x;
  const double dy = goal.y() - v.y;
  return params.w_d * std::sqrt(dx * dx + dy * dy);
}

namespace {

struct OpenEntry {
  double f;
  double h;
  long seq;
  int state;
};

struct OpenCompare {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.seq > b.seq;
  }
};

inline int state_index(int x, int y, int o, int m, int width) {
  return ((y * width + x) * 8 + o) * 3 + m;
}

}  // namespace

PlanResult plan(const Eigen::Vector2i& start, const Eigen::Vector2i& goal,
                const GridMap& map, const PlannerParams& params) {
  const int width = map.width();
  const int height = map.height();
  if (start.x() < 0 || start.x() >= width || start.y() < 0 ||
      start.y() >= height || goal.x() < 0 || goal.x() >= width ||
      goal.y() < 0 || goal.y() >= height) {
    throw std::out_of_range("plan: start or goal outside the map");
  }

  PlanResult result;
  if (start == goal) {
    result.status = PlanResult::Status::kFound;
    result.path.vertices = {
        PlanVertex{start.x(), start.y(), Orient8::E, Motion::D}};
    result.path.total_cost = 0.0;
    return result;
  }

  const size_t n_states = static_cast<size_t>(width) * height * 8 * 3;
  std::vector<double> g(n_states, kInf);
  std::vector<int> parent(n_states, -1);
  std::vector<bool> closed(n_states, false);
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, OpenCompare> open;
  long seq = 0;

  for (int o = 0; o < 8; ++o) {
    const PlanVertex v{start.x(), start.y(), static_cast<Orient8>(o),
                       Motion::D};
    const int si = state_index(v.x, v.y, o, static_cast<int>(v.m), width);
    g[si] = 0.0;
    open.push({heuristic(v, goal, params), heuristic(v, goal, params), seq++,
               si});
  }

  auto unpack = [&](int si) {
    PlanVertex v;
    v.m = static_cast<Motion>(si % 3);
    si /= 3;
    v.o = static_cast<Orient8>(si % 8);
    si /= 8;
    v.x = si % width;
    v.y = si / width;
    return v;
  };

  int goal_state = -1;
  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    if (closed[top.state]) continue;
    closed[top.state] = true;
    ++result.expanded_nodes;
    const PlanVertex v = unpack(top.state);
    if (v.x == goal.x() && v.y == goal.y()) {
      goal_state = top.state;
      break;
    }
    for (const PlanVertex& nb : successors(v, width, height)) {
      const double cost = edge_cost(v, nb, map, params);
      if (!(cost < kInf)) continue;
      const int ni = state_index(nb.x, nb.y, static_cast<int>(nb.o),
                                 static_cast<int>(nb.m), width);
      const double tentative = g[top.state] + cost;
      if (tentative < g[ni]) {
        g[ni] = tentative;
        parent[ni] = top.state;
        const double h = heuristic(nb, goal, params);
        open.push({tentative + h, h, seq++, ni});
      }
    }
  }

  if (goal_state < 0) {
    result.status = PlanResult::Status::kUnreachable;
    return result;
  }
  result.status = PlanResult::Status::kFound;
  result.path.total_cost = g[goal_state];
  std::vector<PlanVertex> reversed;
  for (int si = goal_state; si >= 0; si = parent[si]) {
    reversed.push_back(unpack(si));
  }
  result.path.vertices.assign(reversed.rbegin(), reversed.rend());
  return result;
}

namespace {

Eigen::Vector2d catmull_rom(const Eigen::Vector2d& p0,
                            const Eigen::Vector2d& p1,
                            const Eigen::Vector2d& p2,
                            const Eigen::Vector2d& p3, double u) {
  // Centripetal parameterization (alpha = 0.5), Barry-Goldman evaluation.
  auto knot = [](double t, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return t + std::sqrt((b - a).norm());
  };
  const double t0 = 0.0;
  const double t1 = knot(t0, p0, p1);
  const double t2 = knot(t1, p1, p2);
  const double t3 = knot(t2, p2, p3);
  const double t = t1 + u * (t2 - t1);
  auto lerp = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                  double ta, double tb) -> Eigen::Vector2d {
    if (tb - ta < 1e-12) return a;
    const double w = (t - ta) / (tb - ta);
    return (1.0 - w) * a + w * b;
  };
  const Eigen::Vector2d a1 = lerp(p0, p1, t0, t1);
  const Eigen::Vector2d a2 = lerp(p1, p2, t1, t2);
  const Eigen::Vector2d a3 = lerp(p2, p3, t2, t3);
  const Eigen::Vector2d b1 = lerp(a1, a2, t0, t2);
  const Eigen::Vector2d b2 = lerp(a2, a3, t1, t3);
  return lerp(b1, b2, t1, t2);
}

}  // namespace

std::vector<Eigen::Vector2d> smooth(const Path& path, const GridMap& map,
                                    const PlannerParams& params,
                                    double spacing) {
  std::vector<Eigen::Vector2d> centers;
  centers.reserve(path.vertices.size());
  for (const auto& v : path.vertices) {
    centers.push_back(map.cell_center(v.x, v.y));
  }
  if (centers.size() < 2) return centers;

  // Dense spline samples with duplicated endpoints as phantom knots.
  std::vector<Eigen::Vector2d> dense;
  const int subdiv = 16;
  for (size_t i = 0; i + 1 < centers.size(); ++i) {
    const Eigen::Vector2d& p0 = centers[i == 0 ? 0 : i - 1];
    const Eigen::Vector2d& p1 = centers[i];
    const Eigen::Vector2d& p2 = centers[i + 1];
    const Eigen::Vector2d& p3 =
        centers[std::min(i + 2, centers.size() - 1)];
    for (int k = 0; k < subdiv; ++k) {
      dense.push_back(catmull_rom(p0, p1, p2, p3,
                                  static_cast<double>(k) / subdiv));
    }
  }
  dense.push_back(centers.back());

  // Arc-length resampling at the requested spacing; endpoints exact.
  std::vector<Eigen::Vector2d> samples;
  samples.push_back(centers.front());
  double carried = 0.0;
  for (size_t i = 0; i + 1 < dense.size(); ++i) {
    const Eigen::Vector2d seg = dense[i + 1] - dense[i];
    double seg_len = seg.norm();
    if (seg_len < 1e-12) continue;
    double along = -carried;
    while (along + spacing <= seg_len) {
      along += spacing;
      samples.push_back(dense[i] + (along / seg_len) * seg);
    }
    carried = seg_len - along;
  }
  if ((samples.back() - centers.back()).norm() < 0.25 * spacing &&
      samples.size() > 1) {
    samples.back() = centers.back();
  } else {
    samples.push_back(centers.back());
  }

  // Reject smoothing that leaves the map or crosses blocked cells.
  for (const auto& s : samples) {
    if (!map.contains(s)) return centers;
    const Eigen::Vector2i c = map.world_to_cell(s);
    const double rough = map.roughness(c.x(), c.y());
    if (is_no_data(rough) || rough >= params.sigma_th) return centers;
  }
  return samples;
}

}  // namespace offnav
