#include "mwmp/fmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "mwmp/errors.hpp"
#include "mwmp/geometry.hpp"

namespace mwmp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HeapEntry {
  double value;
  int index;
  // Min-heap on value, ties broken by linear cell index.
  bool operator>(const HeapEntry& o) const {
    if (value != o.value) return value > o.value;
    return index > o.index;
  }
};

// Godunov two-axis update: solve (Y-a)^2 + (Y-b)^2 = f^2 for the upwind
// neighbor minima a, b (either may be +inf) and f = cost * h.
double eikonal_update(double a, double b, double f) {
  if (a > b) std::swap(a, b);
  if (std::isinf(a)) return kInf;
  if (b - a >= f) return a + f;
  return 0.5 * (a + b + std::sqrt(2.0 * f * f - (b - a) * (b - a)));
}

}  // namespace

double CostToGoField::value_at(const Eigen::Vector2d& p) const {
  const int w = width(), h = height();
  const double u = (p.x() - origin.x()) / resolution - 0.5;
  const double v = (p.y() - origin.y()) / resolution - 0.5;
  const double uc = std::clamp(u, 0.0, static_cast<double>(w - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(uc)), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(vc)), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = std::clamp(uc - x0, 0.0, 1.0);
  const double fy = std::clamp(vc - y0, 0.0, 1.0);
  const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                         fx * fy};
  const double val[4] = {upsilon(y0, x0), upsilon(y0, x1), upsilon(y1, x0),
                         upsilon(y1, x1)};
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (std::isfinite(val[i])) {
      acc += wgt[i] * val[i];
      wsum += wgt[i];
    }
  }
  if (wsum <= 0.0) return kInf;
  return acc / wsum;
}

Eigen::Vector2d CostToGoField::gradient_at(const Eigen::Vector2d& p) const {
  const int w = width(), h = height();
  auto cell_gradient = [&](int ix, int iy) -> Eigen::Vector2d {
    const double c = upsilon(iy, ix);
    if (!std::isfinite(c)) return Eigen::Vector2d::Zero();
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    const int xm = ix - 1, xp = ix + 1, ym = iy - 1, yp = iy + 1;
    const double vxm = xm >= 0 ? upsilon(iy, xm) : kInf;
    const double vxp = xp < w ? upsilon(iy, xp) : kInf;
    const double vym = ym >= 0 ? upsilon(ym, ix) : kInf;
    const double vyp = yp < h ? upsilon(yp, ix) : kInf;
    if (std::isfinite(vxm) && std::isfinite(vxp))
      g.x() = (vxp - vxm) / (2.0 * resolution);
    else if (std::isfinite(vxp))
      g.x() = (vxp - c) / resolution;
    else if (std::isfinite(vxm))
      g.x() = (c - vxm) / resolution;
    if (std::isfinite(vym) && std::isfinite(vyp))
      g.y() = (vyp - vym) / (2.0 * resolution);
    else if (std::isfinite(vyp))
      g.y() = (vyp - c) / resolution;
    else if (std::isfinite(vym))
      g.y() = (c - vym) / resolution;
    return g;
  };

  const double u = (p.x() - origin.x()) / resolution - 0.5;
  const double v = (p.y() - origin.y()) / resolution - 0.5;
  const double uc = std::clamp(u, 0.0, static_cast<double>(w - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(uc)), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(vc)), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = std::clamp(uc - x0, 0.0, 1.0);
  const double fy = std::clamp(vc - y0, 0.0, 1.0);
  const int cx[4] = {x0, x1, x0, x1};
  const int cy[4] = {y0, y0, y1, y1};
  const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                         fx * fy};
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  double wsum = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(upsilon(cy[i], cx[i]))) continue;
    g += wgt[i] * cell_gradient(cx[i], cy[i]);
    wsum += wgt[i];
  }
  if (wsum > 0.0) g /= wsum;
  return g;
}

CostToGoField expand_wave(const CostMap& map, const Eigen::Vector2d& goal) {
  if (!map.contains(goal))
    throw InvalidGoalError("expand_wave: goal outside the map");
  const Eigen::Vector2i gc = map.cell_of(goal);
  const int gx = std::clamp(gc.x(), 0, map.width() - 1);
  const int gy = std::clamp(gc.y(), 0, map.height() - 1);
  if (map.is_blocked(gx, gy))
    throw InvalidGoalError("expand_wave: goal inside an inflated obstacle");

  const int w = map.width(), h = map.height();
  const double res = map.resolution();
  CostToGoField field;
  field.upsilon = Eigen::ArrayXXd::Constant(h, w, kInf);
  field.goal_cell = {gx, gy};
  field.goal_position = map.cell_center(gx, gy);
  field.resolution = res;
  field.origin = map.origin();
  field.freeze_order.reserve(static_cast<std::size_t>(w) * h);

  enum class State : std::uint8_t { far, band, frozen };
  std::vector<State> state(static_cast<std::size_t>(w) * h, State::far);
  Eigen::ArrayXXd tentative = Eigen::ArrayXXd::Constant(h, w, kInf);

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  tentative(gy, gx) = 0.0;
  state[static_cast<std::size_t>(gy) * w + gx] = State::band;
  heap.push({0.0, gy * w + gx});

  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};

  while (!heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const int ix = top.index % w, iy = top.index / w;
    if (state[top.index] == State::frozen) continue;  // lazy deletion
    if (top.value != tentative(iy, ix)) continue;
    state[top.index] = State::frozen;
    field.upsilon(iy, ix) = top.value;
    field.freeze_order.push_back(top.index);

    for (int k = 0; k < 4; ++k) {
      const int nx = ix + dx[k], ny = iy + dy[k];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
      if (state[ni] == State::frozen) continue;
      if (map.is_blocked(nx, ny)) continue;
      // Upwind minima over frozen neighbors on each axis.
      auto frozen_value = [&](int qx, int qy) -> double {
        if (qx < 0 || qx >= w || qy < 0 || qy >= h) return kInf;
        if (state[static_cast<std::size_t>(qy) * w + qx] != State::frozen)
          return kInf;
        return field.upsilon(qy, qx);
      };
      const double a =
          std::min(frozen_value(nx - 1, ny), frozen_value(nx + 1, ny));
      const double b =
          std::min(frozen_value(nx, ny - 1), frozen_value(nx, ny + 1));
      const double cand = eikonal_update(a, b, map.cell_cost(nx, ny) * res);
      if (cand < tentative(ny, nx)) {
        tentative(ny, nx) = cand;
        state[ni] = State::band;
        heap.push({cand, ny * w + nx});
      }
    }
  }
  return field;
}

Path extract_path(const CostToGoField& field, const CostMap& map,
                  const Eigen::Vector2d& start, double step) {
  if (step <= 0.0) throw ParameterError("extract_path: step must be positive");
  if (!map.contains(start))
    throw BoundsError("extract_path: start outside the map");
  const Eigen::Vector2i sc = map.cell_of(start);
  const int sx = std::clamp(sc.x(), 0, map.width() - 1);
  const int sy = std::clamp(sc.y(), 0, map.height() - 1);
  if (!std::isfinite(field.value(sx, sy)))
    throw UnreachableError("extract_path: start not reachable from the goal");

  const Eigen::Vector2d goal = field.goal_position;
  const double goal_radius = map.resolution();
  Path path;
  path.waypoints.push_back(start);
  if ((start - goal).norm() <= 1e-12) return path;

  const Eigen::Vector2d lo = map.origin();
  const Eigen::Vector2d hi =
      map.origin() +
      map.resolution() * Eigen::Vector2d(map.width(), map.height());
  const long max_steps =
      2L * map.width() * map.height() + 1000;

  Eigen::Vector2d p = start;
  for (long i = 0; i < max_steps; ++i) {
    if ((p - goal).norm() <= goal_radius) {
      if ((path.waypoints.back() - goal).norm() > 1e-12)
        path.waypoints.push_back(goal);
      return path;
    }
    const Eigen::Vector2d g = field.gradient_at(p);
    const double gn = g.norm();
    if (gn < 1e-9)
      throw ExtractionError("extract_path: descent stagnated away from goal");
    p -= (step / gn) * g;
    p.x() = std::clamp(p.x(), lo.x() + 1e-9, hi.x() - 1e-9);
    p.y() = std::clamp(p.y(), lo.y() + 1e-9, hi.y() - 1e-9);
    path.waypoints.push_back(p);
  }
  throw ExtractionError("extract_path: descent exceeded the step budget");
}

Path enrich_path(Path path, double t_total) {
  const std::size_t n = path.waypoints.size();
  if (n == 0) throw ParameterError("enrich_path: empty path");
  path.yaw.assign(n, 0.0);
  path.timestamp.assign(n, 0.0);
  path.arc_length.assign(n, 0.0);
  if (n == 1) return path;
  if (t_total <= 0.0)
    throw ParameterError("enrich_path: horizon must be positive");

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Eigen::Vector2d d = path.waypoints[i + 1] - path.waypoints[i];
    path.yaw[i] = std::atan2(d.y(), d.x());
    path.arc_length[i + 1] = path.arc_length[i] + d.norm();
  }
  path.yaw[n - 1] = path.yaw[n - 2];

  const double total = path.arc_length.back();
  if (total <= 0.0) {
    // Coincident waypoints: spread timestamps uniformly to keep them strict.
    for (std::size_t i = 0; i < n; ++i)
      path.timestamp[i] = t_total * static_cast<double>(i) / (n - 1);
    return path;
  }
  for (std::size_t i = 0; i < n; ++i)
    path.timestamp[i] = t_total * path.arc_length[i] / total;
  // Guard strict monotonicity against zero-length segments.
  for (std::size_t i = 1; i < n; ++i)
    if (path.timestamp[i] <= path.timestamp[i - 1])
      path.timestamp[i] =
          std::nextafter(path.timestamp[i - 1], std::numeric_limits<double>::max());
  return path;
}

double suggested_horizon(const Path& path, double nominal_speed) {
  if (nominal_speed <= 0.0)
    throw ParameterError("suggested_horizon: speed must be positive");
  double length = 0.0;
  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i)
    length += (path.waypoints[i + 1] - path.waypoints[i]).norm();
  return length / nominal_speed;
}

std::vector<Eigen::Vector3d> resample_to_horizon(const Path& path, int steps,
                                                 double dt) {
  if (!path.enriched() || path.size() == 0)
    throw ParameterError("resample_to_horizon: path not enriched");
  if (steps <= 0 || dt <= 0.0)
    throw ParameterError("resample_to_horizon: bad horizon parameters");
  const double t_end = path.timestamp.back();
  if (std::abs(steps * dt - t_end) > 1e-6 * std::max(1.0, t_end))
    throw ParameterError("resample_to_horizon: N * dt does not match t_N");

  std::vector<Eigen::Vector3d> out(static_cast<std::size_t>(steps) + 1);
  std::size_t seg = 0;
  for (int n = 0; n <= steps; ++n) {
    const double t = std::min(n * dt, t_end);
    while (seg + 2 < path.size() && path.timestamp[seg + 1] < t) ++seg;
    if (path.size() == 1) {
      out[n] = {path.waypoints[0].x(), path.waypoints[0].y(), path.yaw[0]};
      continue;
    }
    const double t0 = path.timestamp[seg], t1 = path.timestamp[seg + 1];
    const double f = t1 > t0 ? std::clamp((t - t0) / (t1 - t0), 0.0, 1.0) : 0.0;
    const Eigen::Vector2d p =
        (1.0 - f) * path.waypoints[seg] + f * path.waypoints[seg + 1];
    const double yaw = interpolate_angle(path.yaw[seg], path.yaw[seg + 1], f);
    out[n] = {p.x(), p.y(), yaw};
  }
  return out;
}

void save_field(const CostToGoField& field, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_field: cannot open " + path);
  write_grid(os, field.upsilon, field.resolution, field.origin);
}

void save_path_csv(const Path& path, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw IoError("save_path_csv: cannot open " + file);
  os.precision(12);
  os << "t,x,y,yaw\n";
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double t = i < path.timestamp.size() ? path.timestamp[i] : 0.0;
    const double yaw = i < path.yaw.size() ? path.yaw[i] : 0.0;
    os << t << ',' << path.waypoints[i].x() << ',' << path.waypoints[i].y()
       << ',' << yaw << '\n';
  }
}

}  // namespace mwmp
