#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "mwmp/costmap.hpp"

namespace mwmp {

// Cost-to-go field produced by the fast marching wave expansion. Immutable
// after expansion; unreachable cells carry +inf. freeze_order records the
// linear cell indices (iy * width + ix) in the order they were accepted.
struct CostToGoField {
  Eigen::ArrayXXd upsilon;  // (height, width), +inf where unreachable
  Eigen::Vector2i goal_cell;
  Eigen::Vector2d goal_position;
  double resolution = 0.0;
  Eigen::Vector2d origin{0.0, 0.0};
  std::vector<int> freeze_order;

  int width() const { return static_cast<int>(upsilon.cols()); }
  int height() const { return static_cast<int>(upsilon.rows()); }
  double value(int ix, int iy) const { return upsilon(iy, ix); }
  // Bilinear interpolation over finite cells (weights renormalized); +inf if
  // the whole stencil is unreachable.
  double value_at(const Eigen::Vector2d& p) const;
  // Bilinear blend of per-cell central-difference gradients.
  Eigen::Vector2d gradient_at(const Eigen::Vector2d& p) const;
};

// Planar path with optional yaw / timestamp / arc-length enrichment.
struct Path {
  std::vector<Eigen::Vector2d> waypoints;
  std::vector<double> yaw;        // rad, per waypoint (after enrich_path)
  std::vector<double> timestamp;  // s, strictly increasing from 0
  std::vector<double> arc_length; // m, cumulative

  std::size_t size() const { return waypoints.size(); }
  bool enriched() const { return timestamp.size() == waypoints.size(); }
  double length() const {
    return arc_length.empty() ? 0.0 : arc_length.back();
  }
};

// Solves the first-order upwind discretization of ||grad Y|| = cost with
// Y(goal) = 0, expanding from the goal over every reachable cell. Cells at or
// above the sentinel cost are never expanded. Throws InvalidGoalError when
// the goal lies outside the map or inside the inflated region.
CostToGoField expand_wave(const CostMap& map, const Eigen::Vector2d& goal);

// Gradient descent on the interpolated field from start toward the goal with
// the given step length (m); the goal is appended once within one cell.
// Throws UnreachableError when Y(start) is infinite and ExtractionError on
// descent stagnation.
Path extract_path(const CostToGoField& field, const CostMap& map,
                  const Eigen::Vector2d& start, double step);

// Fills yaw (segment heading, last waypoint copies the previous) and
// timestamps proportional to arc length over [0, t_total].
Path enrich_path(Path path, double t_total);

// Helper default for the horizon: path length / nominal speed.
double suggested_horizon(const Path& path, double nominal_speed);

// Samples the enriched path at times n * dt, n = 0..N, interpolating position
// linearly and yaw along the shortest arc. Requires N * dt to match the final
// timestamp. Rows of the result are (x, y, yaw).
std::vector<Eigen::Vector3d> resample_to_horizon(const Path& path, int steps,
                                                 double dt);

void save_field(const CostToGoField& field, const std::string& path);
// CSV dump: header "t,x,y,yaw", one row per waypoint.
void save_path_csv(const Path& path, const std::string& file);

}  // namespace mwmp
