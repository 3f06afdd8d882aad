#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mwmp {

// Regular 2D grid of strictly positive traversal costs. Cell (0,0) has its
// center at origin + (res/2, res/2). Free space sits at cost_floor, obstacles
// and their inflation halo at the finite sentinel cost, and in between the
// cost decays exponentially with distance to the inflated region. Immutable
// after construction; safe to share read-only between planner instances.
class CostMap {
 public:
  CostMap(int width, int height, double resolution,
          const Eigen::Vector2d& origin, Eigen::ArrayXXd cost,
          std::vector<std::uint8_t> obstacle_mask, double cost_floor = 1.0,
          double sentinel = 50.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const Eigen::Vector2d& origin() const { return origin_; }
  double cost_floor() const { return cost_floor_; }
  double sentinel_cost() const { return sentinel_; }

  // Stored per-cell cost, x = column index, y = row index.
  double cell_cost(int ix, int iy) const { return cost_(iy, ix); }
  const Eigen::ArrayXXd& cells() const { return cost_; }

  bool is_obstacle(int ix, int iy) const {
    return obstacle_mask_[static_cast<std::size_t>(iy) * width_ + ix] != 0;
  }
  // Obstacle or inflated halo: cost at or above the sentinel.
  bool is_blocked(int ix, int iy) const {
    return cost_(iy, ix) >= sentinel_;
  }

  Eigen::Vector2d cell_center(int ix, int iy) const {
    return origin_ + resolution_ * Eigen::Vector2d(ix + 0.5, iy + 0.5);
  }
  // Cell containing the world point p (no bounds check).
  Eigen::Vector2i cell_of(const Eigen::Vector2d& p) const;
  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < width_ && iy >= 0 && iy < height_;
  }
  // True when p lies inside the map rectangle.
  bool contains(const Eigen::Vector2d& p) const;

  // Bilinear interpolation of the four surrounding cell costs; exact at cell
  // centers. Throws BoundsError outside the map rectangle.
  double cost_at(const Eigen::Vector2d& p) const;

  // Central-difference gradient of the interpolated cost (step = one cell),
  // pointing from low cost toward high cost. Throws BoundsError out of
  // bounds.
  Eigen::Vector2d repulsive_gradient(const Eigen::Vector2d& p) const;

 private:
  int width_, height_;
  double resolution_;
  Eigen::Vector2d origin_;
  Eigen::ArrayXXd cost_;  // (height, width)
  std::vector<std::uint8_t> obstacle_mask_;
  double cost_floor_, sentinel_;
};

// Builds a cost map from a boolean obstacle grid (row-major, width*height,
// nonzero = obstacle). Obstacle cells and every cell whose Chebyshev
// center-distance to an obstacle is strictly below inflation_radius get the
// sentinel cost; beyond that the cost decays as
//   cost_floor + (sentinel - cost_floor) * exp(-d / decay_length)
// with d the Euclidean center-distance to the nearest sentinel cell.
CostMap build_costmap(const std::vector<std::uint8_t>& obstacle_grid,
                      int width, int height, double resolution,
                      const Eigen::Vector2d& origin, double inflation_radius,
                      double decay_length, double cost_floor = 1.0,
                      double sentinel = 50.0);

// Plain-text grid format: "width height resolution origin_x origin_y" header
// followed by height rows of width values, row y = 0 first.
void write_grid(std::ostream& os, const Eigen::ArrayXXd& cells,
                double resolution, const Eigen::Vector2d& origin);
Eigen::ArrayXXd read_grid(std::istream& is, double& resolution,
                          Eigen::Vector2d& origin);

void save_costmap(const CostMap& map, const std::string& path);
// Loads a cost grid; the obstacle mask is reconstructed as cost >= sentinel.
CostMap load_costmap(const std::string& path, double cost_floor = 1.0,
                     double sentinel = 50.0);

// PGM (P2/P5) import: pixel value 0 marks an obstacle.
std::vector<std::uint8_t> load_pgm_obstacles(const std::string& path,
                                             int& width, int& height);

}  // namespace mwmp
