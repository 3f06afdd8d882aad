#pragma once

// Independent 8-connected Dijkstra over a cost map, used as the oracle for
// the fast-marching field. Edge weight is the trapezoid approximation of the
// line integral: segment length times the mean of the endpoint costs.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <vector>

#include "mwmp/costmap.hpp"

namespace mwmp::oracle {

inline Eigen::ArrayXXd dijkstra8_field(const CostMap& map,
                                       const Eigen::Vector2i& goal) {
  const int w = map.width(), h = map.height();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::ArrayXXd dist = Eigen::ArrayXXd::Constant(h, w, inf);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist(goal.y(), goal.x()) = 0.0;
  heap.push({0.0, goal.y() * w + goal.x()});
  const int dx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!heap.empty()) {
    auto [d, idx] = heap.top();
    heap.pop();
    const int x = idx % w, y = idx / w;
    if (d > dist(y, x)) continue;
    for (int k = 0; k < 8; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      if (map.is_blocked(nx, ny)) continue;
      const double len =
          map.resolution() * (k < 4 ? 1.0 : std::numbers::sqrt2);
      const double weight =
          0.5 * (map.cell_cost(x, y) + map.cell_cost(nx, ny)) * len;
      if (d + weight < dist(ny, nx)) {
        dist(ny, nx) = d + weight;
        heap.push({d + weight, ny * w + nx});
      }
    }
  }
  return dist;
}

}  // namespace mwmp::oracle
