#include "mwmp/costmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mwmp/errors.hpp"

namespace mwmp {

namespace {

// 1D squared Euclidean distance transform (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  d.assign(n, 0.0);
  std::vector<int> v(n, 0);
  std::vector<double> z(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

// Squared Euclidean cell distance to the nearest set cell of mask.
Eigen::ArrayXXd distance_transform(const Eigen::Array<bool, Eigen::Dynamic,
                                                       Eigen::Dynamic>& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  // Finite stand-in for "no site in this scan line"; the parabola arithmetic
  // does not tolerate infinities. Any value above the largest possible
  // squared distance works.
  const double far = static_cast<double>(h) * h + static_cast<double>(w) * w + 1.0;
  Eigen::ArrayXXd dist(h, w);
  std::vector<double> col(h), out(h), row(w), out_row(w);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = mask(y, x) ? 0.0 : far;
    edt_1d(col, out);
    for (int y = 0; y < h; ++y) dist(y, x) = out[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = dist(y, x);
    edt_1d(row, out_row);
    for (int x = 0; x < w; ++x) dist(y, x) = out_row[x];
  }
  return dist;
}

}  // namespace

CostMap::CostMap(int width, int height, double resolution,
                 const Eigen::Vector2d& origin, Eigen::ArrayXXd cost,
                 std::vector<std::uint8_t> obstacle_mask, double cost_floor,
                 double sentinel)
    : width_(width),
      height_(height),
      resolution_(resolution),
      origin_(origin),
      cost_(std::move(cost)),
      obstacle_mask_(std::move(obstacle_mask)),
      cost_floor_(cost_floor),
      sentinel_(sentinel) {
  if (width_ <= 0 || height_ <= 0) throw ParameterError("costmap: empty grid");
  if (resolution_ <= 0.0)
    throw ParameterError("costmap: resolution must be positive");
  if (cost_floor_ <= 0.0)
    throw ParameterError("costmap: cost floor must be positive");
  if (cost_.rows() != height_ || cost_.cols() != width_)
    throw ParameterError("costmap: cost grid shape mismatch");
  if (obstacle_mask_.size() != static_cast<std::size_t>(width_) * height_)
    throw ParameterError("costmap: obstacle mask size mismatch");
}

Eigen::Vector2i CostMap::cell_of(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d rel = (p - origin_) / resolution_;
  return {static_cast<int>(std::floor(rel.x())),
          static_cast<int>(std::floor(rel.y()))};
}

bool CostMap::contains(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d rel = p - origin_;
  return rel.x() >= 0.0 && rel.y() >= 0.0 &&
         rel.x() <= width_ * resolution_ && rel.y() <= height_ * resolution_;
}

double CostMap::cost_at(const Eigen::Vector2d& p) const {
  if (!contains(p)) {
    std::ostringstream os;
    os << "costmap: query (" << p.x() << ", " << p.y() << ") out of bounds";
    throw BoundsError(os.str());
  }
  // Continuous cell coordinates with (0,0) at the center of cell (0,0);
  // clamped so border queries interpolate within the outermost centers.
  const double u = (p.x() - origin_.x()) / resolution_ - 0.5;
  const double v = (p.y() - origin_.y()) / resolution_ - 0.5;
  const double uc = std::clamp(u, 0.0, static_cast<double>(width_ - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(height_ - 1));
  const int x0 = std::min(static_cast<int>(std::floor(uc)), width_ - 2 >= 0
                                                                ? width_ - 2
                                                                : 0);
  const int y0 = std::min(static_cast<int>(std::floor(vc)),
                          height_ - 2 >= 0 ? height_ - 2 : 0);
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double fx = std::clamp(uc - x0, 0.0, 1.0);
  const double fy = std::clamp(vc - y0, 0.0, 1.0);
  const double c00 = cost_(y0, x0), c10 = cost_(y0, x1);
  const double c01 = cost_(y1, x0), c11 = cost_(y1, x1);
  return (1 - fy) * ((1 - fx) * c00 + fx * c10) +
         fy * ((1 - fx) * c01 + fx * c11);
}

Eigen::Vector2d CostMap::repulsive_gradient(const Eigen::Vector2d& p) const {
  if (!contains(p)) {
    std::ostringstream os;
    os << "costmap: gradient query (" << p.x() << ", " << p.y()
       << ") out of bounds";
    throw BoundsError(os.str());
  }
  const double h = resolution_;
  const Eigen::Vector2d lo = origin_;
  const Eigen::Vector2d hi =
      origin_ + resolution_ * Eigen::Vector2d(width_, height_);
  Eigen::Vector2d g;
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::Vector2d a = p, b = p;
    a(axis) = std::max(p(axis) - h, lo(axis));
    b(axis) = std::min(p(axis) + h, hi(axis));
    const double span = b(axis) - a(axis);
    g(axis) = span > 0.0 ? (cost_at(b) - cost_at(a)) / span : 0.0;
  }
  return g;
}

CostMap build_costmap(const std::vector<std::uint8_t>& obstacle_grid,
                      int width, int height, double resolution,
                      const Eigen::Vector2d& origin, double inflation_radius,
                      double decay_length, double cost_floor,
                      double sentinel) {
  if (width <= 0 || height <= 0)
    throw ParameterError("build_costmap: empty grid");
  if (resolution <= 0.0)
    throw ParameterError("build_costmap: resolution must be positive");
  if (decay_length <= 0.0)
    throw ParameterError("build_costmap: decay length must be positive");
  if (inflation_radius < 0.0)
    throw ParameterError("build_costmap: inflation radius must be >= 0");
  if (obstacle_grid.size() != static_cast<std::size_t>(width) * height)
    throw ParameterError("build_costmap: obstacle grid size mismatch");

  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> obstacle(height, width);
  bool all_obstacle = true;
  bool any_obstacle = false;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const bool o = obstacle_grid[static_cast<std::size_t>(y) * width + x];
      obstacle(y, x) = o;
      all_obstacle &= o;
      any_obstacle |= o;
    }
  if (all_obstacle)
    throw DegenerateMapError("build_costmap: grid is entirely obstacles");

  Eigen::ArrayXXd cost(height, width);
  if (!any_obstacle) {
    cost.setConstant(cost_floor);
    return CostMap(width, height, resolution, origin, std::move(cost),
                   obstacle_grid, cost_floor, sentinel);
  }

  // Chebyshev dilation: sentinel wherever the center distance to an obstacle
  // is strictly below inflation_radius.
  const int r_cells = std::max(
      0, static_cast<int>(std::ceil(inflation_radius / resolution - 1e-9)) -
             1);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> inflated(height, width);
  inflated.setConstant(false);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (!obstacle(y, x)) continue;
      const int y0 = std::max(0, y - r_cells), y1 = std::min(height - 1, y + r_cells);
      const int x0 = std::max(0, x - r_cells), x1 = std::min(width - 1, x + r_cells);
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) inflated(yy, xx) = true;
    }

  const Eigen::ArrayXXd d2 = distance_transform(inflated);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (inflated(y, x)) {
        cost(y, x) = sentinel;
      } else {
        const double d = std::sqrt(d2(y, x)) * resolution;
        cost(y, x) = cost_floor + (sentinel - cost_floor) *
                                      std::exp(-d / decay_length);
      }
    }
  return CostMap(width, height, resolution, origin, std::move(cost),
                 obstacle_grid, cost_floor, sentinel);
}

void write_grid(std::ostream& os, const Eigen::ArrayXXd& cells,
                double resolution, const Eigen::Vector2d& origin) {
  os.precision(17);
  os << cells.cols() << ' ' << cells.rows() << ' ' << resolution << ' '
     << origin.x() << ' ' << origin.y() << '\n';
  for (Eigen::Index y = 0; y < cells.rows(); ++y) {
    for (Eigen::Index x = 0; x < cells.cols(); ++x) {
      if (x) os << ' ';
      os << cells(y, x);
    }
    os << '\n';
  }
}

Eigen::ArrayXXd read_grid(std::istream& is, double& resolution,
                          Eigen::Vector2d& origin) {
  int w = 0, h = 0;
  if (!(is >> w >> h >> resolution >> origin.x() >> origin.y()))
    throw IoError("grid: malformed header");
  if (w <= 0 || h <= 0) throw IoError("grid: non-positive dimensions");
  Eigen::ArrayXXd cells(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!(is >> cells(y, x))) throw IoError("grid: truncated data");
  return cells;
}

void save_costmap(const CostMap& map, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_costmap: cannot open " + path);
  write_grid(os, map.cells(), map.resolution(), map.origin());
}

CostMap load_costmap(const std::string& path, double cost_floor,
                     double sentinel) {
  std::ifstream is(path);
  if (!is) throw IoError("load_costmap: cannot open " + path);
  double res = 0.0;
  Eigen::Vector2d origin;
  Eigen::ArrayXXd cells = read_grid(is, res, origin);
  std::vector<std::uint8_t> mask(
      static_cast<std::size_t>(cells.rows()) * cells.cols(), 0);
  for (Eigen::Index y = 0; y < cells.rows(); ++y)
    for (Eigen::Index x = 0; x < cells.cols(); ++x)
      mask[static_cast<std::size_t>(y) * cells.cols() + x] =
          cells(y, x) >= sentinel ? 1 : 0;
  return CostMap(static_cast<int>(cells.cols()),
                 static_cast<int>(cells.rows()), res, origin,
                 std::move(cells), std::move(mask), cost_floor, sentinel);
}

namespace {

int pgm_next_int(std::istream& is) {
  // Skips whitespace and '#' comments.
  while (true) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(is >> value)) throw IoError("pgm: malformed header");
  return value;
}

}  // namespace

std::vector<std::uint8_t> load_pgm_obstacles(const std::string& path,
                                             int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("pgm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P2" && magic != "P5")
    throw IoError("pgm: unsupported magic '" + magic + "'");
  width = pgm_next_int(is);
  height = pgm_next_int(is);
  const int maxval = pgm_next_int(is);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw IoError("pgm: bad dimensions or maxval");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  if (magic == "P2") {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const int v = pgm_next_int(is);
      mask[i] = v == 0 ? 1 : 0;
    }
  } else {
    is.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      int v = 0;
      for (int b = 0; b < bytes; ++b) {
        const int c = is.get();
        if (c == EOF) throw IoError("pgm: truncated raster");
        v = (v << 8) | c;
      }
      mask[i] = v == 0 ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace mwmp
