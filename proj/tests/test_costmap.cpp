#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "mwmp/costmap.hpp"
#include "mwmp/errors.hpp"

using namespace mwmp;

namespace {

std::vector<std::uint8_t> empty_grid(int w, int h) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0);
}

}  // namespace

TEST_CASE("empty obstacle grid gives a uniform floor-cost map") {
  const CostMap map =
      build_costmap(empty_grid(8, 6), 8, 6, 0.1, {0.0, 0.0}, 0.2, 0.5);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) CHECK(map.cell_cost(x, y) == doctest::Approx(1.0));
}

TEST_CASE("inflation radius of two cells dilates a single obstacle to 3x3") {
  auto grid = empty_grid(9, 9);
  grid[4 * 9 + 4] = 1;
  const double res = 0.05;
  const CostMap map =
      build_costmap(grid, 9, 9, res, {0.0, 0.0}, 2.0 * res, 0.5);
  int sentinel_cells = 0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x)
      if (map.is_blocked(x, y)) {
        ++sentinel_cells;
        CHECK(std::max(std::abs(x - 4), std::abs(y - 4)) <= 1);
      }
  CHECK(sentinel_cells == 9);
}

TEST_CASE("decay law matches the scalar reference along the axis") {
  const int n = 81;
  auto grid = empty_grid(n, n);
  grid[40 * n + 40] = 1;
  const double res = 0.05, decay = 0.5;
  const CostMap map =
      build_costmap(grid, n, n, res, {0.0, 0.0}, 2.0 * res, decay);
  // Inflated region is the 3x3 block around (40, 40); the boundary cell on
  // the +x axis is (41, 40). Sample cells k cells beyond it.
  for (int k : {4, 10, 20}) {
    const double d = k * res;
    const double expected = 1.0 + (50.0 - 1.0) * std::exp(-d / decay);
    CHECK(map.cell_cost(41 + k, 40) == doctest::Approx(expected).epsilon(1e-12));
  }
  // One metre from the inflated boundary.
  const double expected_1m = 1.0 + 49.0 * std::exp(-1.0 / 0.5);
  CHECK(map.cell_cost(61, 40) == doctest::Approx(expected_1m).epsilon(1e-12));
}

TEST_CASE("build_costmap rejects bad parameters and degenerate grids") {
  CHECK_THROWS_AS(build_costmap(empty_grid(4, 4), 4, 4, -0.1, {0, 0}, 0.1, 0.5),
                  ParameterError);
  CHECK_THROWS_AS(build_costmap(empty_grid(4, 4), 4, 4, 0.1, {0, 0}, 0.1, 0.0),
                  ParameterError);
  auto all = empty_grid(3, 3);
  std::fill(all.begin(), all.end(), 1);
  CHECK_THROWS_AS(build_costmap(all, 3, 3, 0.1, {0, 0}, 0.1, 0.5),
                  DegenerateMapError);
}

TEST_CASE("cost_at interpolates bilinearly") {
  auto grid = empty_grid(4, 4);
  Eigen::ArrayXXd cost(4, 4);
  cost.setConstant(1.0);
  cost(1, 2) = 3.0;  // cell (x=2, y=1)
  CostMap map(4, 4, 1.0, {0.0, 0.0}, cost, grid);

  SUBCASE("exact at a cell center") {
    CHECK(map.cost_at(map.cell_center(2, 1)) == doctest::Approx(3.0));
    CHECK(map.cost_at(map.cell_center(0, 0)) == doctest::Approx(1.0));
  }
  SUBCASE("midpoint of two cells averages them") {
    const Eigen::Vector2d mid =
        0.5 * (map.cell_center(1, 1) + map.cell_center(2, 1));
    CHECK(map.cost_at(mid) == doctest::Approx(2.0));
  }
  SUBCASE("out of bounds throws") {
    CHECK_THROWS_AS(map.cost_at({-0.5, 1.0}), BoundsError);
    CHECK_THROWS_AS(map.repulsive_gradient({1.0, 17.0}), BoundsError);
  }
}

TEST_CASE("uniform map has floor cost and zero gradient everywhere") {
  const CostMap map =
      build_costmap(empty_grid(10, 10), 10, 10, 0.1, {0, 0}, 0.1, 0.3);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> urd(0.01, 0.99);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d p(urd(rng), urd(rng));
    CHECK(map.cost_at(p) == doctest::Approx(1.0));
    CHECK(map.repulsive_gradient(p).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("gradient points from low toward high cost") {
  auto grid = empty_grid(12, 12);
  for (int y = 0; y < 12; ++y) grid[y * 12 + 11] = 1;  // wall on +x side
  const CostMap map = build_costmap(grid, 12, 12, 0.1, {0, 0}, 0.1, 0.4);
  const Eigen::Vector2d g = map.repulsive_gradient({0.5, 0.6});
  CHECK(g.x() > 0.0);
  CHECK(std::abs(g.y()) < 1e-9);
}

TEST_CASE("gradient matches finite differences of cost_at on a smooth map") {
  auto grid = empty_grid(40, 40);
  grid[20 * 40 + 20] = 1;
  const CostMap map = build_costmap(grid, 40, 40, 0.1, {0, 0}, 0.15, 0.8);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> urd(0.5, 3.4);
  const double fd = 1e-4;
  int checked = 0;
  for (int i = 0; i < 60 && checked < 25; ++i) {
    const Eigen::Vector2d p(urd(rng), urd(rng));
    // Keep away from the interpolation stencil's cell-edge creases.
    const Eigen::Vector2d rel = (p - map.origin()) / map.resolution();
    const double fx = rel.x() - std::floor(rel.x());
    const double fy = rel.y() - std::floor(rel.y());
    if (std::min({fx, 1 - fx, fy, 1 - fy}) < 0.15) continue;
    if ((p - Eigen::Vector2d(2.05, 2.05)).norm() < 0.4) continue;
    const Eigen::Vector2d g = map.repulsive_gradient(p);
    const Eigen::Vector2d g_fd(
        (map.cost_at({p.x() + fd, p.y()}) - map.cost_at({p.x() - fd, p.y()})) /
            (2 * fd),
        (map.cost_at({p.x(), p.y() + fd}) - map.cost_at({p.x(), p.y() - fd})) /
            (2 * fd));
    if (g_fd.norm() < 1e-8) continue;
    CHECK((g - g_fd).norm() / g_fd.norm() < 1e-3);
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("property: interpolated cost never falls below the floor") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cell(0, 29);
  std::uniform_real_distribution<double> urd(0.0, 3.0);
  auto grid = empty_grid(30, 30);
  for (int i = 0; i < 12; ++i) grid[cell(rng) * 30 + cell(rng)] = 1;
  const CostMap map = build_costmap(grid, 30, 30, 0.1, {0, 0}, 0.2, 0.4);
  for (int i = 0; i < 300; ++i) {
    const Eigen::Vector2d p(urd(rng), urd(rng));
    CHECK(map.cost_at(p) >= map.cost_floor() - 1e-12);
  }
}

TEST_CASE("property: increasing the inflation radius never lowers a cell") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cell(0, 24);
  auto grid = empty_grid(25, 25);
  for (int i = 0; i < 8; ++i) grid[cell(rng) * 25 + cell(rng)] = 1;
  const CostMap small = build_costmap(grid, 25, 25, 0.1, {0, 0}, 0.15, 0.4);
  const CostMap large = build_costmap(grid, 25, 25, 0.1, {0, 0}, 0.35, 0.4);
  for (int y = 0; y < 25; ++y)
    for (int x = 0; x < 25; ++x)
      CHECK(large.cell_cost(x, y) >= small.cell_cost(x, y) - 1e-12);
}

TEST_CASE("text grid round trip preserves costs and geometry") {
  auto grid = empty_grid(14, 9);
  grid[3 * 14 + 5] = 1;
  const CostMap map =
      build_costmap(grid, 14, 9, 0.05, {-0.3, 0.2}, 0.1, 0.25);
  const std::string file = "costmap_roundtrip.grid";
  save_costmap(map, file);
  const CostMap loaded = load_costmap(file);
  CHECK(loaded.width() == 14);
  CHECK(loaded.height() == 9);
  CHECK(loaded.resolution() == doctest::Approx(0.05));
  CHECK(loaded.origin().x() == doctest::Approx(-0.3));
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 14; ++x)
      CHECK(loaded.cell_cost(x, y) == doctest::Approx(map.cell_cost(x, y)));
  CHECK(loaded.is_blocked(5, 3));
}

TEST_CASE("pgm import marks zero pixels as obstacles") {
  {
    std::ofstream os("mask.pgm");
    os << "P2\n# comment\n4 3\n255\n";
    os << "255 255 0 255\n255 255 255 255\n0 255 255 255\n";
  }
  int w = 0, h = 0;
  const auto mask = load_pgm_obstacles("mask.pgm", w, h);
  CHECK(w == 4);
  CHECK(h == 3);
  CHECK(mask[0 * 4 + 2] == 1);
  CHECK(mask[2 * 4 + 0] == 1);
  CHECK(mask[0 * 4 + 0] == 0);
  int count = 0;
  for (auto v : mask) count += v;
  CHECK(count == 2);
}
