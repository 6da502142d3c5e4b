#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "dawp/grid.hpp"
#include "dawp/rng.hpp"

using namespace dawp;

namespace {

// Independent transcription of the spherical neighbour rules, structured
// differently from the library (single branch table instead of shared wrap
// helpers) so the two can check each other.
std::array<TileCoord, 8> neighbours8_oracle(TileCoord p, std::int64_t h, std::int64_t w) {
  auto M = [w](std::int64_t x) {
    while (x < 0) x += w;
    while (x >= w) x -= w;
    return x;
  };
  std::int64_t r = p.r, c = p.c;
  std::array<TileCoord, 8> nb;
  if (r != 0 && r != h - 1) {
    nb = {{{r - 1, M(c - 1)},
           {r - 1, c},
           {r - 1, M(c + 1)},
           {r, M(c - 1)},
           {r, M(c + 1)},
           {r + 1, M(c - 1)},
           {r + 1, c},
           {r + 1, M(c + 1)}}};
  } else if (r == 0) {
    nb = {{{r, M(c + 1 + w / 2)},
           {r, M(c + w / 2)},
           {r, M(c - 1 + w / 2)},
           {r, M(c - 1)},
           {r, M(c + 1)},
           {r + 1, M(c - 1)},
           {r + 1, c},
           {r + 1, M(c + 1)}}};
  } else {
    nb = {{{r - 1, M(c - 1)},
           {r - 1, c},
           {r - 1, M(c + 1)},
           {r, M(c - 1)},
           {r, M(c + 1)},
           {r, M(c + 1 + w / 2)},
           {r, M(c + w / 2)},
           {r, M(c - 1 + w / 2)}}};
  }
  return nb;
}

}  // namespace

TEST_CASE("GridSpec validates divisibility and parity") {
  CHECK_NOTHROW(GridSpec(96, 192, 24));
  CHECK_NOTHROW(GridSpec(1152, 2304, 144));
  CHECK_THROWS_AS(GridSpec(100, 192, 24), ArgumentError);  // height not divisible
  CHECK_THROWS_AS(GridSpec(96, 120, 24), ArgumentError);   // tiles_w = 5, odd
  GridSpec desk(96, 192, 24);
  CHECK(desk.tiles_h() == 4);
  CHECK(desk.tiles_w() == 8);
  CHECK(desk.lat_step() == Catch::Approx(1.875));
  GridSpec paper(1152, 2304, 144);
  CHECK(paper.lat_step() == Catch::Approx(0.15625));
  CHECK(paper.tiles_h() == 8);
  CHECK(paper.tiles_w() == 16);
}

TEST_CASE("neighbours8 worked examples") {
  auto interior = neighbours8({3, 5}, 8, 16);
  std::array<TileCoord, 8> want_interior = {
      {{2, 4}, {2, 5}, {2, 6}, {3, 4}, {3, 6}, {4, 4}, {4, 5}, {4, 6}}};
  CHECK(interior == want_interior);

  auto top = neighbours8({0, 0}, 8, 16);
  std::array<TileCoord, 8> want_top = {
      {{0, 9}, {0, 8}, {0, 7}, {0, 15}, {0, 1}, {1, 15}, {1, 0}, {1, 1}}};
  CHECK(top == want_top);

  auto bottom = neighbours8({7, 15}, 8, 16);
  std::array<TileCoord, 8> want_bottom = {
      {{6, 14}, {6, 15}, {6, 0}, {7, 14}, {7, 0}, {7, 8}, {7, 7}, {7, 6}}};
  CHECK(bottom == want_bottom);
}

TEST_CASE("neighbours8 argument validation") {
  CHECK_THROWS_AS(neighbours8({0, 0}, 1, 4), ArgumentError);   // single row
  CHECK_THROWS_AS(neighbours8({0, 0}, 4, 5), ArgumentError);   // odd width
  CHECK_THROWS_AS(neighbours8({4, 0}, 4, 8), ArgumentError);   // row out of range
  CHECK_THROWS_AS(neighbours8({0, -1}, 4, 8), ArgumentError);  // col out of range
}

TEST_CASE("neighbours8 matches the independent oracle exhaustively") {
  for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{2, 4}, {4, 8}, {8, 16}}) {
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < w; ++c) {
        auto got = neighbours8({r, c}, h, w);
        auto want = neighbours8_oracle({r, c}, h, w);
        REQUIRE(got == want);
        for (const auto& n : got) {
          REQUIRE(n.r >= 0);
          REQUIRE(n.r < h);
          REQUIRE(n.c >= 0);
          REQUIRE(n.c < w);
        }
      }
  }
}

TEST_CASE("neighbours8 interior symmetry and top-row wrap set") {
  const std::int64_t h = 8, w = 16;
  // interior symmetry: b in N(a) <=> a in N(b)
  auto contains = [&](TileCoord a, TileCoord b) {
    auto ns = neighbours8(a, h, w);
    for (const auto& n : ns)
      if (n == b) return true;
    return false;
  };
  for (std::int64_t r = 1; r <= h - 2; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      for (const auto& n : neighbours8({r, c}, h, w)) {
        if (n.r >= 1 && n.r <= h - 2) {
          REQUIRE(contains(n, {r, c}));
        }
      }
    }
  // top-row "up" neighbours land on row 0 at the polar-wrapped columns
  for (std::int64_t c = 0; c < w; ++c) {
    auto ns = neighbours8({0, c}, h, w);
    std::set<std::int64_t> got = {ns[0].c, ns[1].c, ns[2].c};
    std::set<std::int64_t> want = {(c - 1 + w / 2 + w) % w, (c + w / 2) % w,
                                   (c + 1 + w / 2) % w};
    CHECK(ns[0].r == 0);
    CHECK(ns[1].r == 0);
    CHECK(ns[2].r == 0);
    CHECK(got == want);
  }
}

TEST_CASE("tile_of_cell integer division and bounds") {
  GridSpec paper(1152, 2304, 144);
  CHECK(tile_of_cell(0, 0, paper) == TileCoord{0, 0});
  CHECK(tile_of_cell(143, 143, paper) == TileCoord{0, 0});
  CHECK(tile_of_cell(144, 2303, paper) == TileCoord{1, 15});
  CHECK_THROWS_AS(tile_of_cell(-1, 0, paper), ArgumentError);
  CHECK_THROWS_AS(tile_of_cell(0, 2304, paper), ArgumentError);
}

TEST_CASE("cell_of_latlon corners and center") {
  GridSpec paper(1152, 2304, 144);
  CHECK(cell_of_latlon(90.0, -180.0, paper) == std::pair<std::int64_t, std::int64_t>(0, 0));
  CHECK(cell_of_latlon(0.0, 0.0, paper) == std::pair<std::int64_t, std::int64_t>(576, 1152));
  CHECK(cell_of_latlon(-90.0, 179.999, paper) ==
        std::pair<std::int64_t, std::int64_t>(1151, 2303));
  CHECK_THROWS_AS(cell_of_latlon(std::nan(""), 0.0, paper), ArgumentError);
  CHECK_THROWS_AS(cell_of_latlon(0.0, std::nan(""), paper), ArgumentError);
}

TEST_CASE("cell_of_latlon agrees with brute-force nearest-center search") {
  GridSpec spec(96, 192, 24);
  Rng rng(20240811);
  for (int i = 0; i < 10000; ++i) {
    double lat = rng.uniform(-90.0, 90.0);
    double lon = rng.uniform(-180.0, 180.0);
    auto [row, col] = cell_of_latlon(lat, lon, spec);

    std::int64_t best_r = 0;
    double best_dr = 1e300;
    for (std::int64_t r = 0; r < spec.height; ++r) {
      double center = 90.0 - (static_cast<double>(r) + 0.5) * spec.lat_step();
      double d = std::fabs(lat - center);
      if (d < best_dr) {
        best_dr = d;
        best_r = r;
      }
    }
    std::int64_t best_c = 0;
    double best_dc = 1e300;
    for (std::int64_t c = 0; c < spec.width; ++c) {
      double center = -180.0 + (static_cast<double>(c) + 0.5) * spec.lon_step();
      double d = std::fabs(lon - center);
      d = std::min(d, 360.0 - d);
      if (d < best_dc) {
        best_dc = d;
        best_c = c;
      }
    }
    REQUIRE(row == best_r);
    REQUIRE(col == best_c);
  }
}

TEST_CASE("every lat/lon lands in exactly one tile") {
  GridSpec spec(96, 192, 24);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    double lat = rng.uniform(-90.0, 90.0);
    double lon = rng.uniform(-180.0, 180.0);
    auto [row, col] = cell_of_latlon(lat, lon, spec);
    TileCoord t = tile_of_cell(row, col, spec);
    REQUIRE(t.r >= 0);
    REQUIRE(t.r < spec.tiles_h());
    REQUIRE(t.c >= 0);
    REQUIRE(t.c < spec.tiles_w());
  }
}
