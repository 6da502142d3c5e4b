#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "dawp/common.hpp"

namespace dawp {

/// Tile coordinate on the sub-image lattice.
struct TileCoord {
  std::int64_t r = 0;
  std::int64_t c = 0;
  bool operator==(const TileCoord&) const = default;
};

/// Equirectangular global grid and its tiling into square sub-images.
/// Steps are derived from the cell counts (180/height, 360/width); grid
/// parameters are always carried explicitly so that desk and full scale
/// configurations can coexist.
struct GridSpec {
  std::int64_t height = 0;  // latitude rows
  std::int64_t width = 0;   // longitude cols
  std::int64_t tile = 0;    // cells per tile side

  GridSpec() = default;
  GridSpec(std::int64_t h, std::int64_t w, std::int64_t t) : height(h), width(w), tile(t) {
    if (h <= 0 || w <= 0 || t <= 0) throw ArgumentError("grid dimensions must be positive");
    if (h % t != 0 || w % t != 0)
      throw ArgumentError("grid height and width must be divisible by the tile side");
    if ((w / t) % 2 != 0)
      throw ArgumentError("tiles_w must be even (polar wrap shifts columns by tiles_w/2)");
  }

  double lat_step() const { return 180.0 / static_cast<double>(height); }
  double lon_step() const { return 360.0 / static_cast<double>(width); }
  std::int64_t tiles_h() const { return height / tile; }
  std::int64_t tiles_w() const { return width / tile; }
  std::int64_t tile_count() const { return tiles_h() * tiles_w(); }
};

/// The 8 spherical neighbours of a tile, in the fixed order
/// [up_left, up, up_right, left, right, down_left, down, down_right].
/// Columns wrap as a torus; crossing a pole maps to the same row with the
/// column shifted by tiles_w/2 (and the left/right sense mirrored).
inline std::array<TileCoord, 8> neighbours8(TileCoord coord, std::int64_t tiles_h,
                                            std::int64_t tiles_w) {
  if (tiles_w <= 0 || tiles_w % 2 != 0) throw ArgumentError("tiles_w must be positive and even");
  if (tiles_h < 2) throw ArgumentError("tiles_h must be at least 2");
  const std::int64_t r = coord.r, c = coord.c, h = tiles_h, w = tiles_w;
  if (r < 0 || r >= h || c < 0 || c >= w) throw ArgumentError("tile coordinate out of bounds");

  auto mw = [w](std::int64_t x) { return ((x % w) + w) % w; };
  const bool top = (r == 0);
  const bool bottom = (r == h - 1);

  TileCoord up_left, up, up_right, left, right, down_left, down, down_right;
  left = {r, mw(c - 1)};
  right = {r, mw(c + 1)};
  if (top) {
    up_left = {r, mw(c + 1 + w / 2)};
    up = {r, mw(c + w / 2)};
    up_right = {r, mw(c - 1 + w / 2)};
  } else {
    up_left = {r - 1, mw(c - 1)};
    up = {r - 1, c};
    up_right = {r - 1, mw(c + 1)};
  }
  if (bottom) {
    down_left = {r, mw(c + 1 + w / 2)};
    down = {r, mw(c + w / 2)};
    down_right = {r, mw(c - 1 + w / 2)};
  } else {
    down_left = {r + 1, mw(c - 1)};
    down = {r + 1, c};
    down_right = {r + 1, mw(c + 1)};
  }
  return {up_left, up, up_right, left, right, down_left, down, down_right};
}

/// Tile containing a grid cell.
inline TileCoord tile_of_cell(std::int64_t row, std::int64_t col, const GridSpec& spec) {
  if (row < 0 || row >= spec.height || col < 0 || col >= spec.width)
    throw ArgumentError("cell index out of bounds: (" + std::to_string(row) + "," +
                        std::to_string(col) + ")");
  return {row / spec.tile, col / spec.tile};
}

/// Nearest grid cell for a lat/lon point. Half-open cell convention: a point
/// exactly on a boundary belongs to the larger-index cell, clamped at the
/// poles; longitude wraps with col 0 at -180 deg.
inline std::pair<std::int64_t, std::int64_t> cell_of_latlon(double lat, double lon,
                                                            const GridSpec& spec) {
  if (std::isnan(lat) || std::isnan(lon)) throw ArgumentError("NaN latitude or longitude");
  if (std::isinf(lat) || std::isinf(lon)) throw ArgumentError("non-finite latitude or longitude");
  std::int64_t row = static_cast<std::int64_t>(std::floor((90.0 - lat) / spec.lat_step()));
  if (row < 0) row = 0;
  if (row >= spec.height) row = spec.height - 1;

  double wrapped = std::fmod(lon + 180.0, 360.0);
  if (wrapped < 0) wrapped += 360.0;
  if (wrapped >= 360.0) wrapped = 0.0;
  std::int64_t col = static_cast<std::int64_t>(std::floor(wrapped / spec.lon_step()));
  if (col < 0) col = 0;
  if (col >= spec.width) col = spec.width - 1;
  return {row, col};
}

}  // namespace dawp
