#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/grid.hpp"

namespace dawp {

/// [T, C, H, W] float32 observations on an equirectangular grid.
/// Missing cells are NaN; timestamps are integer hours, strictly increasing.
struct GriddedField {
  std::string modality;
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::int64_t> time_axis;
  std::vector<float> data;  // row-major [T, C, H, W]

  GriddedField() = default;
  GriddedField(std::string mod, std::int64_t c, std::int64_t h, std::int64_t w,
               std::vector<std::int64_t> times)
      : modality(std::move(mod)), channels(c), height(h), width(w), time_axis(std::move(times)) {
    if (c <= 0 || h <= 0 || w <= 0) throw ArgumentError("field dimensions must be positive");
    for (std::size_t i = 1; i < time_axis.size(); ++i)
      if (time_axis[i] <= time_axis[i - 1])
        throw ArgumentError("timestamps must be strictly increasing");
    data.assign(static_cast<std::size_t>(steps() * c * h * w),
                std::numeric_limits<float>::quiet_NaN());
  }

  std::int64_t steps() const { return static_cast<std::int64_t>(time_axis.size()); }

  std::size_t idx(std::int64_t t, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>(((t * channels + c) * height + y) * width + x);
  }
  float& at(std::int64_t t, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data[idx(t, c, y, x)];
  }
  float at(std::int64_t t, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data[idx(t, c, y, x)];
  }

  bool grid_matches(const GridSpec& spec) const {
    return height == spec.height && width == spec.width;
  }
  bool same_layout(const GriddedField& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Irregular observation points from one sensor pass.
struct SwathBatch {
  std::string modality;
  std::int64_t channels = 0;
  std::vector<float> lats;    // [n]
  std::vector<float> lons;    // [n]
  std::vector<float> values;  // [n, channels], NaN = missing channel value

  std::int64_t n_points() const { return static_cast<std::int64_t>(lats.size()); }

  void push(float lat, float lon, const float* vals) {
    if (lat < -90.0f || lat > 90.0f) throw ArgumentError("swath latitude outside [-90, 90]");
    if (!std::isfinite(lon)) throw ArgumentError("swath longitude must be finite");
    lats.push_back(lat);
    lons.push_back(lon);
    values.insert(values.end(), vals, vals + channels);
  }
};

/// Per-channel normalization statistics (population std over non-NaN cells).
struct NormStats {
  std::string modality;
  std::vector<float> mean;
  std::vector<float> std_dev;
};

}  // namespace dawp
