#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/field.hpp"
#include "dawp/grid.hpp"
#include "dawp/obsio.hpp"
#include "dawp/parallel.hpp"
#include "dawp/rng.hpp"

namespace dawp {

/// Moving polar-orbit swath geometry. The hourly footprint is the union of an
/// ascending and a descending band; both precess by width/period columns per
/// hour, so the footprint at t + period equals the footprint at t exactly.
struct OrbitConfig {
  std::int64_t swath_width = 10;   // cells across the band
  double period = 12.0;            // hours per full longitudinal precession
  double inclination_offset = 0.5; // column skew per latitude row (diagonal tilt)
  double phase = 0.0;              // initial column offset
};

struct ChannelCoupling {
  float scale = 1.0f;
  float offset = 0.0f;
};

/// Smoothly evolving scalar field: Gaussian blobs advected with longitudinal
/// wraparound plus diffusion; channels are affine readouts of the one latent
/// field so different modalities genuinely share information.
struct FieldConfig {
  std::int64_t n_blobs = 6;
  double du = 1.0;  // columns per hour
  double dv = 0.0;  // rows per hour
  double diffusion = 0.05;
  std::vector<ChannelCoupling> couplings;  // one per channel
  std::uint64_t seed = 0;
};

namespace synth {

/// Bilinear sample with longitudinal wrap and latitude clamp.
inline float sample_wrap(const float* f, std::int64_t H, std::int64_t W, double r, double c) {
  double rc = std::min(std::max(r, 0.0), static_cast<double>(H - 1));
  std::int64_t r0 = static_cast<std::int64_t>(std::floor(rc));
  std::int64_t r1 = std::min(r0 + 1, H - 1);
  double fr = rc - static_cast<double>(r0);
  double cw = std::fmod(c, static_cast<double>(W));
  if (cw < 0) cw += static_cast<double>(W);
  std::int64_t c0 = static_cast<std::int64_t>(std::floor(cw));
  std::int64_t c1 = (c0 + 1) % W;
  double fc = cw - static_cast<double>(c0);
  double v00 = f[r0 * W + c0], v01 = f[r0 * W + c1];
  double v10 = f[r1 * W + c0], v11 = f[r1 * W + c1];
  return static_cast<float>((1 - fr) * ((1 - fc) * v00 + fc * v01) +
                            fr * ((1 - fc) * v10 + fc * v11));
}

/// Latent scalar field trajectory [T, H, W].
inline std::vector<float> gen_latent(const FieldConfig& cfg, const GridSpec& spec,
                                     std::int64_t T) {
  if (T < 1) throw ArgumentError("gen_latent: T must be >= 1");
  const std::int64_t H = spec.height, W = spec.width;
  std::vector<float> out(static_cast<std::size_t>(T * H * W), 0.0f);

  Rng rng = Rng::derive(cfg.seed, 0x1a7e);
  struct Blob {
    double r, c, sigma, amp;
  };
  std::vector<Blob> blobs;
  for (std::int64_t b = 0; b < cfg.n_blobs; ++b) {
    blobs.push_back({rng.uniform(0.0, static_cast<double>(H)),
                     rng.uniform(0.0, static_cast<double>(W)),
                     rng.uniform(static_cast<double>(H) / 12.0, static_cast<double>(H) / 6.0),
                     rng.uniform(0.5, 1.5)});
  }
  float* f0 = out.data();
  for (std::int64_t r = 0; r < H; ++r)
    for (std::int64_t c = 0; c < W; ++c) {
      double v = 0.0;
      for (const auto& b : blobs) {
        double dr = static_cast<double>(r) - b.r;
        double dc = std::fabs(static_cast<double>(c) - b.c);
        dc = std::min(dc, static_cast<double>(W) - dc);
        v += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      f0[r * W + c] = static_cast<float>(v);
    }

  std::vector<float> scratch(static_cast<std::size_t>(H * W));
  for (std::int64_t t = 1; t < T; ++t) {
    const float* prev = out.data() + (t - 1) * H * W;
    float* cur = out.data() + t * H * W;
    // advect (backward sample), then diffuse
    for (std::int64_t r = 0; r < H; ++r)
      for (std::int64_t c = 0; c < W; ++c)
        scratch[static_cast<std::size_t>(r * W + c)] =
            sample_wrap(prev, H, W, static_cast<double>(r) - cfg.dv,
                        static_cast<double>(c) - cfg.du);
    if (cfg.diffusion > 0.0) {
      for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) {
          float v = scratch[static_cast<std::size_t>(r * W + c)];
          float up = scratch[static_cast<std::size_t>(std::max<std::int64_t>(r - 1, 0) * W + c)];
          float dn = scratch[static_cast<std::size_t>(std::min(r + 1, H - 1) * W + c)];
          float lf = scratch[static_cast<std::size_t>(r * W + (c + W - 1) % W)];
          float rt = scratch[static_cast<std::size_t>(r * W + (c + 1) % W)];
          cur[r * W + c] =
              v + static_cast<float>(cfg.diffusion) * (up + dn + lf + rt - 4.0f * v);
        }
    } else {
      std::copy(scratch.begin(), scratch.end(), cur);
    }
  }
  return out;
}

}  // namespace synth

/// Dense, NaN-free truth for one modality: affine readouts of the latent field.
inline GriddedField gen_truth(const FieldConfig& cfg, const GridSpec& spec, std::int64_t T,
                              const std::string& modality) {
  if (cfg.couplings.empty()) throw ArgumentError("gen_truth: no channel couplings");
  auto latent = synth::gen_latent(cfg, spec, T);
  const std::int64_t C = static_cast<std::int64_t>(cfg.couplings.size());
  const std::int64_t H = spec.height, W = spec.width;
  std::vector<std::int64_t> times(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) times[static_cast<std::size_t>(t)] = t;
  GriddedField f(modality, C, H, W, times);
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t c = 0; c < C; ++c) {
      const auto& cp = cfg.couplings[static_cast<std::size_t>(c)];
      const float* src = latent.data() + t * H * W;
      float* dst = f.data.data() + f.idx(t, c, 0, 0);
      for (std::int64_t i = 0; i < H * W; ++i) dst[i] = cp.scale * src[i] + cp.offset;
    }
  return f;
}

/// Synthetic precipitation products from the latent field: a thresholded
/// quadratic sparse channel (SP, mm/h-like) and a smooth affine channel
/// (TCWV, mm-like).
inline GriddedField precip_truth(const FieldConfig& cfg, const GridSpec& spec, std::int64_t T) {
  auto latent = synth::gen_latent(cfg, spec, T);
  const std::int64_t H = spec.height, W = spec.width;
  std::vector<std::int64_t> times(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) times[static_cast<std::size_t>(t)] = t;
  GriddedField f("precip", 2, H, W, times);
  for (std::int64_t t = 0; t < T; ++t) {
    const float* src = latent.data() + t * H * W;
    float* sp = f.data.data() + f.idx(t, 0, 0, 0);
    float* tcwv = f.data.data() + f.idx(t, 1, 0, 0);
    for (std::int64_t i = 0; i < H * W; ++i) {
      float ex = std::max(0.0f, src[i] - 0.8f);
      sp[i] = 2.0f * ex * ex;
      tcwv[i] = 20.0f * src[i] + 5.0f;
    }
  }
  return f;
}

/// Hour-t swath footprint as a [H, W] mask.
inline std::vector<std::uint8_t> swath_mask(const OrbitConfig& orbit, const GridSpec& spec,
                                            std::int64_t t) {
  if (orbit.swath_width <= 0 || orbit.swath_width >= spec.width)
    throw ArgumentError("swath width must be in (0, width)");
  if (orbit.period <= 0) throw ArgumentError("orbit period must be positive");
  const std::int64_t H = spec.height, W = spec.width;
  const double dW = static_cast<double>(W);
  const double step = dW / orbit.period;  // columns per hour
  const double half = static_cast<double>(orbit.swath_width) / 2.0;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(H * W), 0);
  auto circ = [dW](double a) {
    double m = std::fmod(a, dW);
    if (m < 0) m += dW;
    if (m > dW / 2) m = dW - m;
    return m;
  };
  for (std::int64_t r = 0; r < H; ++r) {
    double asc = orbit.phase + static_cast<double>(t) * step +
                 static_cast<double>(r) * orbit.inclination_offset;
    double desc = asc + dW / 2.0 + step / 2.0;
    for (std::int64_t c = 0; c < W; ++c) {
      double x = static_cast<double>(c);
      if (circ(x - asc) < half || circ(x - desc) < half)
        mask[static_cast<std::size_t>(r * W + c)] = 1;
    }
  }
  return mask;
}

/// Observation points for hour t: truth values at swath cells (plus optional
/// Gaussian noise), jittered sub-cell in lat/lon so remapping is exercised.
inline SwathBatch sample_swath(const GriddedField& truth, const OrbitConfig& orbit,
                               const GridSpec& spec, std::int64_t t, double noise_std,
                               std::uint64_t seed) {
  if (t < 0 || t >= truth.steps()) throw ArgumentError("sample_swath: hour outside truth window");
  if (!truth.grid_matches(spec)) throw ArgumentError("sample_swath: truth grid mismatch");
  auto mask = swath_mask(orbit, spec, t);
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(t));
  SwathBatch s;
  s.modality = truth.modality;
  s.channels = truth.channels;
  const double lat_step = spec.lat_step(), lon_step = spec.lon_step();
  std::vector<float> vals(static_cast<std::size_t>(truth.channels));
  for (std::int64_t r = 0; r < spec.height; ++r)
    for (std::int64_t c = 0; c < spec.width; ++c) {
      if (!mask[static_cast<std::size_t>(r * spec.width + c)]) continue;
      double lat = 90.0 - (static_cast<double>(r) + 0.5 + rng.uniform(-0.4, 0.4)) * lat_step;
      double lon = -180.0 + (static_cast<double>(c) + 0.5 + rng.uniform(-0.4, 0.4)) * lon_step;
      for (std::int64_t ch = 0; ch < truth.channels; ++ch) {
        double v = truth.at(t, ch, r, c);
        if (noise_std > 0.0) v += noise_std * rng.normal();
        vals[static_cast<std::size_t>(ch)] = static_cast<float>(v);
      }
      s.push(static_cast<float>(lat), static_cast<float>(lon), vals.data());
    }
  return s;
}

/// One synthetic sensor: shared-latent dynamics plus its own orbit.
struct ModalitySpec {
  std::string name;
  FieldConfig field;
  OrbitConfig orbit;
};

struct DatasetLayout {
  static std::string truth_file(const std::string& mod) { return "truth_" + mod + ".grd"; }
  static std::string obs_file(const std::string& mod, std::int64_t hour) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04lld", static_cast<long long>(hour));
    return "obs_" + mod + "_" + buf + ".grd";
  }
  static std::string precip_file() { return "truth_precip.grd"; }
  static std::string manifest_file() { return "manifest.txt"; }
};

/// Write the full desk dataset: per-modality dense truth, hourly remapped
/// observation files, precipitation truth, and a manifest with the
/// train/test hour split. Deterministic given the configs' seeds.
inline void gen_dataset(const std::vector<ModalitySpec>& mods, const GridSpec& spec,
                        std::int64_t hours, std::int64_t train_hours, double noise_std,
                        const std::string& out_dir, int jobs = 1) {
  if (mods.empty()) throw ArgumentError("gen_dataset: no modalities");
  if (hours < 1 || train_hours < 1 || train_hours > hours)
    throw ArgumentError("gen_dataset: bad hour split");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create output dir '" + out_dir + "': " + ec.message(), 0);

  for (const auto& m : mods) {
    GriddedField truth = gen_truth(m.field, spec, hours, m.name);
    write_grid(out_dir + "/" + DatasetLayout::truth_file(m.name), truth);
    parallel_for(hours, jobs, [&](std::int64_t t) {
      SwathBatch s = sample_swath(truth, m.orbit, spec, t, noise_std, m.field.seed);
      GriddedField obs = remap(s, spec, t);
      write_grid(out_dir + "/" + DatasetLayout::obs_file(m.name, t), obs);
    });
  }
  write_grid(out_dir + "/" + DatasetLayout::precip_file(),
             precip_truth(mods[0].field, spec, hours));

  std::ostringstream man;
  man << "modalities:";
  for (std::size_t i = 0; i < mods.size(); ++i) man << (i ? "," : "") << mods[i].name;
  man << "\n";
  for (const auto& m : mods)
    man << "channels_" << m.name << ":" << m.field.couplings.size() << "\n";
  man << "hours:" << hours << "\n";
  man << "train_hours:" << train_hours << "\n";
  man << "height:" << spec.height << "\nwidth:" << spec.width << "\ntile:" << spec.tile << "\n";
  man << "noise_std:" << noise_std << "\n";
  man << "precip:" << DatasetLayout::precip_file() << "\n";
  std::ofstream mf(out_dir + "/" + DatasetLayout::manifest_file(), std::ios::trunc);
  if (!mf) throw FormatError("cannot write manifest in '" + out_dir + "'", 0);
  mf << man.str();
}

}  // namespace dawp
