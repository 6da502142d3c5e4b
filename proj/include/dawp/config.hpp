#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/grid.hpp"

namespace dawp {

/// Fully resolved run configuration. Flat key=value text on disk; the two
/// built-in presets are "desk" (laptop-scale synthetic pipeline) and "paper"
/// (full-scale shapes and optimizer settings, used for shape conformance and
/// as the reference configuration).
struct RunConfig {
  std::string preset = "desk";

  // grid / windowing
  std::int64_t grid_height = 96;
  std::int64_t grid_width = 192;
  std::int64_t tile = 24;
  std::int64_t patch = 8;
  std::int64_t time_window = 4;

  // modalities
  std::vector<std::string> modalities = {"obs_a", "obs_b"};
  std::vector<std::int64_t> channels = {3, 2};

  // synthetic data
  std::int64_t hours = 96;
  std::int64_t train_hours = 72;
  double noise_std = 0.02;
  std::int64_t n_blobs = 6;
  double advect_du = 2.0;
  double advect_dv = 0.3;
  double diffusion = 0.05;
  std::int64_t swath_width = 10;
  double orbit_period = 12.0;
  double orbit_tilt = 0.5;
  std::vector<double> orbit_phases = {0.0, 96.0};

  // mask ViT-VAE
  std::int64_t vae_dim = 64;
  std::int64_t vae_enc_blocks = 4;
  std::int64_t vae_dec_blocks = 4;
  std::int64_t vae_heads = 4;
  double kl_weight = 1e-6;
  double obs_threshold = 0.10;
  std::int64_t vae_steps = 3000;
  std::int64_t vae_batch = 8;

  // AIDA MMAE
  std::int64_t aida_enc_dim = 64;
  std::int64_t aida_enc_blocks = 4;
  std::int64_t aida_dec_dim = 48;
  std::int64_t aida_dec_blocks = 3;
  std::int64_t aida_heads = 4;
  std::int64_t aida_keep = 16;
  std::int64_t aida_steps = 2000;
  std::int64_t aida_batch = 8;

  // AIWP TS transformer
  std::int64_t aiwp_dim = 32;
  std::int64_t aiwp_blocks = 2;
  std::int64_t aiwp_heads = 4;
  std::int64_t aiwp_steps = 5000;
  std::int64_t aiwp_batch = 2;

  // precipitation head
  std::int64_t precip_dim = 32;
  std::int64_t precip_blocks = 2;
  std::int64_t precip_heads = 4;
  std::int64_t precip_steps = 1500;
  std::int64_t precip_batch = 8;

  // optimizer
  double lr_peak = 1e-3;
  double lr_warmup = 1e-6;
  double lr_min = 1e-5;
  double warmup_frac = 0.10;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;

  std::uint64_t seed = 7;

  static RunConfig desk() { return RunConfig{}; }

  static RunConfig paper() {
    RunConfig c;
    c.preset = "paper";
    c.grid_height = 1152;
    c.grid_width = 2304;
    c.tile = 144;
    c.patch = 16;
    c.time_window = 12;
    c.modalities = {"amsu_a", "atms", "hirs", "mhs"};
    c.channels = {15, 9, 20, 5};
    c.orbit_phases = {0.0, 576.0, 1152.0, 1728.0};
    c.swath_width = 120;
    c.vae_dim = 768;
    c.vae_enc_blocks = 10;
    c.vae_dec_blocks = 12;
    c.vae_heads = 8;
    c.vae_steps = 200000;
    c.vae_batch = 200;
    c.aida_enc_dim = 768;
    c.aida_enc_blocks = 12;
    c.aida_dec_dim = 512;
    c.aida_dec_blocks = 8;
    c.aida_heads = 8;
    c.aida_keep = 128;
    c.aida_steps = 200000;
    c.aida_batch = 48;
    c.aiwp_dim = 768;
    c.aiwp_blocks = 12;
    c.aiwp_heads = 8;
    c.aiwp_steps = 200000;
    c.aiwp_batch = 8;
    c.lr_peak = 1e-4;
    c.lr_min = 1e-6;
    return c;
  }

  static RunConfig from_preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }

  GridSpec grid() const { return GridSpec(grid_height, grid_width, tile); }
  std::int64_t n_modalities() const { return static_cast<std::int64_t>(modalities.size()); }
  std::int64_t tokens_per_side() const { return tile / patch; }
  std::int64_t tokens_per_tile() const { return tokens_per_side() * tokens_per_side(); }
  /// Latent channels per modality: 4c per token.
  std::int64_t latent_channels(std::size_t m) const { return 4 * channels.at(m); }
  std::int64_t latent_channels_total() const {
    std::int64_t s = 0;
    for (auto c : channels) s += 4 * c;
    return s;
  }
  /// Total AIDA slot count: sum over modalities of tokens x time.
  std::int64_t aida_slots() const {
    return n_modalities() * tokens_per_tile() * time_window;
  }

  void validate() const {
    if (modalities.size() != channels.size() || modalities.size() != orbit_phases.size())
      throw ConfigError("modalities, channels, and orbit_phases must have equal length");
    if (tile % patch != 0) throw ConfigError("tile must be divisible by patch");
    if (time_window < 1) throw ConfigError("time_window must be >= 1");
    if (train_hours < time_window * 2 || train_hours > hours)
      throw ConfigError("bad train/test hour split");
    GridSpec check(grid_height, grid_width, tile);
    (void)check;
    if (aida_keep < 1 || aida_keep > aida_slots())
      throw ConfigError("aida_keep outside [1, slot count]");
  }

  void set(const std::string& key, const std::string& val);
  std::string to_text() const;

  void apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  void echo(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write resolved config to '" + path + "'");
    out << to_text();
  }
};

namespace detail {
inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(tok);
  return out;
}
template <typename T, typename Conv>
std::vector<T> parse_list(const std::string& s, Conv conv) {
  std::vector<T> out;
  for (const auto& tok : split_csv(s)) out.push_back(conv(tok));
  return out;
}
}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& val) {
  auto as_i = [&] { return static_cast<std::int64_t>(std::stoll(val)); };
  auto as_d = [&] { return std::stod(val); };
  try {
    if (key == "preset") preset = val;
    else if (key == "grid.height") grid_height = as_i();
    else if (key == "grid.width") grid_width = as_i();
    else if (key == "grid.tile") tile = as_i();
    else if (key == "grid.patch") patch = as_i();
    else if (key == "time_window") time_window = as_i();
    else if (key == "modalities") modalities = detail::split_csv(val);
    else if (key == "channels")
      channels = detail::parse_list<std::int64_t>(
          val, [](const std::string& s) { return std::stoll(s); });
    else if (key == "data.hours") hours = as_i();
    else if (key == "data.train_hours") train_hours = as_i();
    else if (key == "data.noise_std") noise_std = as_d();
    else if (key == "data.n_blobs") n_blobs = as_i();
    else if (key == "data.advect_du") advect_du = as_d();
    else if (key == "data.advect_dv") advect_dv = as_d();
    else if (key == "data.diffusion") diffusion = as_d();
    else if (key == "orbit.swath_width") swath_width = as_i();
    else if (key == "orbit.period") orbit_period = as_d();
    else if (key == "orbit.tilt") orbit_tilt = as_d();
    else if (key == "orbit.phases")
      orbit_phases =
          detail::parse_list<double>(val, [](const std::string& s) { return std::stod(s); });
    else if (key == "vae.dim") vae_dim = as_i();
    else if (key == "vae.enc_blocks") vae_enc_blocks = as_i();
    else if (key == "vae.dec_blocks") vae_dec_blocks = as_i();
    else if (key == "vae.heads") vae_heads = as_i();
    else if (key == "vae.kl_weight") kl_weight = as_d();
    else if (key == "vae.obs_threshold") obs_threshold = as_d();
    else if (key == "vae.steps") vae_steps = as_i();
    else if (key == "vae.batch") vae_batch = as_i();
    else if (key == "aida.enc_dim") aida_enc_dim = as_i();
    else if (key == "aida.enc_blocks") aida_enc_blocks = as_i();
    else if (key == "aida.dec_dim") aida_dec_dim = as_i();
    else if (key == "aida.dec_blocks") aida_dec_blocks = as_i();
    else if (key == "aida.heads") aida_heads = as_i();
    else if (key == "aida.keep") aida_keep = as_i();
    else if (key == "aida.steps") aida_steps = as_i();
    else if (key == "aida.batch") aida_batch = as_i();
    else if (key == "aiwp.dim") aiwp_dim = as_i();
    else if (key == "aiwp.blocks") aiwp_blocks = as_i();
    else if (key == "aiwp.heads") aiwp_heads = as_i();
    else if (key == "aiwp.steps") aiwp_steps = as_i();
    else if (key == "aiwp.batch") aiwp_batch = as_i();
    else if (key == "precip.dim") precip_dim = as_i();
    else if (key == "precip.blocks") precip_blocks = as_i();
    else if (key == "precip.heads") precip_heads = as_i();
    else if (key == "precip.steps") precip_steps = as_i();
    else if (key == "precip.batch") precip_batch = as_i();
    else if (key == "opt.lr_peak") lr_peak = as_d();
    else if (key == "opt.lr_warmup") lr_warmup = as_d();
    else if (key == "opt.lr_min") lr_min = as_d();
    else if (key == "opt.warmup_frac") warmup_frac = as_d();
    else if (key == "opt.weight_decay") weight_decay = as_d();
    else if (key == "opt.beta1") beta1 = as_d();
    else if (key == "opt.beta2") beta2 = as_d();
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(val));
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + val + "' for key '" + key + "'");
  }
}

inline std::string RunConfig::to_text() const {
  std::ostringstream o;
  o << "preset=" << preset << "\n";
  o << "grid.height=" << grid_height << "\ngrid.width=" << grid_width << "\n";
  o << "grid.tile=" << tile << "\ngrid.patch=" << patch << "\n";
  o << "time_window=" << time_window << "\n";
  o << "modalities=";
  for (std::size_t i = 0; i < modalities.size(); ++i) o << (i ? "," : "") << modalities[i];
  o << "\nchannels=";
  for (std::size_t i = 0; i < channels.size(); ++i) o << (i ? "," : "") << channels[i];
  o << "\ndata.hours=" << hours << "\ndata.train_hours=" << train_hours << "\n";
  o << "data.noise_std=" << noise_std << "\ndata.n_blobs=" << n_blobs << "\n";
  o << "data.advect_du=" << advect_du << "\ndata.advect_dv=" << advect_dv << "\n";
  o << "data.diffusion=" << diffusion << "\n";
  o << "orbit.swath_width=" << swath_width << "\norbit.period=" << orbit_period << "\n";
  o << "orbit.tilt=" << orbit_tilt << "\norbit.phases=";
  for (std::size_t i = 0; i < orbit_phases.size(); ++i) o << (i ? "," : "") << orbit_phases[i];
  o << "\nvae.dim=" << vae_dim << "\nvae.enc_blocks=" << vae_enc_blocks << "\n";
  o << "vae.dec_blocks=" << vae_dec_blocks << "\nvae.heads=" << vae_heads << "\n";
  o << "vae.kl_weight=" << kl_weight << "\nvae.obs_threshold=" << obs_threshold << "\n";
  o << "vae.steps=" << vae_steps << "\nvae.batch=" << vae_batch << "\n";
  o << "aida.enc_dim=" << aida_enc_dim << "\naida.enc_blocks=" << aida_enc_blocks << "\n";
  o << "aida.dec_dim=" << aida_dec_dim << "\naida.dec_blocks=" << aida_dec_blocks << "\n";
  o << "aida.heads=" << aida_heads << "\naida.keep=" << aida_keep << "\n";
  o << "aida.steps=" << aida_steps << "\naida.batch=" << aida_batch << "\n";
  o << "aiwp.dim=" << aiwp_dim << "\naiwp.blocks=" << aiwp_blocks << "\n";
  o << "aiwp.heads=" << aiwp_heads << "\naiwp.steps=" << aiwp_steps << "\n";
  o << "aiwp.batch=" << aiwp_batch << "\n";
  o << "precip.dim=" << precip_dim << "\nprecip.blocks=" << precip_blocks << "\n";
  o << "precip.heads=" << precip_heads << "\nprecip.steps=" << precip_steps << "\n";
  o << "precip.batch=" << precip_batch << "\n";
  o << "opt.lr_peak=" << lr_peak << "\nopt.lr_warmup=" << lr_warmup << "\n";
  o << "opt.lr_min=" << lr_min << "\nopt.warmup_frac=" << warmup_frac << "\n";
  o << "opt.weight_decay=" << weight_decay << "\nopt.beta1=" << beta1 << "\n";
  o << "opt.beta2=" << beta2 << "\n";
  o << "seed=" << seed << "\n";
  return o.str();
}

}  // namespace dawp
