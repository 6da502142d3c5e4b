#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/field.hpp"
#include "dawp/grid.hpp"
#include "dawp/tensor.hpp"

namespace dawp {

// ---------------------------------------------------------------------------
// Remapping and normalization
// ---------------------------------------------------------------------------

struct RemapResult {
  GriddedField field;            // [1, C, H, W]
  std::vector<std::int32_t> counts;  // [C, H, W], points accumulated per cell
};

/// Remap irregular swath points onto the grid: each cell holds the arithmetic
/// mean of the observations assigned to it (sum/count in 64-bit, divide once),
/// NaN where no observation landed. A point with a missing value in channel k
/// still contributes to the other channels.
inline RemapResult remap_with_counts(const SwathBatch& swath, const GridSpec& spec,
                                     std::int64_t hour = 0) {
  if (swath.channels < 1) throw ArgumentError("swath must have at least one channel");
  const std::int64_t C = swath.channels, H = spec.height, W = spec.width;
  std::vector<double> sums(static_cast<std::size_t>(C * H * W), 0.0);
  std::vector<std::int32_t> counts(static_cast<std::size_t>(C * H * W), 0);

  const std::int64_t n = swath.n_points();
  for (std::int64_t p = 0; p < n; ++p) {
    auto [row, col] = cell_of_latlon(swath.lats[p], swath.lons[p], spec);
    for (std::int64_t c = 0; c < C; ++c) {
      float v = swath.values[static_cast<std::size_t>(p * C + c)];
      if (std::isnan(v)) continue;
      std::size_t i = static_cast<std::size_t>((c * H + row) * W + col);
      sums[i] += static_cast<double>(v);
      counts[i] += 1;
    }
  }

  RemapResult out{GriddedField(swath.modality, C, H, W, {hour}), std::move(counts)};
  for (std::size_t i = 0; i < sums.size(); ++i)
    if (out.counts[i] > 0)
      out.field.data[i] = static_cast<float>(sums[i] / static_cast<double>(out.counts[i]));
  return out;
}

inline GriddedField remap(const SwathBatch& swath, const GridSpec& spec, std::int64_t hour = 0) {
  return remap_with_counts(swath, spec, hour).field;
}

/// Concatenate single-time fields along T, sorted by timestamp.
inline GriddedField merge_time(const std::vector<GriddedField>& frames) {
  if (frames.empty()) throw ArgumentError("merge_time needs at least one frame");
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (const auto& f : frames) {
    if (f.steps() != 1) throw ArgumentError("merge_time expects single-time frames");
    if (f.modality != frames[0].modality) throw ArgumentError("merge_time: modality mismatch");
    if (!f.same_layout(frames[0])) throw ArgumentError("merge_time: grid/channel mismatch");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frames[a].time_axis[0] < frames[b].time_axis[0];
  });
  std::vector<std::int64_t> times;
  for (auto i : order) times.push_back(frames[i].time_axis[0]);
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] == times[i - 1]) throw ArgumentError("merge_time: duplicate timestamp");

  GriddedField out(frames[0].modality, frames[0].channels, frames[0].height, frames[0].width,
                   times);
  const std::size_t frame_len = frames[0].data.size();
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy(frames[order[i]].data.begin(), frames[order[i]].data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * frame_len));
  return out;
}

/// Per-channel mean and population std over non-NaN cells (two passes, 64-bit).
inline NormStats fit_stats(const GriddedField& field) {
  NormStats stats;
  stats.modality = field.modality;
  const std::int64_t C = field.channels;
  const std::int64_t per_ch = field.height * field.width;
  for (std::int64_t c = 0; c < C; ++c) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t t = 0; t < field.steps(); ++t) {
      const float* p = field.data.data() + field.idx(t, c, 0, 0);
      for (std::int64_t i = 0; i < per_ch; ++i)
        if (!std::isnan(p[i])) {
          sum += p[i];
          ++n;
        }
    }
    if (n < 2)
      throw StatisticsError("channel " + std::to_string(c) + " of " + field.modality +
                            " has fewer than 2 observed cells");
    double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::int64_t t = 0; t < field.steps(); ++t) {
      const float* p = field.data.data() + field.idx(t, c, 0, 0);
      for (std::int64_t i = 0; i < per_ch; ++i)
        if (!std::isnan(p[i])) {
          double d = p[i] - mean;
          ss += d * d;
        }
    }
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd == 0.0)
      throw StatisticsError("channel " + std::to_string(c) + " of " + field.modality +
                            " has zero variance");
    stats.mean.push_back(static_cast<float>(mean));
    stats.std_dev.push_back(static_cast<float>(sd));
  }
  return stats;
}

inline void check_stats_match(const GriddedField& field, const NormStats& stats) {
  if (stats.modality != field.modality)
    throw ArgumentError("normalization stats are for modality '" + stats.modality +
                        "', field is '" + field.modality + "'");
  if (static_cast<std::int64_t>(stats.mean.size()) != field.channels ||
      static_cast<std::int64_t>(stats.std_dev.size()) != field.channels)
    throw ArgumentError("normalization stats channel count mismatch");
}

/// (x - mean) / std per channel; NaN cells stay NaN.
inline GriddedField normalize(const GriddedField& field, const NormStats& stats) {
  check_stats_match(field, stats);
  GriddedField out = field;
  const std::int64_t per_ch = field.height * field.width;
  for (std::int64_t t = 0; t < field.steps(); ++t)
    for (std::int64_t c = 0; c < field.channels; ++c) {
      float* p = out.data.data() + out.idx(t, c, 0, 0);
      const float m = stats.mean[static_cast<std::size_t>(c)];
      const float s = stats.std_dev[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < per_ch; ++i) p[i] = (p[i] - m) / s;
    }
  return out;
}

inline GriddedField denormalize(const GriddedField& field, const NormStats& stats) {
  check_stats_match(field, stats);
  GriddedField out = field;
  const std::int64_t per_ch = field.height * field.width;
  for (std::int64_t t = 0; t < field.steps(); ++t)
    for (std::int64_t c = 0; c < field.channels; ++c) {
      float* p = out.data.data() + out.idx(t, c, 0, 0);
      const float m = stats.mean[static_cast<std::size_t>(c)];
      const float s = stats.std_dev[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < per_ch; ++i) p[i] = p[i] * s + m;
    }
  return out;
}

// ---------------------------------------------------------------------------
// File formats. All multi-byte values little-endian; headers are key:value
// text lines. Layout: magic(8) | header_len u32 | header | payload.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  s.append(b, 4);
}

inline void append_f32(std::string& s, const float* p, std::size_t n) {
  // Little-endian hosts only; format is defined little-endian.
  s.append(reinterpret_cast<const char*>(p), n * sizeof(float));
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;
  explicit Reader(std::string b) : bytes(std::move(b)) {}

  void expect_magic(const char* magic) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0)
      throw FormatError("bad magic, expected " + std::string(magic, 8), 0);
    pos = 8;
  }
  std::uint32_t read_u32() {
    if (pos + 4 > bytes.size()) throw FormatError("truncated header length", pos);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string read_text(std::size_t n) {
    if (pos + n > bytes.size()) throw FormatError("truncated header", pos);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void read_f32(float* out, std::size_t n) {
    if (pos + n * sizeof(float) > bytes.size()) throw FormatError("truncated payload", pos);
    std::memcpy(out, bytes.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
  }
  void expect_end(const char* what) {
    if (pos != bytes.size())
      throw FormatError(std::string(what) + ": header/payload length mismatch", pos);
  }
};

inline std::map<std::string, std::string> parse_header(const std::string& text, std::size_t base) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError("header line without ':'", base);
    kv[line.substr(0, colon)] = line.substr(colon + 1);
  }
  return kv;
}

inline std::string require(const std::map<std::string, std::string>& kv, const std::string& key,
                           std::size_t base) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing header key '" + key + "'", base);
  return it->second;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing", 0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'", 0);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline std::string encode_grid(const GriddedField& f) {
  std::string header;
  header += "modality:" + f.modality + "\n";
  header += "channels:" + std::to_string(f.channels) + "\n";
  header += "height:" + std::to_string(f.height) + "\n";
  header += "width:" + std::to_string(f.width) + "\n";
  header += "time:" + std::to_string(f.steps()) + "\n";
  header += "timestamps:";
  for (std::int64_t t = 0; t < f.steps(); ++t) {
    if (t) header += ",";
    header += std::to_string(f.time_axis[static_cast<std::size_t>(t)]);
  }
  header += "\ndtype:f32le\nmissing:nan\n";

  std::string out("DAWPGRD1", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::append_f32(out, f.data.data(), f.data.size());
  return out;
}

inline GriddedField decode_grid(std::string bytes) {
  detail::Reader r(std::move(bytes));
  r.expect_magic("DAWPGRD1");
  std::uint32_t hlen = r.read_u32();
  std::size_t hbase = r.pos;
  auto kv = detail::parse_header(r.read_text(hlen), hbase);
  std::int64_t C = std::stoll(detail::require(kv, "channels", hbase));
  std::int64_t H = std::stoll(detail::require(kv, "height", hbase));
  std::int64_t W = std::stoll(detail::require(kv, "width", hbase));
  std::int64_t T = std::stoll(detail::require(kv, "time", hbase));
  std::vector<std::int64_t> times;
  {
    std::istringstream ts(detail::require(kv, "timestamps", hbase));
    std::string tok;
    while (std::getline(ts, tok, ',')) times.push_back(std::stoll(tok));
  }
  if (static_cast<std::int64_t>(times.size()) != T)
    throw FormatError("timestamp count does not match time", hbase);
  if (detail::require(kv, "dtype", hbase) != "f32le")
    throw FormatError("unsupported dtype", hbase);
  GriddedField f(detail::require(kv, "modality", hbase), C, H, W, times);
  r.read_f32(f.data.data(), f.data.size());
  r.expect_end("grid file");
  return f;
}

inline void write_grid(const std::string& path, const GriddedField& f) {
  detail::write_file(path, encode_grid(f));
}
inline GriddedField read_grid(const std::string& path) {
  return decode_grid(detail::read_file(path));
}

inline std::string encode_swath(const SwathBatch& s) {
  std::string header;
  header += "modality:" + s.modality + "\n";
  header += "channels:" + std::to_string(s.channels) + "\n";
  header += "n_points:" + std::to_string(s.n_points()) + "\n";
  std::string out("DAWPSWT1", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  const std::int64_t n = s.n_points();
  for (std::int64_t i = 0; i < n; ++i) {
    detail::append_f32(out, &s.lats[static_cast<std::size_t>(i)], 1);
    detail::append_f32(out, &s.lons[static_cast<std::size_t>(i)], 1);
    detail::append_f32(out, s.values.data() + i * s.channels,
                       static_cast<std::size_t>(s.channels));
  }
  return out;
}

inline SwathBatch decode_swath(std::string bytes) {
  detail::Reader r(std::move(bytes));
  r.expect_magic("DAWPSWT1");
  std::uint32_t hlen = r.read_u32();
  std::size_t hbase = r.pos;
  auto kv = detail::parse_header(r.read_text(hlen), hbase);
  SwathBatch s;
  s.modality = detail::require(kv, "modality", hbase);
  s.channels = std::stoll(detail::require(kv, "channels", hbase));
  std::int64_t n = std::stoll(detail::require(kv, "n_points", hbase));
  if (s.channels < 1) throw FormatError("swath channels must be >= 1", hbase);
  s.lats.resize(static_cast<std::size_t>(n));
  s.lons.resize(static_cast<std::size_t>(n));
  s.values.resize(static_cast<std::size_t>(n * s.channels));
  for (std::int64_t i = 0; i < n; ++i) {
    r.read_f32(&s.lats[static_cast<std::size_t>(i)], 1);
    r.read_f32(&s.lons[static_cast<std::size_t>(i)], 1);
    r.read_f32(s.values.data() + i * s.channels, static_cast<std::size_t>(s.channels));
  }
  r.expect_end("swath file");
  return s;
}

inline void write_swath(const std::string& path, const SwathBatch& s) {
  detail::write_file(path, encode_swath(s));
}
inline SwathBatch read_swath(const std::string& path) {
  return decode_swath(detail::read_file(path));
}

/// Named float arrays: the shared checkpoint representation for all networks.
struct NamedArrays {
  std::vector<std::string> names;
  std::vector<std::vector<std::int64_t>> shapes;
  std::vector<std::vector<float>> values;

  void add(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> vals) {
    names.push_back(name);
    shapes.push_back(std::move(shape));
    values.push_back(std::move(vals));
  }
  const std::vector<float>* find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &values[i];
    return nullptr;
  }
};

inline std::string encode_checkpoint(const NamedArrays& a) {
  std::string header;
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    header += a.names[i] + " " + std::to_string(a.shapes[i].size());
    for (auto d : a.shapes[i]) header += " " + std::to_string(d);
    header += "\n";
  }
  std::string out("DAWPCKPT", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& v : a.values) detail::append_f32(out, v.data(), v.size());
  return out;
}

inline NamedArrays decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  r.expect_magic("DAWPCKPT");
  std::uint32_t hlen = r.read_u32();
  std::size_t hbase = r.pos;
  std::istringstream manifest(r.read_text(hlen));
  NamedArrays a;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    std::int64_t rank;
    if (!(ls >> name >> rank)) throw FormatError("bad manifest line '" + line + "'", hbase);
    std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
    std::int64_t numel = 1;
    for (auto& d : shape) {
      if (!(ls >> d)) throw FormatError("bad manifest dims for '" + name + "'", hbase);
      numel *= d;
    }
    a.names.push_back(name);
    a.shapes.push_back(std::move(shape));
    a.values.emplace_back(static_cast<std::size_t>(numel));
  }
  for (auto& v : a.values) r.read_f32(v.data(), v.size());
  r.expect_end("checkpoint file");
  return a;
}

inline void write_checkpoint(const std::string& path, const NamedArrays& a) {
  detail::write_file(path, encode_checkpoint(a));
}
inline NamedArrays read_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace dawp
