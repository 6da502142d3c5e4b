#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/nn/adamw.hpp"
#include "dawp/nn/ops.hpp"
#include "dawp/rng.hpp"
#include "dawp/tensor.hpp"

namespace dawp {

struct VaeConfig {
  std::int64_t channels = 3;  // modality channels c; latent is 4c per token
  std::int64_t tile = 24;
  std::int64_t patch = 8;
  std::int64_t dim = 64;
  std::int64_t enc_blocks = 4;
  std::int64_t dec_blocks = 4;
  std::int64_t heads = 4;
  double obs_threshold = 0.10;

  std::int64_t tokens_per_side() const { return tile / patch; }
  std::int64_t tokens() const { return tokens_per_side() * tokens_per_side(); }
  std::int64_t latent_channels() const { return 4 * channels; }
};

/// Per-patch observed/missing flags for one tile. A patch counts as observed
/// when the fraction of non-NaN cells in it reaches the threshold.
struct PatchMask {
  std::vector<std::uint8_t> observed;  // [tokens]
  bool any() const {
    for (auto v : observed)
      if (v) return true;
    return false;
  }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : observed) n += v;
    return n;
  }
};

/// Latent tokens [N, 4c] with the posterior moments that produced them.
/// sigma > 0 always; in mean mode tokens == mu.
template <typename T>
struct LatentTile {
  Tensor<T> tokens;
  Tensor<T> mu;
  Tensor<T> sigma;
  PatchMask mask;
  bool all_missing = false;
};

enum class EncodeMode { kSample, kMean };

template <typename T>
PatchMask compute_patch_mask(const Tensor<T>& tile, std::int64_t C, std::int64_t S,
                             std::int64_t P, double threshold) {
  const std::int64_t G = S / P;
  PatchMask m;
  m.observed.assign(static_cast<std::size_t>(G * G), 0);
  for (std::int64_t pi = 0; pi < G; ++pi)
    for (std::int64_t pj = 0; pj < G; ++pj) {
      std::int64_t valid = 0;
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < P; ++y)
          for (std::int64_t x = 0; x < P; ++x)
            if (!std::isnan(static_cast<double>(
                    tile[(c * S + pi * P + y) * S + pj * P + x])))
              ++valid;
      double frac = static_cast<double>(valid) / static_cast<double>(C * P * P);
      m.observed[static_cast<std::size_t>(pi * G + pj)] = frac >= threshold ? 1 : 0;
    }
  return m;
}

/// Standalone loss form: masked reconstruction MAE over observed cells plus
/// kl_weight * KL(N(mu, sigma^2) || N(0,1)) with KL = 0.5 sum(mu^2 + sigma^2
/// - 1 - 2 log sigma).
template <typename T>
T vae_loss(const Tensor<T>& x, const Tensor<T>& recon, const Tensor<T>& mu,
           const Tensor<T>& sigma, double kl_weight,
           const std::uint8_t* cell_mask = nullptr) {
  if (!x.same_shape(recon)) throw ArgumentError("vae_loss: shape mismatch");
  if (!mu.same_shape(sigma)) throw ArgumentError("vae_loss: moments shape mismatch");
  for (std::int64_t i = 0; i < sigma.numel(); ++i)
    if (!(sigma[i] > T(0))) throw ContractError("vae_loss: sigma must be positive");
  auto rec = nn::masked_mae_loss(recon, x.data, cell_mask);
  T kl = T(0);
  for (std::int64_t i = 0; i < mu.numel(); ++i) {
    T s2 = sigma[i] * sigma[i];
    kl += T(0.5) * (mu[i] * mu[i] + s2 - T(1) - T(2) * std::log(sigma[i]));
  }
  return rec.value + static_cast<T>(kl_weight) * kl;
}

/// Mask ViT-VAE: patch-tokenizing encoder with masked attention, Gaussian
/// posterior per token (split mu / logvar, sampled via reparameterization),
/// and a dense decoder where missing patches enter as a learned embedding.
template <typename T>
class VaeModel {
 public:
  VaeConfig cfg;

  VaeModel(nn::ParamStore<T>& ps, const std::string& prefix, const VaeConfig& c, Rng& rng)
      : cfg(c),
        embed_(ps, prefix + ".patch", c.channels, c.tile, c.patch, c.dim, rng),
        to_moments_(ps, prefix + ".moments", 2 * c.dim, 8 * c.channels, rng),
        from_latent_(ps, prefix + ".expand", c.latent_channels(), c.dim, rng),
        unpatch_(ps, prefix + ".unpatch", c.dim, c.patch * c.patch * c.channels, rng),
        out_conv_(ps, prefix + ".out", c.channels, c.channels, c.tile, rng) {
    for (std::int64_t b = 0; b < c.enc_blocks; ++b)
      enc_.emplace_back(ps, prefix + ".enc" + std::to_string(b), c.dim, c.heads, rng);
    quant_a_ = nn::TransformerBlock<T>(ps, prefix + ".quant_a", c.dim, c.heads, rng);
    quant_b_ = nn::TransformerBlock<T>(ps, prefix + ".quant_b", c.dim, c.heads, rng);
    mask_embed_ = ps.add(prefix + ".mask_embed", {c.dim});
    nn::init_normal(mask_embed_, 0.02, rng);
    dec_pos_ = ps.add(prefix + ".dec_pos", {c.tokens(), c.dim});
    nn::init_normal(dec_pos_, 0.02, rng);
    for (std::int64_t b = 0; b < c.dec_blocks; ++b)
      dec_.emplace_back(ps, prefix + ".dec" + std::to_string(b), c.dim, c.heads, rng);
  }

  /// Normalized tile [C, S, S] with NaN-coded missing cells -> latent tokens.
  LatentTile<T> encode(const Tensor<T>& tile, EncodeMode mode, Rng* rng = nullptr) {
    const std::int64_t N = cfg.tokens(), Lc = cfg.latent_channels();
    LatentTile<T> out;
    out.mask = compute_patch_mask(tile, cfg.channels, cfg.tile, cfg.patch, cfg.obs_threshold);
    if (!out.mask.any()) {
      out.tokens = Tensor<T>({N, Lc});
      out.mu = Tensor<T>({N, Lc});
      out.sigma = Tensor<T>({N, Lc});
      out.sigma.fill(T(1));
      out.all_missing = true;
      return out;
    }
    if (mode == EncodeMode::kSample && !rng)
      throw ArgumentError("encode: sample mode needs an rng");

    Tensor<T> x = tile;
    for (auto& v : x.data)
      if (std::isnan(static_cast<double>(v))) v = T(0);  // zero-fill after normalization

    Tensor<T> tok = embed_.forward(x);
    const std::uint8_t* vis = out.mask.observed.data();
    for (auto& blk : enc_) tok = blk.forward(tok, 1, N, vis);
    Tensor<T> qa = quant_a_.forward(tok, 1, N, vis);
    Tensor<T> qb = quant_b_.forward(tok, 1, N, vis);
    Tensor<T> cat({N, 2 * cfg.dim});
    for (std::int64_t n = 0; n < N; ++n) {
      std::copy(qa.ptr() + n * cfg.dim, qa.ptr() + (n + 1) * cfg.dim,
                cat.ptr() + n * 2 * cfg.dim);
      std::copy(qb.ptr() + n * cfg.dim, qb.ptr() + (n + 1) * cfg.dim,
                cat.ptr() + n * 2 * cfg.dim + cfg.dim);
    }
    Tensor<T> moments = to_moments_.forward(cat);  // [N, 8c]
    out.mu = Tensor<T>({N, Lc});
    logvar_ = Tensor<T>({N, Lc});
    clamp_hit_.assign(static_cast<std::size_t>(N * Lc), 0);
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t d = 0; d < Lc; ++d) {
        out.mu.at2(n, d) = moments.at2(n, d);
        T lv = moments.at2(n, Lc + d);
        if (lv < T(-30) || lv > T(20)) {
          clamp_hit_[static_cast<std::size_t>(n * Lc + d)] = 1;
          lv = std::min(std::max(lv, T(-30)), T(20));
        }
        logvar_.at2(n, d) = lv;
      }
    out.sigma = Tensor<T>({N, Lc});
    eps_ = Tensor<T>({N, Lc});
    out.tokens = Tensor<T>({N, Lc});
    for (std::int64_t i = 0; i < out.mu.numel(); ++i) {
      out.sigma[i] = std::exp(T(0.5) * logvar_[i]);
      T e = mode == EncodeMode::kSample ? static_cast<T>(rng->normal()) : T(0);
      eps_[i] = e;
      out.tokens[i] = out.mu[i] + out.sigma[i] * e;
    }
    mu_cache_ = out.mu;
    sigma_cache_ = out.sigma;
    return out;
  }

  /// Latent tokens -> dense tile [C, S, S]. Missing patches are decoded from
  /// the shared mask embedding; all positions receive the decoder embedding.
  Tensor<T> decode(const Tensor<T>& tokens, const PatchMask& mask) {
    const std::int64_t N = cfg.tokens(), D = cfg.dim;
    if (tokens.shape != std::vector<std::int64_t>{N, cfg.latent_channels()})
      throw ArgumentError("decode: latent token shape mismatch");
    if (static_cast<std::int64_t>(mask.observed.size()) != N)
      throw ArgumentError("decode: mask length mismatch");
    dec_mask_ = mask;
    Tensor<T> h = from_latent_.forward(tokens);
    for (std::int64_t n = 0; n < N; ++n) {
      T* row = h.ptr() + n * D;
      if (!mask.observed[static_cast<std::size_t>(n)])
        for (std::int64_t d = 0; d < D; ++d) row[d] = mask_embed_->value[d];
      for (std::int64_t d = 0; d < D; ++d) row[d] += dec_pos_->value[n * D + d];
    }
    for (auto& blk : dec_) h = blk.forward(h, 1, N, nullptr);
    Tensor<T> pix = unpatch_.forward(h);  // [N, P*P*C]
    Tensor<T> img = scatter_tokens(pix);
    return out_conv_.forward(img);
  }

  /// Backward through decode; returns d(tokens) for observed rows (missing
  /// rows route their gradient into the mask embedding instead).
  Tensor<T> decode_backward(const Tensor<T>& d_tile) {
    const std::int64_t N = cfg.tokens(), D = cfg.dim;
    Tensor<T> d_img = out_conv_.backward(d_tile);
    Tensor<T> d_pix = gather_tokens(d_img);
    Tensor<T> dh = unpatch_.backward(d_pix);
    for (auto it = dec_.rbegin(); it != dec_.rend(); ++it) dh = it->backward(dh);
    for (std::int64_t n = 0; n < N; ++n) {
      T* row = dh.ptr() + n * D;
      for (std::int64_t d = 0; d < D; ++d) dec_pos_->grad[n * D + d] += row[d];
      if (!dec_mask_.observed[static_cast<std::size_t>(n)]) {
        for (std::int64_t d = 0; d < D; ++d) {
          mask_embed_->grad[d] += row[d];
          row[d] = T(0);
        }
      }
    }
    return from_latent_.backward(dh);
  }

  /// Backward through encode given d(tokens) plus gradients on the posterior
  /// moments (from the KL term): dmu_extra / dlogvar via chain through
  /// sigma = exp(logvar / 2).
  void encode_backward(const Tensor<T>& d_tokens, const Tensor<T>& dmu_extra,
                       const Tensor<T>& dsigma_extra) {
    const std::int64_t N = cfg.tokens(), Lc = cfg.latent_channels();
    Tensor<T> dmoments({N, 8 * cfg.channels});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t d = 0; d < Lc; ++d) {
        const std::int64_t i = n * Lc + d;
        T dmu = d_tokens[i] + dmu_extra[i];
        T dsig = d_tokens[i] * eps_[i] + dsigma_extra[i];
        T dlv = dsig * T(0.5) * sigma_cache_[i];  // d sigma / d logvar
        dmoments.at2(n, d) = dmu;
        dmoments.at2(n, Lc + d) = dlv;
      }
    Tensor<T> dcat = to_moments_.backward(dmoments);
    const std::int64_t D = cfg.dim;
    Tensor<T> dqa({N, D}), dqb({N, D});
    for (std::int64_t n = 0; n < N; ++n) {
      std::copy(dcat.ptr() + n * 2 * D, dcat.ptr() + n * 2 * D + D, dqa.ptr() + n * D);
      std::copy(dcat.ptr() + n * 2 * D + D, dcat.ptr() + (n + 1) * 2 * D, dqb.ptr() + n * D);
    }
    Tensor<T> dtok = quant_a_.backward(dqa);
    Tensor<T> dtok_b = quant_b_.backward(dqb);
    for (std::int64_t i = 0; i < dtok.numel(); ++i) dtok[i] += dtok_b[i];
    for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) dtok = it->backward(dtok);
    embed_.backward(dtok);
  }

  struct TrainStepResult {
    T recon_mae = T(0);
    T kl = T(0);
    bool skipped = false;
  };

  /// One sample's forward+backward: encode (sample mode), decode, masked MAE
  /// over observed cells in observed patches, KL over observed tokens.
  TrainStepResult train_step(const Tensor<T>& tile, double kl_weight, Rng& rng) {
    TrainStepResult res;
    LatentTile<T> lat = encode(tile, EncodeMode::kSample, &rng);
    if (lat.all_missing) {
      res.skipped = true;
      return res;
    }
    Tensor<T> recon = decode(lat.tokens, lat.mask);
    std::vector<std::uint8_t> cell_mask = observed_cell_mask(lat.mask);
    auto rec = nn::masked_mae_loss(recon, tile.data, cell_mask.data());
    // KL on observed token rows, parameterized by logvar
    auto klr = nn::kl_loss(mu_cache_, logvar_, lat.mask.observed.data(),
                           cfg.latent_channels());
    res.recon_mae = rec.value;
    res.kl = klr.value;

    Tensor<T> d_tokens = decode_backward(rec.dpred);
    // zero the latent gradient at missing rows (their tokens never reached
    // the decoder) and add the KL path
    const std::int64_t Lc = cfg.latent_channels();
    Tensor<T> dsigma_extra(mu_cache_.shape);
    Tensor<T> dmu_extra(mu_cache_.shape);
    for (std::int64_t n = 0; n < cfg.tokens(); ++n) {
      const bool obs = lat.mask.observed[static_cast<std::size_t>(n)];
      for (std::int64_t d = 0; d < Lc; ++d) {
        const std::int64_t i = n * Lc + d;
        if (!obs) {
          d_tokens[i] = T(0);
          continue;
        }
        dmu_extra[i] = static_cast<T>(kl_weight) * klr.dmu[i];
        // kl_loss was computed in logvar form; translate to sigma via chain
        // inside encode_backward, so hand it dlogvar / (dsigma/dlogvar).
        dsigma_extra[i] = static_cast<T>(kl_weight) * klr.dlogvar[i] /
                          (T(0.5) * sigma_cache_[i]);
      }
    }
    encode_backward(d_tokens, dmu_extra, dsigma_extra);
    return res;
  }

  /// Cell mask: non-NaN handling happens in the loss; this marks cells whose
  /// patch is observed.
  std::vector<std::uint8_t> observed_cell_mask(const PatchMask& mask) const {
    const std::int64_t C = cfg.channels, S = cfg.tile, P = cfg.patch, G = S / P;
    std::vector<std::uint8_t> cell(static_cast<std::size_t>(C * S * S), 0);
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < S; ++y)
        for (std::int64_t x = 0; x < S; ++x)
          cell[static_cast<std::size_t>((c * S + y) * S + x)] =
              mask.observed[static_cast<std::size_t>((y / P) * G + x / P)];
    return cell;
  }

 private:
  Tensor<T> scatter_tokens(const Tensor<T>& pix) const {
    const std::int64_t C = cfg.channels, S = cfg.tile, P = cfg.patch, G = S / P;
    Tensor<T> img({C, S, S});
    for (std::int64_t pi = 0; pi < G; ++pi)
      for (std::int64_t pj = 0; pj < G; ++pj) {
        const T* src = pix.ptr() + (pi * G + pj) * C * P * P;
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t y = 0; y < P; ++y)
            for (std::int64_t x = 0; x < P; ++x)
              img[(c * S + pi * P + y) * S + pj * P + x] = src[(c * P + y) * P + x];
      }
    return img;
  }
  Tensor<T> gather_tokens(const Tensor<T>& img) const {
    const std::int64_t C = cfg.channels, S = cfg.tile, P = cfg.patch, G = S / P;
    Tensor<T> pix({G * G, C * P * P});
    for (std::int64_t pi = 0; pi < G; ++pi)
      for (std::int64_t pj = 0; pj < G; ++pj) {
        T* dst = pix.ptr() + (pi * G + pj) * C * P * P;
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t y = 0; y < P; ++y)
            for (std::int64_t x = 0; x < P; ++x)
              dst[(c * P + y) * P + x] = img[(c * S + pi * P + y) * S + pj * P + x];
      }
    return pix;
  }

  nn::PatchEmbed<T> embed_;
  std::vector<nn::TransformerBlock<T>> enc_;
  nn::TransformerBlock<T> quant_a_, quant_b_;
  nn::Linear<T> to_moments_;
  nn::Linear<T> from_latent_;
  nn::Param<T>* mask_embed_ = nullptr;
  nn::Param<T>* dec_pos_ = nullptr;
  std::vector<nn::TransformerBlock<T>> dec_;
  nn::Linear<T> unpatch_;
  nn::Conv3x3<T> out_conv_;

  // caches for backward
  Tensor<T> logvar_, eps_, mu_cache_, sigma_cache_;
  PatchMask dec_mask_;
};

}  // namespace dawp
