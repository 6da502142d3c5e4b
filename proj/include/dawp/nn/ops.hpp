#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dawp/common.hpp"
#include "dawp/nn/matmul.hpp"
#include "dawp/nn/params.hpp"
#include "dawp/rng.hpp"
#include "dawp/tensor.hpp"

namespace dawp::nn {

// Each layer owns pointers into a ParamStore plus the forward cache it needs
// for the backward pass. Within one sample, forward is called once and
// backward immediately after (gradients accumulate into the store).

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------
template <typename T>
struct Linear {
  Param<T>*W = nullptr, *b = nullptr;
  Tensor<T> x_;  // cache

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& prefix, i64 in, i64 out, Rng& rng) {
    W = ps.add(prefix + ".w", {in, out});
    b = ps.add(prefix + ".b", {out});
    init_xavier(W, in, out, rng);
  }

  i64 in_dim() const { return W->value.shape[0]; }
  i64 out_dim() const { return W->value.shape[1]; }

  Tensor<T> forward(const Tensor<T>& x) {
    const i64 I = in_dim(), O = out_dim();
    if (x.shape.back() != I) throw ArgumentError("linear: last dim mismatch");
    const i64 R = x.numel() / I;
    x_ = x;
    Tensor<T> y({R, O});
    linear_forward(x.ptr(), W->value.ptr(), b->value.ptr(), y.ptr(), R, I, O);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const i64 I = in_dim(), O = out_dim();
    const i64 R = dy.numel() / O;
    // dW += x^T dy ; db += colsum dy ; dx = dy W^T
    gemm_tn_acc(x_.ptr(), dy.ptr(), W->grad.ptr(), I, R, O);
    for (i64 r = 0; r < R; ++r) {
      const T* row = dy.ptr() + r * O;
      for (i64 j = 0; j < O; ++j) b->grad[j] += row[j];
    }
    Tensor<T> wt({O, I});
    transpose(W->value.ptr(), wt.ptr(), I, O);
    Tensor<T> dx({R, I});
    gemm_nn_acc(dy.ptr(), wt.ptr(), dx.ptr(), R, O, I);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// LayerNorm (per last-dim vector; affine gain/bias)
// ---------------------------------------------------------------------------
template <typename T>
struct LayerNorm {
  Param<T>*g = nullptr, *b = nullptr;
  T eps = T(1e-5);
  Tensor<T> xhat_;
  std::vector<T> inv_std_;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& prefix, i64 dim, Rng&) {
    g = ps.add(prefix + ".g", {dim});
    b = ps.add(prefix + ".b", {dim});
    g->value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const i64 D = g->value.numel();
    if (x.shape.back() != D) throw ArgumentError("layer_norm: last dim mismatch");
    const i64 R = x.numel() / D;
    xhat_ = Tensor<T>({R, D});
    inv_std_.assign(static_cast<std::size_t>(R), T(0));
    Tensor<T> y({R, D});
    for (i64 r = 0; r < R; ++r) {
      const T* row = x.ptr() + r * D;
      T mu = T(0);
      for (i64 j = 0; j < D; ++j) mu += row[j];
      mu /= static_cast<T>(D);
      T var = T(0);
      for (i64 j = 0; j < D; ++j) {
        T d = row[j] - mu;
        var += d * d;
      }
      var /= static_cast<T>(D);
      T inv = T(1) / std::sqrt(var + eps);
      inv_std_[static_cast<std::size_t>(r)] = inv;
      T* xh = xhat_.ptr() + r * D;
      T* yr = y.ptr() + r * D;
      for (i64 j = 0; j < D; ++j) {
        xh[j] = (row[j] - mu) * inv;
        yr[j] = g->value[j] * xh[j] + b->value[j];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const i64 D = g->value.numel();
    const i64 R = dy.numel() / D;
    Tensor<T> dx({R, D});
    for (i64 r = 0; r < R; ++r) {
      const T* dyr = dy.ptr() + r * D;
      const T* xh = xhat_.ptr() + r * D;
      T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
      for (i64 j = 0; j < D; ++j) {
        T dxh = dyr[j] * g->value[j];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xh[j];
        g->grad[j] += dyr[j] * xh[j];
        b->grad[j] += dyr[j];
      }
      const T inv = inv_std_[static_cast<std::size_t>(r)];
      const T invD = T(1) / static_cast<T>(D);
      T* dxr = dx.ptr() + r * D;
      for (i64 j = 0; j < D; ++j) {
        T dxh = dyr[j] * g->value[j];
        dxr[j] = inv * (dxh - invD * sum_dxhat - xh[j] * invD * sum_dxhat_xhat);
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------
template <typename T>
inline T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
  const T phi = std::exp(-T(0.5) * x * x) * T(0.39894228040143267794);  // pdf
  const T Phi = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  return Phi + x * phi;
}

template <typename T>
struct Gelu {
  Tensor<T> x_;
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape);
    for (i64 i = 0; i < x.numel(); ++i) y[i] = gelu_scalar(x[i]);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (i64 i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * gelu_grad_scalar(x_[i]);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Feed-forward blocks (expand -> activate -> contract, hidden ratio 4)
// ---------------------------------------------------------------------------
template <typename T>
struct GeluFfn {
  Linear<T> up, down;
  Gelu<T> act;

  GeluFfn() = default;
  GeluFfn(ParamStore<T>& ps, const std::string& prefix, i64 dim, Rng& rng)
      : up(ps, prefix + ".up", dim, 4 * dim, rng), down(ps, prefix + ".down", 4 * dim, dim, rng) {}

  Tensor<T> forward(const Tensor<T>& x) { return down.forward(act.forward(up.forward(x))); }
  Tensor<T> backward(const Tensor<T>& dy) {
    return up.backward(act.backward(down.backward(dy)));
  }
};

/// FFN with SwiGLU: the expansion produces gate and value halves,
/// hidden = silu(gate) * value.
template <typename T>
struct SwigluFfn {
  Linear<T> up, down;  // up: dim -> 2*hidden
  i64 hidden = 0;
  Tensor<T> gate_, val_, silu_;

  SwigluFfn() = default;
  SwigluFfn(ParamStore<T>& ps, const std::string& prefix, i64 dim, Rng& rng)
      : up(ps, prefix + ".up", dim, 8 * dim, rng),
        down(ps, prefix + ".down", 4 * dim, dim, rng),
        hidden(4 * dim) {}

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> u = up.forward(x);  // [R, 2H]
    const i64 R = u.shape[0], H = hidden;
    gate_ = Tensor<T>({R, H});
    val_ = Tensor<T>({R, H});
    silu_ = Tensor<T>({R, H});
    Tensor<T> h({R, H});
    for (i64 r = 0; r < R; ++r) {
      const T* ur = u.ptr() + r * 2 * H;
      for (i64 j = 0; j < H; ++j) {
        T a = ur[j], bv = ur[H + j];
        T sig = T(1) / (T(1) + std::exp(-a));
        T s = a * sig;
        gate_.at2(r, j) = a;
        val_.at2(r, j) = bv;
        silu_.at2(r, j) = s;
        h.at2(r, j) = s * bv;
      }
    }
    return down.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dh = down.backward(dy);  // [R, H]
    const i64 R = dh.shape[0], H = hidden;
    Tensor<T> du({R, 2 * H});
    for (i64 r = 0; r < R; ++r) {
      T* dur = du.ptr() + r * 2 * H;
      for (i64 j = 0; j < H; ++j) {
        T a = gate_.at2(r, j), bv = val_.at2(r, j), s = silu_.at2(r, j);
        T dhv = dh.at2(r, j);
        T sig = T(1) / (T(1) + std::exp(-a));
        T dsilu = sig * (T(1) + a * (T(1) - sig));
        dur[j] = dhv * bv * dsilu;
        dur[H + j] = dhv * s;
      }
    }
    return up.backward(du);
  }
};

// ---------------------------------------------------------------------------
// Masked scaled-dot-product attention
// ---------------------------------------------------------------------------

/// Per-(query,key) visibility for one sequence. key_visible[j] == 0 hides key
/// j from every query; a query with inert[i] != 0 produces exactly zero output
/// and receives no gradient. Hidden keys get zero softmax weight exactly, so
/// visible outputs are bit-independent of hidden keys/values.
struct AttnMask {
  std::vector<std::uint8_t> key_visible;  // [L]
  std::vector<std::uint8_t> inert;        // [L] queries excluded from output

  static AttnMask all_visible(i64 L) {
    AttnMask m;
    m.key_visible.assign(static_cast<std::size_t>(L), 1);
    m.inert.assign(static_cast<std::size_t>(L), 0);
    return m;
  }
  static AttnMask from_visibility(const std::uint8_t* vis, i64 L) {
    AttnMask m;
    m.key_visible.assign(vis, vis + L);
    m.inert.resize(static_cast<std::size_t>(L));
    for (i64 i = 0; i < L; ++i) m.inert[static_cast<std::size_t>(i)] = vis[i] ? 0 : 1;
    return m;
  }
};

/// Core attention on already-projected q/k/v of one sequence: [L, D] each.
/// Softmax runs over visible keys only. Caches weights for backward.
template <typename T>
struct MaskedSdpa {
  i64 heads = 1;
  Tensor<T> q_, k_, v_, w_;  // w: [heads, L, L]
  std::vector<std::uint8_t> key_vis_, inert_;

  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const AttnMask& mask, i64 n_heads) {
    if (q.rank() != 2 || !q.same_shape(k) || !q.same_shape(v))
      throw ArgumentError("attention: q/k/v must share shape [L, D]");
    const i64 L = q.shape[0], D = q.shape[1];
    if (D % n_heads != 0) throw ArgumentError("attention: dim not divisible by heads");
    if (static_cast<i64>(mask.key_visible.size()) != L ||
        static_cast<i64>(mask.inert.size()) != L)
      throw ArgumentError("attention: mask length mismatch");
    i64 n_vis = 0;
    for (auto b : mask.key_visible) n_vis += b;
    for (i64 i = 0; i < L; ++i)
      if (!mask.inert[static_cast<std::size_t>(i)] && n_vis == 0)
        throw ContractError("attention: active query has no visible key");

    heads = n_heads;
    q_ = q;
    k_ = k;
    v_ = v;
    key_vis_ = mask.key_visible;
    inert_ = mask.inert;
    const i64 dh = D / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    w_ = Tensor<T>({heads, L, L});
    Tensor<T> out({L, D});

    for (i64 h = 0; h < heads; ++h) {
      const i64 off = h * dh;
      for (i64 i = 0; i < L; ++i) {
        if (inert_[static_cast<std::size_t>(i)]) continue;
        const T* qi = q.ptr() + i * D + off;
        // logits over visible keys, max-subtracted softmax
        T mx = -std::numeric_limits<T>::infinity();
        for (i64 j = 0; j < L; ++j) {
          if (!key_vis_[static_cast<std::size_t>(j)]) continue;
          const T* kj = k.ptr() + j * D + off;
          T dot = T(0);
          for (i64 d = 0; d < dh; ++d) dot += qi[d] * kj[d];
          dot *= scale;
          w_.ptr()[(h * L + i) * L + j] = dot;
          if (dot > mx) mx = dot;
        }
        T denom = T(0);
        for (i64 j = 0; j < L; ++j) {
          T* wij = &w_.ptr()[(h * L + i) * L + j];
          if (key_vis_[static_cast<std::size_t>(j)]) {
            *wij = std::exp(*wij - mx);
            denom += *wij;
          } else {
            *wij = T(0);  // hidden key: exactly zero weight
          }
        }
        T* orow = out.ptr() + i * D + off;
        for (i64 j = 0; j < L; ++j) {
          T w = w_.ptr()[(h * L + i) * L + j] / denom;
          w_.ptr()[(h * L + i) * L + j] = w;
          if (w == T(0)) continue;
          const T* vj = v.ptr() + j * D + off;
          for (i64 d = 0; d < dh; ++d) orow[d] += w * vj[d];
        }
      }
    }
    return out;
  }

  /// Returns dq; accumulates into dk/dv passed by reference.
  void backward(const Tensor<T>& dy, Tensor<T>& dq, Tensor<T>& dk, Tensor<T>& dv) {
    const i64 L = q_.shape[0], D = q_.shape[1];
    const i64 dh = D / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    dq = Tensor<T>({L, D});
    dk = Tensor<T>({L, D});
    dv = Tensor<T>({L, D});
    std::vector<T> dw(static_cast<std::size_t>(L));
    for (i64 h = 0; h < heads; ++h) {
      const i64 off = h * dh;
      for (i64 i = 0; i < L; ++i) {
        if (inert_[static_cast<std::size_t>(i)]) continue;  // zero output, zero grad
        const T* dyi = dy.ptr() + i * D + off;
        const T* wrow = w_.ptr() + (h * L + i) * L;
        // dv[j] += w[i,j] * dy_i ; dw[j] = dy_i . v_j
        T dot_sum = T(0);
        for (i64 j = 0; j < L; ++j) {
          if (wrow[j] == T(0)) {
            dw[static_cast<std::size_t>(j)] = T(0);
            continue;
          }
          const T* vj = v_.ptr() + j * D + off;
          T* dvj = dv.ptr() + j * D + off;
          T d = T(0);
          for (i64 d2 = 0; d2 < dh; ++d2) {
            d += dyi[d2] * vj[d2];
            dvj[d2] += wrow[j] * dyi[d2];
          }
          dw[static_cast<std::size_t>(j)] = d;
          dot_sum += d * wrow[j];
        }
        // softmax backward, then into q/k
        T* dqi = dq.ptr() + i * D + off;
        const T* qi = q_.ptr() + i * D + off;
        for (i64 j = 0; j < L; ++j) {
          if (wrow[j] == T(0)) continue;
          T dz = wrow[j] * (dw[static_cast<std::size_t>(j)] - dot_sum) * scale;
          const T* kj = k_.ptr() + j * D + off;
          T* dkj = dk.ptr() + j * D + off;
          for (i64 d2 = 0; d2 < dh; ++d2) {
            dqi[d2] += dz * kj[d2];
            dkj[d2] += dz * qi[d2];
          }
        }
      }
    }
  }
};

/// Free-function form of the core op (single sequence, pre-projected q/k/v).
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const AttnMask& mask, i64 heads) {
  MaskedSdpa<T> core;
  return core.forward(q, k, v, mask, heads);
}

/// Self-attention sublayer: shared q/k/v/out projections applied to B
/// independent sequences of length L packed as [B*L, D]. The optional
/// visibility array (length B*L) marks tokens hidden as keys and inert as
/// queries.
template <typename T>
struct SelfAttention {
  Linear<T> wq, wk, wv, wo;
  std::vector<MaskedSdpa<T>> cores_;
  i64 heads = 1, B_ = 0, L_ = 0;

  SelfAttention() = default;
  SelfAttention(ParamStore<T>& ps, const std::string& prefix, i64 dim, i64 n_heads, Rng& rng)
      : wq(ps, prefix + ".q", dim, dim, rng),
        wk(ps, prefix + ".k", dim, dim, rng),
        wv(ps, prefix + ".v", dim, dim, rng),
        wo(ps, prefix + ".o", dim, dim, rng),
        heads(n_heads) {}

  Tensor<T> forward(const Tensor<T>& x, i64 B, i64 L, const std::uint8_t* vis) {
    const i64 D = wq.in_dim();
    if (x.numel() != B * L * D) throw ArgumentError("self_attention: shape mismatch");
    B_ = B;
    L_ = L;
    Tensor<T> q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    cores_.assign(static_cast<std::size_t>(B), MaskedSdpa<T>());
    Tensor<T> ctx({B * L, D});
    Tensor<T> qb({L, D}), kb({L, D}), vb({L, D});
    for (i64 b = 0; b < B; ++b) {
      std::copy(q.ptr() + b * L * D, q.ptr() + (b + 1) * L * D, qb.ptr());
      std::copy(k.ptr() + b * L * D, k.ptr() + (b + 1) * L * D, kb.ptr());
      std::copy(v.ptr() + b * L * D, v.ptr() + (b + 1) * L * D, vb.ptr());
      AttnMask m = vis ? AttnMask::from_visibility(vis + b * L, L) : AttnMask::all_visible(L);
      Tensor<T> ob = cores_[static_cast<std::size_t>(b)].forward(qb, kb, vb, m, heads);
      std::copy(ob.ptr(), ob.ptr() + L * D, ctx.ptr() + b * L * D);
    }
    return wo.forward(ctx);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const i64 D = wq.in_dim();
    Tensor<T> dctx = wo.backward(dy);
    Tensor<T> dq({B_ * L_, D}), dk({B_ * L_, D}), dv({B_ * L_, D});
    Tensor<T> dyb({L_, D});
    for (i64 b = 0; b < B_; ++b) {
      std::copy(dctx.ptr() + b * L_ * D, dctx.ptr() + (b + 1) * L_ * D, dyb.ptr());
      Tensor<T> dqb, dkb, dvb;
      cores_[static_cast<std::size_t>(b)].backward(dyb, dqb, dkb, dvb);
      std::copy(dqb.ptr(), dqb.ptr() + L_ * D, dq.ptr() + b * L_ * D);
      std::copy(dkb.ptr(), dkb.ptr() + L_ * D, dk.ptr() + b * L_ * D);
      std::copy(dvb.ptr(), dvb.ptr() + L_ * D, dv.ptr() + b * L_ * D);
    }
    Tensor<T> dx = wq.backward(dq);
    Tensor<T> dxk = wk.backward(dk);
    Tensor<T> dxv = wv.backward(dv);
    for (i64 i = 0; i < dx.numel(); ++i) dx[i] += dxk[i] + dxv[i];
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x += Attn(LN(x)); x += FFN(LN(x)).
// ---------------------------------------------------------------------------
template <typename T, typename Ffn = GeluFfn<T>>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  SelfAttention<T> attn;
  Ffn ffn;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<T>& ps, const std::string& prefix, i64 dim, i64 heads, Rng& rng)
      : ln1(ps, prefix + ".ln1", dim, rng),
        ln2(ps, prefix + ".ln2", dim, rng),
        attn(ps, prefix + ".attn", dim, heads, rng),
        ffn(ps, prefix + ".ffn", dim, rng) {}

  Tensor<T> forward(const Tensor<T>& x, i64 B, i64 L, const std::uint8_t* vis) {
    Tensor<T> h = x;
    Tensor<T> a = attn.forward(ln1.forward(h), B, L, vis);
    for (i64 i = 0; i < h.numel(); ++i) h[i] += a[i];
    Tensor<T> f = ffn.forward(ln2.forward(h));
    for (i64 i = 0; i < h.numel(); ++i) h[i] += f[i];
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = dy;
    Tensor<T> df = ln2.backward(ffn.backward(d));
    for (i64 i = 0; i < d.numel(); ++i) d[i] += df[i];
    Tensor<T> da = ln1.backward(attn.backward(d));
    for (i64 i = 0; i < d.numel(); ++i) d[i] += da[i];
    return d;
  }
};

// ---------------------------------------------------------------------------
// Patch embedding: [C, S, S] -> [(S/P)^2, D] tokens plus learned positions.
// Token (i,j) depends only on patch (i,j).
// ---------------------------------------------------------------------------
template <typename T>
struct PatchEmbed {
  Linear<T> proj;
  Param<T>* pos = nullptr;
  i64 C = 0, S = 0, P = 0;

  PatchEmbed() = default;
  PatchEmbed(ParamStore<T>& ps, const std::string& prefix, i64 channels, i64 side, i64 patch,
             i64 dim, Rng& rng)
      : C(channels), S(side), P(patch) {
    if (side % patch != 0) throw ArgumentError("patch_embed: tile side not divisible by patch");
    const i64 n = (side / patch) * (side / patch);
    proj = Linear<T>(ps, prefix + ".proj", channels * patch * patch, dim, rng);
    pos = ps.add(prefix + ".pos", {n, dim});
    init_normal(pos, 0.02, rng);
  }

  i64 tokens() const { return (S / P) * (S / P); }

  /// Gather [N, P*P*C] patch rows from a [C, S, S] tile.
  Tensor<T> gather(const Tensor<T>& x) const {
    if (x.numel() != C * S * S) throw ArgumentError("patch_embed: input shape mismatch");
    const i64 G = S / P;
    Tensor<T> rows({G * G, C * P * P});
    for (i64 pi = 0; pi < G; ++pi)
      for (i64 pj = 0; pj < G; ++pj) {
        T* dst = rows.ptr() + (pi * G + pj) * C * P * P;
        for (i64 c = 0; c < C; ++c)
          for (i64 y = 0; y < P; ++y)
            for (i64 z = 0; z < P; ++z)
              dst[(c * P + y) * P + z] = x[(c * S + pi * P + y) * S + pj * P + z];
      }
    return rows;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = proj.forward(gather(x));
    for (i64 i = 0; i < y.numel(); ++i) y[i] += pos->value[i];
    return y;
  }

  /// Parameter gradients only; the tile itself is data.
  void backward(const Tensor<T>& dy) {
    for (i64 i = 0; i < dy.numel(); ++i) pos->grad[i] += dy[i];
    proj.backward(dy);
  }
};

// ---------------------------------------------------------------------------
// 3x3 same-padding convolution (tiny channel counts; used by the VAE output)
// ---------------------------------------------------------------------------
template <typename T>
struct Conv3x3 {
  Param<T>*W = nullptr, *b = nullptr;  // W [O, C, 3, 3]
  i64 C = 0, O = 0, S = 0;
  Tensor<T> x_;

  Conv3x3() = default;
  Conv3x3(ParamStore<T>& ps, const std::string& prefix, i64 in_ch, i64 out_ch, i64 side,
          Rng& rng)
      : C(in_ch), O(out_ch), S(side) {
    W = ps.add(prefix + ".w", {out_ch, in_ch, 3, 3});
    b = ps.add(prefix + ".b", {out_ch});
    init_xavier(W, in_ch * 9, out_ch * 9, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.numel() != C * S * S) throw ArgumentError("conv3x3: input shape mismatch");
    x_ = x;
    Tensor<T> y({O, S, S});
    for (i64 o = 0; o < O; ++o)
      for (i64 i = 0; i < S; ++i)
        for (i64 j = 0; j < S; ++j) {
          T acc = b->value[o];
          for (i64 c = 0; c < C; ++c)
            for (i64 dy = -1; dy <= 1; ++dy) {
              i64 yy = i + dy;
              if (yy < 0 || yy >= S) continue;
              for (i64 dx = -1; dx <= 1; ++dx) {
                i64 xx = j + dx;
                if (xx < 0 || xx >= S) continue;
                acc += W->value[((o * C + c) * 3 + (dy + 1)) * 3 + (dx + 1)] *
                       x[(c * S + yy) * S + xx];
              }
            }
          y[(o * S + i) * S + j] = acc;
        }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx({C, S, S});
    for (i64 o = 0; o < O; ++o)
      for (i64 i = 0; i < S; ++i)
        for (i64 j = 0; j < S; ++j) {
          const T g = dy[(o * S + i) * S + j];
          b->grad[o] += g;
          for (i64 c = 0; c < C; ++c)
            for (i64 ddy = -1; ddy <= 1; ++ddy) {
              i64 yy = i + ddy;
              if (yy < 0 || yy >= S) continue;
              for (i64 ddx = -1; ddx <= 1; ++ddx) {
                i64 xx = j + ddx;
                if (xx < 0 || xx >= S) continue;
                W->grad[((o * C + c) * 3 + (ddy + 1)) * 3 + (ddx + 1)] +=
                    g * x_[(c * S + yy) * S + xx];
                dx[(c * S + yy) * S + xx] +=
                    g * W->value[((o * C + c) * 3 + (ddy + 1)) * 3 + (ddx + 1)];
              }
            }
        }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Losses over targets with NaN-coded missing values
// ---------------------------------------------------------------------------
template <typename T>
struct LossResult {
  T value = T(0);
  Tensor<T> dpred;
};

/// Mean |pred - target| over cells where the target is non-NaN and (if given)
/// extra_mask is set. Gradient is exactly zero elsewhere.
template <typename T, typename Target>
LossResult<T> masked_mae_loss(const Tensor<T>& pred, const Target& target_data,
                              const std::uint8_t* extra_mask = nullptr) {
  if (pred.numel() != static_cast<i64>(target_data.size()))
    throw ArgumentError("masked_mae: shape mismatch");
  LossResult<T> res;
  res.dpred = Tensor<T>(pred.shape);
  i64 n = 0;
  T sum = T(0);
  for (i64 i = 0; i < pred.numel(); ++i) {
    T t = static_cast<T>(target_data[static_cast<std::size_t>(i)]);
    if (std::isnan(static_cast<double>(t))) continue;
    if (extra_mask && !extra_mask[i]) continue;
    sum += std::fabs(pred[i] - t);
    ++n;
  }
  if (n == 0) throw ContractError("masked_mae: no valid target cells");
  res.value = sum / static_cast<T>(n);
  const T inv = T(1) / static_cast<T>(n);
  for (i64 i = 0; i < pred.numel(); ++i) {
    T t = static_cast<T>(target_data[static_cast<std::size_t>(i)]);
    if (std::isnan(static_cast<double>(t))) continue;
    if (extra_mask && !extra_mask[i]) continue;
    T d = pred[i] - t;
    res.dpred[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  return res;
}

template <typename T, typename Target>
LossResult<T> masked_mse_loss(const Tensor<T>& pred, const Target& target_data,
                              const std::uint8_t* extra_mask = nullptr) {
  if (pred.numel() != static_cast<i64>(target_data.size()))
    throw ArgumentError("masked_mse: shape mismatch");
  LossResult<T> res;
  res.dpred = Tensor<T>(pred.shape);
  i64 n = 0;
  T sum = T(0);
  for (i64 i = 0; i < pred.numel(); ++i) {
    T t = static_cast<T>(target_data[static_cast<std::size_t>(i)]);
    if (std::isnan(static_cast<double>(t))) continue;
    if (extra_mask && !extra_mask[i]) continue;
    T d = pred[i] - t;
    sum += d * d;
    ++n;
  }
  if (n == 0) throw ContractError("masked_mse: no valid target cells");
  res.value = sum / static_cast<T>(n);
  const T inv = T(2) / static_cast<T>(n);
  for (i64 i = 0; i < pred.numel(); ++i) {
    T t = static_cast<T>(target_data[static_cast<std::size_t>(i)]);
    if (std::isnan(static_cast<double>(t))) continue;
    if (extra_mask && !extra_mask[i]) continue;
    res.dpred[i] = inv * (pred[i] - t);
  }
  return res;
}

/// KL(N(mu, sigma^2) || N(0,1)) summed over entries: 0.5 * sum(mu^2 + sigma^2
/// - 1 - 2 log sigma), parameterized by logvar. Row mask selects which token
/// rows participate.
template <typename T>
struct KlResult {
  T value = T(0);
  Tensor<T> dmu, dlogvar;
};

template <typename T>
KlResult<T> kl_loss(const Tensor<T>& mu, const Tensor<T>& logvar,
                    const std::uint8_t* row_mask = nullptr, i64 row_len = 0) {
  if (!mu.same_shape(logvar)) throw ArgumentError("kl: mu/logvar shape mismatch");
  if (row_mask && row_len <= 0) throw ArgumentError("kl: row mask without row length");
  KlResult<T> res;
  res.dmu = Tensor<T>(mu.shape);
  res.dlogvar = Tensor<T>(mu.shape);
  for (i64 i = 0; i < mu.numel(); ++i) {
    if (row_mask && !row_mask[i / row_len]) continue;
    T m = mu[i], lv = logvar[i];
    T ev = std::exp(lv);
    res.value += T(0.5) * (m * m + ev - T(1) - lv);
    res.dmu[i] = m;
    res.dlogvar[i] = T(0.5) * (ev - T(1));
  }
  return res;
}

}  // namespace dawp::nn
