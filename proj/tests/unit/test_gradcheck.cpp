#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dawp/nn/gradcheck.hpp"
#include "dawp/nn/ops.hpp"

using namespace dawp;
using namespace dawp::nn;

namespace {

// Scalar objective from a tensor output: fixed random projection.
struct Probe {
  Tensor<double> r;
  explicit Probe(const std::vector<std::int64_t>& shape, Rng& rng) : r(shape) {
    for (auto& v : r.data) v = rng.normal();
  }
  double loss(const Tensor<double>& y) const {
    double s = 0;
    for (std::int64_t i = 0; i < y.numel(); ++i) s += r[i] * y[i];
    return s;
  }
  Tensor<double> grad() const { return r; }
};

}  // namespace

TEST_CASE("gradcheck: linear layer is exact to 1e-8") {
  ParamStore<double> ps;
  Rng rng(31);
  Linear<double> lin(ps, "lin", 6, 5, rng);
  auto* x = ps.add("x", {4, 6});
  init_normal(x, 1.0, rng);
  Probe probe({4, 5}, rng);

  auto fwd = [&] { return probe.loss(lin.forward(x->value)); };
  auto bwd = [&] {
    lin.forward(x->value);
    auto dx = lin.backward(probe.grad());
    for (std::int64_t i = 0; i < dx.numel(); ++i) x->grad[i] += dx[i];
  };
  auto rep = grad_check(ps, fwd, bwd, 1e-5);
  INFO(rep.worst_param << "[" << rep.worst_index << "] a=" << rep.analytic
                       << " n=" << rep.numeric);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("gradcheck: layer_norm") {
  ParamStore<double> ps;
  Rng rng(32);
  LayerNorm<double> ln(ps, "ln", 12, rng);
  auto* x = ps.add("x", {5, 12});
  init_normal(x, 2.0, rng);
  Probe probe({5, 12}, rng);
  auto fwd = [&] { return probe.loss(ln.forward(x->value)); };
  auto bwd = [&] {
    ln.forward(x->value);
    auto dx = ln.backward(probe.grad());
    for (std::int64_t i = 0; i < dx.numel(); ++i) x->grad[i] += dx[i];
  };
  auto rep = grad_check(ps, fwd, bwd);
  INFO(rep.worst_param << " a=" << rep.analytic << " n=" << rep.numeric);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: gelu ffn and swiglu ffn") {
  for (int variant = 0; variant < 2; ++variant) {
    ParamStore<double> ps;
    Rng rng(33 + variant);
    auto* x = ps.add("x", {3, 8});
    init_normal(x, 1.0, rng);
    Probe probe({3, 8}, rng);
    GeluFfn<double> gf;
    SwigluFfn<double> sf;
    if (variant == 0)
      gf = GeluFfn<double>(ps, "ffn", 8, rng);
    else
      sf = SwigluFfn<double>(ps, "ffn", 8, rng);

    auto fwd = [&] {
      return probe.loss(variant == 0 ? gf.forward(x->value) : sf.forward(x->value));
    };
    auto bwd = [&] {
      Tensor<double> dx;
      if (variant == 0) {
        gf.forward(x->value);
        dx = gf.backward(probe.grad());
      } else {
        sf.forward(x->value);
        dx = sf.backward(probe.grad());
      }
      for (std::int64_t i = 0; i < dx.numel(); ++i) x->grad[i] += dx[i];
    };
    auto rep = grad_check(ps, fwd, bwd);
    INFO("variant " << variant << ": " << rep.worst_param << " a=" << rep.analytic
                    << " n=" << rep.numeric);
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("gradcheck: full masked attention block at D=16") {
  ParamStore<double> ps;
  Rng rng(35);
  TransformerBlock<double> blk(ps, "blk", 16, 4, rng);
  auto* x = ps.add("x", {6, 16});
  init_normal(x, 1.0, rng);
  std::vector<std::uint8_t> vis = {1, 1, 0, 1, 0, 1};
  Probe probe({6, 16}, rng);
  auto project_visible = [&](const Tensor<double>& y) {
    // only visible-token outputs enter the objective (hidden rows are inert)
    double s = 0;
    for (std::int64_t rr = 0; rr < 6; ++rr) {
      if (!vis[static_cast<std::size_t>(rr)]) continue;
      for (std::int64_t d = 0; d < 16; ++d) s += probe.r.at2(rr, d) * y.at2(rr, d);
    }
    return s;
  };
  auto fwd = [&] { return project_visible(blk.forward(x->value, 1, 6, vis.data())); };
  auto bwd = [&] {
    blk.forward(x->value, 1, 6, vis.data());
    Tensor<double> dy({6, 16});
    for (std::int64_t rr = 0; rr < 6; ++rr)
      if (vis[static_cast<std::size_t>(rr)])
        for (std::int64_t d = 0; d < 16; ++d) dy.at2(rr, d) = probe.r.at2(rr, d);
    auto dx = blk.backward(dy);
    for (std::int64_t i = 0; i < dx.numel(); ++i) x->grad[i] += dx[i];
  };
  auto rep = grad_check(ps, fwd, bwd);
  INFO(rep.worst_param << "[" << rep.worst_index << "] a=" << rep.analytic
                       << " n=" << rep.numeric);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: patch embed and conv3x3") {
  ParamStore<double> ps;
  Rng rng(36);
  PatchEmbed<double> pe(ps, "pe", 2, 8, 4, 6, rng);
  auto xt = Tensor<double>({2, 8, 8});
  for (auto& v : xt.data) v = rng.normal();
  Probe probe({4, 6}, rng);
  auto fwd = [&] { return probe.loss(pe.forward(xt)); };
  auto bwd = [&] {
    pe.forward(xt);
    pe.backward(probe.grad());
  };
  auto rep = grad_check(ps, fwd, bwd);
  CHECK(rep.max_rel_err < 1e-5);

  ParamStore<double> ps2;
  Conv3x3<double> conv(ps2, "conv", 2, 3, 6, rng);
  auto* x = ps2.add("x", {2, 6, 6});
  init_normal(x, 1.0, rng);
  Probe probe2({3, 6, 6}, rng);
  auto fwd2 = [&] { return probe2.loss(conv.forward(x->value)); };
  auto bwd2 = [&] {
    conv.forward(x->value);
    auto dx = conv.backward(probe2.grad());
    for (std::int64_t i = 0; i < dx.numel(); ++i) x->grad[i] += dx[i];
  };
  auto rep2 = grad_check(ps2, fwd2, bwd2);
  INFO(rep2.worst_param << " a=" << rep2.analytic << " n=" << rep2.numeric);
  CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: masked mse/mae and kl losses") {
  ParamStore<double> ps;
  Rng rng(37);
  auto* pred = ps.add("pred", {12});
  init_normal(pred, 1.0, rng);
  std::vector<double> target(12);
  for (auto& t : target) t = rng.normal() + 4.0;  // keep |pred - target| away from 0
  target[3] = std::numeric_limits<double>::quiet_NaN();
  target[7] = std::numeric_limits<double>::quiet_NaN();

  auto fwd = [&] { return masked_mae_loss(pred->value, target).value; };
  auto bwd = [&] {
    auto res = masked_mae_loss(pred->value, target);
    for (std::int64_t i = 0; i < 12; ++i) pred->grad[i] += res.dpred[i];
  };
  auto rep = grad_check(ps, fwd, bwd, 1e-6);
  CHECK(rep.max_rel_err < 1e-5);
  CHECK(pred->grad[3] == 0.0);  // exactly zero at NaN targets

  ParamStore<double> ps2;
  auto* mu = ps2.add("mu", {3, 4});
  auto* lv = ps2.add("logvar", {3, 4});
  init_normal(mu, 1.0, rng);
  init_normal(lv, 0.3, rng);
  auto fwd2 = [&] { return kl_loss(mu->value, lv->value).value; };
  auto bwd2 = [&] {
    auto res = kl_loss(mu->value, lv->value);
    for (std::int64_t i = 0; i < 12; ++i) {
      mu->grad[i] += res.dmu[i];
      lv->grad[i] += res.dlogvar[i];
    }
  };
  auto rep2 = grad_check(ps2, fwd2, bwd2);
  CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: deliberately corrupted gradient trips the harness") {
  ParamStore<double> ps;
  Rng rng(38);
  Linear<double> lin(ps, "lin", 4, 4, rng);
  auto* x = ps.add("x", {2, 4});
  init_normal(x, 1.0, rng);
  Probe probe({2, 4}, rng);
  auto fwd = [&] { return probe.loss(lin.forward(x->value)); };
  auto bwd = [&] {
    lin.forward(x->value);
    lin.backward(probe.grad());
    // corrupt: double every weight gradient
    for (std::int64_t i = 0; i < lin.W->grad.numel(); ++i) lin.W->grad[i] *= 2.0;
  };
  auto rep = grad_check(ps, fwd, bwd);
  CHECK(rep.max_rel_err > 1e-2);
}
