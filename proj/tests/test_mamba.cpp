#include <gtest/gtest.h>

#include <cmath>

#include "naive_ref.hpp"
#include "srm/mamba.hpp"
#include "test_util.hpp"

using namespace srm;

namespace {

// Evaluates the scan inputs (delta, B, C, A) the same way selective_scan
// does, but through the naive reference kernels.
std::vector<double> reference_selective_scan(const std::vector<double>& u, std::size_t l, const SsmParams& p,
                                             srmtest::MacCounter* counter = nullptr) {
    const std::size_t d = p.d_model, n = p.d_state;
    std::vector<double> delta = srmtest::naive_linear(u, l, d, p.w_delta.values(), d, &p.b_delta.values(), counter);
    for (double& x : delta) x = srmtest::softplus_ref(x);
    std::vector<double> b = srmtest::naive_linear(u, l, d, p.w_b.values(), n, nullptr, counter);
    std::vector<double> c = srmtest::naive_linear(u, l, d, p.w_c.values(), n, nullptr, counter);
    std::vector<double> a(p.a_log.values().size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(p.a_log.values()[i]);
    return srmtest::naive_scan(u, delta, b, c, a, p.d_skip.values(), l, d, n, counter);
}

}  // namespace

TEST(SelectiveScan, ZeroInputGivesZeroOutput) {
    Rng rng(1);
    SsmParams p = SsmParams::create(3, 4, rng);
    std::fill(p.b_delta.values().begin(), p.b_delta.values().end(), 0.0);
    Tensor u = Tensor::zeros({5, 3});
    Tensor y = selective_scan(u, p);
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SelectiveScan, HandRecurrenceTwoSteps) {
    // Forced Abar = 0.5, Bbar = 1, C = 1, D = 0 on u = [1, 1]:
    // h = [1, 1.5], y = [1, 1.5].
    SsmParams p;
    p.d_model = 1;
    p.d_state = 1;
    p.a_log = Tensor::from({1, 1}, {std::log(std::log(2.0))});   // A = -ln 2
    p.d_skip = Tensor::from({1}, {0.0});
    p.w_delta = Tensor::from({1, 1}, {0.0});
    p.b_delta = Tensor::from({1}, {std::log(std::expm1(1.0))});  // softplus -> 1
    p.w_b = Tensor::from({1, 1}, {1.0});
    p.w_c = Tensor::from({1, 1}, {1.0});
    Tensor u = Tensor::from({2, 1}, {1.0, 1.0});
    Tensor y = selective_scan(u, p);
    EXPECT_NEAR(y.values()[0], 1.0, 1e-12);
    EXPECT_NEAR(y.values()[1], 1.5, 1e-12);
}

TEST(SelectiveScan, MatchesNaiveRecurrence) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const std::size_t l = 1 + rng.index(64);
        const std::size_t d = 1 + rng.index(8);
        const std::size_t n = 1 + rng.index(8);
        SsmParams p = SsmParams::create(d, n, rng);
        Tensor u = Tensor::rand_uniform({l, d}, rng, -1, 1);
        Tensor y = selective_scan(u, p);
        const std::vector<double> ref = reference_selective_scan(u.values(), l, p);
        ASSERT_EQ(ref.size(), y.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.values()[i], ref[i], 1e-12);
    }
}

TEST(SelectiveScan, SeventeenTokenCase) {
    Rng rng(99);
    SsmParams p = SsmParams::create(4, 3, rng);
    Tensor u = Tensor::rand_uniform({17, 4}, rng, -1, 1);
    Tensor y = selective_scan(u, p);
    const std::vector<double> ref = reference_selective_scan(u.values(), 17, p);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.values()[i], ref[i], 1e-12);
}

TEST(SelectiveScan, GradCheck) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        SsmParams p = SsmParams::create(2, 2, rng);
        Tensor u = srmtest::random_tensor({5, 2}, rng);
        EXPECT_LT(srmtest::grad_check([&] { return selective_scan(u, p); },
                                      {u, p.a_log, p.d_skip, p.w_delta, p.b_delta, p.w_b, p.w_c}, rng),
                  1e-6);
    }
}

TEST(SelectiveScan, StabilityWithNegativeA) {
    Rng rng(7);
    SsmParams p = SsmParams::create(3, 4, rng);
    Tensor u = Tensor::rand_uniform({12, 3}, rng, -2, 2);
    // |Abar| < 1 for every token, channel and state.
    const std::vector<double> delta =
        srmtest::naive_linear(u.values(), 12, 3, p.w_delta.values(), 3, &p.b_delta.values());
    for (std::size_t t = 0; t < 12; ++t) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double dl = srmtest::softplus_ref(delta[t * 3 + c]);
            EXPECT_GT(dl, 0.0);
            for (std::size_t s = 0; s < 4; ++s) {
                const double a = -std::exp(p.a_log.values()[c * 4 + s]);
                EXPECT_LT(std::abs(std::exp(dl * a)), 1.0);
            }
        }
    }
    // Constant input: successive hidden-state deltas shrink geometrically.
    const std::size_t l = 40, d = 1, n = 1;
    const double a = -0.7, dl = 0.9, b = 1.3, uv = 0.8;
    double h = 0.0, prev_diff = -1.0;
    for (std::size_t t = 0; t < l; ++t) {
        const double hn = std::exp(dl * a) * h + dl * b * uv;
        const double diff = std::abs(hn - h);
        if (t > 3) {
            EXPECT_LT(diff, prev_diff);
        }
        prev_diff = diff;
        h = hn;
        (void)d;
        (void)n;
    }
}

TEST(MambaBlock, ZeroInputZeroBiasGivesZero) {
    Rng rng(2);
    MambaBlockSpec spec;
    spec.d_model = 4;
    spec.d_state = 4;
    MambaBlock m = MambaBlock::create(spec, rng);
    m.zero_biases();
    Tensor z = Tensor::zeros({6, 4});
    Tensor y = m.forward(z);
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(MambaBlock, ShapePreserving) {
    Rng rng(3);
    MambaBlockSpec spec;
    spec.d_model = 32;
    MambaBlock m = MambaBlock::create(spec, rng);
    Tensor z = Tensor::rand_uniform({64, 32}, rng, -1, 1);
    EXPECT_EQ(m.forward(z).shape(), (Shape{64, 32}));
}

TEST(MambaBlock, CausalityUnderPerturbation) {
    Rng rng(4);
    MambaBlockSpec spec;
    spec.d_model = 3;
    spec.d_state = 4;
    MambaBlock m = MambaBlock::create(spec, rng);
    const std::size_t l = 10;
    Tensor z = Tensor::rand_uniform({l, 3}, rng, -1, 1);
    NoGradGuard ng;
    Tensor base = m.forward(z);
    for (std::size_t pos : {std::size_t(3), std::size_t(7)}) {
        Tensor zp = Tensor::from(z.shape(), z.values());
        zp.data()[pos * 3 + 1] += 0.25;
        Tensor pert = m.forward(zp);
        bool later_changed = false;
        for (std::size_t t = 0; t < l; ++t) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double diff = std::abs(pert.values()[t * 3 + c] - base.values()[t * 3 + c]);
                if (t < pos) {
                    EXPECT_EQ(diff, 0.0) << "output at t=" << t << " depends on position " << pos;
                } else if (diff > 0.0) {
                    later_changed = true;
                }
            }
        }
        EXPECT_TRUE(later_changed);
    }
}

TEST(MambaBlock, GradCheck) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        MambaBlockSpec spec;
        spec.d_model = 2;
        spec.d_state = 2;
        spec.dconv = 2;
        MambaBlock m = MambaBlock::create(spec, rng);
        Tensor z = srmtest::random_tensor({4, 2}, rng);
        std::vector<Tensor> inputs{z};
        m.params("m", [&inputs](const std::string&, Tensor& t) { inputs.push_back(t); });
        EXPECT_LT(srmtest::grad_check([&] { return m.forward(z); }, inputs, rng), 1e-6);
    }
}

// Layout round trip: un-flatten(flatten(x)) == x for all three orderings.
TEST(Tom, FlattenRoundTrips) {
    Rng rng(5);
    Tensor vol = Tensor::rand_uniform({3, 2, 4, 5}, rng, -1, 1);  // [C,D,H,W]
    const std::size_t l = 2 * 4 * 5;
    {
        Tensor z = reshape(permute(vol, {1, 2, 3, 0}), {l, 3});
        Tensor back = permute(reshape(z, {2, 4, 5, 3}), {3, 0, 1, 2});
        EXPECT_EQ(back.values(), vol.values());
    }
    {
        Tensor z = reshape(permute(vol, {2, 3, 1, 0}), {l, 3});
        Tensor back = permute(reshape(z, {4, 5, 2, 3}), {3, 2, 0, 1});
        EXPECT_EQ(back.values(), vol.values());
    }
    {
        Tensor z = reshape(permute(vol, {3, 1, 2, 0}), {l, 3});
        Tensor back = permute(reshape(z, {5, 2, 4, 3}), {3, 1, 2, 0});
        EXPECT_EQ(back.values(), vol.values());
    }
}

TEST(Tom, ZeroInputZeroBiasGivesZero) {
    Rng rng(6);
    MambaBlockSpec spec;
    spec.d_model = 3;
    spec.d_state = 2;
    TriMamba t = TriMamba::create(spec, rng);
    t.zero_biases();
    Tensor x = Tensor::zeros({1, 3, 2, 2, 2});
    Tensor y = t.forward(x);
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Tom, ShapePreserving) {
    Rng rng(7);
    MambaBlockSpec spec;
    spec.d_model = 32;
    TriMamba t = TriMamba::create(spec, rng);
    Tensor x = Tensor::rand_uniform({1, 32, 4, 4, 4}, rng, -1, 1);
    EXPECT_EQ(t.forward(x).shape(), x.shape());
}

// The three branch contributions rebuilt with hand-rolled index arithmetic
// (no library permute/flip) must reproduce the layer output exactly.
TEST(Tom, ManualFlattenOracle) {
    Rng rng(8);
    MambaBlockSpec spec;
    spec.d_model = 3;
    spec.d_state = 2;
    const std::size_t C = 3, D = 2, H = 3, W = 2, L = D * H * W;
    TriMamba tom = TriMamba::create(spec, rng);
    Tensor x = Tensor::rand_uniform({1, C, D, H, W}, rng, -1, 1);

    NoGradGuard ng;
    Tensor out = tom.forward(x);

    auto xat = [&](std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
        return x.values()[((c * D + d) * H + h) * W + w];
    };
    auto run_branch = [&](const MambaBlock& m, const NormLayer& ln, const std::vector<double>& tokens) {
        Tensor z = Tensor::from({L, C}, tokens);
        return m.forward(ln.forward(z)).values();
    };

    // forward: token index d*H*W + h*W + w
    std::vector<double> zf(L * C), zr(L * C), zs(L * C);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t w = 0; w < W; ++w) {
                const std::size_t tf = (d * H + h) * W + w;
                const std::size_t ts = (h * W + w) * D + d;  // depth fastest
                for (std::size_t c = 0; c < C; ++c) {
                    zf[tf * C + c] = xat(c, d, h, w);
                    zr[(L - 1 - tf) * C + c] = xat(c, d, h, w);
                    zs[ts * C + c] = xat(c, d, h, w);
                }
            }
        }
    }
    const std::vector<double> yf = run_branch(tom.branch_f, tom.ln_f, zf);
    const std::vector<double> yr = run_branch(tom.branch_r, tom.ln_r, zr);
    const std::vector<double> ys = run_branch(tom.branch_s, tom.ln_s, zs);

    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t w = 0; w < W; ++w) {
                const std::size_t tf = (d * H + h) * W + w;
                const std::size_t ts = (h * W + w) * D + d;
                for (std::size_t c = 0; c < C; ++c) {
                    const double expect = yf[tf * C + c] + yr[(L - 1 - tf) * C + c] + ys[ts * C + c];
                    const double got = out.values()[((c * D + d) * H + h) * W + w];
                    EXPECT_NEAR(got, expect, 1e-12);
                }
            }
        }
    }
}

TEST(Tom, GradCheck) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        MambaBlockSpec spec;
        spec.d_model = 2;
        spec.d_state = 2;
        spec.dconv = 2;
        TriMamba t = TriMamba::create(spec, rng);
        Tensor x = srmtest::random_tensor({1, 2, 2, 2, 2}, rng);
        std::vector<Tensor> inputs{x};
        t.params("tom", [&inputs](const std::string&, Tensor& tt) { inputs.push_back(tt); });
        EXPECT_LT(srmtest::grad_check([&] { return t.forward(x); }, inputs, rng), 1e-6);
    }
}
