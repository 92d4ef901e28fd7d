#ifndef SRM_MAMBA_HPP
#define SRM_MAMBA_HPP

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "srm/nn.hpp"
#include "srm/tensor.hpp"

namespace srm {

// ---------------------------------------------------------------------------
// Selective scan
// ---------------------------------------------------------------------------
// Discretization: Abar = exp(delta * A), Bbar = delta * B (Euler form), then
//   h_t = Abar_t (*) h_{t-1} + Bbar_t * u_t
//   y_t = C_t . h_t + D (*) u_t
// A must be negative elementwise so |Abar| < 1 for delta > 0.

struct SsmParams {
    std::size_t d_model = 0;  // channels of the scanned sequence
    std::size_t d_state = 16;
    Tensor a_log;    // [d, N]; A = -exp(a_log)
    Tensor d_skip;   // [d]
    Tensor w_delta;  // [d, d]
    Tensor b_delta;  // [d]
    Tensor w_b;      // [d, N]
    Tensor w_c;      // [d, N]

    static SsmParams create(std::size_t d, std::size_t n_state, Rng& rng) {
        SsmParams p;
        p.d_model = d;
        p.d_state = n_state;
        std::vector<double> alog(d * n_state);
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t n = 0; n < n_state; ++n) alog[c * n_state + n] = std::log(static_cast<double>(n + 1));
        }
        p.a_log = Tensor::from({d, n_state}, std::move(alog), true);
        p.d_skip = Tensor::full({d}, 1.0, true);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        p.w_delta = Tensor::rand_uniform({d, d}, rng, -bound, bound, true);
        // Bias chosen so softplus(b) lands log-uniformly in [1e-3, 1e-1].
        std::vector<double> bd(d);
        for (std::size_t c = 0; c < d; ++c) {
            const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
            bd[c] = std::log(std::expm1(dt));
        }
        p.b_delta = Tensor::from({d}, std::move(bd), true);
        p.w_b = Tensor::rand_uniform({d, n_state}, rng, -bound, bound, true);
        p.w_c = Tensor::rand_uniform({d, n_state}, rng, -bound, bound, true);
        return p;
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        visit(prefix + ".a_log", a_log);
        visit(prefix + ".d_skip", d_skip);
        visit(prefix + ".w_delta", w_delta);
        visit(prefix + ".b_delta", b_delta);
        visit(prefix + ".w_b", w_b);
        visit(prefix + ".w_c", w_c);
    }
};

// Core recurrence on precomputed per-token tensors. Channel-major: each
// (channel, state) pair scans the full sequence with a register carry, time
// processed in fixed chunks. Causal by construction.
inline Tensor scan_core(const Tensor& u, const Tensor& delta, const Tensor& B, const Tensor& C, const Tensor& A,
                        const Tensor& D) {
    require(u.ndim() == 2, "scan_core: u must be [L, d]");
    const std::size_t L = u.shape()[0], d = u.shape()[1];
    require(L >= 1, "scan_core: empty sequence");
    require(delta.shape() == u.shape(), "scan_core: delta shape mismatch");
    require(B.ndim() == 2 && B.shape()[0] == L, "scan_core: B must be [L, N]");
    const std::size_t N = B.shape()[1];
    require(C.shape() == B.shape(), "scan_core: C shape mismatch");
    require(A.shape() == Shape({d, N}), "scan_core: A must be [d, N]");
    require(D.shape() == Shape({d}), "scan_core: D must be [d]");

    Tensor out = Tensor::zeros({L, d});
    const double* pu = u.data();
    const double* pdl = delta.data();
    const double* pb = B.data();
    const double* pc = C.data();
    const double* pa = A.data();
    const double* pd = D.data();
    double* py = out.data();

    const bool needs_grad = Tape::active().recording() &&
                            (u.requires_grad() || delta.requires_grad() || B.requires_grad() || C.requires_grad() ||
                             A.requires_grad() || D.requires_grad());
    // Hidden states are retained for the reverse pass only when recording.
    auto hstore = std::make_shared<std::vector<double>>();
    if (needs_grad) hstore->assign(L * d * N, 0.0);

    constexpr std::size_t kChunk = 64;
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t n = 0; n < N; ++n) {
            const double a = pa[c * N + n];
            double h = 0.0;
            for (std::size_t t0 = 0; t0 < L; t0 += kChunk) {
                const std::size_t t1 = std::min(L, t0 + kChunk);
                for (std::size_t t = t0; t < t1; ++t) {
                    const double dl = pdl[t * d + c];
                    const double abar = std::exp(dl * a);
                    const double bbar = dl * pb[t * N + n];
                    h = abar * h + bbar * pu[t * d + c];
                    if (needs_grad) (*hstore)[(t * d + c) * N + n] = h;
                    py[t * d + c] += pc[t * N + n] * h;
                }
            }
        }
        for (std::size_t t = 0; t < L; ++t) py[t * d + c] += pd[c] * pu[t * d + c];
    }

    Tensor tu = u, tdl = delta, tb = B, tc = C, ta = A, td = D, o = out;
    detail::finalize_op("scan_core", {u, delta, B, C, A, D}, out, [tu, tdl, tb, tc, ta, td, o, hstore, L, d,
                                                                   N]() mutable {
        const double* gy = o.grad().data();
        const double* pu = tu.data();
        const double* pdl = tdl.data();
        const double* pb = tb.data();
        const double* pc = tc.data();
        const double* pa = ta.data();
        const double* pd = td.data();
        const double* h = hstore->data();
        double* gu = tu.requires_grad() ? tu.grad().data() : nullptr;
        double* gdl = tdl.requires_grad() ? tdl.grad().data() : nullptr;
        double* gb = tb.requires_grad() ? tb.grad().data() : nullptr;
        double* gc = tc.requires_grad() ? tc.grad().data() : nullptr;
        double* ga = ta.requires_grad() ? ta.grad().data() : nullptr;
        double* gd = td.requires_grad() ? td.grad().data() : nullptr;

        std::vector<double> gh(d * N, 0.0);  // adjoint of h_t, swept backwards
        for (std::size_t t = L; t-- > 0;) {
            for (std::size_t c = 0; c < d; ++c) {
                const double gyv = gy[t * d + c];
                const double uv = pu[t * d + c];
                if (gd) gd[c] += gyv * uv;
                if (gu) gu[t * d + c] += pd[c] * gyv;
                const double dl = pdl[t * d + c];
                double gdl_acc = 0.0, gu_acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    double ghv = gh[c * N + n] + pc[t * N + n] * gyv;
                    if (gc) gc[t * N + n] += gyv * h[(t * d + c) * N + n];
                    const double a = pa[c * N + n];
                    const double abar = std::exp(dl * a);
                    const double hprev = t > 0 ? h[((t - 1) * d + c) * N + n] : 0.0;
                    const double bv = pb[t * N + n];
                    gdl_acc += ghv * (abar * a * hprev + bv * uv);
                    if (ga) ga[c * N + n] += ghv * abar * dl * hprev;
                    if (gb) gb[t * N + n] += ghv * dl * uv;
                    gu_acc += ghv * dl * bv;
                    gh[c * N + n] = ghv * abar;
                }
                if (gdl) gdl[t * d + c] += gdl_acc;
                if (gu) gu[t * d + c] += gu_acc;
            }
        }
    });
    return out;
}

inline Tensor selective_scan(const Tensor& u, const SsmParams& p) {
    require(u.ndim() == 2 && u.shape()[1] == p.d_model, "selective_scan: u must be [L, d_model]");
    Tensor delta = softplus(linear(u, p.w_delta, p.b_delta));
    Tensor b_tok = linear(u, p.w_b);
    Tensor c_tok = linear(u, p.w_c);
    Tensor a = neg(exp_op(p.a_log));
    return scan_core(u, delta, b_tok, c_tok, a, p.d_skip);
}

// ---------------------------------------------------------------------------
// Depthwise causal conv1d over tokens [L, C]
// ---------------------------------------------------------------------------

inline Tensor dconv_causal(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor()) {
    require(x.ndim() == 2, "dconv_causal: input must be [L, C]");
    require(weight.ndim() == 2 && weight.shape()[1] >= 1, "dconv_causal: weight must be [C, K]");
    const std::size_t L = x.shape()[0], C = x.shape()[1], K = weight.shape()[1];
    require(weight.shape()[0] == C, "dconv_causal: channel mismatch");
    Tensor out = Tensor::zeros({L, C});
    const double* px = x.data();
    const double* pw = weight.data();
    double* py = out.data();
    if (bias.defined()) {
        require(bias.shape() == Shape({C}), "dconv_causal: bias must be [C]");
        const double* pbias = bias.data();
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t c = 0; c < C; ++c) py[t * C + c] = pbias[c];
        }
    }
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t k = 0; k < K; ++k) {
            const long long src = static_cast<long long>(t) - static_cast<long long>(K - 1) + static_cast<long long>(k);
            if (src < 0) continue;
            const double* xrow = px + static_cast<std::size_t>(src) * C;
            double* yrow = py + t * C;
            const double* wcol = pw;  // [C, K] column k with stride K
            for (std::size_t c = 0; c < C; ++c) yrow[c] += wcol[c * K + k] * xrow[c];
        }
    }
    Tensor tx = x, tw = weight, tb = bias, o = out;
    std::vector<Tensor> inputs = bias.defined() ? std::vector<Tensor>{x, weight, bias} : std::vector<Tensor>{x, weight};
    detail::finalize_op("dconv_causal", std::move(inputs), out, [tx, tw, tb, o, L, C, K]() mutable {
        const double* gy = o.grad().data();
        const double* px = tx.data();
        const double* pw = tw.data();
        if (tb.defined() && tb.requires_grad()) {
            double* gb = tb.grad().data();
            for (std::size_t t = 0; t < L; ++t) {
                for (std::size_t c = 0; c < C; ++c) gb[c] += gy[t * C + c];
            }
        }
        double* gx = tx.requires_grad() ? tx.grad().data() : nullptr;
        double* gw = tw.requires_grad() ? tw.grad().data() : nullptr;
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t k = 0; k < K; ++k) {
                const long long src = static_cast<long long>(t) - static_cast<long long>(K - 1) +
                                      static_cast<long long>(k);
                if (src < 0) continue;
                const std::size_t s = static_cast<std::size_t>(src);
                for (std::size_t c = 0; c < C; ++c) {
                    const double gyv = gy[t * C + c];
                    if (gx) gx[s * C + c] += pw[c * K + k] * gyv;
                    if (gw) gw[c * K + k] += px[s * C + c] * gyv;
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Mamba block
// ---------------------------------------------------------------------------

struct MambaBlockSpec {
    std::size_t d_model = 0;
    std::size_t d_state = 16;
    std::size_t expand = 2;
    std::size_t dconv = 4;
    double layernorm_eps = 1e-5;

    std::size_t d_inner() const { return expand * d_model; }
};

// In-projection, depthwise causal conv, SiLU, selective scan, multiplicative
// SiLU gate, out-projection. Token-major [L, d_model]; causal end to end.
struct MambaBlock {
    MambaBlockSpec spec;
    Tensor w_in_x;  // [d_model, d_inner]
    Tensor w_in_g;  // [d_model, d_inner]
    Tensor conv_w;  // [d_inner, dconv]
    Tensor conv_b;  // [d_inner]
    SsmParams ssm;
    Tensor w_out;  // [d_inner, d_model]

    static MambaBlock create(const MambaBlockSpec& spec, Rng& rng) {
        require(spec.d_model >= 1 && spec.expand >= 1 && spec.d_state >= 1 && spec.dconv >= 1,
                "MambaBlockSpec: extents must be >= 1");
        MambaBlock m;
        m.spec = spec;
        const std::size_t d = spec.d_model, di = spec.d_inner();
        const double b_in = 1.0 / std::sqrt(static_cast<double>(d));
        m.w_in_x = Tensor::rand_uniform({d, di}, rng, -b_in, b_in, true);
        m.w_in_g = Tensor::rand_uniform({d, di}, rng, -b_in, b_in, true);
        const double b_k = 1.0 / std::sqrt(static_cast<double>(spec.dconv));
        m.conv_w = Tensor::rand_uniform({di, spec.dconv}, rng, -b_k, b_k, true);
        m.conv_b = Tensor::rand_uniform({di}, rng, -b_k, b_k, true);
        m.ssm = SsmParams::create(di, spec.d_state, rng);
        const double b_out = 1.0 / std::sqrt(static_cast<double>(di));
        m.w_out = Tensor::rand_uniform({di, d}, rng, -b_out, b_out, true);
        return m;
    }

    Tensor forward(const Tensor& z) const {
        require(z.ndim() == 2 && z.shape()[1] == spec.d_model, "mamba_block: input must be [L, d_model]");
        Tensor xpath = linear(z, w_in_x);
        Tensor gate = linear(z, w_in_g);
        xpath = silu(dconv_causal(xpath, conv_w, conv_b));
        Tensor y = selective_scan(xpath, ssm);
        return linear(mul(y, silu(gate)), w_out);
    }

    void zero_biases() {
        std::fill(conv_b.values().begin(), conv_b.values().end(), 0.0);
        std::fill(ssm.b_delta.values().begin(), ssm.b_delta.values().end(), 0.0);
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        visit(prefix + ".w_in_x", w_in_x);
        visit(prefix + ".w_in_g", w_in_g);
        visit(prefix + ".conv_w", conv_w);
        visit(prefix + ".conv_b", conv_b);
        ssm.params(prefix + ".ssm", visit);
        visit(prefix + ".w_out", w_out);
    }
};

// ---------------------------------------------------------------------------
// Tri-oriented Mamba
// ---------------------------------------------------------------------------
// Sum of three independent Mamba branches over forward, reversed and
// inter-slice flattenings of a feature volume. Token layer norm before each
// branch (configurable).

enum class InterSliceOrder {
    DepthFastest,   // flatten over (H, W, D): depth axis varies fastest
    HeightFastest,  // flatten over (W, D, H)
};

struct TriMamba {
    MambaBlockSpec spec;
    MambaBlock branch_f, branch_r, branch_s;
    NormLayer ln_f, ln_r, ln_s;
    bool use_layernorm = true;
    InterSliceOrder order = InterSliceOrder::DepthFastest;

    static TriMamba create(const MambaBlockSpec& spec, Rng& rng, bool use_layernorm = true,
                           InterSliceOrder order = InterSliceOrder::DepthFastest) {
        TriMamba t;
        t.spec = spec;
        t.use_layernorm = use_layernorm;
        t.order = order;
        t.branch_f = MambaBlock::create(spec, rng);
        t.branch_r = MambaBlock::create(spec, rng);
        t.branch_s = MambaBlock::create(spec, rng);
        NormSpec ns;
        ns.kind = NormKind::Layer;
        ns.channels = spec.d_model;
        ns.epsilon = spec.layernorm_eps;
        t.ln_f = NormLayer::create(ns);
        t.ln_r = NormLayer::create(ns);
        t.ln_s = NormLayer::create(ns);
        return t;
    }

    Tensor forward(const Tensor& x) const {
        require(x.ndim() == 5 && x.shape()[1] == spec.d_model, "tom: input must be [N,C,D,H,W]");
        const std::size_t N = x.shape()[0], C = x.shape()[1];
        const std::size_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
        const std::size_t L = D * H * W;
        std::vector<Tensor> per_sample;
        per_sample.reserve(N);
        for (std::size_t n = 0; n < N; ++n) {
            Tensor vol = slice_first(x, n);  // [C,D,H,W]
            // forward tokens: row-major over (D,H,W)
            Tensor zf = reshape(permute(vol, {1, 2, 3, 0}), {L, C});
            Tensor zr = flip(zf, 0);
            Tensor zs = order == InterSliceOrder::DepthFastest ? reshape(permute(vol, {2, 3, 1, 0}), {L, C})
                                                               : reshape(permute(vol, {3, 1, 2, 0}), {L, C});

            Tensor yf = branch_f.forward(use_layernorm ? ln_f.forward(zf) : zf);
            Tensor yr = branch_r.forward(use_layernorm ? ln_r.forward(zr) : zr);
            Tensor ys = branch_s.forward(use_layernorm ? ln_s.forward(zs) : zs);

            Tensor uf = permute(reshape(yf, {D, H, W, C}), {3, 0, 1, 2});
            Tensor ur = permute(reshape(flip(yr, 0), {D, H, W, C}), {3, 0, 1, 2});
            Tensor us = order == InterSliceOrder::DepthFastest
                            ? permute(reshape(ys, {H, W, D, C}), {3, 2, 0, 1})
                            : permute(reshape(ys, {W, D, H, C}), {3, 1, 2, 0});
            per_sample.push_back(add(add(uf, ur), us));
        }
        return stack_first(per_sample);
    }

    void zero_biases() {
        branch_f.zero_biases();
        branch_r.zero_biases();
        branch_s.zero_biases();
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        if (use_layernorm) {
            ln_f.params(prefix + ".ln_f", visit);
            ln_r.params(prefix + ".ln_r", visit);
            ln_s.params(prefix + ".ln_s", visit);
        }
        branch_f.params(prefix + ".f", visit);
        branch_r.params(prefix + ".r", visit);
        branch_s.params(prefix + ".s", visit);
    }
};

}  // namespace srm

#endif  // SRM_MAMBA_HPP
