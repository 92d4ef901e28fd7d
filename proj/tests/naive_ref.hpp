#ifndef SRM_TESTS_NAIVE_REF_HPP
#define SRM_TESTS_NAIVE_REF_HPP

// Independent reference kernels used as oracles. Deliberately naive: plain
// nested loops over zero-padded buffers, every multiply executed (and
// optionally counted), no shortcuts shared with the library implementation.

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace srmtest {

struct MacCounter {
    std::uint64_t macs = 0;
};

struct Vol {
    std::size_t n = 1, c = 1, d = 1, h = 1, w = 1;
    std::vector<double> data;

    std::size_t voxels() const { return d * h * w; }
    std::size_t size() const { return n * c * d * h * w; }
    double& at(std::size_t in, std::size_t ic, std::size_t id, std::size_t ih, std::size_t iw) {
        return data[(((in * c + ic) * d + id) * h + ih) * w + iw];
    }
    double at(std::size_t in, std::size_t ic, std::size_t id, std::size_t ih, std::size_t iw) const {
        return data[(((in * c + ic) * d + id) * h + ih) * w + iw];
    }
    static Vol zeros(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
        Vol v;
        v.n = n;
        v.c = c;
        v.d = d;
        v.h = h;
        v.w = w;
        v.data.assign(v.size(), 0.0);
        return v;
    }
};

// Quadruple-loop convolution over an explicitly zero-padded copy of the
// input. Padding multiplies are real multiplies (by zero) and are counted.
inline Vol naive_conv3d(const Vol& x, const std::vector<double>& weight, const std::vector<double>* bias,
                        std::size_t cout, std::array<std::size_t, 3> k, std::array<std::size_t, 3> stride,
                        std::array<std::size_t, 3> pad, std::size_t groups = 1, MacCounter* counter = nullptr) {
    const std::size_t cin = x.c;
    assert(cin % groups == 0 && cout % groups == 0);
    const std::size_t cpg_in = cin / groups, cpg_out = cout / groups;
    const std::size_t pd = x.d + 2 * pad[0], ph = x.h + 2 * pad[1], pw = x.w + 2 * pad[2];
    Vol padded = Vol::zeros(x.n, cin, pd, ph, pw);
    for (std::size_t in = 0; in < x.n; ++in) {
        for (std::size_t ic = 0; ic < cin; ++ic) {
            for (std::size_t id = 0; id < x.d; ++id) {
                for (std::size_t ih = 0; ih < x.h; ++ih) {
                    for (std::size_t iw = 0; iw < x.w; ++iw) {
                        padded.at(in, ic, id + pad[0], ih + pad[1], iw + pad[2]) = x.at(in, ic, id, ih, iw);
                    }
                }
            }
        }
    }
    const std::size_t od = (pd - k[0]) / stride[0] + 1;
    const std::size_t oh = (ph - k[1]) / stride[1] + 1;
    const std::size_t ow = (pw - k[2]) / stride[2] + 1;
    Vol y = Vol::zeros(x.n, cout, od, oh, ow);
    for (std::size_t in = 0; in < x.n; ++in) {
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t col = 0; col < cpg_out; ++col) {
                const std::size_t co = g * cpg_out + col;
                for (std::size_t zd = 0; zd < od; ++zd) {
                    for (std::size_t zh = 0; zh < oh; ++zh) {
                        for (std::size_t zw = 0; zw < ow; ++zw) {
                            double acc = bias ? (*bias)[co] : 0.0;
                            for (std::size_t cil = 0; cil < cpg_in; ++cil) {
                                const std::size_t ci = g * cpg_in + cil;
                                for (std::size_t kd = 0; kd < k[0]; ++kd) {
                                    for (std::size_t kh = 0; kh < k[1]; ++kh) {
                                        for (std::size_t kw = 0; kw < k[2]; ++kw) {
                                            const double wv =
                                                weight[(((co * cpg_in + cil) * k[0] + kd) * k[1] + kh) * k[2] + kw];
                                            acc += wv * padded.at(in, ci, zd * stride[0] + kd, zh * stride[1] + kh,
                                                                  zw * stride[2] + kw);
                                            if (counter) ++counter->macs;
                                        }
                                    }
                                }
                            }
                            y.at(in, co, zd, zh, zw) = acc;
                        }
                    }
                }
            }
        }
    }
    return y;
}

// Transposed convolution realized as zero-stuffing + kernel flip + stride-1
// convolution. Weight layout [C_in, C_out, kd, kh, kw] (groups == 1).
inline Vol naive_conv_transpose3d(const Vol& x, const std::vector<double>& weight, const std::vector<double>* bias,
                                  std::size_t cout, std::array<std::size_t, 3> k, std::array<std::size_t, 3> stride,
                                  std::array<std::size_t, 3> pad, std::array<std::size_t, 3> out_pad,
                                  MacCounter* counter = nullptr) {
    const std::size_t cin = x.c;
    for (std::size_t a = 0; a < 3; ++a) assert(k[a] >= pad[a] + 1);
    // Stuff stride-1 zeros between input voxels, then pad asymmetrically.
    const std::size_t sd = (x.d - 1) * stride[0] + 1, sh = (x.h - 1) * stride[1] + 1, sw = (x.w - 1) * stride[2] + 1;
    const std::size_t ld = k[0] - 1 - pad[0], lh = k[1] - 1 - pad[1], lw = k[2] - 1 - pad[2];
    Vol stuffed = Vol::zeros(x.n, cin, sd + ld + ld + out_pad[0], sh + lh + lh + out_pad[1], sw + lw + lw + out_pad[2]);
    for (std::size_t in = 0; in < x.n; ++in) {
        for (std::size_t ic = 0; ic < cin; ++ic) {
            for (std::size_t id = 0; id < x.d; ++id) {
                for (std::size_t ih = 0; ih < x.h; ++ih) {
                    for (std::size_t iw = 0; iw < x.w; ++iw) {
                        stuffed.at(in, ic, ld + id * stride[0], lh + ih * stride[1], lw + iw * stride[2]) =
                            x.at(in, ic, id, ih, iw);
                    }
                }
            }
        }
    }
    // Flip the kernel and swap the channel axes to conv layout.
    std::vector<double> wconv(cout * cin * k[0] * k[1] * k[2]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t kd = 0; kd < k[0]; ++kd) {
                for (std::size_t kh = 0; kh < k[1]; ++kh) {
                    for (std::size_t kw = 0; kw < k[2]; ++kw) {
                        wconv[(((co * cin + ci) * k[0] + (k[0] - 1 - kd)) * k[1] + (k[1] - 1 - kh)) * k[2] +
                              (k[2] - 1 - kw)] = weight[(((ci * cout + co) * k[0] + kd) * k[1] + kh) * k[2] + kw];
                    }
                }
            }
        }
    }
    return naive_conv3d(stuffed, wconv, bias, cout, k, {1, 1, 1}, {0, 0, 0}, 1, counter);
}

// tokens [L, A] @ [A, B] (+ bias [B])
inline std::vector<double> naive_linear(const std::vector<double>& x, std::size_t l, std::size_t a,
                                        const std::vector<double>& w, std::size_t b, const std::vector<double>* bias,
                                        MacCounter* counter = nullptr) {
    std::vector<double> y(l * b, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t j = 0; j < b; ++j) {
            double acc = bias ? (*bias)[j] : 0.0;
            for (std::size_t i = 0; i < a; ++i) {
                acc += x[t * a + i] * w[i * b + j];
                if (counter) ++counter->macs;
            }
            y[t * b + j] = acc;
        }
    }
    return y;
}

// Depthwise causal conv over tokens [L, C]; the left pad is explicit zeros
// so every tap is a counted multiply.
inline std::vector<double> naive_dconv_causal(const std::vector<double>& x, std::size_t l, std::size_t c,
                                              const std::vector<double>& w, std::size_t k,
                                              const std::vector<double>* bias, MacCounter* counter = nullptr) {
    std::vector<double> padded((l + k - 1) * c, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t j = 0; j < c; ++j) padded[(t + k - 1) * c + j] = x[t * c + j];
    }
    std::vector<double> y(l * c, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = bias ? (*bias)[j] : 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                acc += w[j * k + kk] * padded[(t + kk) * c + j];
                if (counter) ++counter->macs;
            }
            y[t * c + j] = acc;
        }
    }
    return y;
}

// Time-major step-by-step recurrence, written straight from the update
// equations. Five counted multiplies per (t, channel, state) plus the D skip.
inline std::vector<double> naive_scan(const std::vector<double>& u, const std::vector<double>& delta,
                                      const std::vector<double>& b, const std::vector<double>& c,
                                      const std::vector<double>& a, const std::vector<double>& dskip, std::size_t l,
                                      std::size_t d, std::size_t n, MacCounter* counter = nullptr) {
    std::vector<double> h(d * n, 0.0);
    std::vector<double> y(l * d, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        for (std::size_t ch = 0; ch < d; ++ch) {
            const double dl = delta[t * d + ch];
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double abar = std::exp(dl * a[ch * n + s]);
                const double bbar = dl * b[t * n + s];
                h[ch * n + s] = abar * h[ch * n + s] + bbar * u[t * d + ch];
                acc += c[t * n + s] * h[ch * n + s];
                if (counter) counter->macs += 5;  // dl*a, abar*h, dl*b, bbar*u, c*h
            }
            y[t * d + ch] = acc + dskip[ch] * u[t * d + ch];
            if (counter) ++counter->macs;
        }
    }
    return y;
}

inline double softplus_ref(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace srmtest

#endif  // SRM_TESTS_NAIVE_REF_HPP
