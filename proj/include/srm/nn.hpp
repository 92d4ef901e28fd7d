#ifndef SRM_NN_HPP
#define SRM_NN_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "srm/tensor.hpp"

namespace srm {

// ---------------------------------------------------------------------------
// Layer specs
// ---------------------------------------------------------------------------

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::array<std::size_t, 3> kernel{1, 1, 1};
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};
    std::array<std::size_t, 3> output_padding{0, 0, 0};  // transposed only
    bool transposed = false;
    std::size_t groups = 1;

    static ConvSpec make(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s, std::size_t p) {
        ConvSpec spec;
        spec.in_channels = cin;
        spec.out_channels = cout;
        spec.kernel = {k, k, k};
        spec.stride = {s, s, s};
        spec.padding = {p, p, p};
        return spec;
    }

    static ConvSpec make_transposed(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s, std::size_t p,
                                    std::size_t op) {
        ConvSpec spec = make(cin, cout, k, s, p);
        spec.transposed = true;
        spec.output_padding = {op, op, op};
        return spec;
    }

    void validate() const {
        require(in_channels >= 1 && out_channels >= 1 && groups >= 1, "ConvSpec: channel/group extents must be >= 1");
        require(in_channels % groups == 0 && out_channels % groups == 0,
                "ConvSpec: channels must be divisible by groups");
        for (std::size_t a = 0; a < 3; ++a) {
            require(kernel[a] >= 1 && stride[a] >= 1, "ConvSpec: kernel and stride extents must be >= 1");
            if (transposed) {
                require(output_padding[a] < stride[a], "ConvSpec: output_padding must be < stride");
            }
        }
    }

    std::size_t out_extent(std::size_t axis, std::size_t in_extent) const {
        const long long in = static_cast<long long>(in_extent);
        const long long k = static_cast<long long>(kernel[axis]);
        const long long s = static_cast<long long>(stride[axis]);
        const long long p = static_cast<long long>(padding[axis]);
        long long out;
        if (transposed) {
            out = (in - 1) * s - 2 * p + k + static_cast<long long>(output_padding[axis]);
        } else {
            out = (in + 2 * p - k) / s + 1;
        }
        require(out >= 1, "ConvSpec: output extent < 1 on axis " + std::to_string(axis));
        return static_cast<std::size_t>(out);
    }

    // Parameter tensor shapes. Forward conv weights are
    // [C_out, C_in/groups, kd, kh, kw]; transposed conv weights are
    // [C_in, C_out/groups, kd, kh, kw] so that conv_transpose3d with a conv's
    // weight realizes that conv's input gradient.
    Shape weight_shape() const {
        if (transposed) return {in_channels, out_channels / groups, kernel[0], kernel[1], kernel[2]};
        return {out_channels, in_channels / groups, kernel[0], kernel[1], kernel[2]};
    }
    Shape bias_shape() const { return {out_channels}; }
};

enum class NormKind { Group, Instance, Layer };

struct NormSpec {
    NormKind kind = NormKind::Instance;
    std::size_t num_groups = 1;  // group norm only
    std::size_t channels = 1;
    double epsilon = 1e-5;
    bool affine = true;

    void validate() const {
        require(epsilon > 0.0, "NormSpec: epsilon must be positive");
        if (kind == NormKind::Group) {
            require(num_groups >= 1 && channels % num_groups == 0,
                    "NormSpec: channels must be divisible by num_groups");
        }
    }
};

namespace detail {

// Valid output-index range for one conv axis: all `o` in [0, out_extent) with
// 0 <= o*stride + k_off - pad < in_extent.
inline bool conv_axis_range(long long in_extent, long long out_extent, long long stride, long long pad,
                            long long k_off, long long& lo, long long& hi) {
    const long long shift = pad - k_off;  // index = o*stride - shift
    lo = 0;
    if (shift > 0) lo = (shift + stride - 1) / stride;
    const long long top = in_extent - 1 + shift;
    if (top < 0) return false;
    hi = std::min(out_extent - 1, top / stride);
    return lo <= hi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

inline Tensor conv3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias = Tensor()) {
    spec.validate();
    require(!spec.transposed, "conv3d: spec is transposed; use conv_transpose3d");
    require(x.ndim() == 5, "conv3d: input must be [N,C,D,H,W]");
    require(x.shape()[1] == spec.in_channels, "conv3d: input channels mismatch");
    require(weight.shape() == spec.weight_shape(), "conv3d: weight shape mismatch");
    if (bias.defined()) require(bias.shape() == spec.bias_shape(), "conv3d: bias shape mismatch");

    const std::size_t N = x.shape()[0], Cin = spec.in_channels, Cout = spec.out_channels, G = spec.groups;
    const std::size_t cpg_in = Cin / G, cpg_out = Cout / G;
    const std::size_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
    const std::size_t OD = spec.out_extent(0, D), OH = spec.out_extent(1, H), OW = spec.out_extent(2, W);
    const std::size_t KD = spec.kernel[0], KH = spec.kernel[1], KW = spec.kernel[2];
    const long long sd = static_cast<long long>(spec.stride[0]), sh = static_cast<long long>(spec.stride[1]),
                    sw = static_cast<long long>(spec.stride[2]);
    const long long pd = static_cast<long long>(spec.padding[0]), ph = static_cast<long long>(spec.padding[1]),
                    pw = static_cast<long long>(spec.padding[2]);

    Tensor out = Tensor::zeros({N, Cout, OD, OH, OW});
    const double* px = x.data();
    const double* pwgt = weight.data();
    double* py = out.data();
    const std::size_t x_vol = D * H * W, y_vol = OD * OH * OW;

    if (bias.defined()) {
        const double* pb = bias.data();
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t co = 0; co < Cout; ++co) {
                double* dst = py + (n * Cout + co) * y_vol;
                const double b = pb[co];
                for (std::size_t i = 0; i < y_vol; ++i) dst[i] = b;
            }
        }
    }

    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t col = 0; col < cpg_out; ++col) {
                const std::size_t co = g * cpg_out + col;
                double* ybase = py + (n * Cout + co) * y_vol;
                for (std::size_t cil = 0; cil < cpg_in; ++cil) {
                    const std::size_t ci = g * cpg_in + cil;
                    const double* xbase = px + (n * Cin + ci) * x_vol;
                    const double* wbase = pwgt + ((co * cpg_in + cil) * KD) * KH * KW;
                    for (std::size_t kd = 0; kd < KD; ++kd) {
                        long long od_lo, od_hi;
                        if (!detail::conv_axis_range(static_cast<long long>(D), static_cast<long long>(OD), sd, pd,
                                                     static_cast<long long>(kd), od_lo, od_hi))
                            continue;
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            long long oh_lo, oh_hi;
                            if (!detail::conv_axis_range(static_cast<long long>(H), static_cast<long long>(OH), sh, ph,
                                                         static_cast<long long>(kh), oh_lo, oh_hi))
                                continue;
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                long long ow_lo, ow_hi;
                                if (!detail::conv_axis_range(static_cast<long long>(W), static_cast<long long>(OW), sw,
                                                             pw, static_cast<long long>(kw), ow_lo, ow_hi))
                                    continue;
                                const double wv = wbase[(kd * KH + kh) * KW + kw];
                                if (wv == 0.0) continue;
                                for (long long od = od_lo; od <= od_hi; ++od) {
                                    const long long id = od * sd + static_cast<long long>(kd) - pd;
                                    for (long long oh = oh_lo; oh <= oh_hi; ++oh) {
                                        const long long ih = oh * sh + static_cast<long long>(kh) - ph;
                                        double* yrow = ybase + (static_cast<std::size_t>(od) * OH +
                                                                static_cast<std::size_t>(oh)) * OW;
                                        const double* xrow = xbase + (static_cast<std::size_t>(id) * H +
                                                                      static_cast<std::size_t>(ih)) * W;
                                        long long iw = ow_lo * sw + static_cast<long long>(kw) - pw;
                                        for (long long ow = ow_lo; ow <= ow_hi; ++ow, iw += sw) {
                                            yrow[ow] += wv * xrow[iw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor tx = x, tw = weight, tb = bias, o = out;
    ConvSpec sp = spec;
    std::vector<Tensor> inputs = bias.defined() ? std::vector<Tensor>{x, weight, bias} : std::vector<Tensor>{x, weight};
    detail::finalize_op("conv3d", std::move(inputs), out, [tx, tw, tb, o, sp, N, Cin, Cout, G, cpg_in, cpg_out, D, H,
                                                           W, OD, OH, OW, KD, KH, KW, sd, sh, sw, pd, ph, pw, x_vol,
                                                           y_vol]() mutable {
        const double* gy = o.grad().data();
        if (tb.defined() && tb.requires_grad()) {
            double* gb = tb.grad().data();
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t co = 0; co < Cout; ++co) {
                    const double* src = gy + (n * Cout + co) * y_vol;
                    double s = 0.0;
                    for (std::size_t i = 0; i < y_vol; ++i) s += src[i];
                    gb[co] += s;
                }
            }
        }
        const bool want_gx = tx.requires_grad(), want_gw = tw.requires_grad();
        if (!want_gx && !want_gw) return;
        double* gx = want_gx ? tx.grad().data() : nullptr;
        double* gw = want_gw ? tw.grad().data() : nullptr;
        const double* px = tx.data();
        const double* pwgt = tw.data();
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t g = 0; g < G; ++g) {
                for (std::size_t col = 0; col < cpg_out; ++col) {
                    const std::size_t co = g * cpg_out + col;
                    const double* gybase = gy + (n * Cout + co) * y_vol;
                    for (std::size_t cil = 0; cil < cpg_in; ++cil) {
                        const std::size_t ci = g * cpg_in + cil;
                        const double* xbase = px + (n * Cin + ci) * x_vol;
                        double* gxbase = want_gx ? gx + (n * Cin + ci) * x_vol : nullptr;
                        const std::size_t wbase_idx = (co * cpg_in + cil) * KD * KH * KW;
                        for (std::size_t kd = 0; kd < KD; ++kd) {
                            long long od_lo, od_hi;
                            if (!detail::conv_axis_range(static_cast<long long>(D), static_cast<long long>(OD), sd, pd,
                                                         static_cast<long long>(kd), od_lo, od_hi))
                                continue;
                            for (std::size_t kh = 0; kh < KH; ++kh) {
                                long long oh_lo, oh_hi;
                                if (!detail::conv_axis_range(static_cast<long long>(H), static_cast<long long>(OH), sh,
                                                             ph, static_cast<long long>(kh), oh_lo, oh_hi))
                                    continue;
                                for (std::size_t kw = 0; kw < KW; ++kw) {
                                    long long ow_lo, ow_hi;
                                    if (!detail::conv_axis_range(static_cast<long long>(W), static_cast<long long>(OW),
                                                                 sw, pw, static_cast<long long>(kw), ow_lo, ow_hi))
                                        continue;
                                    const std::size_t widx = wbase_idx + (kd * KH + kh) * KW + kw;
                                    const double wv = pwgt[widx];
                                    double wacc = 0.0;
                                    for (long long od = od_lo; od <= od_hi; ++od) {
                                        const long long id = od * sd + static_cast<long long>(kd) - pd;
                                        for (long long oh = oh_lo; oh <= oh_hi; ++oh) {
                                            const long long ih = oh * sh + static_cast<long long>(kh) - ph;
                                            const double* gyrow = gybase + (static_cast<std::size_t>(od) * OH +
                                                                            static_cast<std::size_t>(oh)) * OW;
                                            const std::size_t xoff = (static_cast<std::size_t>(id) * H +
                                                                      static_cast<std::size_t>(ih)) * W;
                                            const double* xrow = xbase + xoff;
                                            double* gxrow = want_gx ? gxbase + xoff : nullptr;
                                            long long iw = ow_lo * sw + static_cast<long long>(kw) - pw;
                                            for (long long ow = ow_lo; ow <= ow_hi; ++ow, iw += sw) {
                                                const double gyv = gyrow[ow];
                                                if (want_gw) wacc += gyv * xrow[iw];
                                                if (want_gx) gxrow[iw] += wv * gyv;
                                            }
                                        }
                                    }
                                    if (want_gw) gw[widx] += wacc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// conv_transpose3d
// ---------------------------------------------------------------------------

inline Tensor conv_transpose3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
                               const Tensor& bias = Tensor()) {
    spec.validate();
    require(spec.transposed, "conv_transpose3d: spec is not transposed");
    require(x.ndim() == 5, "conv_transpose3d: input must be [N,C,D,H,W]");
    require(x.shape()[1] == spec.in_channels, "conv_transpose3d: input channels mismatch");
    require(weight.shape() == spec.weight_shape(), "conv_transpose3d: weight shape mismatch");
    if (bias.defined()) require(bias.shape() == spec.bias_shape(), "conv_transpose3d: bias shape mismatch");

    const std::size_t N = x.shape()[0], Cin = spec.in_channels, Cout = spec.out_channels, G = spec.groups;
    const std::size_t cpg_in = Cin / G, cpg_out = Cout / G;
    const std::size_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
    const std::size_t OD = spec.out_extent(0, D), OH = spec.out_extent(1, H), OW = spec.out_extent(2, W);
    const std::size_t KD = spec.kernel[0], KH = spec.kernel[1], KW = spec.kernel[2];
    const long long sd = static_cast<long long>(spec.stride[0]), sh = static_cast<long long>(spec.stride[1]),
                    sw = static_cast<long long>(spec.stride[2]);
    const long long pd = static_cast<long long>(spec.padding[0]), ph = static_cast<long long>(spec.padding[1]),
                    pw = static_cast<long long>(spec.padding[2]);

    Tensor out = Tensor::zeros({N, Cout, OD, OH, OW});
    const double* px = x.data();
    const double* pwgt = weight.data();
    double* py = out.data();
    const std::size_t x_vol = D * H * W, y_vol = OD * OH * OW;

    if (bias.defined()) {
        const double* pb = bias.data();
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t co = 0; co < Cout; ++co) {
                double* dst = py + (n * Cout + co) * y_vol;
                const double b = pb[co];
                for (std::size_t i = 0; i < y_vol; ++i) dst[i] = b;
            }
        }
    }

    // Scatter: out[od] += w * x[id] along od = id*stride + k - pad.
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t cil = 0; cil < cpg_in; ++cil) {
                const std::size_t ci = g * cpg_in + cil;
                const double* xbase = px + (n * Cin + ci) * x_vol;
                for (std::size_t col = 0; col < cpg_out; ++col) {
                    const std::size_t co = g * cpg_out + col;
                    double* ybase = py + (n * Cout + co) * y_vol;
                    const double* wbase = pwgt + (ci * cpg_out + col) * KD * KH * KW;
                    for (std::size_t kd = 0; kd < KD; ++kd) {
                        long long id_lo, id_hi;
                        if (!detail::conv_axis_range(static_cast<long long>(OD), static_cast<long long>(D), sd, pd,
                                                     static_cast<long long>(kd), id_lo, id_hi))
                            continue;
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            long long ih_lo, ih_hi;
                            if (!detail::conv_axis_range(static_cast<long long>(OH), static_cast<long long>(H), sh, ph,
                                                         static_cast<long long>(kh), ih_lo, ih_hi))
                                continue;
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                long long iw_lo, iw_hi;
                                if (!detail::conv_axis_range(static_cast<long long>(OW), static_cast<long long>(W), sw,
                                                             pw, static_cast<long long>(kw), iw_lo, iw_hi))
                                    continue;
                                const double wv = wbase[(kd * KH + kh) * KW + kw];
                                if (wv == 0.0) continue;
                                for (long long id = id_lo; id <= id_hi; ++id) {
                                    const long long od = id * sd + static_cast<long long>(kd) - pd;
                                    for (long long ih = ih_lo; ih <= ih_hi; ++ih) {
                                        const long long oh = ih * sh + static_cast<long long>(kh) - ph;
                                        const double* xrow = xbase + (static_cast<std::size_t>(id) * H +
                                                                      static_cast<std::size_t>(ih)) * W;
                                        double* yrow = ybase + (static_cast<std::size_t>(od) * OH +
                                                                static_cast<std::size_t>(oh)) * OW;
                                        long long ow = iw_lo * sw + static_cast<long long>(kw) - pw;
                                        for (long long iw = iw_lo; iw <= iw_hi; ++iw, ow += sw) {
                                            yrow[ow] += wv * xrow[iw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor tx = x, tw = weight, tb = bias, o = out;
    std::vector<Tensor> inputs = bias.defined() ? std::vector<Tensor>{x, weight, bias} : std::vector<Tensor>{x, weight};
    detail::finalize_op("conv_transpose3d", std::move(inputs), out, [tx, tw, tb, o, N, Cin, Cout, G, cpg_in, cpg_out,
                                                                     D, H, W, OD, OH, OW, KD, KH, KW, sd, sh, sw, pd,
                                                                     ph, pw, x_vol, y_vol]() mutable {
        const double* gy = o.grad().data();
        if (tb.defined() && tb.requires_grad()) {
            double* gb = tb.grad().data();
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t co = 0; co < Cout; ++co) {
                    const double* src = gy + (n * Cout + co) * y_vol;
                    double s = 0.0;
                    for (std::size_t i = 0; i < y_vol; ++i) s += src[i];
                    gb[co] += s;
                }
            }
        }
        const bool want_gx = tx.requires_grad(), want_gw = tw.requires_grad();
        if (!want_gx && !want_gw) return;
        double* gx = want_gx ? tx.grad().data() : nullptr;
        double* gw = want_gw ? tw.grad().data() : nullptr;
        const double* px = tx.data();
        const double* pwgt = tw.data();
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t g = 0; g < G; ++g) {
                for (std::size_t cil = 0; cil < cpg_in; ++cil) {
                    const std::size_t ci = g * cpg_in + cil;
                    const double* xbase = px + (n * Cin + ci) * x_vol;
                    double* gxbase = want_gx ? gx + (n * Cin + ci) * x_vol : nullptr;
                    for (std::size_t col = 0; col < cpg_out; ++col) {
                        const std::size_t co = g * cpg_out + col;
                        const double* gybase = gy + (n * Cout + co) * y_vol;
                        const std::size_t wbase_idx = (ci * cpg_out + col) * KD * KH * KW;
                        for (std::size_t kd = 0; kd < KD; ++kd) {
                            long long id_lo, id_hi;
                            if (!detail::conv_axis_range(static_cast<long long>(OD), static_cast<long long>(D), sd, pd,
                                                         static_cast<long long>(kd), id_lo, id_hi))
                                continue;
                            for (std::size_t kh = 0; kh < KH; ++kh) {
                                long long ih_lo, ih_hi;
                                if (!detail::conv_axis_range(static_cast<long long>(OH), static_cast<long long>(H), sh,
                                                             ph, static_cast<long long>(kh), ih_lo, ih_hi))
                                    continue;
                                for (std::size_t kw = 0; kw < KW; ++kw) {
                                    long long iw_lo, iw_hi;
                                    if (!detail::conv_axis_range(static_cast<long long>(OW), static_cast<long long>(W),
                                                                 sw, pw, static_cast<long long>(kw), iw_lo, iw_hi))
                                        continue;
                                    const std::size_t widx = wbase_idx + (kd * KH + kh) * KW + kw;
                                    const double wv = pwgt[widx];
                                    double wacc = 0.0;
                                    for (long long id = id_lo; id <= id_hi; ++id) {
                                        const long long od = id * sd + static_cast<long long>(kd) - pd;
                                        for (long long ih = ih_lo; ih <= ih_hi; ++ih) {
                                            const long long oh = ih * sh + static_cast<long long>(kh) - ph;
                                            const std::size_t xoff = (static_cast<std::size_t>(id) * H +
                                                                      static_cast<std::size_t>(ih)) * W;
                                            const double* xrow = xbase + xoff;
                                            double* gxrow = want_gx ? gxbase + xoff : nullptr;
                                            const double* gyrow = gybase + (static_cast<std::size_t>(od) * OH +
                                                                            static_cast<std::size_t>(oh)) * OW;
                                            long long ow = iw_lo * sw + static_cast<long long>(kw) - pw;
                                            for (long long iw = iw_lo; iw <= iw_hi; ++iw, ow += sw) {
                                                const double gyv = gyrow[ow];
                                                if (want_gw) wacc += gyv * xrow[iw];
                                                if (want_gx) gxrow[iw] += wv * gyv;
                                            }
                                        }
                                    }
                                    if (want_gw) gw[widx] += wacc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Normalization (instance / group over [N,C,spatial...], layer over [..., C])
// ---------------------------------------------------------------------------

namespace detail {

struct NormSlicing {
    std::size_t num_slices = 0;
    std::size_t slice_len = 0;
    std::size_t spatial = 0;         // elements per channel within a slice
    std::size_t chans_per_slice = 0;  // channels covered by one slice
    std::size_t channels = 0;
};

inline NormSlicing norm_slicing(const NormSpec& spec, const Shape& shape) {
    NormSlicing s;
    s.channels = spec.channels;
    if (spec.kind == NormKind::Layer) {
        require(!shape.empty() && shape.back() == spec.channels, "layer norm: last axis must equal channels");
        s.num_slices = numel(shape) / spec.channels;
        s.slice_len = spec.channels;
        s.spatial = 1;
        s.chans_per_slice = spec.channels;
        return s;
    }
    require(shape.size() >= 3, "instance/group norm: input must be [N,C,spatial...]");
    require(shape[1] == spec.channels, "norm: channel axis mismatch");
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) spatial *= shape[i];
    const std::size_t groups = spec.kind == NormKind::Instance ? spec.channels : spec.num_groups;
    s.num_slices = shape[0] * groups;
    s.chans_per_slice = spec.channels / groups;
    s.slice_len = s.chans_per_slice * spatial;
    s.spatial = spatial;
    return s;
}

}  // namespace detail

// Population variance, matching the fixed epsilon convention.
inline Tensor normalize(const Tensor& x, const NormSpec& spec, const Tensor& gamma = Tensor(),
                        const Tensor& beta = Tensor()) {
    spec.validate();
    const detail::NormSlicing sl = detail::norm_slicing(spec, x.shape());
    const bool affine = gamma.defined();
    if (affine) {
        require(gamma.shape() == Shape{spec.channels} && beta.defined() && beta.shape() == Shape{spec.channels},
                "normalize: affine params must be [channels]");
    }
    Tensor out = Tensor::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(sl.num_slices);
    const double* px = x.data();
    double* py = out.data();
    const double* pg = affine ? gamma.data() : nullptr;
    const double* pb = affine ? beta.data() : nullptr;

    for (std::size_t s = 0; s < sl.num_slices; ++s) {
        const std::size_t base = s * sl.slice_len;
        double msum = 0.0;
        for (std::size_t i = 0; i < sl.slice_len; ++i) msum += px[base + i];
        const double mean_v = msum / static_cast<double>(sl.slice_len);
        double vsum = 0.0;
        for (std::size_t i = 0; i < sl.slice_len; ++i) {
            const double d = px[base + i] - mean_v;
            vsum += d * d;
        }
        const double inv = 1.0 / std::sqrt(vsum / static_cast<double>(sl.slice_len) + spec.epsilon);
        (*inv_std)[s] = inv;
        for (std::size_t i = 0; i < sl.slice_len; ++i) {
            const double h = (px[base + i] - mean_v) * inv;
            (*xhat)[base + i] = h;
            if (affine) {
                std::size_t c;
                if (spec.kind == NormKind::Layer) {
                    c = i;
                } else {
                    const std::size_t group_idx = s % (spec.channels / sl.chans_per_slice);
                    c = group_idx * sl.chans_per_slice + i / sl.spatial;
                }
                py[base + i] = pg[c] * h + pb[c];
            } else {
                py[base + i] = h;
            }
        }
    }

    Tensor tx = x, tg = gamma, tb = beta, o = out;
    NormSpec sp = spec;
    std::vector<Tensor> inputs = affine ? std::vector<Tensor>{x, gamma, beta} : std::vector<Tensor>{x};
    detail::finalize_op("normalize", std::move(inputs), out, [tx, tg, tb, o, sp, sl, xhat, inv_std, affine]() mutable {
        const double* gy = o.grad().data();
        const double* h = xhat->data();
        const double* pg = affine ? tg.data() : nullptr;
        const bool want_gx = tx.requires_grad();
        double* gx = want_gx ? tx.grad().data() : nullptr;
        double* gg = (affine && tg.requires_grad()) ? tg.grad().data() : nullptr;
        double* gb = (affine && tb.requires_grad()) ? tb.grad().data() : nullptr;
        std::vector<double> dxhat(sl.slice_len);
        for (std::size_t s = 0; s < sl.num_slices; ++s) {
            const std::size_t base = s * sl.slice_len;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < sl.slice_len; ++i) {
                std::size_t c = 0;
                if (affine) {
                    if (sp.kind == NormKind::Layer) {
                        c = i;
                    } else {
                        const std::size_t group_idx = s % (sp.channels / sl.chans_per_slice);
                        c = group_idx * sl.chans_per_slice + i / sl.spatial;
                    }
                }
                const double gyv = gy[base + i];
                const double dh = affine ? gyv * pg[c] : gyv;
                dxhat[i] = dh;
                m1 += dh;
                m2 += dh * h[base + i];
                if (gg) gg[c] += gyv * h[base + i];
                if (gb) gb[c] += gyv;
            }
            if (!want_gx) continue;
            m1 /= static_cast<double>(sl.slice_len);
            m2 /= static_cast<double>(sl.slice_len);
            const double inv = (*inv_std)[s];
            for (std::size_t i = 0; i < sl.slice_len; ++i) {
                gx[base + i] += inv * (dxhat[i] - m1 - h[base + i] * m2);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Trilinear upsampling (align-corners, non-trainable)
// ---------------------------------------------------------------------------

namespace detail {

struct LerpTable {
    std::vector<std::size_t> i0, i1;
    std::vector<double> w1;
};

inline LerpTable lerp_table(std::size_t in_extent, std::size_t out_extent) {
    LerpTable t;
    t.i0.resize(out_extent);
    t.i1.resize(out_extent);
    t.w1.resize(out_extent);
    for (std::size_t i = 0; i < out_extent; ++i) {
        double pos = 0.0;
        if (out_extent > 1 && in_extent > 1) {
            pos = static_cast<double>(i) * static_cast<double>(in_extent - 1) / static_cast<double>(out_extent - 1);
        }
        const std::size_t lo = static_cast<std::size_t>(pos);
        t.i0[i] = lo;
        t.i1[i] = std::min(lo + 1, in_extent - 1);
        t.w1[i] = pos - static_cast<double>(lo);
    }
    return t;
}

}  // namespace detail

inline Tensor upsample_trilinear(const Tensor& x, std::size_t scale) {
    require(scale >= 1, "upsample_trilinear: scale must be >= 1");
    require(x.ndim() == 5, "upsample_trilinear: input must be [N,C,D,H,W]");
    const std::size_t N = x.shape()[0], C = x.shape()[1];
    const std::size_t D = x.shape()[2], H = x.shape()[3], W = x.shape()[4];
    require(D >= 1 && H >= 1 && W >= 1, "upsample_trilinear: empty spatial extent");
    const std::size_t OD = D * scale, OH = H * scale, OW = W * scale;
    const auto td = detail::lerp_table(D, OD), th = detail::lerp_table(H, OH), tw = detail::lerp_table(W, OW);

    Tensor out = Tensor::zeros({N, C, OD, OH, OW});
    const double* px = x.data();
    double* py = out.data();
    const std::size_t x_vol = D * H * W, y_vol = OD * OH * OW;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* xb = px + nc * x_vol;
        double* yb = py + nc * y_vol;
        for (std::size_t od = 0; od < OD; ++od) {
            const double wd1 = td.w1[od], wd0 = 1.0 - wd1;
            const std::size_t d0 = td.i0[od] * H * W, d1 = td.i1[od] * H * W;
            for (std::size_t oh = 0; oh < OH; ++oh) {
                const double wh1 = th.w1[oh], wh0 = 1.0 - wh1;
                const std::size_t h0 = th.i0[oh] * W, h1 = th.i1[oh] * W;
                double* yrow = yb + (od * OH + oh) * OW;
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    const double ww1 = tw.w1[ow], ww0 = 1.0 - ww1;
                    const std::size_t w0 = tw.i0[ow], w1i = tw.i1[ow];
                    yrow[ow] = wd0 * (wh0 * (ww0 * xb[d0 + h0 + w0] + ww1 * xb[d0 + h0 + w1i]) +
                                      wh1 * (ww0 * xb[d0 + h1 + w0] + ww1 * xb[d0 + h1 + w1i])) +
                               wd1 * (wh0 * (ww0 * xb[d1 + h0 + w0] + ww1 * xb[d1 + h0 + w1i]) +
                                      wh1 * (ww0 * xb[d1 + h1 + w0] + ww1 * xb[d1 + h1 + w1i]));
                }
            }
        }
    }

    Tensor tx = x, o = out;
    detail::finalize_op("upsample_trilinear", {x}, out, [tx, o, td, th, tw, N, C, D, H, W, OD, OH, OW, x_vol,
                                                         y_vol]() mutable {
        if (!tx.requires_grad()) return;
        const double* gy = o.grad().data();
        double* gx = tx.grad().data();
        for (std::size_t nc = 0; nc < N * C; ++nc) {
            double* gxb = gx + nc * x_vol;
            const double* gyb = gy + nc * y_vol;
            for (std::size_t od = 0; od < OD; ++od) {
                const double wd1 = td.w1[od], wd0 = 1.0 - wd1;
                const std::size_t d0 = td.i0[od] * H * W, d1 = td.i1[od] * H * W;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const double wh1 = th.w1[oh], wh0 = 1.0 - wh1;
                    const std::size_t h0 = th.i0[oh] * W, h1 = th.i1[oh] * W;
                    const double* gyrow = gyb + (od * OH + oh) * OW;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const double g = gyrow[ow];
                        const double ww1 = tw.w1[ow], ww0 = 1.0 - ww1;
                        const std::size_t w0 = tw.i0[ow], w1i = tw.i1[ow];
                        gxb[d0 + h0 + w0] += g * wd0 * wh0 * ww0;
                        gxb[d0 + h0 + w1i] += g * wd0 * wh0 * ww1;
                        gxb[d0 + h1 + w0] += g * wd0 * wh1 * ww0;
                        gxb[d0 + h1 + w1i] += g * wd0 * wh1 * ww1;
                        gxb[d1 + h0 + w0] += g * wd1 * wh0 * ww0;
                        gxb[d1 + h0 + w1i] += g * wd1 * wh0 * ww1;
                        gxb[d1 + h1 + w0] += g * wd1 * wh1 * ww0;
                        gxb[d1 + h1 + w1i] += g * wd1 * wh1 * ww1;
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Parameterized layer wrappers
// ---------------------------------------------------------------------------

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

inline Tensor init_conv_weight(const ConvSpec& spec, Rng& rng) {
    const std::size_t fan_in = (spec.transposed ? spec.out_channels / spec.groups : spec.in_channels / spec.groups) *
                               spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::rand_uniform(spec.weight_shape(), rng, -bound, bound, true);
}

struct Conv3dLayer {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;

    static Conv3dLayer create(const ConvSpec& spec, Rng& rng, bool with_bias = true) {
        spec.validate();
        Conv3dLayer l;
        l.spec = spec;
        l.weight = init_conv_weight(spec, rng);
        if (with_bias) {
            const std::size_t fan_in = (spec.transposed ? spec.out_channels / spec.groups
                                                        : spec.in_channels / spec.groups) *
                                       spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            l.bias = Tensor::rand_uniform(spec.bias_shape(), rng, -bound, bound, true);
        }
        return l;
    }

    Tensor forward(const Tensor& x) const {
        return spec.transposed ? conv_transpose3d(x, spec, weight, bias) : conv3d(x, spec, weight, bias);
    }

    void zero_fill() {
        std::fill(weight.values().begin(), weight.values().end(), 0.0);
        if (bias.defined()) std::fill(bias.values().begin(), bias.values().end(), 0.0);
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        visit(prefix + ".weight", weight);
        if (bias.defined()) visit(prefix + ".bias", bias);
    }
};

struct NormLayer {
    NormSpec spec;
    Tensor gamma;
    Tensor beta;

    static NormLayer create(const NormSpec& spec) {
        spec.validate();
        NormLayer l;
        l.spec = spec;
        if (spec.affine) {
            l.gamma = Tensor::full({spec.channels}, 1.0, true);
            l.beta = Tensor::zeros({spec.channels}, true);
        }
        return l;
    }

    Tensor forward(const Tensor& x) const { return normalize(x, spec, gamma, beta); }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        if (spec.affine) {
            visit(prefix + ".gamma", gamma);
            visit(prefix + ".beta", beta);
        }
    }
};

// Token-wise MLP on the channel vector at each voxel (two 1x1x1 convs with
// SiLU between), followed by instance normalization. Channel-preserving.
struct MlpSkip {
    Conv3dLayer fc1;
    Conv3dLayer fc2;
    NormLayer norm;
    bool use_norm = true;

    static MlpSkip create(std::size_t channels, std::size_t hidden_ratio, Rng& rng, double eps = 1e-5) {
        require(hidden_ratio >= 1, "MlpSkip: hidden_ratio must be >= 1");
        MlpSkip m;
        const std::size_t hidden = channels * hidden_ratio;
        m.fc1 = Conv3dLayer::create(ConvSpec::make(channels, hidden, 1, 1, 0), rng);
        m.fc2 = Conv3dLayer::create(ConvSpec::make(hidden, channels, 1, 1, 0), rng);
        NormSpec ns;
        ns.kind = NormKind::Instance;
        ns.channels = channels;
        ns.epsilon = eps;
        m.norm = NormLayer::create(ns);
        return m;
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = fc2.forward(silu(fc1.forward(x)));
        return use_norm ? norm.forward(h) : h;
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        fc1.params(prefix + ".fc1", visit);
        fc2.params(prefix + ".fc2", visit);
        if (use_norm) norm.params(prefix + ".norm", visit);
    }
};

// Two Norm->ReLU->Conv3x3x3 units plus a skip connection around both.
// Pre-activation by default; post-activation (Conv->Norm->ReLU) available as
// a config switch.
struct ResidualBlock {
    NormLayer norm1, norm2;
    Conv3dLayer conv1, conv2;
    bool preact = true;

    static ResidualBlock create(std::size_t channels, std::size_t norm_groups, Rng& rng, bool preact = true,
                                double eps = 1e-5) {
        ResidualBlock b;
        b.preact = preact;
        NormSpec ns;
        ns.kind = NormKind::Group;
        ns.num_groups = norm_groups;
        ns.channels = channels;
        ns.epsilon = eps;
        b.norm1 = NormLayer::create(ns);
        b.norm2 = NormLayer::create(ns);
        b.conv1 = Conv3dLayer::create(ConvSpec::make(channels, channels, 3, 1, 1), rng);
        b.conv2 = Conv3dLayer::create(ConvSpec::make(channels, channels, 3, 1, 1), rng);
        return b;
    }

    Tensor forward(const Tensor& x) const {
        Tensor h;
        if (preact) {
            h = conv1.forward(relu(norm1.forward(x)));
            h = conv2.forward(relu(norm2.forward(h)));
        } else {
            h = relu(norm1.forward(conv1.forward(x)));
            h = relu(norm2.forward(conv2.forward(h)));
        }
        return add(x, h);
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        norm1.params(prefix + ".norm1", visit);
        conv1.params(prefix + ".conv1", visit);
        norm2.params(prefix + ".norm2", visit);
        conv2.params(prefix + ".conv2", visit);
    }
};

}  // namespace srm

#endif  // SRM_NN_HPP
