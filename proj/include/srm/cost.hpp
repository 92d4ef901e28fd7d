#ifndef SRM_COST_HPP
#define SRM_COST_HPP

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "srm/model.hpp"

namespace srm {

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------
// MAC conventions (shared with the counting oracle in the test suite):
//   * conv3d / conv_transpose3d: out_voxels * C_out * (C_in/groups) * k^3,
//     padding positions counted as multiplies by explicit zeros.
//   * linear over L tokens: L * in * out.
//   * depthwise causal conv: L * C * K (causal left pad counted as zeros).
//   * selective scan: L * d * N * 5 + L * d. The five state multiplies per
//     (t, channel, state) are delta*A, Abar*h, delta*B, Bbar*u and C*h; the
//     trailing term is the D skip per (t, channel). Parameter transforms
//     (exp of the A log) are not counted.
// Elementwise, normalization, upsampling and gating layers carry FLOPs only.
// FLOPs for MAC layers are fixed at 2*MACs.

struct CostRow {
    std::string name;
    std::string kind;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    std::uint64_t flops = 0;
    std::uint64_t activation_elems = 0;  // per-sample elements retained for backward
};

struct Co2Row {
    std::string label;
    double hours = 0.0;
    double power_kw = 0.0;
    double intensity = 0.0;
    double kg = 0.0;
};

struct CostReport {
    std::vector<CostRow> rows;
    std::array<std::size_t, 3> input_extents{0, 0, 0};
    std::size_t batch = 1;
    std::size_t bytes_per_element = 4;
    std::uint64_t total_params = 0;
    std::uint64_t total_macs = 0;
    std::uint64_t total_flops = 0;
    std::uint64_t total_activation_elems = 0;
    std::uint64_t peak_memory_bytes = 0;
    // Optional published reference points; deviation is reported, not gated.
    double reference_params_millions = 0.0;
    double reference_macs_g = 0.0;
    double reference_memory_gb = 0.0;
    double params_deviation_pct = 0.0;
    double macs_deviation_pct = 0.0;
    double memory_ratio = 0.0;
    std::vector<Co2Row> co2;
};

namespace costdetail {

using Ext3 = std::array<std::size_t, 3>;

inline Ext3 conv_out(const ConvSpec& spec, Ext3 e) {
    return {spec.out_extent(0, e[0]), spec.out_extent(1, e[1]), spec.out_extent(2, e[2])};
}

inline std::uint64_t vol(Ext3 e) {
    return static_cast<std::uint64_t>(e[0]) * static_cast<std::uint64_t>(e[1]) * static_cast<std::uint64_t>(e[2]);
}

struct RowBuilder {
    std::vector<CostRow>& rows;

    void conv(const std::string& name, const ConvSpec& spec, Ext3 in, Ext3& out) {
        out = conv_out(spec, in);
        const std::uint64_t k3 = static_cast<std::uint64_t>(spec.kernel[0]) * spec.kernel[1] * spec.kernel[2];
        CostRow r;
        r.name = name;
        r.kind = spec.transposed ? "conv_transpose" : "conv";
        r.params = static_cast<std::uint64_t>(spec.out_channels) * (spec.in_channels / spec.groups) * k3 +
                   spec.out_channels;
        r.macs = vol(out) * spec.out_channels * (spec.in_channels / spec.groups) * k3;
        r.flops = 2 * r.macs;
        r.activation_elems = vol(out) * spec.out_channels;
        rows.push_back(std::move(r));
    }

    void norm(const std::string& name, std::size_t channels, std::uint64_t elems, bool affine = true) {
        CostRow r;
        r.name = name;
        r.kind = "norm";
        r.params = affine ? 2 * static_cast<std::uint64_t>(channels) : 0;
        r.flops = 5 * elems;
        r.activation_elems = 2 * elems;  // output plus normalized values kept for backward
        rows.push_back(std::move(r));
    }

    void act(const std::string& name, std::uint64_t elems, std::uint64_t flops_per_elem) {
        CostRow r;
        r.name = name;
        r.kind = "act";
        r.flops = flops_per_elem * elems;
        r.activation_elems = elems;
        rows.push_back(std::move(r));
    }

    void add(const std::string& name, std::uint64_t elems) {
        CostRow r;
        r.name = name;
        r.kind = "add";
        r.flops = elems;
        r.activation_elems = elems;
        rows.push_back(std::move(r));
    }

    void linear(const std::string& name, std::uint64_t tokens, std::size_t in, std::size_t out, bool bias) {
        CostRow r;
        r.name = name;
        r.kind = "linear";
        r.params = static_cast<std::uint64_t>(in) * out + (bias ? out : 0);
        r.macs = tokens * in * out;
        r.flops = 2 * r.macs;
        r.activation_elems = tokens * out;
        rows.push_back(std::move(r));
    }

    void mamba(const std::string& prefix, std::uint64_t tokens, const MambaBlockSpec& spec) {
        const std::size_t d = spec.d_model, di = spec.d_inner(), n = spec.d_state, k = spec.dconv;
        linear(prefix + ".in_x", tokens, d, di, false);
        linear(prefix + ".in_g", tokens, d, di, false);
        {
            CostRow r;
            r.name = prefix + ".dconv";
            r.kind = "dconv";
            r.params = static_cast<std::uint64_t>(di) * k + di;
            r.macs = tokens * di * k;
            r.flops = 2 * r.macs + 4 * tokens * di;  // plus the SiLU on the conv output
            r.activation_elems = 2 * tokens * di;
            rows.push_back(std::move(r));
        }
        {
            CostRow r;
            r.name = prefix + ".delta";
            r.kind = "linear";
            r.params = static_cast<std::uint64_t>(di) * di + di;
            r.macs = tokens * di * di;
            r.flops = 2 * r.macs + 4 * tokens * di;  // plus softplus
            r.activation_elems = 2 * tokens * di;
            rows.push_back(std::move(r));
        }
        linear(prefix + ".b_proj", tokens, di, n, false);
        linear(prefix + ".c_proj", tokens, di, n, false);
        {
            CostRow r;
            r.name = prefix + ".scan";
            r.kind = "scan";
            r.params = static_cast<std::uint64_t>(di) * n + di;  // A log and D skip
            r.macs = tokens * di * n * 5 + tokens * di;
            r.flops = 2 * r.macs;
            r.activation_elems = tokens * di + tokens * di * n;  // output plus hidden states
            rows.push_back(std::move(r));
        }
        {
            CostRow r;
            r.name = prefix + ".gate";
            r.kind = "gate";
            r.flops = 5 * tokens * di;
            r.activation_elems = 2 * tokens * di;
            rows.push_back(std::move(r));
        }
        linear(prefix + ".out", tokens, di, d, false);
    }

    void tom(const std::string& prefix, Ext3 e, const MambaBlockSpec& spec, bool layernorm) {
        const std::uint64_t tokens = vol(e);
        const std::size_t c = spec.d_model;
        {
            // Flatten/unflatten copies for the three orientations.
            CostRow r;
            r.name = prefix + ".layout";
            r.kind = "layout";
            r.activation_elems = 12 * tokens * c;
            rows.push_back(std::move(r));
        }
        const char* branches[3] = {".f", ".r", ".s"};
        const char* lns[3] = {".ln_f", ".ln_r", ".ln_s"};
        for (int b = 0; b < 3; ++b) {
            if (layernorm) norm(prefix + lns[b], c, tokens * c);
            mamba(prefix + branches[b], tokens, spec);
        }
        add(prefix + ".sum", 2 * tokens * c);
    }

    void cmmb(const std::string& prefix, std::size_t channels, Ext3 e, const ModelConfig& cfg) {
        require(e[0] % 2 == 0 && e[1] % 2 == 0 && e[2] % 2 == 0, "cost: cmmb extents must be even");
        Ext3 half;
        conv(prefix + ".down5", ConvSpec::make(channels, channels, 5, 2, 2), e, half);
        Ext3 same = half;
        conv(prefix + ".mid3a", ConvSpec::make(channels, channels, 3, 1, 1), half, same);
        tom(prefix + ".tom1", same, cfg.mamba_spec(channels), cfg.tom_layernorm);
        conv(prefix + ".mid3b", ConvSpec::make(channels, channels, 3, 1, 1), same, same);
        Ext3 restored;
        conv(prefix + ".up5", ConvSpec::make_transposed(channels, channels, 5, 2, 2, 1), same, restored);
        require(restored == e, "cost: cmmb does not restore extents");
        add(prefix + ".residual", vol(e) * channels);
        tom(prefix + ".tom2", e, cfg.mamba_spec(channels), cfg.tom_layernorm);
    }
};

}  // namespace costdetail

struct AnalyzeOptions {
    std::array<std::size_t, 3> input_extents{128, 128, 128};
    std::size_t batch = 1;
    std::size_t bytes_per_element = 4;
    double reference_params_millions = 0.0;
    double reference_macs_g = 0.0;
    double reference_memory_gb = 0.0;
};

// Enumerates every layer of the network the config describes, in execution
// order, with closed-form parameter/MAC/FLOP/activation counts.
inline std::vector<CostRow> build_cost_rows(const ModelConfig& cfg, std::array<std::size_t, 3> input_extents) {
    cfg.validate();
    for (std::size_t e : input_extents) require(e % 16 == 0, "cost: extents must be divisible by 16");
    std::vector<CostRow> rows;
    costdetail::RowBuilder b{rows};
    using costdetail::Ext3;

    Ext3 e{input_extents[0], input_extents[1], input_extents[2]};
    {
        CostRow r;
        r.name = "input";
        r.kind = "input";
        r.activation_elems = costdetail::vol(e) * cfg.in_channels;
        rows.push_back(std::move(r));
    }

    std::vector<Ext3> stage_extents;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string prefix = "enc" + std::to_string(s + 1);
        const std::size_t cin = s == 0 ? cfg.in_channels : cfg.stage_channels[s - 1];
        const std::size_t cout = cfg.stage_channels[s];
        if (s > 0) {
            Ext3 same = e;
            b.conv(prefix + ".extra3", ConvSpec::make(cin, cin, 3, 1, 1), e, same);
            b.norm(prefix + ".extra_norm", cin, costdetail::vol(e) * cin);
            b.act(prefix + ".extra_relu", costdetail::vol(e) * cin, 1);
        }
        Ext3 down;
        if (s == 0) {
            b.conv(prefix + ".down", ConvSpec::make(cin, cout, 7, 2, 3), e, down);
        } else {
            b.conv(prefix + ".down", ConvSpec::make(cin, cout, 2, 2, 0), e, down);
        }
        e = down;
        b.norm(prefix + ".down_norm", cout, costdetail::vol(e) * cout);
        b.act(prefix + ".down_relu", costdetail::vol(e) * cout, 1);
        for (std::size_t i = 0; i < cfg.cmmb_per_stage; ++i) {
            b.cmmb(prefix + ".cmmb" + std::to_string(i), cout, e, cfg);
        }
        stage_extents.push_back(e);
        if (s < 3) {
            const std::string sp = "skip" + std::to_string(s + 1);
            const std::size_t hidden = cout * cfg.mlp_hidden_ratio;
            Ext3 same = e;
            b.conv(sp + ".fc1", ConvSpec::make(cout, hidden, 1, 1, 0), e, same);
            b.act(sp + ".silu", costdetail::vol(e) * hidden, 4);
            b.conv(sp + ".fc2", ConvSpec::make(hidden, cout, 1, 1, 0), e, same);
            b.norm(sp + ".norm", cout, costdetail::vol(e) * cout);
        }
    }

    const auto dec_ch = cfg.decoder_channels();
    std::size_t dec_in = cfg.stage_channels[3];
    Ext3 de = stage_extents[3];
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string prefix = "dec" + std::to_string(s + 1);
        Ext3 same = de;
        b.conv(prefix + ".reduce", ConvSpec::make(dec_in, dec_ch[s], 1, 1, 0), de, same);
        Ext3 up{de[0] * 2, de[1] * 2, de[2] * 2};
        {
            CostRow r;
            r.name = prefix + ".upsample";
            r.kind = "upsample";
            r.flops = 21 * costdetail::vol(up) * dec_ch[s];
            r.activation_elems = costdetail::vol(up) * dec_ch[s];
            rows.push_back(std::move(r));
        }
        b.add(prefix + ".skip_sum", costdetail::vol(up) * dec_ch[s]);
        for (int unit = 1; unit <= 2; ++unit) {
            const std::string u = prefix + ".res.unit" + std::to_string(unit);
            b.norm(u + ".norm", dec_ch[s], costdetail::vol(up) * dec_ch[s]);
            b.act(u + ".relu", costdetail::vol(up) * dec_ch[s], 1);
            Ext3 usame = up;
            b.conv(u + ".conv", ConvSpec::make(dec_ch[s], dec_ch[s], 3, 1, 1), up, usame);
        }
        b.add(prefix + ".res.skip", costdetail::vol(up) * dec_ch[s]);
        dec_in = dec_ch[s];
        de = up;
    }
    Ext3 full;
    b.conv("head", ConvSpec::make_transposed(dec_ch[2], cfg.num_classes, 2, 2, 0, 0), de, full);
    require(full[0] == input_extents[0] && full[1] == input_extents[1] && full[2] == input_extents[2],
            "cost: head does not restore input extents");
    return rows;
}

// Training-mode peak estimate: parameters, gradients and both Adam moments
// (4 copies of the parameter bytes), all activations retained for backward,
// plus transient workspace for the largest single layer. Exactly linear in
// batch size; allocator fragmentation and framework overhead are ignored.
inline std::uint64_t estimate_peak_memory(std::uint64_t total_params,
                                          const std::vector<std::uint64_t>& activation_elems, std::size_t batch,
                                          std::size_t bytes_per_element) {
    std::uint64_t act = 0, largest = 0;
    for (std::uint64_t a : activation_elems) {
        act += a;
        largest = std::max(largest, a);
    }
    return 4 * total_params * bytes_per_element +
           static_cast<std::uint64_t>(batch) * (act + largest) * bytes_per_element;
}

inline std::uint64_t estimate_peak_memory(const ModelConfig& cfg, std::array<std::size_t, 3> input_extents,
                                          std::size_t batch, std::size_t bytes_per_element) {
    const auto rows = build_cost_rows(cfg, input_extents);
    std::uint64_t params = 0;
    std::vector<std::uint64_t> acts;
    acts.reserve(rows.size());
    for (const CostRow& r : rows) {
        params += r.params;
        acts.push_back(r.activation_elems);
    }
    return estimate_peak_memory(params, acts, batch, bytes_per_element);
}

inline CostReport analyze_model(const ModelConfig& cfg, const AnalyzeOptions& opt) {
    CostReport rep;
    rep.rows = build_cost_rows(cfg, opt.input_extents);
    rep.input_extents = opt.input_extents;
    rep.batch = opt.batch;
    rep.bytes_per_element = opt.bytes_per_element;
    std::vector<std::uint64_t> acts;
    for (const CostRow& r : rep.rows) {
        rep.total_params += r.params;
        rep.total_macs += r.macs;
        rep.total_flops += r.flops;
        rep.total_activation_elems += r.activation_elems;
        acts.push_back(r.activation_elems);
    }
    rep.peak_memory_bytes = estimate_peak_memory(rep.total_params, acts, opt.batch, opt.bytes_per_element);
    rep.reference_params_millions = opt.reference_params_millions;
    rep.reference_macs_g = opt.reference_macs_g;
    rep.reference_memory_gb = opt.reference_memory_gb;
    if (opt.reference_params_millions > 0.0) {
        const double ours = static_cast<double>(rep.total_params) / 1e6;
        rep.params_deviation_pct = 100.0 * (ours - opt.reference_params_millions) / opt.reference_params_millions;
    }
    if (opt.reference_macs_g > 0.0) {
        const double ours = static_cast<double>(rep.total_macs) / 1e9;
        rep.macs_deviation_pct = 100.0 * (ours - opt.reference_macs_g) / opt.reference_macs_g;
    }
    if (opt.reference_memory_gb > 0.0) {
        rep.memory_ratio = static_cast<double>(rep.peak_memory_bytes) / (opt.reference_memory_gb * 1e9);
    }
    return rep;
}

inline std::uint64_t count_params(const ModelConfig& cfg) {
    // Parameter counts are extent-independent; any valid extents work here.
    const auto rows = build_cost_rows(cfg, {32, 32, 32});
    std::uint64_t total = 0;
    for (const CostRow& r : rows) total += r.params;
    return total;
}

inline std::uint64_t count_macs(const ModelConfig& cfg, std::array<std::size_t, 3> input_extents) {
    const auto rows = build_cost_rows(cfg, input_extents);
    std::uint64_t total = 0;
    for (const CostRow& r : rows) total += r.macs;
    return total;
}

// ---------------------------------------------------------------------------
// CO2 estimation: kg = power_kw * hours * intensity
// ---------------------------------------------------------------------------

struct EmissionsSpec {
    double device_power_kw = 0.25;
    double hours = 0.0;
    double carbon_intensity_kg_per_kwh = 0.61;
};

// Regional carbon intensities in kgCO2eq/kWh. The amazon figure is the
// published eu-central-1 value; google and azure are back-solved from the
// reference emission table.
inline double emissions_preset_intensity(const std::string& name) {
    if (name == "amazon") return 0.61;
    if (name == "google") return 0.62;
    if (name == "azure") return 0.57;
    throw ShapeError("unknown emissions preset: " + name);
}

inline double estimate_co2(const EmissionsSpec& spec) {
    require(spec.device_power_kw > 0.0 && spec.hours > 0.0 && spec.carbon_intensity_kg_per_kwh > 0.0,
            "estimate_co2: all inputs must be positive");
    return spec.device_power_kw * spec.hours * spec.carbon_intensity_kg_per_kwh;
}

// ---------------------------------------------------------------------------
// Report rendering (stable text and CSV forms, UTF-8, LF line endings)
// ---------------------------------------------------------------------------

namespace costdetail {

inline std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace costdetail

inline std::string report_csv(const CostReport& rep) {
    std::string out = "name,kind,params,macs,flops,activation_elems\n";
    for (const CostRow& r : rep.rows) {
        out += r.name + "," + r.kind + "," + costdetail::fmt_u64(r.params) + "," + costdetail::fmt_u64(r.macs) + "," +
               costdetail::fmt_u64(r.flops) + "," + costdetail::fmt_u64(r.activation_elems) + "\n";
    }
    out += "TOTAL,," + costdetail::fmt_u64(rep.total_params) + "," + costdetail::fmt_u64(rep.total_macs) + "," +
           costdetail::fmt_u64(rep.total_flops) + "," + costdetail::fmt_u64(rep.total_activation_elems) + "\n";
    return out;
}

inline std::string golden_tables(const CostReport& rep) {
    std::string out;
    char buf[256];
    std::size_t name_w = 4;
    for (const CostRow& r : rep.rows) name_w = std::max(name_w, r.name.size());
    std::snprintf(buf, sizeof(buf), "%-*s  %-14s  %14s  %16s  %16s  %14s\n", static_cast<int>(name_w), "name", "kind",
                  "params", "macs", "flops", "act_elems");
    out += buf;
    for (const CostRow& r : rep.rows) {
        std::snprintf(buf, sizeof(buf), "%-*s  %-14s  %14llu  %16llu  %16llu  %14llu\n", static_cast<int>(name_w),
                      r.name.c_str(), r.kind.c_str(), static_cast<unsigned long long>(r.params),
                      static_cast<unsigned long long>(r.macs), static_cast<unsigned long long>(r.flops),
                      static_cast<unsigned long long>(r.activation_elems));
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-*s  %-14s  %14llu  %16llu  %16llu  %14llu\n", static_cast<int>(name_w), "TOTAL",
                  "", static_cast<unsigned long long>(rep.total_params),
                  static_cast<unsigned long long>(rep.total_macs), static_cast<unsigned long long>(rep.total_flops),
                  static_cast<unsigned long long>(rep.total_activation_elems));
    out += buf;
    std::snprintf(buf, sizeof(buf), "\nparams: %.4f M   macs: %.4f G   flops: %.4f G\n",
                  static_cast<double>(rep.total_params) / 1e6, static_cast<double>(rep.total_macs) / 1e9,
                  static_cast<double>(rep.total_flops) / 1e9);
    out += buf;
    std::snprintf(buf, sizeof(buf), "peak training memory (batch %zu, %zu B/elem): %.4f GB\n", rep.batch,
                  rep.bytes_per_element, static_cast<double>(rep.peak_memory_bytes) / 1e9);
    out += buf;
    if (rep.reference_params_millions > 0.0) {
        std::snprintf(buf, sizeof(buf), "reference params: %.2f M   deviation: %+.2f%%\n",
                      rep.reference_params_millions, rep.params_deviation_pct);
        out += buf;
    }
    if (rep.reference_macs_g > 0.0) {
        std::snprintf(buf, sizeof(buf), "reference macs: %.2f G   deviation: %+.2f%%\n", rep.reference_macs_g,
                      rep.macs_deviation_pct);
        out += buf;
    }
    if (rep.reference_memory_gb > 0.0) {
        std::snprintf(buf, sizeof(buf), "reference memory: %.2f GB   ratio: %.4f\n", rep.reference_memory_gb,
                      rep.memory_ratio);
        out += buf;
    }
    if (!rep.co2.empty()) {
        out += "\nco2 estimates (kg = kW x h x intensity)\n";
        for (const Co2Row& r : rep.co2) {
            std::snprintf(buf, sizeof(buf), "%-12s  %8.2f h  %5.2f kW  %4.2f kg/kWh  %8.2f kg\n", r.label.c_str(),
                          r.hours, r.power_kw, r.intensity, r.kg);
            out += buf;
        }
    }
    return out;
}

}  // namespace srm

#endif  // SRM_COST_HPP
