#ifndef SRM_MODEL_HPP
#define SRM_MODEL_HPP

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "srm/mamba.hpp"
#include "srm/nn.hpp"

namespace srm {

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    std::size_t in_channels = 4;
    std::size_t num_classes = 3;
    std::array<std::size_t, 4> stage_channels{96, 192, 384, 768};
    std::size_t cmmb_per_stage = 1;
    std::size_t d_state = 16;
    std::size_t expand = 2;
    std::size_t dconv = 4;
    NormKind norm_kind = NormKind::Group;  // encoder stem/extra/down norms
    std::size_t norm_groups = 8;
    bool tom_layernorm = true;
    InterSliceOrder interslice_order = InterSliceOrder::DepthFastest;
    bool resblock_preact = true;
    // Waives the fixed 768-channel bottleneck. Reduced-width test and
    // desk-scale training configs set this explicitly.
    bool allow_custom_bottleneck = false;
    std::array<std::size_t, 3> input_extents{128, 128, 128};
    double norm_eps = 1e-5;
    std::size_t mlp_hidden_ratio = 1;

    // Decoder stages mirror the encoder: 1x1x1 reductions target the skip
    // widths so summed fusion is well-formed. With the default doubling plan
    // this is exactly halving from the 768 bottleneck.
    std::array<std::size_t, 3> decoder_channels() const {
        return {stage_channels[2], stage_channels[1], stage_channels[0]};
    }

    void validate() const {
        require(in_channels >= 1 && num_classes >= 1, "ModelConfig: channels/classes must be >= 1");
        require(cmmb_per_stage >= 1, "ModelConfig: cmmb_per_stage must be >= 1");
        require(d_state >= 1 && expand >= 1 && dconv >= 1, "ModelConfig: mamba extents must be >= 1");
        require(mlp_hidden_ratio >= 1, "ModelConfig: mlp_hidden_ratio must be >= 1");
        if (!allow_custom_bottleneck) {
            require(stage_channels[3] == 768,
                    "ModelConfig: bottleneck stage must be 768 channels (set allow_custom_bottleneck to waive)");
        }
        require(norm_groups >= 1, "ModelConfig: norm_groups must be >= 1");
        for (std::size_t c : stage_channels) {
            require(c >= 1, "ModelConfig: stage channels must be >= 1");
            require(c % norm_groups == 0, "ModelConfig: stage channels must be divisible by norm_groups");
        }
        for (std::size_t e : input_extents) {
            require(e >= 16 && e % 16 == 0, "ModelConfig: input extents must be divisible by 16");
        }
        require(norm_eps > 0.0, "ModelConfig: norm_eps must be positive");
    }

    MambaBlockSpec mamba_spec(std::size_t channels) const {
        MambaBlockSpec s;
        s.d_model = channels;
        s.d_state = d_state;
        s.expand = expand;
        s.dconv = dconv;
        s.layernorm_eps = norm_eps;
        return s;
    }
};

// ---------------------------------------------------------------------------
// Convolution Mamba Mixed Block
// ---------------------------------------------------------------------------
// Conv5 (stride 2) -> Conv3 -> ToM -> Conv3 -> ConvT5 (stride 2) -> residual
// add with the block input -> ToM. Channel-preserving; spatial extents must
// be even so the transposed conv restores them exactly.

struct Cmmb {
    Conv3dLayer down5;
    Conv3dLayer mid3a;
    TriMamba tom1;
    Conv3dLayer mid3b;
    Conv3dLayer up5;
    TriMamba tom2;

    static Cmmb create(std::size_t channels, const ModelConfig& cfg, Rng& rng) {
        Cmmb b;
        b.down5 = Conv3dLayer::create(ConvSpec::make(channels, channels, 5, 2, 2), rng);
        b.mid3a = Conv3dLayer::create(ConvSpec::make(channels, channels, 3, 1, 1), rng);
        b.tom1 = TriMamba::create(cfg.mamba_spec(channels), rng, cfg.tom_layernorm, cfg.interslice_order);
        b.mid3b = Conv3dLayer::create(ConvSpec::make(channels, channels, 3, 1, 1), rng);
        b.up5 = Conv3dLayer::create(ConvSpec::make_transposed(channels, channels, 5, 2, 2, 1), rng);
        b.tom2 = TriMamba::create(cfg.mamba_spec(channels), rng, cfg.tom_layernorm, cfg.interslice_order);
        return b;
    }

    Tensor forward(const Tensor& x) const {
        require(x.ndim() == 5, "cmmb: input must be [N,C,D,H,W]");
        for (std::size_t a = 2; a < 5; ++a) {
            require(x.shape()[a] % 2 == 0, "cmmb: spatial extents must be even");
        }
        Tensor f1 = down5.forward(x);
        Tensor f2 = mid3a.forward(f1);
        Tensor f3 = tom1.forward(f2);
        Tensor f4 = mid3b.forward(f3);
        Tensor f5 = up5.forward(f4);
        Tensor f6 = add(f5, x);
        return tom2.forward(f6);
    }

    // Zeroes the convolutional path so the block reduces to tom2(x).
    void zero_conv_path() {
        down5.zero_fill();
        mid3a.zero_fill();
        mid3b.zero_fill();
        up5.zero_fill();
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        down5.params(prefix + ".down5", visit);
        mid3a.params(prefix + ".mid3a", visit);
        tom1.params(prefix + ".tom1", visit);
        mid3b.params(prefix + ".mid3b", visit);
        up5.params(prefix + ".up5", visit);
        tom2.params(prefix + ".tom2", visit);
    }
};

// ---------------------------------------------------------------------------
// Encoder / decoder stages
// ---------------------------------------------------------------------------

struct EncoderStage {
    bool has_extra = false;
    Conv3dLayer extra3;  // channel-preserving refinement before downsampling
    NormLayer extra_norm;
    Conv3dLayer down;
    NormLayer down_norm;
    std::vector<Cmmb> cmmbs;

    Tensor forward(const Tensor& x) const {
        Tensor h = x;
        if (has_extra) h = relu(extra_norm.forward(extra3.forward(h)));
        h = relu(down_norm.forward(down.forward(h)));
        for (const Cmmb& b : cmmbs) h = b.forward(h);
        return h;
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        if (has_extra) {
            extra3.params(prefix + ".extra3", visit);
            extra_norm.params(prefix + ".extra_norm", visit);
        }
        down.params(prefix + ".down", visit);
        down_norm.params(prefix + ".down_norm", visit);
        for (std::size_t i = 0; i < cmmbs.size(); ++i) {
            cmmbs[i].params(prefix + ".cmmb" + std::to_string(i), visit);
        }
    }
};

struct EncoderOutputs {
    Tensor skip1;  // stage-1 features after the skip MLP, extents /2
    Tensor skip2;  // /4
    Tensor skip3;  // /8
    Tensor bottleneck;  // stage-4 features, extents /16
};

struct DecoderStage {
    Conv3dLayer reduce;  // 1x1x1 channel halving
    ResidualBlock res;

    Tensor forward(const Tensor& x, const Tensor& skip) const {
        Tensor h = upsample_trilinear(reduce.forward(x), 2);
        require(h.shape() == skip.shape(), "decoder: skip/decoder shape mismatch");
        return res.forward(add(h, skip));
    }

    void params(const std::string& prefix, const ParamVisitor& visit) {
        reduce.params(prefix + ".reduce", visit);
        res.params(prefix + ".res", visit);
    }
};

// ---------------------------------------------------------------------------
// SegResMamba
// ---------------------------------------------------------------------------

class SegResMamba {
public:
    static SegResMamba create(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        SegResMamba m;
        m.cfg_ = cfg;
        Rng rng(seed);

        m.stages_.resize(4);
        for (std::size_t s = 0; s < 4; ++s) {
            EncoderStage& st = m.stages_[s];
            const std::size_t cin = s == 0 ? cfg.in_channels : cfg.stage_channels[s - 1];
            const std::size_t cout = cfg.stage_channels[s];
            if (s == 0) {
                st.down = Conv3dLayer::create(ConvSpec::make(cin, cout, 7, 2, 3), rng);
            } else {
                st.has_extra = true;
                st.extra3 = Conv3dLayer::create(ConvSpec::make(cin, cin, 3, 1, 1), rng);
                st.extra_norm = NormLayer::create(m.encoder_norm_spec(cin));
                st.down = Conv3dLayer::create(ConvSpec::make(cin, cout, 2, 2, 0), rng);
            }
            st.down_norm = NormLayer::create(m.encoder_norm_spec(cout));
            for (std::size_t b = 0; b < cfg.cmmb_per_stage; ++b) {
                st.cmmbs.push_back(Cmmb::create(cout, cfg, rng));
            }
        }
        for (std::size_t s = 0; s < 3; ++s) {
            m.skips_[s] = MlpSkip::create(cfg.stage_channels[s], cfg.mlp_hidden_ratio, rng, cfg.norm_eps);
        }
        const auto dec_ch = cfg.decoder_channels();
        std::size_t dec_in = cfg.stage_channels[3];
        for (std::size_t s = 0; s < 3; ++s) {
            m.decoder_[s].reduce = Conv3dLayer::create(ConvSpec::make(dec_in, dec_ch[s], 1, 1, 0), rng);
            m.decoder_[s].res = ResidualBlock::create(dec_ch[s], cfg.norm_groups, rng, cfg.resblock_preact,
                                                      cfg.norm_eps);
            dec_in = dec_ch[s];
        }
        m.head_ = Conv3dLayer::create(ConvSpec::make_transposed(dec_ch[2], cfg.num_classes, 2, 2, 0, 0), rng);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }

    EncoderOutputs encode(const Tensor& x) const {
        require(x.ndim() == 5, "encoder: input must be [N,C,D,H,W]");
        require(x.shape()[1] == cfg_.in_channels, "encoder: input channel mismatch");
        for (std::size_t a = 2; a < 5; ++a) {
            require(x.shape()[a] % 16 == 0, "encoder: spatial extents must be divisible by 16");
        }
        EncoderOutputs out;
        Tensor h = stages_[0].forward(x);
        out.skip1 = skips_[0].forward(h);
        h = stages_[1].forward(h);
        out.skip2 = skips_[1].forward(h);
        h = stages_[2].forward(h);
        out.skip3 = skips_[2].forward(h);
        out.bottleneck = stages_[3].forward(h);
        return out;
    }

    Tensor decode(const EncoderOutputs& enc) const {
        Tensor h = decoder_[0].forward(enc.bottleneck, enc.skip3);
        h = decoder_[1].forward(h, enc.skip2);
        h = decoder_[2].forward(h, enc.skip1);
        return head_.forward(h);
    }

    Tensor forward(const Tensor& x) const { return decode(encode(x)); }

    void visit_params(const ParamVisitor& visit) {
        for (std::size_t s = 0; s < 4; ++s) {
            stages_[s].params("enc" + std::to_string(s + 1), visit);
        }
        for (std::size_t s = 0; s < 3; ++s) {
            skips_[s].params("skip" + std::to_string(s + 1), visit);
        }
        for (std::size_t s = 0; s < 3; ++s) {
            decoder_[s].params("dec" + std::to_string(s + 1), visit);
        }
        head_.params("head", visit);
    }

    std::vector<std::pair<std::string, Tensor>> named_params() {
        std::vector<std::pair<std::string, Tensor>> out;
        visit_params([&out](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        visit_params([&n](const std::string&, Tensor& t) { n += t.size(); });
        return n;
    }

    void zero_grads() {
        visit_params([](const std::string&, Tensor& t) { t.zero_grad(); });
    }

    EncoderStage& stage(std::size_t i) { return stages_[i]; }
    MlpSkip& skip(std::size_t i) { return skips_[i]; }
    DecoderStage& decoder_stage(std::size_t i) { return decoder_[i]; }
    Conv3dLayer& head() { return head_; }

private:
    NormSpec encoder_norm_spec(std::size_t channels) const {
        NormSpec ns;
        ns.kind = cfg_.norm_kind;
        ns.num_groups = cfg_.norm_groups;
        ns.channels = channels;
        ns.epsilon = cfg_.norm_eps;
        return ns;
    }

    ModelConfig cfg_;
    std::vector<EncoderStage> stages_;
    std::array<MlpSkip, 3> skips_;
    std::array<DecoderStage, 3> decoder_;
    Conv3dLayer head_;
};

}  // namespace srm

#endif  // SRM_MODEL_HPP
