#ifndef SRM_TRAIN_HPP
#define SRM_TRAIN_HPP

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "srm/model.hpp"
#include "srm/tensor.hpp"

namespace srm {

// ---------------------------------------------------------------------------
// Samples and synthetic data
// ---------------------------------------------------------------------------

struct VolumeSample {
    Tensor image;                     // [C,D,H,W]
    std::vector<std::int32_t> label;  // [D,H,W] row-major class ids
    std::array<std::size_t, 3> extents{0, 0, 0};

    std::size_t voxels() const { return extents[0] * extents[1] * extents[2]; }
};

// One-hot label volume with a leading batch axis: [1,K,D,H,W].
inline Tensor one_hot(const VolumeSample& s, std::size_t num_classes) {
    const std::size_t v = s.voxels();
    std::vector<double> d(num_classes * v, 0.0);
    for (std::size_t i = 0; i < v; ++i) {
        const auto cls = static_cast<std::size_t>(s.label[i]);
        require(cls < num_classes, "one_hot: label id out of range");
        d[cls * v + i] = 1.0;
    }
    return Tensor::from({1, num_classes, s.extents[0], s.extents[1], s.extents[2]}, std::move(d));
}

// Each sample places 1..3 random ellipsoids per foreground class into a noisy
// background; the label is the exact geometry and the image is the
// class-dependent intensity plus Gaussian noise (sigma 0.1). Foreground
// classes are redrawn if a later class fully overwrites them, so every class
// is present in every sample.
inline std::vector<VolumeSample> synth_dataset(std::size_t n, std::array<std::size_t, 3> extents,
                                               std::size_t num_classes, const Rng& rng, std::size_t channels = 1,
                                               double noise_sigma = 0.1) {
    for (std::size_t e : extents) require(e >= 16 && e % 16 == 0, "synth_dataset: extents must be divisible by 16");
    require(num_classes >= 2, "synth_dataset: need at least one foreground class");
    const std::size_t D = extents[0], H = extents[1], W = extents[2];
    const std::size_t v = D * H * W;
    std::vector<VolumeSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng r = rng.fork(i);
        std::vector<std::int32_t> label;
        for (int attempt = 0; attempt < 100; ++attempt) {
            label.assign(v, 0);
            for (std::size_t cls = 1; cls < num_classes; ++cls) {
                const std::size_t count = 1 + r.index(3);
                for (std::size_t e = 0; e < count; ++e) {
                    const double rd = r.uniform(static_cast<double>(D) / 8.0, static_cast<double>(D) / 5.0);
                    const double rh = r.uniform(static_cast<double>(H) / 8.0, static_cast<double>(H) / 5.0);
                    const double rw = r.uniform(static_cast<double>(W) / 8.0, static_cast<double>(W) / 5.0);
                    const double cd = r.uniform(rd, static_cast<double>(D) - rd);
                    const double ch = r.uniform(rh, static_cast<double>(H) - rh);
                    const double cw = r.uniform(rw, static_cast<double>(W) - rw);
                    for (std::size_t d = 0; d < D; ++d) {
                        const double fd = (static_cast<double>(d) - cd) / rd;
                        for (std::size_t h = 0; h < H; ++h) {
                            const double fh = (static_cast<double>(h) - ch) / rh;
                            for (std::size_t w = 0; w < W; ++w) {
                                const double fw = (static_cast<double>(w) - cw) / rw;
                                if (fd * fd + fh * fh + fw * fw <= 1.0) {
                                    label[(d * H + h) * W + w] = static_cast<std::int32_t>(cls);
                                }
                            }
                        }
                    }
                }
            }
            std::vector<bool> seen(num_classes, false);
            for (std::int32_t id : label) seen[static_cast<std::size_t>(id)] = true;
            bool all = true;
            for (std::size_t cls = 0; cls < num_classes; ++cls) all = all && seen[cls];
            if (all) break;
        }
        std::vector<double> img(channels * v);
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t j = 0; j < v; ++j) {
                img[c * v + j] = static_cast<double>(label[j]) + noise_sigma * r.normal();
            }
        }
        VolumeSample s;
        s.image = Tensor::from({channels, D, H, W}, std::move(img));
        s.label = std::move(label);
        s.extents = extents;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

inline VolumeSample flip_sample(const VolumeSample& s, std::size_t axis) {
    require(axis < 3, "flip_sample: axis out of range");
    VolumeSample out;
    out.extents = s.extents;
    const std::size_t C = s.image.shape()[0];
    const std::size_t D = s.extents[0], H = s.extents[1], W = s.extents[2];
    const std::size_t v = D * H * W;
    std::vector<double> img(C * v);
    out.label.resize(v);
    const double* src = s.image.data();
    auto flipped = [&](std::size_t d, std::size_t h, std::size_t w) {
        if (axis == 0) d = D - 1 - d;
        if (axis == 1) h = H - 1 - h;
        if (axis == 2) w = W - 1 - w;
        return (d * H + h) * W + w;
    };
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t w = 0; w < W; ++w) {
                const std::size_t dst = (d * H + h) * W + w;
                const std::size_t srcidx = flipped(d, h, w);
                out.label[dst] = s.label[srcidx];
                for (std::size_t c = 0; c < C; ++c) img[c * v + dst] = src[c * v + srcidx];
            }
        }
    }
    out.image = Tensor::from(s.image.shape(), std::move(img));
    return out;
}

inline VolumeSample crop_sample(const VolumeSample& s, std::array<std::size_t, 3> offset,
                                std::array<std::size_t, 3> patch) {
    for (std::size_t a = 0; a < 3; ++a) {
        require(patch[a] >= 1 && offset[a] + patch[a] <= s.extents[a], "crop_sample: crop larger than volume");
    }
    const std::size_t C = s.image.shape()[0];
    const std::size_t H = s.extents[1], W = s.extents[2];
    const std::size_t v_in = s.voxels();
    const std::size_t v_out = patch[0] * patch[1] * patch[2];
    VolumeSample out;
    out.extents = patch;
    out.label.resize(v_out);
    std::vector<double> img(C * v_out);
    const double* src = s.image.data();
    for (std::size_t d = 0; d < patch[0]; ++d) {
        for (std::size_t h = 0; h < patch[1]; ++h) {
            for (std::size_t w = 0; w < patch[2]; ++w) {
                const std::size_t dst = (d * patch[1] + h) * patch[2] + w;
                const std::size_t srcidx = ((d + offset[0]) * H + (h + offset[1])) * W + (w + offset[2]);
                out.label[dst] = s.label[srcidx];
                for (std::size_t c = 0; c < C; ++c) img[c * v_out + dst] = src[c * v_in + srcidx];
            }
        }
    }
    out.image = Tensor::from({C, patch[0], patch[1], patch[2]}, std::move(img));
    return out;
}

inline VolumeSample scale_intensity(const VolumeSample& s, double factor) {
    VolumeSample out;
    out.extents = s.extents;
    out.label = s.label;
    std::vector<double> img = s.image.values();
    for (double& x : img) x *= factor;
    out.image = Tensor::from(s.image.shape(), std::move(img));
    return out;
}

// Random spatial crop to the patch extents, independent p=0.5 flips on each
// spatial axis (image and label together), then uniform intensity scaling on
// the image only. Draw order is fixed so a seeded run is reproducible.
inline VolumeSample augment(const VolumeSample& s, std::array<std::size_t, 3> patch, Rng& rng) {
    std::array<std::size_t, 3> offset{};
    for (std::size_t a = 0; a < 3; ++a) {
        require(patch[a] <= s.extents[a], "augment: crop larger than volume");
        offset[a] = rng.index(s.extents[a] - patch[a] + 1);
    }
    VolumeSample out = crop_sample(s, offset, patch);
    for (std::size_t a = 0; a < 3; ++a) {
        const bool do_flip = rng.bernoulli(0.5);
        if (do_flip) out = flip_sample(out, a);
    }
    const double factor = rng.uniform(0.9, 1.1);
    return scale_intensity(out, factor);
}

// ---------------------------------------------------------------------------
// Dice loss and metric
// ---------------------------------------------------------------------------

// Soft dice on softmax probabilities: per-class
// (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth), loss = 1 - mean.
inline Tensor dice_loss(const Tensor& logits, const Tensor& target_onehot, double smooth = 1e-5,
                        bool include_background = true) {
    require(logits.ndim() == 5, "dice_loss: logits must be [N,K,D,H,W]");
    require(logits.shape() == target_onehot.shape(), "dice_loss: logits/target shape mismatch");
    const std::size_t k = logits.shape()[1];
    Tensor probs = softmax(logits, 1);
    const std::size_t rest = logits.size() / k;
    Tensor p2 = reshape(permute(probs, {1, 0, 2, 3, 4}), {k, rest});
    Tensor t2 = reshape(permute(target_onehot, {1, 0, 2, 3, 4}), {k, rest});
    Tensor inter = rowsum(mul(p2, t2));
    Tensor denom = add(rowsum(p2), rowsum(t2));
    Tensor dice = div(add_scalar(scale(inter, 2.0), smooth), add_scalar(denom, smooth));
    std::vector<double> w(k, 1.0);
    std::size_t counted = k;
    if (!include_background) {
        require(k >= 2, "dice_loss: cannot exclude background with a single class");
        w[0] = 0.0;
        counted = k - 1;
    }
    Tensor weights = Tensor::from({k}, std::move(w));
    Tensor mean_dice = scale(sum(mul(dice, weights)), 1.0 / static_cast<double>(counted));
    return add_scalar(neg(mean_dice), 1.0);
}

struct DiceScores {
    std::vector<double> per_class;
    double mean = 0.0;
};

// Hard-label dice. Classes absent from both prediction and target score 1.
inline DiceScores dice_metric(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& target,
                              std::size_t num_classes, bool include_background = true) {
    require(pred.size() == target.size(), "dice_metric: size mismatch");
    std::vector<double> inter(num_classes, 0.0), psum(num_classes, 0.0), tsum(num_classes, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto p = static_cast<std::size_t>(pred[i]);
        const auto t = static_cast<std::size_t>(target[i]);
        psum[p] += 1.0;
        tsum[t] += 1.0;
        if (p == t) inter[p] += 1.0;
    }
    DiceScores out;
    out.per_class.resize(num_classes);
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double denom = psum[c] + tsum[c];
        out.per_class[c] = denom == 0.0 ? 1.0 : 2.0 * inter[c] / denom;
        if (include_background || c > 0) {
            acc += out.per_class[c];
            ++counted;
        }
    }
    out.mean = counted ? acc / static_cast<double>(counted) : 0.0;
    return out;
}

// Lowest class index wins ties, everywhere.
inline std::vector<std::int32_t> argmax_labels(const Tensor& logits) {
    require(logits.ndim() == 5 && logits.shape()[0] == 1, "argmax_labels: logits must be [1,K,D,H,W]");
    const std::size_t k = logits.shape()[1];
    const std::size_t v = logits.size() / k;
    std::vector<std::int32_t> out(v, 0);
    const double* p = logits.data();
    for (std::size_t i = 0; i < v; ++i) {
        double best = p[i];
        std::int32_t arg = 0;
        for (std::size_t c = 1; c < k; ++c) {
            const double val = p[c * v + i];
            if (val > best) {
                best = val;
                arg = static_cast<std::int32_t>(c);
            }
        }
        out[i] = arg;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct OptimState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-5;
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<Tensor>& params) {
        m.assign(params.size(), {});
        v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].size(), 0.0);
            v[i].assign(params[i].size(), 0.0);
        }
        step = 0;
    }
};

// Adam with decoupled weight decay: the decay term scales parameters
// directly, outside the moment update.
inline void adamw_step(std::vector<Tensor>& params, OptimState& st) {
    require(st.m.size() == params.size() && st.v.size() == params.size(), "adamw_step: state not initialized");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        require(st.m[i].size() == p.size(), "adamw_step: moment/parameter shape mismatch");
        p.ensure_grad();
        const std::vector<double>& g = p.grad();
        std::vector<double>& m = st.m[i];
        std::vector<double>& v = st.v[i];
        double* w = p.data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            w[j] -= st.lr * st.weight_decay * w[j];
            m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
            v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= st.lr * mhat / (std::sqrt(vhat) + st.epsilon);
        }
    }
}

inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
    require(total_steps >= 1, "cosine_lr: total_steps must be >= 1");
    require(step <= total_steps, "cosine_lr: step beyond total_steps");
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.141592653589793238462643383280 * t));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainHyper {
    std::size_t steps = 500;
    double lr_max = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-5;
    double smooth = 1e-5;
    bool include_background = true;
    bool augment_enabled = true;
    std::size_t eval_every = 50;
    std::array<std::size_t, 3> patch{0, 0, 0};  // 0 = full volume
    std::uint64_t seed = 42;
};

struct HistoryRow {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double mean_dice = 0.0;
    bool has_dice = false;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    double final_mean_dice = 0.0;
    std::vector<double> final_per_class;
};

// Mean dice over the (un-augmented) dataset under the current parameters.
inline DiceScores evaluate(SegResMamba& model, const std::vector<VolumeSample>& data, bool include_background) {
    NoGradGuard ng;
    const std::size_t k = model.config().num_classes;
    DiceScores total;
    total.per_class.assign(k, 0.0);
    for (const VolumeSample& s : data) {
        Shape in_shape = s.image.shape();
        in_shape.insert(in_shape.begin(), 1);
        Tensor x = reshape(s.image, in_shape);
        Tensor logits = model.forward(x);
        const DiceScores d = dice_metric(argmax_labels(logits), s.label, k, include_background);
        total.mean += d.mean;
        for (std::size_t c = 0; c < k; ++c) total.per_class[c] += d.per_class[c];
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    total.mean *= inv;
    for (double& x : total.per_class) x *= inv;
    return total;
}

inline TrainResult train_loop(SegResMamba& model, const std::vector<VolumeSample>& data, const TrainHyper& hp) {
    require(!data.empty(), "train_loop: empty dataset");
    TrainResult result;
    if (hp.steps == 0) return result;

    std::vector<Tensor> params;
    model.visit_params([&params](const std::string&, Tensor& t) { params.push_back(t); });
    OptimState opt;
    opt.weight_decay = hp.weight_decay;
    opt.init(params);

    Rng aug_rng(hp.seed);
    const std::size_t k = model.config().num_classes;

    for (std::size_t step = 0; step < hp.steps; ++step) {
        const double lr = cosine_lr(step, hp.steps, hp.lr_max, hp.lr_min);
        const VolumeSample& base = data[step % data.size()];
        std::array<std::size_t, 3> patch = hp.patch;
        for (std::size_t a = 0; a < 3; ++a) {
            if (patch[a] == 0) patch[a] = base.extents[a];
        }
        VolumeSample s = hp.augment_enabled ? augment(base, patch, aug_rng) : base;

        Tape::active().clear();
        Shape in_shape = s.image.shape();
        in_shape.insert(in_shape.begin(), 1);
        Tensor x = reshape(s.image, in_shape);
        Tensor logits = model.forward(x);
        Tensor loss = dice_loss(logits, one_hot(s, k), hp.smooth, hp.include_background);
        const double loss_v = loss.item();
        if (!std::isfinite(loss_v)) {
            Tape::active().clear();
            throw NumericError("train_loop: non-finite loss at step " + std::to_string(step) +
                               " (last good step " + (step ? std::to_string(step - 1) : std::string("none")) + ")");
        }
        model.zero_grads();
        Tape::active().backward(loss);
        opt.lr = lr;
        adamw_step(params, opt);
        Tape::active().clear();

        HistoryRow row;
        row.step = step;
        row.loss = loss_v;
        row.lr = lr;
        if ((step + 1) % hp.eval_every == 0 || step + 1 == hp.steps) {
            const DiceScores d = evaluate(model, data, hp.include_background);
            row.mean_dice = d.mean;
            row.has_dice = true;
            if (step + 1 == hp.steps) {
                result.final_mean_dice = d.mean;
                result.final_per_class = d.per_class;
            }
        }
        result.history.push_back(row);
    }
    return result;
}

// step,loss,lr,mean_dice rows; the dice column is empty on non-eval steps.
inline std::string history_csv(const TrainResult& r) {
    std::string out = "step,loss,lr,mean_dice\n";
    char buf[128];
    for (const HistoryRow& row : r.history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", row.step, row.loss, row.lr);
        out += buf;
        if (row.has_dice) {
            std::snprintf(buf, sizeof(buf), ",%.17g", row.mean_dice);
            out += buf;
        } else {
            out += ",";
        }
        out += "\n";
    }
    return out;
}

}  // namespace srm

#endif  // SRM_TRAIN_HPP
