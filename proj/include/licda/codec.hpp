#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "licda/image.hpp"
#include "licda/ops.hpp"
#include "licda/tensor.hpp"

namespace licda {

// Four-point quality ladder; index selects the RD trade-off weight.
inline constexpr std::array<double, 4> kLambdaLadder = {0.0018, 0.0067, 0.013, 0.0483};

struct CodecConfig {
    int latent_channels = 32;  // M
    int hidden_channels = 64;  // N
    double lambda_rd = 0.013;
    int quality_index = 2;
};

inline void validate_config(const CodecConfig& c) {
    if (!(c.lambda_rd > 0)) throw ConfigError("lambda_rd must be positive");
    if (c.latent_channels < 8 || c.hidden_channels < 8) throw ConfigError("latent/hidden channels must be >= 8");
}

inline CodecConfig config_for_quality(int quality_index, int M = 32, int N = 64) {
    if (quality_index < 0 || quality_index >= static_cast<int>(kLambdaLadder.size()))
        throw ConfigError("quality index out of range [0," + std::to_string(kLambdaLadder.size() - 1) + "]");
    CodecConfig c;
    c.latent_channels = M;
    c.hidden_channels = N;
    c.quality_index = quality_index;
    c.lambda_rd = kLambdaLadder[static_cast<std::size_t>(quality_index)];
    validate_config(c);
    return c;
}

// ---------------------------------------------------------------------------
// Layer building blocks
// ---------------------------------------------------------------------------

template <class S>
struct Conv2dLayer {
    Parameter<S> w, b;
    int stride = 1, pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int in, int out, int k, int stride_, int pad_, Rng& rng, double wstd = -1.0)
        : stride(stride_), pad(pad_) {
        const double std_ = wstd > 0 ? wstd : std::sqrt(2.0 / (in * k * k));
        w = Parameter<S>(name + ".w", Tensor<S>::randn({out, in, k, k}, rng, static_cast<S>(std_)));
        b = Parameter<S>(name + ".b", Tensor<S>::zeros({out}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w.tensor(), b.tensor(), stride, pad); }
    int out_channels() const { return w.tensor().dim(0); }
    int in_channels() const { return w.tensor().dim(1); }
    int kernel() const { return w.tensor().dim(2); }
    template <class F>
    void visit(F&& f) {
        f(w);
        f(b);
    }
};

template <class S>
struct TConv2dLayer {
    Parameter<S> w, b;  // w: [IC, OC, k, k]
    int stride = 1, pad = 0, outpad = 0;

    TConv2dLayer() = default;
    TConv2dLayer(const std::string& name, int in, int out, int k, int stride_, int pad_, int outpad_, Rng& rng,
                 double wstd = -1.0)
        : stride(stride_), pad(pad_), outpad(outpad_) {
        const double std_ = wstd > 0 ? wstd : std::sqrt(2.0 / (in * k * k));
        w = Parameter<S>(name + ".w", Tensor<S>::randn({in, out, k, k}, rng, static_cast<S>(std_)));
        b = Parameter<S>(name + ".b", Tensor<S>::zeros({out}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return tconv2d(x, w.tensor(), b.tensor(), stride, pad, outpad); }
    int out_channels() const { return w.tensor().dim(1); }
    int in_channels() const { return w.tensor().dim(0); }
    int kernel() const { return w.tensor().dim(2); }
    template <class F>
    void visit(F&& f) {
        f(w);
        f(b);
    }
};

template <class S>
struct LinearLayer {
    Parameter<S> w, b;  // w: [out, in]

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in, int out, Rng& rng, double wstd = -1.0) {
        const double std_ = wstd > 0 ? wstd : std::sqrt(2.0 / in);
        w = Parameter<S>(name + ".w", Tensor<S>::randn({out, in}, rng, static_cast<S>(std_)));
        b = Parameter<S>(name + ".b", Tensor<S>::zeros({out}));
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w.tensor(), b.tensor()); }
    template <class F>
    void visit(F&& f) {
        f(w);
        f(b);
    }
};

// ---------------------------------------------------------------------------
// Backbone: four stride-2 stages each way, leaky-ReLU activations
// ---------------------------------------------------------------------------

template <class S>
struct AnalysisEncoder {
    Conv2dLayer<S> c1, c2, c3, c4;
    S slope = static_cast<S>(0.01);

    AnalysisEncoder() = default;
    AnalysisEncoder(const CodecConfig& cfg, std::uint64_t seed) {
        const int N = cfg.hidden_channels, M = cfg.latent_channels;
        Rng r1 = make_rng(seed, "encoder.c1"), r2 = make_rng(seed, "encoder.c2"),
            r3 = make_rng(seed, "encoder.c3"), r4 = make_rng(seed, "encoder.c4");
        c1 = Conv2dLayer<S>("encoder.c1", 3, N, 3, 2, 1, r1);
        c2 = Conv2dLayer<S>("encoder.c2", N, N, 3, 2, 1, r2);
        c3 = Conv2dLayer<S>("encoder.c3", N, N, 3, 2, 1, r3);
        c4 = Conv2dLayer<S>("encoder.c4", N, M, 3, 2, 1, r4);
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        Tensor<S> h = leaky_relu(c1(x), slope);
        h = leaky_relu(c2(h), slope);
        h = leaky_relu(c3(h), slope);
        return c4(h);
    }

    template <class F>
    void visit(F&& f) {
        c1.visit(f);
        c2.visit(f);
        c3.visit(f);
        c4.visit(f);
    }
};

template <class S>
struct SynthesisDecoder {
    TConv2dLayer<S> t1, t2, t3, t4;
    S slope = static_cast<S>(0.01);

    SynthesisDecoder() = default;
    SynthesisDecoder(const CodecConfig& cfg, std::uint64_t seed) {
        const int N = cfg.hidden_channels, M = cfg.latent_channels;
        Rng r1 = make_rng(seed, "decoder.t1"), r2 = make_rng(seed, "decoder.t2"),
            r3 = make_rng(seed, "decoder.t3"), r4 = make_rng(seed, "decoder.t4");
        t1 = TConv2dLayer<S>("decoder.t1", M, N, 3, 2, 1, 1, r1);
        t2 = TConv2dLayer<S>("decoder.t2", N, N, 3, 2, 1, 1, r2);
        t3 = TConv2dLayer<S>("decoder.t3", N, N, 3, 2, 1, 1, r3);
        t4 = TConv2dLayer<S>("decoder.t4", N, 3, 3, 2, 1, 1, r4);
    }

    // Plugging points: P0 is the output of the second block (t2 + activation);
    // P1 and P2 are the last two transposed convolutions (t3, t4).
    Tensor<S> second_block_output(const Tensor<S>& y) const {
        return leaky_relu(t2(leaky_relu(t1(y), slope)), slope);
    }

    Tensor<S> forward(const Tensor<S>& y) const {
        Tensor<S> p0 = second_block_output(y);
        return t4(leaky_relu(t3(p0), slope));
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        auto add = [&n](const Parameter<S>& p) { n += p.tensor().numel(); };
        add(t1.w), add(t1.b), add(t2.w), add(t2.b), add(t3.w), add(t3.b), add(t4.w), add(t4.b);
        return n;
    }

    template <class F>
    void visit(F&& f) {
        t1.visit(f);
        t2.visit(f);
        t3.visit(f);
        t4.visit(f);
    }
};

// ---------------------------------------------------------------------------
// Per-channel factorized Gaussian entropy model
// ---------------------------------------------------------------------------

template <class S>
struct FactorizedEntropyModel {
    Parameter<S> mean, scale;
    static constexpr double kScaleFloor = 1e-6;
    static constexpr double kLikelihoodFloor = 1e-9;

    FactorizedEntropyModel() = default;
    explicit FactorizedEntropyModel(int M) {
        mean = Parameter<S>("entropy.mean", Tensor<S>::zeros({M}));
        scale = Parameter<S>("entropy.scale", Tensor<S>::full({M}, S(1)));
    }

    Tensor<S> likelihood(const Tensor<S>& y) const {
        return clamp(gaussian_interval_likelihood(y, mean.tensor(), scale.tensor()),
                     static_cast<S>(kLikelihoodFloor), S(1));
    }

    // Total bits: sum of -log2 p over all symbols.
    Tensor<S> rate_bits(const Tensor<S>& y) const {
        return mul_scalar(sum(log(likelihood(y))), static_cast<S>(-1.0 / std::log(2.0)));
    }

    // Applied after every optimizer update.
    void project_scales() {
        for (auto& s : scale.values()) s = std::max(s, static_cast<S>(kScaleFloor));
    }

    double channel_mean(int c) const { return static_cast<double>(mean.values()[static_cast<std::size_t>(c)]); }
    double channel_scale(int c) const { return static_cast<double>(scale.values()[static_cast<std::size_t>(c)]); }
    int channels() const { return mean.tensor().dim(0); }

    template <class F>
    void visit(F&& f) {
        f(mean);
        f(scale);
    }
};

// ---------------------------------------------------------------------------
// Latent and quantization
// ---------------------------------------------------------------------------

template <class S>
struct Latent {
    Tensor<S> features;  // [M, h, w]
    bool quantized = false;
};

enum class QuantizeMode { kTrain, kEval };

// Eval rounds to nearest (ties away from zero); train adds seeded U(-1/2, 1/2) noise.
template <class S>
Latent<S> quantize(const Latent<S>& y, QuantizeMode mode, Rng* rng = nullptr) {
    if (y.quantized) throw ContractError("latent is already quantized");
    if (mode == QuantizeMode::kEval) return {round_ties_away(y.features), true};
    if (!rng) throw ContractError("train-mode quantize needs a generator");
    Tensor<S> noise = Tensor<S>::uniform(y.features.shape(), *rng, S(-0.5), S(0.5));
    return {add(y.features, noise), false};
}

// lambda * 255^2 * MSE + bits-per-pixel, built as a graph node.
template <class S>
Tensor<S> rd_loss(const Tensor<S>& x, const Tensor<S>& x_hat, const Tensor<S>& rate_bits, double lambda_rd) {
    if (x.shape() != x_hat.shape()) throw DimError("rd_loss: image shape mismatch");
    if (x.rank() != 4) throw DimError("rd_loss: expected [N,3,H,W]");
    const double npix = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
    Tensor<S> distortion = mul_scalar(mse(x, x_hat), static_cast<S>(lambda_rd * 255.0 * 255.0));
    return add(distortion, mul_scalar(rate_bits, static_cast<S>(1.0 / npix)));
}

}  // namespace licda
