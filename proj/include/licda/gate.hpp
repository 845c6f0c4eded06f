#pragma once

#include <string>

#include "licda/codec.hpp"

namespace licda {

struct GateConfig {
    int conv_channels = 32;
    int pool_kernel = 2;
    int adaptive_out = 4;  // adaptive average pooling target (s x s)
    int K = 2;
};

inline void validate_gate_config(const GateConfig& c) {
    if (c.K < 1) throw ConfigError("gate K must be >= 1");
    if (c.adaptive_out < 1) throw ConfigError("gate adaptive_out must be >= 1");
    if (c.conv_channels < 1 || c.pool_kernel < 1) throw ConfigError("bad gate hyperparameters");
}

// Domain classifier over the latent: conv3x3 -> ReLU -> max pool ->
// adaptive average pool -> linear -> softmax over K+1 domains.
template <class S>
struct GateNetwork {
    GateConfig cfg;
    Conv2dLayer<S> conv;
    LinearLayer<S> fc;

    GateNetwork() = default;
    GateNetwork(const GateConfig& cfg_, int latent_channels, std::uint64_t seed) : cfg(cfg_) {
        validate_gate_config(cfg);
        Rng rc = make_rng(seed, "gate.conv"), rf = make_rng(seed, "gate.fc");
        conv = Conv2dLayer<S>("gate.conv", latent_channels, cfg.conv_channels, 3, 1, 1, rc);
        fc = LinearLayer<S>("gate.fc", cfg.conv_channels * cfg.adaptive_out * cfg.adaptive_out, cfg.K + 1, rf);
    }

    struct Output {
        Tensor<S> logits;  // [N, K+1]
        Tensor<S> v;       // [N, K+1], softmax of logits
    };

    // y: [N, M, h, w]; raw logits are returned alongside v so losses can be
    // computed in log-sum-exp form.
    Output forward(const Tensor<S>& y) const {
        Tensor<S> h = relu(conv(y));
        h = maxpool2d(h, cfg.pool_kernel);
        h = adaptive_avg_pool2d(h, cfg.adaptive_out, cfg.adaptive_out);
        const int n = h.dim(0);
        Tensor<S> flat = reshape(h, {n, h.dim(1) * h.dim(2) * h.dim(3)});
        Tensor<S> logits = fc(flat);
        return {logits, softmax(logits, 1)};
    }

    std::int64_t parameter_count() const {
        return conv.w.tensor().numel() + conv.b.tensor().numel() + fc.w.tensor().numel() + fc.b.tensor().numel();
    }

    template <class F>
    void visit(F&& f) {
        conv.visit(f);
        fc.visit(f);
    }
};

}  // namespace licda
