#pragma once

#include <optional>
#include <vector>

#include "licda/adapters.hpp"
#include "licda/codec.hpp"
#include "licda/gate.hpp"
#include "licda/policy.hpp"

namespace licda {

// Backbone autoencoder plus the optional adaptation components. The backbone
// (encoder, decoder, entropy model) is what pretraining produces; adapters and
// gate are attached before stage-B training or when loading an adapted
// checkpoint.
template <class S>
struct CodecModel {
    CodecConfig cfg;
    AnalysisEncoder<S> encoder;
    SynthesisDecoder<S> decoder;
    FactorizedEntropyModel<S> entropy;
    std::optional<AdapterBank<S>> bank;
    std::optional<GateNetwork<S>> gate;
    PolicyKind train_policy = PolicyKind::kProposed;

    int K() const { return bank ? bank->K : 0; }

    template <class F>
    void visit_backbone(F&& f) {
        encoder.visit(f);
        decoder.visit(f);
        entropy.visit(f);
    }
    template <class F>
    void visit_adaptation(F&& f) {
        if (bank) bank->visit(f);
        if (gate) gate->visit(f);
    }
    template <class F>
    void visit_all(F&& f) {
        visit_backbone(f);
        visit_adaptation(f);
    }

    std::vector<Parameter<S>*> backbone_parameters() {
        std::vector<Parameter<S>*> out;
        visit_backbone([&out](Parameter<S>& p) { out.push_back(&p); });
        return out;
    }
    std::vector<Parameter<S>*> adaptation_parameters() {
        std::vector<Parameter<S>*> out;
        visit_adaptation([&out](Parameter<S>& p) { out.push_back(&p); });
        return out;
    }

    void set_backbone_trainable(bool trainable) {
        visit_backbone([trainable](Parameter<S>& p) { p.set_trainable(trainable); });
    }

    std::uint64_t backbone_hash() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        visit_backbone([&h](Parameter<S>& p) {
            h = fnv1a64(p.values().data(), p.values().size() * sizeof(S), h);
        });
        return h;
    }
};

template <class S>
CodecModel<S> make_codec_model(const CodecConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    CodecModel<S> m;
    m.cfg = cfg;
    m.encoder = AnalysisEncoder<S>(cfg, seed);
    m.decoder = SynthesisDecoder<S>(cfg, seed);
    m.entropy = FactorizedEntropyModel<S>(cfg.latent_channels);
    return m;
}

template <class S>
void attach_adapters(CodecModel<S>& m, int K, AdapterInit init, std::uint64_t seed) {
    m.bank = init_bank(K, m.decoder, init, seed);
}

template <class S>
void attach_gate(CodecModel<S>& m, GateConfig cfg, std::uint64_t seed) {
    m.gate = GateNetwork<S>(cfg, m.cfg.latent_channels, seed);
}

// ---------------------------------------------------------------------------
// Single-image pipeline operations
// ---------------------------------------------------------------------------

// Reflect-pads the image and runs the analysis transform. The latent is
// unquantized; spatial dims are padded dims / 16.
template <class S>
Latent<S> encode_analysis(const CodecModel<S>& m, const Image& img) {
    NoGradGuard ng;
    Image padded = reflect_pad(img);
    Tensor<S> x = image_to_tensor<S>(padded);
    Tensor<S> y = m.encoder.forward(x);
    Tensor<S> squeezed = Tensor<S>::from({y.dim(1), y.dim(2), y.dim(3)}, y.values());
    return {squeezed, false};
}

// Decodes a quantized latent to an image. v (length K+1) blends the adapter
// bank when one is attached; passing nullptr decodes with the backbone alone.
// orig_h/orig_w crop away the padding; pass 0 to keep the padded size.
template <class S>
Image decode_synthesis(const CodecModel<S>& m, const Latent<S>& y_hat, const std::vector<S>* v, int orig_h = 0,
                       int orig_w = 0) {
    NoGradGuard ng;
    if (!y_hat.quantized) throw ContractError("decode_synthesis needs a quantized latent");
    if (y_hat.features.rank() != 3 || y_hat.features.dim(0) != m.cfg.latent_channels)
        throw CodecError("latent channel count " + std::to_string(y_hat.features.dim(0)) + " does not match model M=" +
                         std::to_string(m.cfg.latent_channels));
    Tensor<S> y = Tensor<S>::from({1, y_hat.features.dim(0), y_hat.features.dim(1), y_hat.features.dim(2)},
                                  y_hat.features.values());
    Tensor<S> out;
    if (v && m.bank) {
        validate_bank_size(m.bank->K, static_cast<int>(m.bank->triples.size()), static_cast<int>(v->size()));
        Tensor<S> vt = Tensor<S>::from({1, static_cast<int>(v->size())}, *v);
        out = decode_with_adapters(m.decoder, y, &*m.bank, &vt);
    } else {
        out = decode_with_adapters<S>(m.decoder, y, nullptr, nullptr);
    }
    Image img = tensor_to_image(out);
    if (orig_h > 0 && orig_w > 0) return crop_top_left(img, orig_h, orig_w);
    return img;
}

// Estimated total bits for a (quantized or noise-relaxed) latent.
template <class S>
double rate_estimate(const CodecModel<S>& m, const Latent<S>& y_hat) {
    NoGradGuard ng;
    return static_cast<double>(m.entropy.rate_bits(y_hat.features).scalar());
}

// Gate distribution for an unquantized latent: returns v of length K+1.
template <class S>
std::vector<S> gate_distribution(const CodecModel<S>& m, const Latent<S>& y) {
    NoGradGuard ng;
    if (!m.gate) throw ContractError("model has no gate attached");
    Tensor<S> yt = Tensor<S>::from({1, y.features.dim(0), y.features.dim(1), y.features.dim(2)}, y.features.values());
    auto out = m.gate->forward(yt);
    return out.v.values();
}

}  // namespace licda
