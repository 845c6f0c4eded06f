#pragma once

#include <string>
#include <vector>

#include "licda/codec.hpp"

namespace licda {

// One residual adapter per plugging point. ad0 is a shape-preserving 3x3
// convolution applied to the P0 activation; ad1 and ad2 are stride-2
// deconvolutions mirroring the channels/kernel/stride of the decoder layers
// they run in parallel with.
template <class S>
struct AdapterTriple {
    int domain_id = 0;
    Conv2dLayer<S> ad0;
    TConv2dLayer<S> ad1, ad2;

    template <class F>
    void visit(F&& f) {
        ad0.visit(f);
        ad1.visit(f);
        ad2.visit(f);
    }
};

template <class S>
struct AdapterBank {
    int K = 0;  // number of target domains; bank holds K+1 triples (0 = source)
    std::vector<AdapterTriple<S>> triples;

    template <class F>
    void visit(F&& f) {
        for (auto& t : triples) t.visit(f);
    }
};

enum class AdapterInit { kGaussian, kZero };

inline constexpr double kAdapterInitStd = 0.02;

// Builds K+1 triples whose shapes are derived from the decoder's plugging
// points. Gaussian mode draws N(0, 0.02^2) seeded per module; zero mode is
// used by the identity tests.
template <class S>
AdapterBank<S> init_bank(int K, const SynthesisDecoder<S>& dec, AdapterInit init, std::uint64_t seed) {
    if (K < 1) throw ContractError("adapter bank needs at least one target domain (K >= 1)");
    AdapterBank<S> bank;
    bank.K = K;
    const double wstd = init == AdapterInit::kGaussian ? kAdapterInitStd : 0.0;
    for (int k = 0; k <= K; ++k) {
        AdapterTriple<S> t;
        t.domain_id = k;
        const std::string base = "adapters.d" + std::to_string(k);
        const int p0c = dec.t2.out_channels();
        Rng r0 = make_rng(seed, base + ".ad0"), r1 = make_rng(seed, base + ".ad1"), r2 = make_rng(seed, base + ".ad2");
        t.ad0 = Conv2dLayer<S>(base + ".ad0", p0c, p0c, 3, 1, 1, r0, wstd);
        t.ad1 = TConv2dLayer<S>(base + ".ad1", dec.t3.in_channels(), dec.t3.out_channels(), dec.t3.kernel(),
                                dec.t3.stride, dec.t3.pad, dec.t3.outpad, r1, wstd);
        t.ad2 = TConv2dLayer<S>(base + ".ad2", dec.t4.in_channels(), dec.t4.out_channels(), dec.t4.kernel(),
                                dec.t4.stride, dec.t4.pad, dec.t4.outpad, r2, wstd);
        if (init == AdapterInit::kZero) {
            t.visit([](Parameter<S>& p) { std::fill(p.values().begin(), p.values().end(), S(0)); });
        }
        bank.triples.push_back(std::move(t));
    }
    return bank;
}

inline void validate_bank_size(int bank_k, int triples, int v_len) {
    if (triples != bank_k + 1) throw ContractError("adapter bank must hold K+1 triples");
    if (v_len != bank_k + 1)
        throw ContractError("domain distribution length " + std::to_string(v_len) + " != K+1 = " +
                            std::to_string(bank_k + 1));
}

// layer_output + sum_k v[:,k] * Ad_site^k(y_j). v is [N, K+1].
template <class S>
Tensor<S> blend(const Tensor<S>& y_j, const Tensor<S>& layer_output, const AdapterBank<S>& bank,
                const Tensor<S>& v, int site) {
    if (site < 0 || site > 2) throw ContractError("blend site must be 0, 1 or 2");
    if (v.rank() != 2 || v.dim(0) != y_j.dim(0))
        throw ContractError("blend: v must be [N, K+1] matching the batch");
    validate_bank_size(bank.K, static_cast<int>(bank.triples.size()), v.dim(1));

    Tensor<S> out = layer_output;
    for (int k = 0; k <= bank.K; ++k) {
        const AdapterTriple<S>& t = bank.triples[static_cast<std::size_t>(k)];
        Tensor<S> res = site == 0 ? t.ad0(y_j) : site == 1 ? t.ad1(y_j) : t.ad2(y_j);
        if (res.shape() != layer_output.shape())
            throw DimError("adapter output " + shape_str(res.shape()) + " != layer output " +
                           shape_str(layer_output.shape()));
        out = add(out, scale_rows(res, col(v, k)));
    }
    return out;
}

// Full decoder pass with blending at the three plugging points. With a null
// bank this is exactly the backbone decoder.
template <class S>
Tensor<S> decode_with_adapters(const SynthesisDecoder<S>& dec, const Tensor<S>& y, const AdapterBank<S>* bank,
                               const Tensor<S>* v) {
    Tensor<S> p0 = dec.second_block_output(y);
    if (bank) p0 = blend(p0, p0, *bank, *v, 0);
    Tensor<S> u1 = dec.t3(p0);
    if (bank) u1 = blend(p0, u1, *bank, *v, 1);
    Tensor<S> a1 = leaky_relu(u1, dec.slope);
    Tensor<S> u2 = dec.t4(a1);
    if (bank) u2 = blend(a1, u2, *bank, *v, 2);
    return u2;
}

template <class S>
std::int64_t parameter_count(AdapterBank<S>& bank) {
    std::int64_t n = 0;
    bank.visit([&n](Parameter<S>& p) { n += p.tensor().numel(); });
    return n;
}

}  // namespace licda
