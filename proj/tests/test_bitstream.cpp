#include <doctest.h>

#include <cmath>

#include "licda/bitstream.hpp"
#include "licda/data.hpp"

using namespace licda;

namespace {

// Backbone with entropy parameters calibrated to its own (untrained) latent
// statistics, so coded streams are representative of a trained model.
CodecModel<float> calibrated_model(int K = 2) {
    CodecModel<float> m = make_codec_model<float>(config_for_quality(2), 17);
    SyntheticDomainSpec spec{SyntheticKind::kSmoothTexture, 5, 64, 64, 1};
    Latent<float> y = encode_analysis(m, synthesize(spec, 0));
    const int M = m.cfg.latent_channels;
    const int plane = y.features.dim(1) * y.features.dim(2);
    for (int c = 0; c < M; ++c) {
        double s = 0, s2 = 0;
        for (int i = 0; i < plane; ++i) {
            const double v = y.features.values()[static_cast<std::size_t>(c) * plane + i];
            s += v;
            s2 += v * v;
        }
        s /= plane;
        const double sd = std::sqrt(std::max(1e-6, s2 / plane - s * s));
        m.entropy.mean.values()[static_cast<std::size_t>(c)] = static_cast<float>(s);
        m.entropy.scale.values()[static_cast<std::size_t>(c)] = static_cast<float>(std::max(0.5, sd));
    }
    if (K > 0) {
        attach_adapters(m, K, AdapterInit::kGaussian, 23);
        attach_gate(m, GateConfig{8, 2, 2, K}, 29);
    }
    return m;
}

std::vector<std::uint8_t> make_stream(const CodecModel<float>& m, const Image& img, const std::vector<float>& v) {
    Latent<float> y = encode_analysis(m, img);
    Latent<float> q = quantize(y, QuantizeMode::kEval);
    StreamMeta meta;
    meta.orig_h = img.height;
    meta.orig_w = img.width;
    meta.quality_index = m.cfg.quality_index;
    meta.K = m.K();
    meta.policy = PolicyKind::kProposed;
    return encode_stream(m, q, v, meta);
}

}  // namespace

TEST_CASE("fixed-point v quantization sums to exactly 65535 and recovers each entry") {
    Rng rng(1);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<float> v{d(rng), d(rng), d(rng)};
        float s = v[0] + v[1] + v[2];
        for (auto& x : v) x /= s;
        auto q = quantize_distribution(v);
        std::uint32_t total = 0;
        for (auto x : q) total += x;
        CHECK(total == 65535);
        auto back = dequantize_distribution(q);
        for (int i = 0; i < 3; ++i)
            CHECK(std::fabs(back[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)]) <= 1.0f / 65535.0f);
    }
}

TEST_CASE("stream round-trips the quantized latent exactly and v within tolerance") {
    CodecModel<float> m = calibrated_model();
    SyntheticDomainSpec spec{SyntheticKind::kFlatRegions, 9, 64, 96, 1};
    Image img = synthesize(spec, 0);
    std::vector<float> v{0.2f, 0.45f, 0.35f};
    const auto bytes = make_stream(m, img, v);

    Latent<float> q = quantize(encode_analysis(m, img), QuantizeMode::kEval);
    DecodedStream dec = decode_stream(m, bytes);
    CHECK(dec.used_adapters);
    CHECK(dec.latent.features.values() == q.features.values());
    CHECK(dec.meta.orig_h == 64);
    CHECK(dec.meta.orig_w == 96);
    REQUIRE(dec.v.size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(std::fabs(dec.v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)]) <= 1.0f / 65535.0f);
}

TEST_CASE("coded length stays within 2% + 64 bytes of the rate estimate") {
    CodecModel<float> m = calibrated_model();
    SyntheticDomainSpec spec{SyntheticKind::kSmoothTexture, 11, 64, 64, 1};
    Image img = synthesize(spec, 0);
    Latent<float> q = quantize(encode_analysis(m, img), QuantizeMode::kEval);
    const double est_bits = rate_estimate(m, q);
    const auto bytes = make_stream(m, img, {1.0f, 0.0f, 0.0f});
    const double actual_bits = 8.0 * static_cast<double>(bytes.size());
    CHECK(std::fabs(actual_bits - est_bits) <= 0.02 * est_bits + 64.0 * 8.0);
}

TEST_CASE("reported bpp is exactly 8*len/(H*W)") {
    CHECK(bits_per_pixel(1234, 64, 96) == doctest::Approx(8.0 * 1234 / (64.0 * 96.0)).epsilon(1e-12));
}

TEST_CASE("header-only truncation is detected before latent decoding") {
    CodecModel<float> m = calibrated_model();
    SyntheticDomainSpec spec{SyntheticKind::kLineSketch, 13, 64, 64, 1};
    auto bytes = make_stream(m, synthesize(spec, 0), {0.3f, 0.4f, 0.3f});
    bytes.resize(11);
    CHECK_THROWS_AS(decode_stream(m, bytes), FramingError);
}

TEST_CASE("bad magic and unsupported version are structured errors") {
    CodecModel<float> m = calibrated_model();
    SyntheticDomainSpec spec{SyntheticKind::kLineSketch, 13, 64, 64, 1};
    auto bytes = make_stream(m, synthesize(spec, 0), {0.3f, 0.4f, 0.3f});
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_stream(m, bad_magic), FramingError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_stream(m, bad_version), CompatError);
}

TEST_CASE("K mismatch errors unless forced, then decodes adapter-free with a warning") {
    CodecModel<float> enc_model = calibrated_model(2);
    SyntheticDomainSpec spec{SyntheticKind::kFlatRegions, 15, 64, 64, 1};
    Image img = synthesize(spec, 0);
    const auto bytes = make_stream(enc_model, img, {0.5f, 0.25f, 0.25f});

    CodecModel<float> other = calibrated_model(1);  // K=1 checkpoint
    CHECK_THROWS_AS(decode_stream(other, bytes), CompatError);
    DecodedStream dec = decode_stream(other, bytes, /*force_adapter_free=*/true);
    CHECK_FALSE(dec.used_adapters);
    CHECK_FALSE(dec.warning.empty());
    CHECK(dec.latent.features.shape() == Shape{32, 4, 4});
}

TEST_CASE("adapter-free checkpoint decodes a valid stream with a warning") {
    CodecModel<float> enc_model = calibrated_model(2);
    SyntheticDomainSpec spec{SyntheticKind::kFlatRegions, 15, 64, 64, 1};
    Image img = synthesize(spec, 0);
    const auto bytes = make_stream(enc_model, img, {0.5f, 0.25f, 0.25f});

    CodecModel<float> bare = calibrated_model(0);  // no adapters, no gate
    DecodedStream dec = decode_stream(bare, bytes);
    CHECK_FALSE(dec.used_adapters);
    CHECK_FALSE(dec.warning.empty());
    Image rec = decode_synthesis<float>(bare, dec.latent, nullptr, dec.meta.orig_h, dec.meta.orig_w);
    CHECK(rec.height == 64);
}

TEST_CASE("mutated streams yield structured errors or shape-valid decodes, never crashes") {
    CodecModel<float> m = calibrated_model();
    SyntheticDomainSpec spec{SyntheticKind::kSmoothTexture, 21, 64, 64, 1};
    const auto valid = make_stream(m, synthesize(spec, 0), {0.6f, 0.2f, 0.2f});

    Rng rng(33);
    int errors = 0, decodes = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<std::uint8_t> fuzzed = valid;
        std::uniform_int_distribution<int> mode(0, 2);
        switch (mode(rng)) {
            case 0: {  // byte flips
                std::uniform_int_distribution<std::size_t> pos(0, fuzzed.size() - 1);
                std::uniform_int_distribution<int> nflips(1, 8);
                const int n = nflips(rng);
                for (int i = 0; i < n; ++i) fuzzed[pos(rng)] ^= static_cast<std::uint8_t>(1 + (rng() % 255));
                break;
            }
            case 1: {  // truncation
                std::uniform_int_distribution<std::size_t> len(0, fuzzed.size() - 1);
                fuzzed.resize(len(rng));
                break;
            }
            default: {  // random bytes
                std::uniform_int_distribution<std::size_t> len(0, 256);
                fuzzed.assign(len(rng), 0);
                for (auto& b : fuzzed) b = static_cast<std::uint8_t>(rng());
                break;
            }
        }
        try {
            DecodedStream dec = decode_stream(m, fuzzed, true);
            CHECK(dec.latent.features.rank() == 3);
            ++decodes;
        } catch (const Error&) {
            ++errors;
        }
    }
    CHECK(errors + decodes == 200);
    CHECK(errors > 0);
}
