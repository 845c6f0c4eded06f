#include <doctest.h>

#include <cstring>

#include "licda/model.hpp"
#include "support/finite_diff.hpp"

using namespace licda;

namespace {

CodecModel<float> tiny_model(std::uint64_t seed = 5) {
    return make_codec_model<float>(config_for_quality(1, 8, 8), seed);
}

Tensor<float> random_latent(int m = 8, int h = 2, int w = 2, std::uint64_t seed = 9) {
    Rng rng(seed);
    return Tensor<float>::randn({1, m, h, w}, rng);
}

}  // namespace

TEST_CASE("init_bank builds K+1 triples and rejects K=0") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kGaussian, 3);
    CHECK(bank.K == 2);
    CHECK(bank.triples.size() == 3);
    for (int k = 0; k <= 2; ++k) CHECK(bank.triples[static_cast<std::size_t>(k)].domain_id == k);
    CHECK_THROWS_AS(init_bank(0, m.decoder, AdapterInit::kGaussian, 3), ContractError);
}

TEST_CASE("gaussian init with the same seed is reproducible bit-exactly") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> a = init_bank(2, m.decoder, AdapterInit::kGaussian, 77);
    AdapterBank<float> b = init_bank(2, m.decoder, AdapterInit::kGaussian, 77);
    bool equal = true;
    a.visit([&](Parameter<float>& p) {
        // find the matching parameter in b by name
        b.visit([&](Parameter<float>& q) {
            if (p.name() == q.name()) equal = equal && p.values() == q.values();
        });
    });
    CHECK(equal);
    AdapterBank<float> c = init_bank(2, m.decoder, AdapterInit::kGaussian, 78);
    CHECK(c.triples[0].ad0.w.values() != a.triples[0].ad0.w.values());
}

TEST_CASE("zero bank blending is the identity on the layer output") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kZero, 3);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    Tensor<float> v = Tensor<float>::from({1, 3}, {0.2f, 0.5f, 0.3f});
    Tensor<float> out = blend(p0, p0, bank, v, 0);
    CHECK(out.values() == p0.values());
}

TEST_CASE("full decode with a zero bank is bit-identical to the backbone") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kZero, 3);
    Tensor<float> y = round_ties_away(mul_scalar(random_latent(), 3.0f));
    Tensor<float> v = Tensor<float>::from({1, 3}, {0.1f, 0.6f, 0.3f});
    Tensor<float> plain = decode_with_adapters<float>(m.decoder, y, nullptr, nullptr);
    Tensor<float> banked = decode_with_adapters(m.decoder, y, &bank, &v);
    CHECK(std::memcmp(plain.values().data(), banked.values().data(), plain.values().size() * sizeof(float)) == 0);
}

TEST_CASE("one-hot v equals running only that adapter") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kGaussian, 13);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    for (int k = 0; k <= 2; ++k) {
        std::vector<float> vv(3, 0.0f);
        vv[static_cast<std::size_t>(k)] = 1.0f;
        Tensor<float> v = Tensor<float>::from({1, 3}, vv);
        Tensor<float> blended = blend(p0, p0, bank, v, 0);
        Tensor<float> direct = add(p0, bank.triples[static_cast<std::size_t>(k)].ad0(p0));
        for (std::size_t i = 0; i < blended.values().size(); ++i)
            CHECK(std::fabs(blended.values()[i] - direct.values()[i]) <= 1e-6f);
    }
}

TEST_CASE("blending two constant adapters reproduces the hand-computed mixture") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kZero, 3);
    // constant adapters: zero weights, constant bias -> output is the bias
    const float A = 0.7f, B = -0.4f;
    std::fill(bank.triples[0].ad0.b.values().begin(), bank.triples[0].ad0.b.values().end(), A);
    std::fill(bank.triples[1].ad0.b.values().begin(), bank.triples[1].ad0.b.values().end(), B);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    Tensor<float> v = Tensor<float>::from({1, 3}, {0.5f, 0.5f, 0.0f});
    Tensor<float> out = blend(p0, p0, bank, v, 0);
    for (std::size_t i = 0; i < out.values().size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(p0.values()[i] + 0.5f * A + 0.5f * B).epsilon(1e-6));
}

TEST_CASE("blend is linear in v") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kGaussian, 21);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    Rng rng(22);
    for (int rep = 0; rep < 10; ++rep) {
        auto rand_v = [&rng] {
            std::uniform_real_distribution<float> d(0.0f, 1.0f);
            std::vector<float> v{d(rng), d(rng), d(rng)};
            const float s = v[0] + v[1] + v[2];
            for (auto& x : v) x /= s;
            return v;
        };
        const auto v1 = rand_v(), v2 = rand_v();
        std::uniform_real_distribution<float> da(0.0f, 1.0f);
        const float alpha = da(rng);
        std::vector<float> vm(3);
        for (int i = 0; i < 3; ++i)
            vm[static_cast<std::size_t>(i)] = alpha * v1[static_cast<std::size_t>(i)] + (1 - alpha) * v2[static_cast<std::size_t>(i)];

        auto res = [&](const std::vector<float>& vv) {
            Tensor<float> v = Tensor<float>::from({1, 3}, vv);
            return blend(p0, p0, bank, v, 0);
        };
        Tensor<float> m1 = res(v1), m2 = res(v2), mm = res(vm);
        for (std::size_t i = 0; i < mm.values().size(); ++i) {
            const float lhs = mm.values()[i] - p0.values()[i];
            const float rhs = alpha * (m1.values()[i] - p0.values()[i]) + (1 - alpha) * (m2.values()[i] - p0.values()[i]);
            CHECK(std::fabs(lhs - rhs) <= 1e-5f);
        }
    }
}

TEST_CASE("blend validates v length and site") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(2, m.decoder, AdapterInit::kZero, 3);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    Tensor<float> bad_v = Tensor<float>::from({1, 2}, {0.5f, 0.5f});
    CHECK_THROWS_AS(blend(p0, p0, bank, bad_v, 0), ContractError);
    Tensor<float> v = Tensor<float>::from({1, 3}, {1.f, 0.f, 0.f});
    CHECK_THROWS_AS(blend(p0, p0, bank, v, 7), ContractError);
}

TEST_CASE("adapter output shape mismatch raises a dimension error") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(1, m.decoder, AdapterInit::kZero, 3);
    Tensor<float> y = random_latent();
    Tensor<float> p0 = m.decoder.second_block_output(y);
    Tensor<float> v = Tensor<float>::from({1, 2}, {0.5f, 0.5f});
    // feeding the wrong site input: ad1 is stride-2, so its output cannot
    // match p0's shape
    CHECK_THROWS_AS(blend(p0, p0, bank, v, 1), DimError);
}

TEST_CASE("gradients flow to adapters with nonzero weight and skip zero-weight ones") {
    CodecModel<float> m = tiny_model();
    attach_adapters(m, 2, AdapterInit::kGaussian, 31);
    Tensor<float> y = round_ties_away(mul_scalar(random_latent(), 2.0f));
    Tensor<float> v = Tensor<float>::from({1, 3}, {0.5f, 0.5f, 0.0f});  // constant v
    Tensor<float> out = decode_with_adapters(m.decoder, y, &*m.bank, &v);
    backward(mean(mul(out, out)));

    auto grad_norm = [](AdapterTriple<float>& t) {
        double n = 0;
        t.visit([&n](Parameter<float>& p) {
            for (float g : p.grad()) n += std::fabs(g);
        });
        return n;
    };
    CHECK(grad_norm(m.bank->triples[0]) > 0.0);
    CHECK(grad_norm(m.bank->triples[1]) > 0.0);
    CHECK(grad_norm(m.bank->triples[2]) == 0.0);
}

TEST_CASE("parameter_count matches the closed form for a 3x3 conv adapter") {
    CodecModel<float> m = tiny_model();
    AdapterBank<float> bank = init_bank(1, m.decoder, AdapterInit::kZero, 3);
    const int C = m.decoder.t2.out_channels();
    const std::int64_t ad0_params =
        bank.triples[0].ad0.w.tensor().numel() + bank.triples[0].ad0.b.tensor().numel();
    CHECK(ad0_params == 9 * C * C + C);
    std::int64_t manual = 0;
    bank.visit([&manual](Parameter<float>& p) { manual += p.tensor().numel(); });
    CHECK(parameter_count(bank) == manual);
}

TEST_CASE("adapter blend gradients match finite differences") {
    // double-precision miniature decoder + bank, loss through all three sites
    CodecConfig cfg = config_for_quality(1, 8, 8);
    SynthesisDecoder<double> dec(cfg, 51);
    AdapterBank<double> bank = init_bank(1, dec, AdapterInit::kGaussian, 52);
    Rng rng(53);
    Tensor<double> y = Tensor<double>::randn({1, 8, 2, 2}, rng);
    Parameter<double>& w0 = bank.triples[0].ad0.w;
    Parameter<double>& w1 = bank.triples[1].ad1.w;
    Parameter<double>& b2 = bank.triples[0].ad2.b;
    Parameter<double> vparam("v", Tensor<double>::from({1, 2}, {0.3, 0.7}));

    auto fwd = [&] {
        Tensor<double> out = decode_with_adapters(dec, y, &bank, &vparam.tensor());
        return mean(mul(out, out));
    };
    backward(fwd());
    CHECK(testsupport::max_rel_err(w0.grad(), testsupport::numeric_grad(w0.tensor(), [&] { return fwd().scalar(); })) < 1e-4);
    CHECK(testsupport::max_rel_err(w1.grad(), testsupport::numeric_grad(w1.tensor(), [&] { return fwd().scalar(); })) < 1e-4);
    CHECK(testsupport::max_rel_err(b2.grad(), testsupport::numeric_grad(b2.tensor(), [&] { return fwd().scalar(); })) < 1e-4);
    CHECK(testsupport::max_rel_err(vparam.grad(), testsupport::numeric_grad(vparam.tensor(), [&] { return fwd().scalar(); })) < 1e-4);
}
