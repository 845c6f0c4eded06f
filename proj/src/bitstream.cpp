#include "licda/bitstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace licda {

namespace {

constexpr char kMagic[4] = {'L', 'I', 'C', 'B'};
constexpr std::size_t kFixedHeader = 4 + 1 + 2 + 2 + 1 + 1 + 1;  // through the policy byte

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::uint8_t* p;
    std::size_t n, pos = 0;
    std::uint8_t u8() {
        if (pos + 1 > n) throw FramingError("truncated stream header");
        return p[pos++];
    }
    std::uint16_t u16() {
        if (pos + 2 > n) throw FramingError("truncated stream header");
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        if (pos + 4 > n) throw FramingError("truncated stream header");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

}  // namespace

std::vector<std::uint16_t> quantize_distribution(const std::vector<float>& v) {
    const std::size_t n = v.size();
    if (n == 0) throw ContractError("empty distribution");
    double s = 0.0;
    for (float x : v) {
        if (!(x >= 0.0f)) throw ContractError("distribution entries must be non-negative");
        s += x;
    }
    if (std::fabs(s - 1.0) > 1e-3) throw ContractError("distribution does not sum to 1");

    std::vector<std::uint16_t> q(n);
    std::vector<std::pair<double, std::size_t>> rem(n);
    std::uint32_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = static_cast<double>(v[i]) / s * 65535.0;
        const double fl = std::floor(exact);
        q[i] = static_cast<std::uint16_t>(fl);
        rem[i] = {exact - fl, i};
        total += q[i];
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; total < 65535 && i < n; ++i, ++total) ++q[rem[i].second];
    return q;
}

std::vector<float> dequantize_distribution(const std::vector<std::uint16_t>& q) {
    double s = 0.0;
    for (std::uint16_t x : q) s += static_cast<double>(x) / 65535.0;
    const double tol = 2.0 * static_cast<double>(q.size()) / 65535.0;
    if (std::fabs(s - 1.0) > tol) throw FramingError("gate distribution sum outside tolerance");
    std::vector<float> v(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) v[i] = static_cast<float>(static_cast<double>(q[i]) / 65535.0 / s);
    return v;
}

std::vector<CdfTable> model_cdf_tables(const CodecModel<float>& model) {
    std::vector<CdfTable> tables;
    const int M = model.entropy.channels();
    tables.reserve(static_cast<std::size_t>(M));
    for (int c = 0; c < M; ++c) tables.push_back(build_cdf_table(model.entropy.channel_mean(c), model.entropy.channel_scale(c)));
    return tables;
}

std::vector<std::uint8_t> encode_stream(const CodecModel<float>& model, const Latent<float>& y_hat,
                                        const std::vector<float>& v, const StreamMeta& meta) {
    if (!y_hat.quantized) throw ContractError("encode_stream needs a quantized latent");
    if (static_cast<int>(v.size()) != meta.K + 1) throw ContractError("v length must be K+1");
    if (meta.orig_h <= 0 || meta.orig_w <= 0 || meta.orig_h > 0xFFFF || meta.orig_w > 0xFFFF)
        throw ContractError("image dims outside the 16-bit header range");
    if (meta.K > 0xFF || meta.quality_index < 0 || meta.quality_index > 0xFF)
        throw ContractError("header fields out of range");

    const auto [ph, pw] = padded_dims(meta.orig_h, meta.orig_w);
    const int M = model.cfg.latent_channels;
    if (y_hat.features.shape() != Shape{M, ph / 16, pw / 16})
        throw ContractError("latent shape does not match header dims");

    const auto tables = model_cdf_tables(model);
    const std::vector<std::uint8_t> payload =
        encode_symbols(y_hat.features.values(), M, (ph / 16) * (pw / 16), tables);
    const std::vector<std::uint16_t> q = quantize_distribution(v);

    std::vector<std::uint8_t> out;
    out.reserve(kFixedHeader + 4 + 2 * q.size() + 4 + payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kStreamVersion);
    put_u16(out, static_cast<std::uint16_t>(meta.orig_h));
    put_u16(out, static_cast<std::uint16_t>(meta.orig_w));
    out.push_back(static_cast<std::uint8_t>(meta.quality_index));
    out.push_back(static_cast<std::uint8_t>(meta.K));
    out.push_back(static_cast<std::uint8_t>(meta.policy));
    put_u32(out, static_cast<std::uint32_t>(2 * q.size()));
    for (std::uint16_t x : q) put_u16(out, x);
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

DecodedStream decode_stream(const CodecModel<float>& model, const std::vector<std::uint8_t>& bytes,
                            bool force_adapter_free) {
    Reader r{bytes.data(), bytes.size()};
    std::uint8_t magic[4];
    for (auto& m : magic) m = r.u8();
    if (std::memcmp(magic, kMagic, 4) != 0) throw FramingError("bad magic, not a .licb stream");
    const int version = r.u8();
    if (version != kStreamVersion)
        throw CompatError("stream version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kStreamVersion) + ")");

    DecodedStream out;
    out.meta.orig_h = r.u16();
    out.meta.orig_w = r.u16();
    out.meta.quality_index = r.u8();
    out.meta.K = r.u8();
    const int policy = r.u8();
    if (policy > 2) throw FramingError("unknown blend policy byte");
    out.meta.policy = static_cast<PolicyKind>(policy);
    if (out.meta.orig_h <= 0 || out.meta.orig_w <= 0) throw FramingError("zero image dims in header");

    const std::uint32_t v_len = r.u32();
    if (v_len != 2u * (static_cast<std::uint32_t>(out.meta.K) + 1)) throw FramingError("v payload length mismatch");
    if (r.pos + v_len > bytes.size()) throw FramingError("truncated v payload");
    std::vector<std::uint16_t> q(static_cast<std::size_t>(out.meta.K) + 1);
    for (auto& x : q) x = r.u16();
    std::vector<float> v = dequantize_distribution(q);

    const std::uint32_t latent_len = r.u32();
    if (r.pos + latent_len != bytes.size())
        throw FramingError("stream length does not match declared payloads");

    const auto [ph, pw] = padded_dims(out.meta.orig_h, out.meta.orig_w);
    const int M = model.cfg.latent_channels;
    const auto tables = model_cdf_tables(model);
    std::vector<float> symbols = decode_symbols(bytes.data() + r.pos, latent_len, M, (ph / 16) * (pw / 16), tables);
    out.latent = {Tensor<float>::from({M, ph / 16, pw / 16}, std::move(symbols)), true};

    if (!model.bank) {
        out.used_adapters = false;
        out.warning = "checkpoint has no adapters; decoding with the backbone alone";
    } else if (model.bank->K != out.meta.K) {
        if (!force_adapter_free)
            throw CompatError("stream K=" + std::to_string(out.meta.K) + " but checkpoint K=" +
                              std::to_string(model.bank->K) + " (pass force to decode adapter-free)");
        out.used_adapters = false;
        out.warning = "K mismatch; decoding adapter-free as requested";
    } else {
        out.used_adapters = true;
        out.v = std::move(v);
    }
    return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open " + path);
    const std::streamsize n = is.tellg();
    is.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!is) throw DataError("read failed: " + path);
    return bytes;
}

}  // namespace licda
