#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "licda/entropy_coder.hpp"
#include "licda/model.hpp"
#include "licda/policy.hpp"

namespace licda {

inline constexpr int kStreamVersion = 1;

// Normative .licb layout (all integers little-endian):
//   magic "LICB" | version u8 | H u16 | W u16 | quality u8 | K u8 | policy u8
//   | v_len u32 | v payload: (K+1) x u16 fixed point
//   | latent_len u32 | range-coded latent payload
struct StreamMeta {
    int orig_h = 0;
    int orig_w = 0;
    int quality_index = 0;
    int K = 0;
    PolicyKind policy = PolicyKind::kProposed;
};

struct DecodedStream {
    Latent<float> latent;  // quantized, [M, h, w]
    std::vector<float> v;  // renormalized; empty when decoding adapter-free
    StreamMeta meta;
    bool used_adapters = false;
    std::string warning;
};

// Padded spatial dims implied by the header (reflect padding rule).
inline std::pair<int, int> padded_dims(int h, int w) {
    auto t = [](int d) { return (std::max(d, 64) + 15) / 16 * 16; };
    return {t(h), t(w)};
}

// 16-bit fixed-point quantization of v with largest-remainder rounding, so
// the counts sum to exactly 65535 and each entry is recovered within 1/65535.
std::vector<std::uint16_t> quantize_distribution(const std::vector<float>& v);
std::vector<float> dequantize_distribution(const std::vector<std::uint16_t>& q);

std::vector<CdfTable> model_cdf_tables(const CodecModel<float>& model);

std::vector<std::uint8_t> encode_stream(const CodecModel<float>& model, const Latent<float>& y_hat,
                                        const std::vector<float>& v, const StreamMeta& meta);

// force_adapter_free decodes latents even when the header K disagrees with
// the checkpoint's adapter bank; a checkpoint with no bank at all always
// falls back (with a warning) per the decode contract.
DecodedStream decode_stream(const CodecModel<float>& model, const std::vector<std::uint8_t>& bytes,
                            bool force_adapter_free = false);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

inline double bits_per_pixel(std::size_t stream_bytes, int h, int w) {
    return 8.0 * static_cast<double>(stream_bytes) / (static_cast<double>(h) * w);
}

}  // namespace licda
