#pragma once

#include <cstdint>
#include <vector>

#include "licda/error.hpp"

namespace licda {

inline constexpr int kSymbolBound = 255;          // symbols cover [-L, L]
inline constexpr std::uint32_t kCdfTotal = 1u << 16;

// Per-channel CDF over [-L, L] plus a trailing escape bucket. Strictly
// increasing with total mass 2^16; every symbol keeps frequency >= 1.
struct CdfTable {
    std::vector<std::uint32_t> cdf;  // size num_symbols + 1; cdf[0] = 0, back() = 2^16

    int num_symbols() const { return static_cast<int>(cdf.size()) - 1; }
    int escape_index() const { return num_symbols() - 1; }
    std::uint32_t freq(int s) const { return cdf[static_cast<std::size_t>(s) + 1] - cdf[static_cast<std::size_t>(s)]; }
};

// Deterministic table from the channel's Gaussian (mean, scale).
CdfTable build_cdf_table(double mean, double scale);

void validate_cdf(const CdfTable& t);

// Bit-oriented arithmetic coder (32-bit registers, 16-bit frequencies).
class RangeEncoder {
public:
    void encode(const CdfTable& table, int symbol);
    void encode_bypass(std::uint32_t value, int nbits);  // equiprobable raw bits
    std::vector<std::uint8_t> finish();

private:
    void interval_update(std::uint32_t cum, std::uint32_t freq);
    void emit(int bit);
    void put_bit(int bit);

    std::uint32_t low_ = 0, high_ = 0xFFFFFFFFu;
    std::uint64_t pending_ = 0;
    std::vector<std::uint8_t> bytes_;
    int bitpos_ = 0;
    bool finished_ = false;
};

class RangeDecoder {
public:
    explicit RangeDecoder(const std::uint8_t* data, std::size_t size);

    int decode(const CdfTable& table);
    std::uint32_t decode_bypass(int nbits);

private:
    void interval_update(std::uint32_t cum, std::uint32_t freq);
    int read_bit();

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t bit_ = 0;
    std::size_t overrun_ = 0;
    std::uint32_t low_ = 0, high_ = 0xFFFFFFFFu, value_ = 0;
};

// Quantized latent values (integers stored as float) <-> coded bytes, using
// one table per channel. Out-of-range symbols escape to 32 raw bits.
std::vector<std::uint8_t> encode_symbols(const std::vector<float>& values, int channels, int plane,
                                         const std::vector<CdfTable>& tables);
std::vector<float> decode_symbols(const std::uint8_t* data, std::size_t size, int channels, int plane,
                                  const std::vector<CdfTable>& tables);

}  // namespace licda
