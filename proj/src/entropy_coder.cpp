#include "licda/entropy_coder.hpp"

#include <algorithm>
#include <cmath>

namespace licda {

namespace {

double gauss_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

}  // namespace

CdfTable build_cdf_table(double mean, double scale) {
    if (!(scale > 0)) throw CodecError("entropy model scale must be positive");
    const int L = kSymbolBound;
    const int n = 2 * L + 2;  // symbols plus escape
    std::vector<double> p(static_cast<std::size_t>(n));
    double in_range = 0.0;
    for (int v = -L; v <= L; ++v) {
        const double q = gauss_cdf((v - mean + 0.5) / scale) - gauss_cdf((v - mean - 0.5) / scale);
        p[static_cast<std::size_t>(v + L)] = q;
        in_range += q;
    }
    p[static_cast<std::size_t>(n - 1)] = std::max(0.0, 1.0 - in_range);

    std::vector<std::uint32_t> f(static_cast<std::size_t>(n));
    std::int64_t total = 0;
    for (int i = 0; i < n; ++i) {
        f[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(std::max<std::int64_t>(1, std::llround(p[static_cast<std::size_t>(i)] * kCdfTotal)));
        total += f[static_cast<std::size_t>(i)];
    }
    // Rebalance onto the largest buckets until the mass is exactly 2^16.
    while (total != kCdfTotal) {
        std::size_t big = 0;
        for (std::size_t i = 1; i < f.size(); ++i)
            if (f[i] > f[big]) big = i;
        if (total < static_cast<std::int64_t>(kCdfTotal)) {
            const std::int64_t add = static_cast<std::int64_t>(kCdfTotal) - total;
            f[big] += static_cast<std::uint32_t>(add);
            total += add;
        } else {
            const std::int64_t cut = std::min<std::int64_t>(total - kCdfTotal, f[big] - 1);
            f[big] -= static_cast<std::uint32_t>(cut);
            total -= cut;
            if (cut == 0) throw CodecError("cannot normalize CDF table");
        }
    }

    CdfTable t;
    t.cdf.resize(static_cast<std::size_t>(n) + 1);
    t.cdf[0] = 0;
    for (int i = 0; i < n; ++i) t.cdf[static_cast<std::size_t>(i) + 1] = t.cdf[static_cast<std::size_t>(i)] + f[static_cast<std::size_t>(i)];
    validate_cdf(t);
    return t;
}

void validate_cdf(const CdfTable& t) {
    if (t.cdf.size() < 3 || t.cdf.front() != 0 || t.cdf.back() != kCdfTotal)
        throw CodecError("corrupt CDF table: bad endpoints");
    for (std::size_t i = 1; i < t.cdf.size(); ++i)
        if (t.cdf[i] <= t.cdf[i - 1]) throw CodecError("corrupt CDF table: not strictly increasing");
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

void RangeEncoder::put_bit(int bit) {
    if (bitpos_ == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> bitpos_);
    bitpos_ = (bitpos_ + 1) & 7;
}

void RangeEncoder::emit(int bit) {
    put_bit(bit);
    while (pending_ > 0) {
        put_bit(!bit);
        --pending_;
    }
}

void RangeEncoder::interval_update(std::uint32_t cum, std::uint32_t freq) {
    const std::uint64_t span = static_cast<std::uint64_t>(high_) - low_ + 1;
    high_ = low_ + static_cast<std::uint32_t>(span * (cum + freq) / kCdfTotal) - 1;
    low_ = low_ + static_cast<std::uint32_t>(span * cum / kCdfTotal);
    for (;;) {
        if (high_ < 0x80000000u) {
            emit(0);
        } else if (low_ >= 0x80000000u) {
            emit(1);
            low_ -= 0x80000000u;
            high_ -= 0x80000000u;
        } else if (low_ >= 0x40000000u && high_ < 0xC0000000u) {
            ++pending_;
            low_ -= 0x40000000u;
            high_ -= 0x40000000u;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
    }
}

void RangeEncoder::encode(const CdfTable& table, int symbol) {
    if (symbol < 0 || symbol >= table.num_symbols()) throw CodecError("symbol outside CDF table");
    interval_update(table.cdf[static_cast<std::size_t>(symbol)], table.freq(symbol));
}

void RangeEncoder::encode_bypass(std::uint32_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) {
        const std::uint32_t bit = (value >> i) & 1u;
        interval_update(bit ? kCdfTotal / 2 : 0, kCdfTotal / 2);
    }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    if (!finished_) {
        ++pending_;
        emit(low_ < 0x40000000u ? 0 : 1);
        finished_ = true;
    }
    return std::move(bytes_);
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
    for (int i = 0; i < 32; ++i) value_ = (value_ << 1) | static_cast<std::uint32_t>(read_bit());
}

int RangeDecoder::read_bit() {
    if (bit_ >= size_ * 8) {
        // The coder legitimately looks ahead up to one register past the end;
        // anything beyond that means the payload was truncated or desynced.
        if (++overrun_ > 32) throw FramingError("entropy-coded payload exhausted");
        return 0;
    }
    const int b = (data_[bit_ >> 3] >> (7 - (bit_ & 7))) & 1;
    ++bit_;
    return b;
}

void RangeDecoder::interval_update(std::uint32_t cum, std::uint32_t freq) {
    const std::uint64_t span = static_cast<std::uint64_t>(high_) - low_ + 1;
    high_ = low_ + static_cast<std::uint32_t>(span * (cum + freq) / kCdfTotal) - 1;
    low_ = low_ + static_cast<std::uint32_t>(span * cum / kCdfTotal);
    for (;;) {
        if (high_ < 0x80000000u) {
        } else if (low_ >= 0x80000000u) {
            low_ -= 0x80000000u;
            high_ -= 0x80000000u;
            value_ -= 0x80000000u;
        } else if (low_ >= 0x40000000u && high_ < 0xC0000000u) {
            low_ -= 0x40000000u;
            high_ -= 0x40000000u;
            value_ -= 0x40000000u;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
        value_ = (value_ << 1) | static_cast<std::uint32_t>(read_bit());
    }
}

int RangeDecoder::decode(const CdfTable& table) {
    const std::uint64_t span = static_cast<std::uint64_t>(high_) - low_ + 1;
    const std::uint32_t target =
        static_cast<std::uint32_t>(((static_cast<std::uint64_t>(value_ - low_) + 1) * kCdfTotal - 1) / span);
    if (target >= kCdfTotal) throw FramingError("range decoder desynchronized");
    auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), target);
    const int symbol = static_cast<int>(it - table.cdf.begin()) - 1;
    interval_update(table.cdf[static_cast<std::size_t>(symbol)], table.freq(symbol));
    return symbol;
}

std::uint32_t RangeDecoder::decode_bypass(int nbits) {
    std::uint32_t v = 0;
    for (int i = 0; i < nbits; ++i) {
        const std::uint64_t span = static_cast<std::uint64_t>(high_) - low_ + 1;
        const std::uint32_t target =
            static_cast<std::uint32_t>(((static_cast<std::uint64_t>(value_ - low_) + 1) * kCdfTotal - 1) / span);
        const std::uint32_t bit = target >= kCdfTotal / 2 ? 1 : 0;
        interval_update(bit ? kCdfTotal / 2 : 0, kCdfTotal / 2);
        v = (v << 1) | bit;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Latent symbol streams
// ---------------------------------------------------------------------------

namespace {

std::uint32_t zigzag(std::int32_t v) {
    return (static_cast<std::uint32_t>(v) << 1) ^ static_cast<std::uint32_t>(v >> 31);
}
std::int32_t unzigzag(std::uint32_t u) { return static_cast<std::int32_t>((u >> 1) ^ (~(u & 1) + 1)); }

}  // namespace

std::vector<std::uint8_t> encode_symbols(const std::vector<float>& values, int channels, int plane,
                                         const std::vector<CdfTable>& tables) {
    if (static_cast<int>(tables.size()) != channels) throw CodecError("one CDF table per channel required");
    if (values.size() != static_cast<std::size_t>(channels) * plane) throw CodecError("latent size mismatch");
    RangeEncoder enc;
    for (int c = 0; c < channels; ++c) {
        const CdfTable& t = tables[static_cast<std::size_t>(c)];
        for (int i = 0; i < plane; ++i) {
            const double raw = static_cast<double>(values[static_cast<std::size_t>(c) * plane + i]);
            if (!std::isfinite(raw) || std::fabs(raw) > 2.0e9) throw CodecError("latent symbol out of integer range");
            const std::int32_t s = static_cast<std::int32_t>(std::llround(raw));
            if (s >= -kSymbolBound && s <= kSymbolBound) {
                enc.encode(t, s + kSymbolBound);
            } else {
                enc.encode(t, t.escape_index());
                enc.encode_bypass(zigzag(s), 32);
            }
        }
    }
    return enc.finish();
}

std::vector<float> decode_symbols(const std::uint8_t* data, std::size_t size, int channels, int plane,
                                  const std::vector<CdfTable>& tables) {
    if (static_cast<int>(tables.size()) != channels) throw CodecError("one CDF table per channel required");
    RangeDecoder dec(data, size);
    std::vector<float> out(static_cast<std::size_t>(channels) * plane);
    for (int c = 0; c < channels; ++c) {
        const CdfTable& t = tables[static_cast<std::size_t>(c)];
        for (int i = 0; i < plane; ++i) {
            const int symbol = dec.decode(t);
            std::int32_t v;
            if (symbol == t.escape_index()) {
                v = unzigzag(dec.decode_bypass(32));
            } else {
                v = symbol - kSymbolBound;
            }
            out[static_cast<std::size_t>(c) * plane + i] = static_cast<float>(v);
        }
    }
    return out;
}

}  // namespace licda
