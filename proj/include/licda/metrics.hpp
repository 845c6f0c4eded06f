#pragma once

#include <string>
#include <vector>

#include "licda/image.hpp"

namespace licda {

inline constexpr double kPsnrCap = 100.0;  // sentinel for identical images

// PSNR over 8-bit-rounded pixels: 10*log10(255^2 / MSE), capped at 100 dB.
double psnr(const Image& a, const Image& b);

struct RDPoint {
    double bpp = 0.0;
    double psnr_db = 0.0;
};

struct RDCurve {
    std::vector<RDPoint> points;  // >= 4, strictly increasing in bpp and psnr
    std::string label;
};

// Throws on < 4 points, non-finite values, bpp <= 0 or broken monotonicity.
void validate_curve(const RDCurve& c);

enum class BdVariant { kCubic, kPiecewise };

struct BdResult {
    double bd_rate_percent = 0.0;
    double bd_psnr_db = 0.0;
};

// Bjontegaard deltas of `test` against `anchor`: fit log10(rate) as a
// function of PSNR (and PSNR as a function of log10(rate)), integrate the
// difference over the overlap interval and average. Negative BD-Rate means
// the test curve needs less rate at equal quality.
BdResult bd_metrics(const RDCurve& anchor, const RDCurve& test, BdVariant variant = BdVariant::kCubic);

}  // namespace licda
