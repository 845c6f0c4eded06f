#include "licda/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace licda {

double psnr(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw DimError("psnr: image shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double pa = std::round(static_cast<double>(clamp01(a.pixels[i])) * 255.0);
        const double pb = std::round(static_cast<double>(clamp01(b.pixels[i])) * 255.0);
        const double d = pa - pb;
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.pixels.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

void validate_curve(const RDCurve& c) {
    if (c.points.size() < 4)
        throw ContractError("RD curve '" + c.label + "' needs at least 4 points, has " +
                            std::to_string(c.points.size()));
    for (const auto& p : c.points) {
        if (!(p.bpp > 0.0) || !std::isfinite(p.bpp) || !std::isfinite(p.psnr_db))
            throw ContractError("RD curve '" + c.label + "' has a non-finite or non-positive point");
    }
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        if (!(c.points[i].bpp > c.points[i - 1].bpp) || !(c.points[i].psnr_db > c.points[i - 1].psnr_db))
            throw ContractError("RD curve '" + c.label + "' is not strictly increasing in bpp and PSNR");
    }
}

namespace {

// Cubic least-squares fit y(x) around the centered abscissa; exact
// interpolation for 4 points.
struct CubicFit {
    double x0;
    Eigen::Vector4d coef;  // c0 + c1 t + c2 t^2 + c3 t^3, t = x - x0

    double integral(double a, double b) const {
        auto anti = [this](double x) {
            const double t = x - x0;
            return coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 + coef[3] * t * t * t * t / 4;
        };
        return anti(b) - anti(a);
    }
};

CubicFit fit_cubic(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double x0 = 0.0;
    for (double v : x) x0 += v;
    x0 /= n;
    Eigen::MatrixXd A(n, 4);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        const double t = x[static_cast<std::size_t>(i)] - x0;
        A(i, 0) = 1.0;
        A(i, 1) = t;
        A(i, 2) = t * t;
        A(i, 3) = t * t * t;
        b(i) = y[static_cast<std::size_t>(i)];
    }
    CubicFit f;
    f.x0 = x0;
    f.coef = A.colPivHouseholderQr().solve(b);
    return f;
}

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
struct PchipFit {
    std::vector<double> x, y, m;

    double integral(double a, double b) const {
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            const double lo = std::max(a, x[i]), hi = std::min(b, x[i + 1]);
            if (hi <= lo) continue;
            acc += segment_integral(i, lo, hi);
        }
        return acc;
    }

    double segment_integral(std::size_t i, double lo, double hi) const {
        const double h = x[i + 1] - x[i];
        auto anti = [&](double xx) {
            const double t = (xx - x[i]) / h;
            const double t2 = t * t, t3 = t2 * t, t4 = t2 * t2;
            // antiderivatives of the Hermite basis scaled by h
            const double H00 = t - t3 + t4 / 2.0;
            const double H10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;
            const double H01 = t3 - t4 / 2.0;
            const double H11 = -t3 / 3.0 + t4 / 4.0;
            return h * (y[i] * H00 + h * m[i] * H10 + y[i + 1] * H01 + h * m[i + 1] * H11);
        };
        return anti(hi) - anti(lo);
    }
};

PchipFit fit_pchip(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> d(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0.0) {
            m[i] = 0.0;
        } else {
            const double w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
            const double w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    return {x, y, m};
}

// Average of (fit_test - fit_anchor) over the shared x interval.
double mean_fit_difference(const std::vector<double>& xa, const std::vector<double>& ya,
                           const std::vector<double>& xt, const std::vector<double>& yt, BdVariant variant,
                           const char* axis) {
    const double lo = std::max(xa.front(), xt.front());
    const double hi = std::min(xa.back(), xt.back());
    if (!(hi > lo))
        throw ContractError(std::string("RD curves do not overlap in ") + axis + "; refusing to extrapolate");
    double ia, it;
    if (variant == BdVariant::kCubic) {
        ia = fit_cubic(xa, ya).integral(lo, hi);
        it = fit_cubic(xt, yt).integral(lo, hi);
    } else {
        ia = fit_pchip(xa, ya).integral(lo, hi);
        it = fit_pchip(xt, yt).integral(lo, hi);
    }
    return (it - ia) / (hi - lo);
}

}  // namespace

BdResult bd_metrics(const RDCurve& anchor, const RDCurve& test, BdVariant variant) {
    validate_curve(anchor);
    validate_curve(test);

    std::vector<double> ra, pa, rt, pt;
    for (const auto& p : anchor.points) {
        ra.push_back(std::log10(p.bpp));
        pa.push_back(p.psnr_db);
    }
    for (const auto& p : test.points) {
        rt.push_back(std::log10(p.bpp));
        pt.push_back(p.psnr_db);
    }

    BdResult out;
    const double dlog = mean_fit_difference(pa, ra, pt, rt, variant, "PSNR");
    out.bd_rate_percent = (std::pow(10.0, dlog) - 1.0) * 100.0;
    out.bd_psnr_db = mean_fit_difference(ra, pa, rt, pt, variant, "rate");
    return out;
}

}  // namespace licda
