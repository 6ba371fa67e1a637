#pragma once

// Capillary pressure: entry pressure from permeability and porosity, and the
// effective-saturation power-law curve through two pressure anchors. Pressures
// are in psi, permeability in mD.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/error.hpp"
#include "drt/petro.hpp"

namespace drt {

/// p_cd = c * (phi / k)^e
struct PFunction {
    double c = 12.0;
    double e = 0.5;
};

inline double pcd_from_permeability(double k_md, double phi, PFunction pfn) {
    if (!(k_md > 0.0) || !(phi > 0.0 && phi < 1.0) || !(pfn.c > 0.0))
        throw Error(ErrorCode::NonPositiveInput, "need k > 0, phi in (0,1), c > 0");
    return pfn.c * std::pow(phi / k_md, pfn.e);
}

struct PFunctionSample {
    double k_md;
    double phi;
    double p_cd_psi;
};

/// Least squares of ln p_cd on ln(phi / k).
inline PFunction fit_pfunction(const std::vector<PFunctionSample>& samples) {
    if (samples.size() < 2) throw Error(ErrorCode::InsufficientSamples, "need >= 2 samples");
    std::vector<double> x, y;
    for (const auto& s : samples) {
        if (!(s.k_md > 0.0) || !(s.phi > 0.0) || !(s.p_cd_psi > 0.0))
            throw Error(ErrorCode::NonPositiveInput, "samples must be positive");
        x.push_back(std::log(s.phi / s.k_md));
        y.push_back(std::log(s.p_cd_psi));
    }
    const auto fit = detail::least_squares(x, y);
    return {std::exp(fit.intercept), fit.slope};
}

/// P_c(S_w) = p_cd * S_we^(-1/lambda), S_we = (S_w - s_wi) / (1 - s_wi),
/// with lambda fixed by P_c(s_w_anchor) = p_cu.
class PcCurve {
public:
    PcCurve(double p_cd_psi, double p_cu_psi, double s_wi, double s_w_anchor)
        : p_cd_(p_cd_psi), p_cu_(p_cu_psi), s_wi_(s_wi), s_w_anchor_(s_w_anchor) {
        if (!(p_cd_psi > 0.0)) throw Error(ErrorCode::BadOrdering, "p_cd must be positive");
        if (!(p_cu_psi >= p_cd_psi)) throw Error(ErrorCode::BadOrdering, "p_cu must be >= p_cd");
        if (!(s_wi > 0.0 && s_wi < s_w_anchor && s_w_anchor < 1.0))
            throw Error(ErrorCode::BadOrdering, "need 0 < s_wi < s_w_anchor < 1");
        inv_lambda_ = std::log(p_cu_psi / p_cd_psi) / -std::log(effective_saturation(s_w_anchor));
    }

    double p_cd() const { return p_cd_; }
    double p_cu() const { return p_cu_; }
    double s_wi() const { return s_wi_; }
    double s_w_anchor() const { return s_w_anchor_; }
    double inverse_lambda() const { return inv_lambda_; }
    /// +inf for a flat curve (p_cu == p_cd).
    double lambda() const { return inv_lambda_ == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / inv_lambda_; }

    double effective_saturation(double s_w) const { return (s_w - s_wi_) / (1.0 - s_wi_); }

    double operator()(double s_w) const {
        if (!(s_w > s_wi_ && s_w <= 1.0)) throw Error(ErrorCode::SaturationOutOfRange, "s_w must lie in (s_wi, 1]");
        return p_cd_ * std::pow(effective_saturation(s_w), -inv_lambda_);
    }

private:
    double p_cd_, p_cu_, s_wi_, s_w_anchor_;
    double inv_lambda_ = 0.0;
};

inline PcCurve build_pc_curve(double p_cd, double p_cu, double s_wi, double s_w_anchor) {
    return PcCurve(p_cd, p_cu, s_wi, s_w_anchor);
}

inline double evaluate_pc(const PcCurve& curve, double s_w) { return curve(s_w); }

struct PcShape {
    double p_cd_psi;
    double p_cu_psi;
    double s_wi;
};

inline PcShape pc_shape_features(const PcCurve& c) { return {c.p_cd(), c.p_cu(), c.s_wi()}; }

inline nlohmann::json to_json(const PcCurve& c) {
    nlohmann::json j{{"p_cd", c.p_cd()}, {"p_cu", c.p_cu()}, {"s_wi", c.s_wi()}, {"s_w_anchor", c.s_w_anchor()}};
    // JSON has no infinity; a flat curve carries lambda = null.
    j["lambda"] = std::isinf(c.lambda()) ? nlohmann::json(nullptr) : nlohmann::json(c.lambda());
    return j;
}

/// `s_w,pc_psi` rows at 101 uniform saturations over [s_wi + 1e-3, 1].
inline std::string pc_curve_csv(const PcCurve& c) {
    std::string out = "s_w,pc_psi\n";
    const double lo = c.s_wi() + 1e-3;
    char line[96];
    for (int i = 0; i <= 100; ++i) {
        const double s = i == 100 ? 1.0 : lo + (1.0 - lo) * double(i) / 100.0;
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", s, c(s));
        out += line;
    }
    return out;
}

} // namespace drt
