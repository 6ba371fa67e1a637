#pragma once

// Petrophysical properties from segmented volumes: porosity, pore-system
// modality against the uni/bi/tri-modal archetype table, and per-morphology
// porosity-permeability power laws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/error.hpp"
#include "drt/morphology.hpp"
#include "drt/volume.hpp"

namespace drt {

struct PorosityRoles {
    std::set<std::uint16_t> pore_classes;
    std::set<std::uint16_t> micropore_classes;
    /// Share of a micropore voxel counted as pore volume.
    double micro_weight = 0.5;
};

/// phi = (N_pore + micro_weight * N_micropore) / N_total.
inline double porosity_from_labels(const LabelVolume& labels, const PorosityRoles& roles, std::size_t n_classes) {
    if (!(roles.micro_weight >= 0.0 && roles.micro_weight <= 1.0))
        throw Error(ErrorCode::BadParams, "micro_weight must lie in [0, 1]");
    for (auto c : roles.pore_classes)
        if (c >= n_classes) throw Error(ErrorCode::UnknownClassId, "pore class " + std::to_string(c));
    for (auto c : roles.micropore_classes) {
        if (c >= n_classes) throw Error(ErrorCode::UnknownClassId, "micropore class " + std::to_string(c));
        if (roles.pore_classes.count(c)) throw Error(ErrorCode::BadParams, "class is both pore and micropore");
    }
    std::vector<std::size_t> counts(n_classes, 0);
    for (auto l : labels.data()) {
        if (l >= n_classes) throw Error(ErrorCode::UnknownClassId, "voxel label " + std::to_string(l));
        ++counts[l];
    }
    double pore = 0.0, micro = 0.0;
    for (auto c : roles.pore_classes) pore += double(counts[c]);
    for (auto c : roles.micropore_classes) micro += double(counts[c]);
    return (pore + roles.micro_weight * micro) / double(labels.size());
}

// ---------------------------------------------------------------------------
// Modality

enum class Modality { Singular = 1, Dual = 2, Triple = 3 };

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::Singular: return "Singular";
        case Modality::Dual: return "Dual";
        case Modality::Triple: return "Triple";
    }
    return "Singular";
}

/// Band fractions ordered (micro, meso, macro).
using BandFractions = std::array<double, 3>;

struct ModalityArchetype {
    std::string id;
    Modality modality;
    BandFractions fractions;
};

/// The uni/bi/tri-modal archetype rows: two triple splits, three splits for each
/// band pair, and the three pure bands.
inline const std::vector<ModalityArchetype>& modality_archetypes() {
    static const std::vector<ModalityArchetype> rows = [] {
        std::vector<ModalityArchetype> r;
        r.push_back({"Triple 20-50-30", Modality::Triple, {0.20, 0.50, 0.30}});
        r.push_back({"Triple 20-30-50", Modality::Triple, {0.20, 0.30, 0.50}});
        const char* band[3] = {"micro", "meso", "macro"};
        const std::array<std::pair<int, int>, 3> pairs{{{0, 2}, {0, 1}, {1, 2}}};
        const std::array<std::pair<int, int>, 3> splits{{{25, 75}, {50, 50}, {75, 25}}};
        for (auto [a, b] : pairs)
            for (auto [sa, sb] : splits) {
                BandFractions f{0.0, 0.0, 0.0};
                f[std::size_t(a)] = sa / 100.0;
                f[std::size_t(b)] = sb / 100.0;
                r.push_back({std::string("Dual ") + band[a] + "-" + band[b] + " " + std::to_string(sa) + "-" +
                                 std::to_string(sb),
                             Modality::Dual, f});
            }
        for (int a = 0; a < 3; ++a) {
            BandFractions f{0.0, 0.0, 0.0};
            f[std::size_t(a)] = 1.0;
            r.push_back({std::string("Singular ") + band[a] + " 100%", Modality::Singular, f});
        }
        return r;
    }();
    return rows;
}

struct ModalityProfile {
    BandFractions fractions{};
    Modality modality = Modality::Singular;
    std::string archetype;
    double distance = 0.0;
};

/// Bands below `presence` count as absent; the archetype is the nearest row
/// (Euclidean, fraction simplex) sharing the present-band pattern.
inline ModalityProfile classify_modality(const BandFractions& f, double presence = 0.10) {
    if (!(presence > 0.0 && presence < 1.0 / 3.0)) throw Error(ErrorCode::BadParams, "presence threshold must lie in (0, 1/3)");
    const double sum = f[0] + f[1] + f[2];
    if (f[0] < 0 || f[1] < 0 || f[2] < 0 || std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::BadParams, "band fractions must be non-negative and sum to 1");
    std::array<bool, 3> present{};
    int count = 0;
    for (std::size_t b = 0; b < 3; ++b) count += (present[b] = f[b] >= presence);

    ModalityProfile out;
    out.fractions = f;
    out.modality = static_cast<Modality>(count);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : modality_archetypes()) {
        bool same = true;
        for (std::size_t b = 0; b < 3; ++b) same &= (row.fractions[b] > 0.0) == present[b];
        if (!same) continue;
        double d2 = 0.0;
        for (std::size_t b = 0; b < 3; ++b) d2 += (f[b] - row.fractions[b]) * (f[b] - row.fractions[b]);
        const double d = std::sqrt(d2);
        if (d < best) {
            best = d;
            out.archetype = row.id;
            out.distance = d;
        }
    }
    return out;
}

inline ModalityProfile classify_modality(const PoreThroatDistribution& d, double presence = 0.10) {
    return classify_modality(BandFractions{d.f_micro, d.f_meso, d.f_macro}, presence);
}

// ---------------------------------------------------------------------------
// Porosity-permeability-morphology relation

enum class MorphologyClass { connected, non_connected, micropore };

inline std::string to_string(MorphologyClass m) {
    switch (m) {
        case MorphologyClass::connected: return "connected";
        case MorphologyClass::non_connected: return "non_connected";
        case MorphologyClass::micropore: return "micropore";
    }
    return "connected";
}

inline MorphologyClass morphology_from_string(const std::string& s) {
    if (s == "connected") return MorphologyClass::connected;
    if (s == "non_connected") return MorphologyClass::non_connected;
    if (s == "micropore") return MorphologyClass::micropore;
    throw Error(ErrorCode::ParseError, "unknown morphology class '" + s + "'");
}

inline constexpr std::array<MorphologyClass, 3> kMorphologyClasses{
    MorphologyClass::connected, MorphologyClass::non_connected, MorphologyClass::micropore};

/// k = a * phi^b (k in mD, phi a fraction) over [phi_min, phi_max].
struct PowerLaw {
    double a = 1.0;
    double b = 1.0;
    double phi_min = 0.0;
    double phi_max = 1.0;

    double operator()(double phi) const { return phi <= 0.0 ? 0.0 : a * std::pow(phi, b); }
    bool operator==(const PowerLaw&) const = default;
};

struct CamoRelation {
    std::map<MorphologyClass, PowerLaw> curves;

    const PowerLaw& at(MorphologyClass m) const {
        const auto it = curves.find(m);
        if (it == curves.end())
            throw Error(ErrorCode::MissingClassCoefficients, "no coefficients for class " + to_string(m));
        return it->second;
    }
};

/// Illustrative coefficients for use without field calibration data.
inline CamoRelation default_camo_relation() {
    CamoRelation r;
    r.curves[MorphologyClass::connected] = {500.0, 3.0, 0.0, 1.0};
    r.curves[MorphologyClass::non_connected] = {50.0, 3.0, 0.0, 1.0};
    r.curves[MorphologyClass::micropore] = {5.0, 3.0, 0.0, 1.0};
    return r;
}

inline nlohmann::json to_json(const CamoRelation& r) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [m, c] : r.curves)
        j[to_string(m)] = {{"a", c.a}, {"b", c.b}, {"phi_min", c.phi_min}, {"phi_max", c.phi_max}};
    return j;
}

inline CamoRelation camo_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "CAMO relation must be a JSON object");
    CamoRelation r;
    try {
        for (const auto& [key, v] : j.items()) {
            PowerLaw p;
            p.a = v.at("a").get<double>();
            p.b = v.at("b").get<double>();
            p.phi_min = v.value("phi_min", 0.0);
            p.phi_max = v.value("phi_max", 1.0);
            if (!(p.a > 0.0) || !std::isfinite(p.b) || !(p.phi_min <= p.phi_max))
                throw Error(ErrorCode::BadParams, "invalid coefficients for class " + key);
            r.curves[morphology_from_string(key)] = p;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("CAMO relation: ") + e.what());
    }
    return r;
}

struct CamoSample {
    double phi;
    double k_md;
    MorphologyClass morphology;
};

namespace detail {

struct LineFit {
    double slope, intercept;
};

// Ordinary least squares y = slope * x + intercept.
inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::InsufficientSamples, "abscissae are all equal");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

} // namespace detail

/// Per-class least squares of log10 k on log10 phi.
inline CamoRelation fit_camo(const std::vector<CamoSample>& samples) {
    std::map<MorphologyClass, std::pair<std::vector<double>, std::vector<double>>> by_class;
    for (const auto& s : samples) {
        if (!(s.phi > 0.0 && s.phi < 1.0) || !(s.k_md > 0.0))
            throw Error(ErrorCode::NonPositiveValue, "samples need phi in (0,1) and k > 0");
        auto& [x, y] = by_class[s.morphology];
        x.push_back(std::log10(s.phi));
        y.push_back(std::log10(s.k_md));
    }
    if (by_class.empty()) throw Error(ErrorCode::InsufficientSamples, "no samples");
    CamoRelation r;
    for (const auto& [m, xy] : by_class) {
        if (xy.first.size() < 2)
            throw Error(ErrorCode::InsufficientSamples, "class " + to_string(m) + " needs >= 2 samples");
        const auto fit = detail::least_squares(xy.first, xy.second);
        const auto [lo, hi] = std::minmax_element(xy.first.begin(), xy.first.end());
        r.curves[m] = {std::pow(10.0, fit.intercept), fit.slope, std::pow(10.0, *lo), std::pow(10.0, *hi)};
    }
    return r;
}

struct ConnectivityRule {
    /// true: the dominant component must percolate along all three axes.
    bool require_all_axes = false;
};

/// Connected if the dominant pore component percolates; else micropore when the
/// micro band carries the largest fraction; else non_connected.
inline MorphologyClass select_morphology(const ModalityProfile& mp, const ComponentMap& cm, ConnectivityRule rule = {}) {
    const std::size_t dom = cm.dominant();
    if (dom != 0 && (rule.require_all_axes ? cm.percolates_all(dom) : cm.percolates_any(dom)))
        return MorphologyClass::connected;
    const auto& f = mp.fractions;
    if (f[0] > f[1] && f[0] > f[2]) return MorphologyClass::micropore;
    return MorphologyClass::non_connected;
}

struct PermeabilityEstimate {
    double k_md = 0.0;
    MorphologyClass morphology = MorphologyClass::connected;
    /// phi outside the fitted validity range of the class curve.
    bool out_of_range = false;
};

inline PermeabilityEstimate estimate_permeability(const CamoRelation& rel, double phi, MorphologyClass m) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw Error(ErrorCode::BadParams, "porosity must lie in [0, 1]");
    const PowerLaw& c = rel.at(m);
    return {c(phi), m, phi < c.phi_min || phi > c.phi_max};
}

inline PermeabilityEstimate estimate_permeability(const CamoRelation& rel, double phi, const ModalityProfile& mp,
                                                  const ComponentMap& cm, ConnectivityRule rule = {}) {
    return estimate_permeability(rel, phi, select_morphology(mp, cm, rule));
}

} // namespace drt
