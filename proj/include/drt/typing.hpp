#pragma once

// Carbonate rock-type catalog rules and the porosity-permeability chart.
//
// A reservoir code reads L<perm class><Pc shape><S_wi bucket>, e.g. L231;
// LD5 is the non-reservoir class (k < 0.1 mD).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/capillary.hpp"
#include "drt/error.hpp"
#include "drt/petro.hpp"
#include "drt/volume.hpp"

namespace drt {

struct Range {
    double lo;
    double hi;  // exclusive
    bool contains(double v) const { return v >= lo && v < hi; }
};

/// Permeability class bounds in mD; class 5 is the non-reservoir D5 class.
inline Range perm_class_range(int perm_class) {
    switch (perm_class) {
        case 1: return {60.0, std::numeric_limits<double>::infinity()};
        case 2: return {7.0, 60.0};
        case 3: return {1.0, 7.0};
        case 4: return {0.1, 1.0};
        case 5: return {0.0, 0.1};
    }
    throw Error(ErrorCode::MalformedCode, "no permeability class " + std::to_string(perm_class));
}

/// S_wi buckets; gaps between the printed ranges are split at their midpoints.
inline Range swi_bucket_range(int bucket) {
    switch (bucket) {
        case 1: return {0.07, 0.135};
        case 2: return {0.135, 0.205};
        case 3: return {0.205, 0.275};
        case 4: return {0.275, 0.345};
    }
    throw Error(ErrorCode::MalformedCode, "no S_wi bucket " + std::to_string(bucket));
}

struct RockTypeCode {
    char lithology = 'L';
    /// 1..4, or 5 for the non-reservoir D5 class.
    int perm_class = 1;
    /// 0 for non-reservoir codes.
    int pc_shape = 0;
    int swi_bucket = 0;

    bool non_reservoir() const { return perm_class == 5; }

    std::string str() const {
        if (non_reservoir()) return std::string(1, lithology) + "D5";
        return std::string(1, lithology) + char('0' + perm_class) + char('0' + pc_shape) + char('0' + swi_bucket);
    }

    bool operator==(const RockTypeCode&) const = default;
};

inline RockTypeCode parse_code(const std::string& s) {
    auto bad = [&] { return Error(ErrorCode::MalformedCode, "'" + s + "' is not a rock-type code"); };
    if (s.size() != 3 && s.size() != 4) throw bad();
    if (s[0] != 'L') throw bad();
    RockTypeCode c;
    c.lithology = s[0];
    if (s == "LD5") {
        c.perm_class = 5;
        return c;
    }
    if (s.size() != 4) throw bad();
    const int p = s[1] - '0', shape = s[2] - '0', w = s[3] - '0';
    if (p < 1 || p > 4 || shape < 1 || shape > 9 || w < 1 || w > 4) throw bad();
    c.perm_class = p;
    c.pc_shape = shape;
    c.swi_bucket = w;
    return c;
}

struct DecodedCode {
    RockTypeCode code;
    Range perm_mD;
    std::optional<int> pc_shape;
    std::optional<Range> swi;
};

inline DecodedCode decode_code(const std::string& s) {
    const RockTypeCode c = parse_code(s);
    DecodedCode d{c, perm_class_range(c.perm_class), std::nullopt, std::nullopt};
    if (!c.non_reservoir()) {
        d.pc_shape = c.pc_shape;
        d.swi = swi_bucket_range(c.swi_bucket);
    }
    return d;
}

enum class Comparison { less, greater };

struct PressureBound {
    Comparison cmp;
    double psi;

    bool holds(double v) const { return cmp == Comparison::less ? v < psi : v > psi; }
    std::string str() const {
        char b[48];
        std::snprintf(b, sizeof b, "%s %g", cmp == Comparison::less ? "<" : ">", psi);
        return b;
    }
};

struct CatalogRule {
    int id = 0;
    RockTypeCode code;
    Range k_mD{0.0, 0.0};
    std::optional<PressureBound> p_cu;
    std::optional<PressureBound> p_cd;
    std::optional<Range> s_wi;

    void validate() const {
        auto bad = [&](const std::string& m) { return Error(ErrorCode::BadParams, "rule " + code.str() + ": " + m); };
        if (!(k_mD.lo < k_mD.hi)) throw bad("k_min must be below k_max");
        if (s_wi && !(s_wi->lo < s_wi->hi)) throw bad("swi_min must be below swi_max");
        if ((p_cu && !(p_cu->psi > 0)) || (p_cd && !(p_cd->psi > 0))) throw bad("pressure thresholds must be positive");
        const Range pr = perm_class_range(code.perm_class);
        if (pr.lo != k_mD.lo || pr.hi != k_mD.hi) throw bad("permeability range disagrees with the code digit");
        if (!code.non_reservoir()) {
            const Range wr = swi_bucket_range(code.swi_bucket);
            if (!s_wi || wr.lo != s_wi->lo || wr.hi != s_wi->hi) throw bad("S_wi range disagrees with the code digit");
        }
    }
};

/// The fourteen printed limestone reservoir rows (ids 1-14) and the LD5 row (id 20).
/// Pressure pairs are read as (P_cu, P_cd).
inline std::vector<CatalogRule> default_catalog() {
    constexpr auto lt = Comparison::less;
    constexpr auto gt = Comparison::greater;
    struct Row {
        int id;
        const char* code;
        Comparison cu;
        double pcu;
        Comparison cd;
        double pcd;
    };
    static constexpr Row rows[] = {
        {1, "L111", lt, 400, lt, 100},   {2, "L121", gt, 400, lt, 100},   {3, "L231", lt, 700, gt, 80},
        {4, "L241", gt, 700, lt, 30},    {5, "L242", gt, 700, lt, 30},    {6, "L351", lt, 1100, lt, 100},
        {7, "L352", lt, 1100, lt, 100},  {8, "L361", lt, 1400, gt, 250},  {9, "L372", gt, 1400, gt, 100},
        {10, "L373", gt, 1400, gt, 100}, {11, "L374", gt, 1400, gt, 100}, {12, "L382", gt, 1400, gt, 100},
        {13, "L461", lt, 1000, lt, 400}, {14, "L492", lt, 1200, lt, 600},
    };
    std::vector<CatalogRule> out;
    for (const auto& r : rows) {
        CatalogRule rule;
        rule.id = r.id;
        rule.code = parse_code(r.code);
        rule.k_mD = perm_class_range(rule.code.perm_class);
        rule.p_cu = PressureBound{r.cu, r.pcu};
        rule.p_cd = PressureBound{r.cd, r.pcd};
        rule.s_wi = swi_bucket_range(rule.code.swi_bucket);
        out.push_back(rule);
    }
    CatalogRule ld5;
    ld5.id = 20;
    ld5.code = parse_code("LD5");
    ld5.k_mD = perm_class_range(5);
    out.push_back(ld5);
    return out;
}

namespace detail {

inline nlohmann::json bound_json(const std::optional<PressureBound>& b) {
    if (!b) return nullptr;
    return {{"cmp", b->cmp == Comparison::less ? "<" : ">"}, {"psi", b->psi}};
}

inline std::optional<PressureBound> bound_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    const auto cmp = j.at("cmp").get<std::string>();
    if (cmp != "<" && cmp != ">") throw Error(ErrorCode::ParseError, "comparison must be '<' or '>'");
    return PressureBound{cmp == "<" ? Comparison::less : Comparison::greater, j.at("psi").get<double>()};
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace detail

inline nlohmann::json to_json(const std::vector<CatalogRule>& catalog) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : catalog)
        arr.push_back({{"id", r.id},
                       {"code", r.code.str()},
                       {"k_min", r.k_mD.lo},
                       {"k_max", detail::finite_or_null(r.k_mD.hi)},
                       {"pcu", detail::bound_json(r.p_cu)},
                       {"pcd", detail::bound_json(r.p_cd)},
                       {"swi_min", r.s_wi ? nlohmann::json(r.s_wi->lo) : nlohmann::json(nullptr)},
                       {"swi_max", r.s_wi ? nlohmann::json(r.s_wi->hi) : nlohmann::json(nullptr)}});
    return arr;
}

/// Catalog override: JSON array of rules; k_max null means unbounded.
inline std::vector<CatalogRule> catalog_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, "catalog must be a JSON array");
    std::vector<CatalogRule> out;
    try {
        for (const auto& e : j) {
            CatalogRule r;
            r.id = e.at("id").get<int>();
            r.code = parse_code(e.at("code").get<std::string>());
            r.k_mD.lo = e.at("k_min").get<double>();
            r.k_mD.hi = e.at("k_max").is_null() ? std::numeric_limits<double>::infinity() : e.at("k_max").get<double>();
            r.p_cu = detail::bound_from_json(e.value("pcu", nlohmann::json(nullptr)));
            r.p_cd = detail::bound_from_json(e.value("pcd", nlohmann::json(nullptr)));
            const auto lo = e.value("swi_min", nlohmann::json(nullptr)), hi = e.value("swi_max", nlohmann::json(nullptr));
            if (!lo.is_null() || !hi.is_null()) r.s_wi = Range{lo.get<double>(), hi.get<double>()};
            r.validate();
            out.push_back(r);
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::ParseError, std::string("catalog: ") + ex.what());
    }
    return out;
}

struct CamoCheck {
    double deviation_decades = 0.0;
    bool consistent = true;
};

struct RockTypeResult {
    /// Set when a rule matched.
    std::optional<RockTypeCode> code;
    std::optional<int> rule_id;
    /// Set when unclassified.
    std::optional<int> nearest_rule_id;
    std::optional<RockTypeCode> nearest_code;
    std::vector<std::string> violations;

    std::string code_string() const { return code ? code->str() : "UNCLASSIFIED"; }
};

namespace detail {

inline std::string fmt_num(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%g", v);
    return b;
}

inline std::vector<std::string> rule_violations(const CatalogRule& r, double k, const PcShape& pc, bool swi_in_any) {
    std::vector<std::string> v;
    if (!r.k_mD.contains(k))
        v.push_back("k=" + fmt_num(k) + " outside [" + fmt_num(r.k_mD.lo) + ", " + fmt_num(r.k_mD.hi) + ")");
    if (r.p_cu && !r.p_cu->holds(pc.p_cu_psi))
        v.push_back("p_cu=" + fmt_num(pc.p_cu_psi) + " not " + r.p_cu->str() + " psi");
    if (r.p_cd && !r.p_cd->holds(pc.p_cd_psi))
        v.push_back("p_cd=" + fmt_num(pc.p_cd_psi) + " not " + r.p_cd->str() + " psi");
    if (r.s_wi && !r.s_wi->contains(pc.s_wi)) {
        if (!swi_in_any) v.push_back("s_wi outside all buckets");
        else v.push_back("s_wi=" + fmt_num(pc.s_wi) + " outside [" + fmt_num(r.s_wi->lo) + ", " + fmt_num(r.s_wi->hi) + ")");
    }
    return v;
}

} // namespace detail

/// First rule in catalog order whose predicates all hold. Unmatched inputs are
/// UNCLASSIFIED with the rule violating the fewest predicates (ties to the lowest id).
inline RockTypeResult classify(double k_md, const PcShape& pc, const std::vector<CatalogRule>& catalog) {
    if (!(k_md > 0.0)) throw Error(ErrorCode::NonPositiveInput, "permeability must be positive");
    bool swi_in_any = false;
    for (const auto& r : catalog) swi_in_any |= r.s_wi && r.s_wi->contains(pc.s_wi);

    RockTypeResult out;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto& r : catalog) {
        auto v = detail::rule_violations(r, k_md, pc, swi_in_any);
        if (v.empty()) {
            out.code = r.code;
            out.rule_id = r.id;
            out.violations.clear();
            out.nearest_rule_id.reset();
            out.nearest_code.reset();
            return out;
        }
        if (v.size() < best || (v.size() == best && r.id < *out.nearest_rule_id)) {
            best = v.size();
            out.nearest_rule_id = r.id;
            out.nearest_code = r.code;
            out.violations = std::move(v);
        }
    }
    return out;
}

inline RockTypeResult classify(double k_md, const PcShape& pc) {
    static const auto catalog = default_catalog();
    return classify(k_md, pc, catalog);
}

/// |log10 k - log10 curve(phi)|, consistent when within tol_decades.
inline CamoCheck camo_check(const CamoRelation& rel, double phi, double k_md, MorphologyClass m, double tol_decades = 0.5) {
    const PowerLaw& c = rel.at(m);
    if (!(phi > 0.0) || !(k_md > 0.0)) throw Error(ErrorCode::NonPositiveInput, "phi and k must be positive");
    const double dev = std::abs(std::log10(k_md) - (std::log10(c.a) + c.b * std::log10(phi)));
    return {dev, dev <= tol_decades};
}

// ---------------------------------------------------------------------------
// Chart

struct ChartSample {
    double phi;
    double k_md;
    MorphologyClass morphology;
    std::string code;
};

namespace detail {

inline const char* class_color(MorphologyClass m) {
    switch (m) {
        case MorphologyClass::connected: return "#1f77b4";
        case MorphologyClass::non_connected: return "#ff7f0e";
        case MorphologyClass::micropore: return "#2ca02c";
    }
    return "#000000";
}

inline std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '&': o += "&amp;"; break;
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

struct ChartFrame {
    int x_lo, x_hi, y_lo, y_hi;  // decade exponents
};

inline ChartFrame chart_frame(const CamoRelation& rel, const std::vector<ChartSample>& samples) {
    double phi_lo = 0.01, phi_hi = 1.0;
    for (const auto& s : samples)
        if (s.phi > 0) {
            phi_lo = std::min(phi_lo, s.phi);
            phi_hi = std::max(phi_hi, s.phi);
        }
    ChartFrame f;
    f.x_lo = int(std::floor(std::log10(phi_lo)));
    f.x_hi = std::max(f.x_lo + 1, int(std::ceil(std::log10(phi_hi))));
    double klo = std::numeric_limits<double>::infinity(), khi = 0.0;
    for (const auto& [m, c] : rel.curves)
        for (double e : {double(f.x_lo), double(f.x_hi)}) {
            const double k = c(std::pow(10.0, e));
            if (k > 0 && std::isfinite(k)) {
                klo = std::min(klo, k);
                khi = std::max(khi, k);
            }
        }
    for (const auto& s : samples)
        if (s.k_md > 0) {
            klo = std::min(klo, s.k_md);
            khi = std::max(khi, s.k_md);
        }
    if (!(khi > 0)) {
        klo = 0.01;
        khi = 1000.0;
    }
    f.y_hi = int(std::ceil(std::log10(khi)));
    f.y_lo = std::max(int(std::floor(std::log10(klo))), f.y_hi - 10);
    if (f.y_lo >= f.y_hi) f.y_lo = f.y_hi - 1;
    return f;
}

inline std::string num(double v, const char* fmt = "%.2f") {
    char b[48];
    std::snprintf(b, sizeof b, fmt, v);
    return b;
}

} // namespace detail

/// Self-contained log-log SVG of k (mD) against phi (fraction).
inline std::string render_camo_svg(const CamoRelation& rel, const std::vector<ChartSample>& samples) {
    constexpr double W = 720, H = 540, L = 80, R = 170, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    const auto f = detail::chart_frame(rel, samples);
    auto px = [&](double phi) { return L + (std::log10(phi) - f.x_lo) / double(f.x_hi - f.x_lo) * pw; };
    auto py = [&](double k) { return T + (1.0 - (std::log10(k) - f.y_lo) / double(f.y_hi - f.y_lo)) * ph; };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"540\" viewBox=\"0 0 720 540\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"720\" height=\"540\" fill=\"white\"/>\n";
    s += "<defs><clipPath id=\"plot\"><rect x=\"" + detail::num(L) + "\" y=\"" + detail::num(T) + "\" width=\"" +
         detail::num(pw) + "\" height=\"" + detail::num(ph) + "\"/></clipPath></defs>\n";
    s += "<text x=\"" + detail::num(L + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
         "Permeability vs porosity by pore morphology</text>\n";

    s += "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
    for (int e = f.x_lo; e <= f.x_hi; ++e) {
        const double x = px(std::pow(10.0, e));
        s += "<line x1=\"" + detail::num(x) + "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(x) + "\" y2=\"" +
             detail::num(T + ph) + "\"/>\n";
    }
    for (int e = f.y_lo; e <= f.y_hi; ++e) {
        const double y = py(std::pow(10.0, e));
        s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(y) + "\" x2=\"" + detail::num(L + pw) + "\" y2=\"" +
             detail::num(y) + "\"/>\n";
    }
    s += "</g>\n";
    s += "<rect x=\"" + detail::num(L) + "\" y=\"" + detail::num(T) + "\" width=\"" + detail::num(pw) + "\" height=\"" +
         detail::num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int e = f.x_lo; e <= f.x_hi; ++e)
        s += "<text x=\"" + detail::num(px(std::pow(10.0, e))) + "\" y=\"" + detail::num(T + ph + 18) +
             "\" text-anchor=\"middle\">" + detail::num(std::pow(10.0, e), "%g") + "</text>\n";
    for (int e = f.y_lo; e <= f.y_hi; ++e)
        s += "<text x=\"" + detail::num(L - 8) + "\" y=\"" + detail::num(py(std::pow(10.0, e)) + 4) +
             "\" text-anchor=\"end\">" + detail::num(std::pow(10.0, e), "%g") + "</text>\n";
    s += "<text x=\"" + detail::num(L + pw / 2) + "\" y=\"" + detail::num(H - 18) +
         "\" text-anchor=\"middle\">Porosity (fraction)</text>\n";
    s += "<text x=\"20\" y=\"" + detail::num(T + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
         detail::num(T + ph / 2) + ")\">Permeability (mD)</text>\n";

    s += "<g clip-path=\"url(#plot)\" fill=\"none\" stroke-width=\"2\">\n";
    for (const auto& [m, c] : rel.curves) {
        std::string pts;
        for (int i = 0; i <= 100; ++i) {
            const double phi = std::pow(10.0, f.x_lo + (f.x_hi - f.x_lo) * i / 100.0);
            const double k = c(phi);
            if (!(k > 0) || !std::isfinite(k)) continue;
            pts += (pts.empty() ? "" : " ") + detail::num(px(phi)) + "," + detail::num(py(k));
        }
        s += "<polyline stroke=\"" + std::string(detail::class_color(m)) + "\" points=\"" + pts + "\"/>\n";
    }
    s += "</g>\n<g clip-path=\"url(#plot)\">\n";
    for (const auto& smp : samples) {
        if (!(smp.phi > 0) || !(smp.k_md > 0)) continue;
        const double x = px(smp.phi), y = py(smp.k_md);
        s += "<circle cx=\"" + detail::num(x) + "\" cy=\"" + detail::num(y) + "\" r=\"4\" fill=\"" +
             detail::class_color(smp.morphology) + "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
        s += "<text x=\"" + detail::num(x + 6) + "\" y=\"" + detail::num(y - 6) + "\" font-size=\"10\">" +
             detail::xml_escape(smp.code) + "</text>\n";
    }
    s += "</g>\n";
    double ly = T + 10;
    for (auto m : kMorphologyClasses) {
        const double lx = L + pw + 20;
        s += "<line x1=\"" + detail::num(lx) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" + detail::num(lx + 24) +
             "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + detail::class_color(m) + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + detail::num(lx + 30) + "\" y=\"" + detail::num(ly + 4) + "\">" + to_string(m) + "</text>\n";
        ly += 20;
    }
    s += "</svg>\n";
    return s;
}

/// Plotted values: 101 points per class curve, then every sample.
inline std::string render_camo_csv(const CamoRelation& rel, const std::vector<ChartSample>& samples) {
    const auto f = detail::chart_frame(rel, samples);
    std::string s = "series,class,code,phi,k_mD\n";
    for (const auto& [m, c] : rel.curves)
        for (int i = 0; i <= 100; ++i) {
            const double phi = std::pow(10.0, f.x_lo + (f.x_hi - f.x_lo) * i / 100.0);
            s += "curve," + to_string(m) + ",," + detail::num(phi, "%.17g") + "," + detail::num(c(phi), "%.17g") + "\n";
        }
    for (const auto& smp : samples)
        s += "sample," + to_string(smp.morphology) + "," + smp.code + "," + detail::num(smp.phi, "%.17g") + "," +
             detail::num(smp.k_md, "%.17g") + "\n";
    return s;
}

inline void emit_camo_chart(const CamoRelation& rel, const std::vector<ChartSample>& samples,
                            const std::filesystem::path& svg_path, const std::filesystem::path& csv_path) {
    write_text_file(svg_path, render_camo_svg(rel, samples));
    write_text_file(csv_path, render_camo_csv(rel, samples));
}

} // namespace drt
