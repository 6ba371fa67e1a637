#pragma once

// End-to-end rock-typing run: train -> segment -> analyze -> classify -> report.
// Every stage reads and writes files so stages can be rerun and inspected alone.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/capillary.hpp"
#include "drt/error.hpp"
#include "drt/filterbank.hpp"
#include "drt/forest.hpp"
#include "drt/morphology.hpp"
#include "drt/parallel.hpp"
#include "drt/petro.hpp"
#include "drt/typing.hpp"
#include "drt/volume.hpp"

namespace drt {

namespace fs = std::filesystem;

/// Pressure anchors and saturations for the capillary curve. Unset values are
/// derived from the throat-size distribution.
struct CapillaryConfig {
    std::optional<double> s_wi;
    std::optional<double> p_cu_psi;
    std::optional<double> s_w_anchor;
    /// Thickness quantiles standing for the entry (largest) and anchor throats.
    double entry_quantile = 0.9;
    double anchor_quantile = 0.1;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::vector<std::string> classes{"pore", "micropore_matrix", "grain", "cement"};
    FeatureBankConfig feature_bank;
    ForestHyperparameters forest;
    std::set<std::uint16_t> pore_classes{0};
    std::set<std::uint16_t> micropore_classes{1};
    std::set<std::uint16_t> grain_classes{2};
    std::set<std::uint16_t> cement_classes{3};
    double micro_weight = 0.5;
    int connectivity = 26;
    ConnectivityRule percolation;
    ThroatCutoffs cutoffs;
    std::size_t throat_bins = 32;
    double presence_threshold = 0.10;
    CamoRelation camo = default_camo_relation();
    std::string camo_source = "default";
    double camo_tolerance_decades = 0.5;
    PFunction pfunction;
    CapillaryConfig capillary;
    std::vector<CatalogRule> catalog = default_catalog();
    std::string catalog_source = "default";

    void validate() const {
        auto bad = [](const std::string& m) { return Error(ErrorCode::BadConfig, m); };
        if (classes.empty()) throw bad("classes: at least one class is required");
        for (const auto* set : {&pore_classes, &micropore_classes, &grain_classes, &cement_classes})
            for (auto c : *set)
                if (c >= classes.size()) throw bad("roles: class id " + std::to_string(c) + " is not in classes");
        for (auto c : micropore_classes)
            if (pore_classes.count(c)) throw bad("roles: class " + std::to_string(c) + " is both pore and micropore");
        if (!(micro_weight >= 0.0 && micro_weight <= 1.0)) throw bad("micro_weight: must lie in [0, 1]");
        if (connectivity != 6 && connectivity != 26) throw bad("connectivity: must be 6 or 26");
        if (!(cutoffs.t_micro_um > 0.0 && cutoffs.t_micro_um < cutoffs.t_macro_um))
            throw bad("throat: need 0 < t_micro_um < t_macro_um");
        if (throat_bins < 1) throw bad("throat.n_bins: must be >= 1");
        if (!(presence_threshold > 0.0 && presence_threshold < 1.0 / 3.0))
            throw bad("presence_threshold: must lie in (0, 1/3)");
        if (!(camo_tolerance_decades >= 0.0)) throw bad("camo_tolerance_decades: must be >= 0");
        if (!(pfunction.c > 0.0) || !std::isfinite(pfunction.e)) throw bad("pfunction: need c > 0 and finite e");
        const auto& cap = capillary;
        if (cap.s_wi && !(*cap.s_wi > 0.0 && *cap.s_wi < 1.0)) throw bad("capillary.s_wi: must lie in (0, 1)");
        if (cap.s_w_anchor && !(*cap.s_w_anchor > 0.0 && *cap.s_w_anchor < 1.0))
            throw bad("capillary.s_w_anchor: must lie in (0, 1)");
        if (cap.p_cu_psi && !(*cap.p_cu_psi > 0.0)) throw bad("capillary.p_cu_psi: must be positive");
        if (!(cap.anchor_quantile >= 0.0 && cap.anchor_quantile <= cap.entry_quantile && cap.entry_quantile <= 1.0))
            throw bad("capillary: need 0 <= anchor_quantile <= entry_quantile <= 1");
        try {
            feature_bank.validate();
            forest.validate(feature_bank.feature_count());
        } catch (const Error& e) {
            throw bad(std::string("feature_bank/forest: ") + e.what());
        }
    }
};

namespace detail {

inline nlohmann::json read_json_file(const fs::path& p, ErrorCode parse_code = ErrorCode::ParseError) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(parse_code, p.string() + ": " + e.what());
    }
}

inline std::set<std::uint16_t> id_set(const nlohmann::json& j) {
    std::set<std::uint16_t> s;
    for (const auto& v : j) s.insert(v.get<std::uint16_t>());
    return s;
}

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw Error(ErrorCode::BadConfig, where + ": unknown field '" + k + "'");
}

} // namespace detail

/// Parses a configuration document; relative file references resolve against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = ".") {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "config must be a JSON object");
    detail::check_keys(j,
                       {"seed", "classes", "feature_bank", "forest", "roles", "micro_weight", "connectivity",
                        "percolation", "throat", "presence_threshold", "camo", "camo_tolerance_decades", "pfunction",
                        "capillary", "catalog"},
                       "config");
    PipelineConfig c;
    const std::string* field = nullptr;
    std::string current;
    try {
        auto at = [&](const char* k) -> const nlohmann::json& {
            current = k;
            field = &current;
            return j.at(k);
        };
        if (j.contains("seed")) c.seed = at("seed").get<std::uint64_t>();
        if (j.contains("classes")) c.classes = at("classes").get<std::vector<std::string>>();
        if (j.contains("feature_bank")) c.feature_bank = feature_bank_from_json(at("feature_bank"));
        if (j.contains("forest")) c.forest = hyperparameters_from_json(at("forest"));
        if (j.contains("roles")) {
            const auto& r = at("roles");
            detail::check_keys(r, {"pore", "micropore", "grain", "cement"}, "roles");
            c.pore_classes = r.contains("pore") ? detail::id_set(r.at("pore")) : std::set<std::uint16_t>{};
            c.micropore_classes = r.contains("micropore") ? detail::id_set(r.at("micropore")) : std::set<std::uint16_t>{};
            c.grain_classes = r.contains("grain") ? detail::id_set(r.at("grain")) : std::set<std::uint16_t>{};
            c.cement_classes = r.contains("cement") ? detail::id_set(r.at("cement")) : std::set<std::uint16_t>{};
        }
        if (j.contains("micro_weight")) c.micro_weight = at("micro_weight").get<double>();
        if (j.contains("connectivity")) c.connectivity = at("connectivity").get<int>();
        if (j.contains("percolation")) {
            const auto p = at("percolation").get<std::string>();
            if (p != "any" && p != "all") throw Error(ErrorCode::BadConfig, "percolation: must be 'any' or 'all'");
            c.percolation.require_all_axes = p == "all";
        }
        if (j.contains("throat")) {
            const auto& t = at("throat");
            detail::check_keys(t, {"t_micro_um", "t_macro_um", "n_bins"}, "throat");
            c.cutoffs.t_micro_um = t.value("t_micro_um", c.cutoffs.t_micro_um);
            c.cutoffs.t_macro_um = t.value("t_macro_um", c.cutoffs.t_macro_um);
            c.throat_bins = t.value("n_bins", c.throat_bins);
        }
        if (j.contains("presence_threshold")) c.presence_threshold = at("presence_threshold").get<double>();
        if (j.contains("camo") && !j.at("camo").is_null()) {
            const auto& cm = at("camo");
            if (cm.is_string()) {
                const fs::path p = base_dir / cm.get<std::string>();
                c.camo = camo_from_json(detail::read_json_file(p));
                c.camo_source = cm.get<std::string>();
            } else {
                c.camo = camo_from_json(cm);
                c.camo_source = "inline";
            }
        }
        if (j.contains("camo_tolerance_decades")) c.camo_tolerance_decades = at("camo_tolerance_decades").get<double>();
        if (j.contains("pfunction")) {
            const auto& p = at("pfunction");
            detail::check_keys(p, {"c", "e"}, "pfunction");
            c.pfunction.c = p.value("c", c.pfunction.c);
            c.pfunction.e = p.value("e", c.pfunction.e);
        }
        if (j.contains("capillary")) {
            const auto& p = at("capillary");
            detail::check_keys(p, {"s_wi", "p_cu_psi", "s_w_anchor", "entry_quantile", "anchor_quantile"}, "capillary");
            c.capillary.s_wi = detail::opt_double(p, "s_wi");
            c.capillary.p_cu_psi = detail::opt_double(p, "p_cu_psi");
            c.capillary.s_w_anchor = detail::opt_double(p, "s_w_anchor");
            c.capillary.entry_quantile = p.value("entry_quantile", c.capillary.entry_quantile);
            c.capillary.anchor_quantile = p.value("anchor_quantile", c.capillary.anchor_quantile);
        }
        if (j.contains("catalog") && !j.at("catalog").is_null()) {
            const auto& cat = at("catalog");
            if (cat.is_string()) {
                c.catalog = catalog_from_json(detail::read_json_file(base_dir / cat.get<std::string>()));
                c.catalog_source = cat.get<std::string>();
            } else {
                c.catalog = catalog_from_json(cat);
                c.catalog_source = "inline";
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, (field ? *field + ": " : std::string()) + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BadConfig) throw;
        throw Error(ErrorCode::BadConfig, (field ? *field + ": " : std::string()) + e.what());
    }
    c.validate();
    return c;
}

inline PipelineConfig load_config(const std::optional<fs::path>& path) {
    if (!path) {
        PipelineConfig c;
        c.validate();
        return c;
    }
    return config_from_json(detail::read_json_file(*path, ErrorCode::BadConfig), path->parent_path());
}

// ---------------------------------------------------------------------------
// CSV helpers

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

inline bool parse_index(const std::string& s, long long& out) {
    double d;
    if (!parse_double(s, d) || d != std::floor(d) || d < 0) return false;
    out = static_cast<long long>(d);
    return true;
}

/// Non-blank lines with their 1-based data-row number; a first line whose
/// first field is not numeric is treated as a header.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_rows(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::string line;
    bool first = true;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_csv_line(line);
        double tmp;
        if (first && !parse_double(fields[0], tmp)) {
            first = false;
            continue;
        }
        first = false;
        rows.emplace_back(++row, std::move(fields));
    }
    return rows;
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

} // namespace detail

// ---------------------------------------------------------------------------
// Stages

struct TrainResult {
    fs::path model_path;
    double oob_accuracy;
    std::size_t samples;
};

/// Builds features at labeled voxels (`x,y,z,class_id` CSV), trains and writes model.json.
inline TrainResult cmd_train(const fs::path& labels_csv, const fs::path& volume_raw, const PipelineConfig& cfg,
                             const fs::path& out_dir, Parallel par = {}) {
    const GrayVolume vol = load_volume<float>(volume_raw, sidecar_path(volume_raw));
    const auto rows = detail::read_csv_rows(labels_csv);
    const Dims d = vol.dims();

    TrainingSet ts;
    ts.class_names = cfg.classes;
    ts.feature_count = cfg.feature_bank.feature_count();
    std::vector<std::pair<std::size_t, std::uint16_t>> picks;
    for (const auto& [row, f] : rows) {
        long long x, y, z, c;
        if (f.size() != 4 || !detail::parse_index(f[0], x) || !detail::parse_index(f[1], y) ||
            !detail::parse_index(f[2], z) || !detail::parse_index(f[3], c))
            throw Error(ErrorCode::ParseError, labels_csv.string() + " row " + std::to_string(row) +
                                                   ": expected x,y,z,class_id");
        if (std::size_t(x) >= d.nx || std::size_t(y) >= d.ny || std::size_t(z) >= d.nz)
            throw Error(ErrorCode::BadParams, "row " + std::to_string(row) + ": voxel outside the volume");
        if (std::size_t(c) >= cfg.classes.size())
            throw Error(ErrorCode::UnknownClassId, "row " + std::to_string(row) + ": class " + std::to_string(c));
        picks.emplace_back(vol.index(std::size_t(x), std::size_t(y), std::size_t(z)), std::uint16_t(c));
    }
    std::vector<std::size_t> per_class(cfg.classes.size(), 0);
    for (const auto& p : picks) ++per_class[p.second];
    for (std::size_t c = 0; c < per_class.size(); ++c)
        if (per_class[c] == 0) throw Error(ErrorCode::EmptyClass, "class '" + cfg.classes[c] + "' has no labeled voxels");

    const FeatureStack stack = build_feature_stack(vol, cfg.feature_bank, par);
    std::vector<float> x(stack.feature_count());
    for (const auto& [voxel, c] : picks) {
        stack.gather(voxel, x);
        ts.add(x, c);
    }
    ForestModel m = train_forest(ts, cfg.forest, cfg.seed, par);
    m.feature_bank = cfg.feature_bank;
    fs::create_directories(out_dir);
    const fs::path model_path = out_dir / "model.json";
    save_model(m, model_path);
    return {model_path, m.oob_accuracy, ts.size()};
}

struct SegmentResult {
    std::vector<std::string> class_names;
    std::vector<std::size_t> class_counts;
};

/// Writes labels.raw/.json, confidence.raw/.json and segmentation.json.
inline SegmentResult cmd_segment(const fs::path& model_path, const fs::path& volume_raw, const fs::path& out_dir,
                                 Parallel par = {}) {
    const ForestModel m = load_model(model_path);
    const GrayVolume vol = load_volume<float>(volume_raw, sidecar_path(volume_raw));
    const Segmentation seg = segment_volume(m, vol, par);
    fs::create_directories(out_dir);
    save_volume(seg.labels, out_dir / "labels.raw", out_dir / "labels.json");
    save_volume(seg.confidence, out_dir / "confidence.raw", out_dir / "confidence.json");
    SegmentResult r{m.class_names, std::vector<std::size_t>(m.class_count(), 0)};
    for (auto l : seg.labels.data()) ++r.class_counts[l];
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t c = 0; c < r.class_counts.size(); ++c) counts[m.class_names[c]] = r.class_counts[c];
    write_text_file(out_dir / "segmentation.json",
                    detail::json_text({{"class_names", m.class_names}, {"class_counts", counts}}));
    return r;
}

struct RockInputs {
    double k_md = 0.0;
    double p_cd_psi = 0.0;
    double p_cu_psi = 0.0;
    double s_wi = 0.0;
    double phi = 0.0;
    MorphologyClass morphology = MorphologyClass::connected;
};

struct AnalyzeResult {
    double porosity = 0.0;
    ComponentMap components;
    PoreThroatDistribution distribution;
    ModalityProfile modality;
    PermeabilityEstimate permeability;
    std::optional<PcCurve> pc;
    RockInputs rock;
    nlohmann::json report;
};

inline std::string distribution_csv(const PoreThroatDistribution& d) {
    std::string s = "bin_lo_um,bin_hi_um,count\n";
    char line[96];
    for (std::size_t i = 0; i < d.counts.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%zu\n", d.bin_edges_um[i], d.bin_edges_um[i + 1], d.counts[i]);
        s += line;
    }
    return s;
}

inline nlohmann::json distribution_summary(const PoreThroatDistribution& d) {
    return {{"f_micro", d.f_micro},
            {"f_meso", d.f_meso},
            {"f_macro", d.f_macro},
            {"peaks_um", d.peaks_um},
            {"cutoffs", {{"t_micro_um", d.cutoffs.t_micro_um}, {"t_macro_um", d.cutoffs.t_macro_um}}},
            {"pore_voxels", d.pore_voxels}};
}

/// Properties of a label volume, without touching the filesystem.
inline AnalyzeResult analyze_labels(const LabelVolume& labels, const PipelineConfig& cfg, Parallel par = {}) {
    AnalyzeResult r;
    const PorosityRoles roles{cfg.pore_classes, cfg.micropore_classes, cfg.micro_weight};
    r.porosity = porosity_from_labels(labels, roles, cfg.classes.size());

    const Mask pore = make_mask(labels, cfg.pore_classes);
    r.components = connected_components(pore, cfg.connectivity);
    const GrayVolume thickness = local_thickness(pore, labels.voxel_size_um(), par);
    r.distribution = throat_distribution(thickness, cfg.cutoffs, cfg.throat_bins);
    r.modality = classify_modality(r.distribution, cfg.presence_threshold);
    r.permeability = estimate_permeability(cfg.camo, r.porosity, r.modality, r.components, cfg.percolation);

    // Irreducible water: sub-resolution porosity plus resolved pores in the micro band.
    std::size_t n_pore = 0, n_micro = 0;
    for (auto l : labels.data()) {
        n_pore += cfg.pore_classes.count(l);
        n_micro += cfg.micropore_classes.count(l);
    }
    const double micro_volume = cfg.micro_weight * double(n_micro);
    double s_wi = (micro_volume + double(n_pore) * r.distribution.f_micro) / (double(n_pore) + micro_volume);
    s_wi = std::clamp(s_wi, 0.01, 0.9);
    if (cfg.capillary.s_wi) s_wi = *cfg.capillary.s_wi;
    const double s_w_anchor = cfg.capillary.s_w_anchor.value_or(s_wi + 0.05);

    const double p_cd = pcd_from_permeability(r.permeability.k_md, r.porosity, cfg.pfunction);
    // Capillary pressure scales inversely with throat size.
    const double entry = thickness_quantile(thickness, cfg.capillary.entry_quantile);
    const double anchor = thickness_quantile(thickness, cfg.capillary.anchor_quantile);
    const double p_cu = cfg.capillary.p_cu_psi.value_or(p_cd * entry / anchor);
    r.pc = build_pc_curve(p_cd, p_cu, s_wi, s_w_anchor);
    r.rock = {r.permeability.k_md, p_cd, p_cu, s_wi, r.porosity, r.permeability.morphology};

    const std::size_t dom = r.components.dominant();
    nlohmann::json comp{{"count", r.components.count}, {"connectivity", cfg.connectivity}};
    comp["dominant_size"] = dom ? r.components.sizes[dom - 1] : 0;
    comp["dominant_percolates"] =
        dom ? nlohmann::json(std::vector<bool>(r.components.percolates[dom - 1].begin(), r.components.percolates[dom - 1].end()))
            : nlohmann::json(std::vector<bool>{false, false, false});
    r.report = {
        {"voxel_size_um", labels.voxel_size_um()},
        {"dims", {labels.dims().nx, labels.dims().ny, labels.dims().nz}},
        {"porosity", r.porosity},
        {"porosity_roles",
         {{"pore", cfg.pore_classes}, {"micropore", cfg.micropore_classes}, {"micro_weight", cfg.micro_weight}}},
        {"components", comp},
        {"throat", distribution_summary(r.distribution)},
        {"modality",
         {{"modality", to_string(r.modality.modality)},
          {"archetype", r.modality.archetype},
          {"distance", r.modality.distance},
          {"fractions", r.modality.fractions},
          {"presence_threshold", cfg.presence_threshold}}},
        {"permeability",
         {{"k_mD", r.permeability.k_md},
          {"camo_class", to_string(r.permeability.morphology)},
          {"out_of_range", r.permeability.out_of_range},
          {"camo_source", cfg.camo_source}}},
        {"capillary", to_json(*r.pc)},
        {"rock_inputs",
         {{"k", r.rock.k_md},
          {"p_cd", r.rock.p_cd_psi},
          {"p_cu", r.rock.p_cu_psi},
          {"s_wi", r.rock.s_wi},
          {"phi", r.rock.phi},
          {"class", to_string(r.rock.morphology)}}},
    };
    return r;
}

/// Writes properties.json, throat_distribution.csv, throat_summary.json and pc_curve.csv.
inline AnalyzeResult cmd_analyze(const fs::path& labels_raw, const PipelineConfig& cfg, const fs::path& out_dir,
                                 Parallel par = {}) {
    const LabelVolume labels = load_volume<std::uint16_t>(labels_raw, sidecar_path(labels_raw));
    AnalyzeResult r = analyze_labels(labels, cfg, par);
    fs::create_directories(out_dir);
    write_text_file(out_dir / "properties.json", detail::json_text(r.report));
    write_text_file(out_dir / "throat_distribution.csv", distribution_csv(r.distribution));
    write_text_file(out_dir / "throat_summary.json", detail::json_text(distribution_summary(r.distribution)));
    write_text_file(out_dir / "pc_curve.csv", pc_curve_csv(*r.pc));
    return r;
}

struct ClassifiedRow {
    std::size_t row;
    RockInputs inputs;
    RockTypeResult result;
    CamoCheck camo;
};

inline nlohmann::json to_json(const ClassifiedRow& c) {
    const auto& in = c.inputs;
    nlohmann::json j{{"row", c.row},
                     {"inputs",
                      {{"k_mD", in.k_md},
                       {"p_cd", in.p_cd_psi},
                       {"p_cu", in.p_cu_psi},
                       {"s_wi", in.s_wi},
                       {"phi", in.phi},
                       {"class", to_string(in.morphology)}}},
                     {"code", c.result.code_string()},
                     {"camo", {{"deviation", c.camo.deviation_decades}, {"consistent", c.camo.consistent}}},
                     {"violations", c.result.violations}};
    j["rule_id"] = c.result.rule_id ? nlohmann::json(*c.result.rule_id) : nlohmann::json(nullptr);
    if (c.result.nearest_rule_id) {
        j["nearest_rule_id"] = *c.result.nearest_rule_id;
        j["nearest_code"] = c.result.nearest_code->str();
    }
    return j;
}

inline ClassifiedRow classify_inputs(std::size_t row, const RockInputs& in, const PipelineConfig& cfg) {
    ClassifiedRow c{row, in, classify(in.k_md, PcShape{in.p_cd_psi, in.p_cu_psi, in.s_wi}, cfg.catalog), {}};
    c.camo = camo_check(cfg.camo, in.phi, in.k_md, in.morphology, cfg.camo_tolerance_decades);
    return c;
}

/// Reads rock inputs from a properties.json or a `k,p_cd,p_cu,s_wi,phi,class` CSV.
inline std::vector<std::pair<std::size_t, RockInputs>> read_rock_inputs(const fs::path& input) {
    std::vector<std::pair<std::size_t, RockInputs>> out;
    if (input.extension() == ".json") {
        const auto j = detail::read_json_file(input);
        try {
            const auto& r = j.at("rock_inputs");
            out.push_back({1,
                           {r.at("k").get<double>(), r.at("p_cd").get<double>(), r.at("p_cu").get<double>(),
                            r.at("s_wi").get<double>(), r.at("phi").get<double>(),
                            morphology_from_string(r.at("class").get<std::string>())}});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, input.string() + ": " + e.what());
        }
        return out;
    }
    for (const auto& [row, f] : detail::read_csv_rows(input)) {
        auto fail = [&, row = row](const std::string& why) {
            return Error(ErrorCode::ParseError, input.string() + " row " + std::to_string(row) + ": " + why);
        };
        if (f.size() != 6) throw fail("expected 6 fields k,p_cd,p_cu,s_wi,phi,class");
        RockInputs in;
        double* targets[5] = {&in.k_md, &in.p_cd_psi, &in.p_cu_psi, &in.s_wi, &in.phi};
        for (int i = 0; i < 5; ++i)
            if (!detail::parse_double(f[std::size_t(i)], *targets[i])) throw fail("field " + std::to_string(i + 1) + " is not a number");
        if (!(in.k_md > 0.0) || !(in.phi > 0.0)) throw fail("k and phi must be positive");
        try {
            in.morphology = morphology_from_string(f[5]);
        } catch (const Error&) {
            throw fail("unknown class '" + f[5] + "'");
        }
        out.emplace_back(row, in);
    }
    return out;
}

/// Writes results.json, camo_chart.svg and camo_chart.csv.
inline std::vector<ClassifiedRow> cmd_classify(const fs::path& input, const PipelineConfig& cfg, const fs::path& out_dir) {
    std::vector<ClassifiedRow> rows;
    for (const auto& [row, in] : read_rock_inputs(input)) rows.push_back(classify_inputs(row, in, cfg));
    nlohmann::json results = nlohmann::json::array();
    std::vector<ChartSample> samples;
    for (const auto& r : rows) {
        results.push_back(to_json(r));
        samples.push_back({r.inputs.phi, r.inputs.k_md, r.inputs.morphology, r.result.code_string()});
    }
    fs::create_directories(out_dir);
    write_text_file(out_dir / "results.json",
                    detail::json_text({{"catalog", cfg.catalog_source},
                                       {"camo", cfg.camo_source},
                                       {"camo_tolerance_decades", cfg.camo_tolerance_decades},
                                       {"results", results}}));
    emit_camo_chart(cfg.camo, samples, out_dir / "camo_chart.svg", out_dir / "camo_chart.csv");
    return rows;
}

/// Markdown summary of a run directory; also written to report.md.
inline std::string cmd_report(const fs::path& run_dir) {
    for (const char* f : {"properties.json", "pc_curve.csv", "results.json"})
        if (!fs::exists(run_dir / f)) throw Error(ErrorCode::MissingArtifacts, (run_dir / f).string() + " not found");
    const auto props = detail::read_json_file(run_dir / "properties.json");
    const auto results = detail::read_json_file(run_dir / "results.json");
    std::ostringstream md;
    auto num = [](const nlohmann::json& v) {
        if (v.is_null()) return std::string("inf");
        char b[40];
        std::snprintf(b, sizeof b, "%.6g", v.get<double>());
        return std::string(b);
    };
    try {
        md << "# Digital rock typing report\n\n";
        if (fs::exists(run_dir / "model.json")) {
            const auto model = detail::read_json_file(run_dir / "model.json", ErrorCode::BadModelFile);
            md << "## Segmentation model\n\n";
            md << "- Classes: ";
            const auto names = model.at("class_names");
            for (std::size_t i = 0; i < names.size(); ++i) md << (i ? ", " : "") << names[i].get<std::string>();
            md << "\n- Trees: " << model.at("trees").size() << "\n";
            md << "- Out-of-bag accuracy: " << num(model.at("oob_accuracy")) << "\n\n";
        }
        if (fs::exists(run_dir / "segmentation.json")) {
            const auto seg = detail::read_json_file(run_dir / "segmentation.json");
            md << "## Voxel counts\n\n| Class | Voxels |\n|---|---|\n";
            for (const auto& name : seg.at("class_names"))
                md << "| " << name.get<std::string>() << " | " << seg.at("class_counts").at(name.get<std::string>())
                   << " |\n";
            md << "\n";
        }
        md << "## Properties\n\n";
        md << "- Voxel size: " << num(props.at("voxel_size_um")) << " um\n";
        md << "- Porosity: " << num(props.at("porosity")) << "\n";
        const auto& comp = props.at("components");
        md << "- Pore components: " << comp.at("count") << " (dominant " << comp.at("dominant_size") << " voxels)\n";
        const auto& th = props.at("throat");
        md << "- Throat fractions micro/meso/macro: " << num(th.at("f_micro")) << " / " << num(th.at("f_meso")) << " / "
           << num(th.at("f_macro")) << "\n";
        const auto& mod = props.at("modality");
        md << "- Modality: " << mod.at("modality").get<std::string>() << " (archetype "
           << mod.at("archetype").get<std::string>() << ", distance " << num(mod.at("distance")) << ")\n";
        const auto& perm = props.at("permeability");
        md << "- Permeability: " << num(perm.at("k_mD")) << " mD (" << perm.at("camo_class").get<std::string>()
           << " curve)\n";
        const auto& cap = props.at("capillary");
        md << "- Capillary curve: P_cd " << num(cap.at("p_cd")) << " psi, P_cu " << num(cap.at("p_cu"))
           << " psi, S_wi " << num(cap.at("s_wi")) << ", lambda " << num(cap.at("lambda")) << "\n\n";
        md << "## Rock types\n\n| Row | Code | Rule | CAMO deviation (decades) | CAMO consistent | Violations |\n"
              "|---|---|---|---|---|---|\n";
        for (const auto& r : results.at("results")) {
            std::string viol;
            for (const auto& v : r.at("violations")) viol += (viol.empty() ? "" : "; ") + v.get<std::string>();
            const auto& rule = r.at("rule_id");
            md << "| " << r.at("row") << " | " << r.at("code").get<std::string>() << " | "
               << (rule.is_null() ? std::string("-") : std::to_string(rule.get<int>())) << " | "
               << num(r.at("camo").at("deviation")) << " | " << (r.at("camo").at("consistent").get<bool>() ? "yes" : "no")
               << " | " << (viol.empty() ? "-" : viol) << " |\n";
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("run artifacts: ") + e.what());
    }
    const std::string text = md.str();
    write_text_file(run_dir / "report.md", text);
    return text;
}

} // namespace drt
