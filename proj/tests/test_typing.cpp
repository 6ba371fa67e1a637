#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "drt/random.hpp"
#include "drt/typing.hpp"
#include "temp_dir.hpp"

using namespace drt;

namespace {

// Printed catalogue, transcribed by hand: code, perm bounds, (P_cu, P_cd) tests, S_wi range,
// and one input chosen strictly inside every range.
struct Row {
    const char* code;
    double k_lo, k_hi;
    char cu;
    double pcu;
    char cd;
    double pcd;
    double w_lo, w_hi;
    double k, p_cu, p_cd, s_wi;
};

const double kInf = std::numeric_limits<double>::infinity();

const Row kRows[] = {
    {"L111", 60, kInf, '<', 400, '<', 100, 0.07, 0.135, 80, 300, 50, 0.10},
    {"L121", 60, kInf, '>', 400, '<', 100, 0.07, 0.135, 80, 500, 50, 0.10},
    {"L231", 7, 60, '<', 700, '>', 80, 0.07, 0.135, 30, 600, 90, 0.10},
    {"L241", 7, 60, '>', 700, '<', 30, 0.07, 0.135, 30, 800, 20, 0.10},
    {"L242", 7, 60, '>', 700, '<', 30, 0.135, 0.205, 30, 800, 20, 0.17},
    {"L351", 1, 7, '<', 1100, '<', 100, 0.07, 0.135, 3, 1000, 50, 0.10},
    {"L352", 1, 7, '<', 1100, '<', 100, 0.135, 0.205, 3, 1000, 50, 0.17},
    {"L361", 1, 7, '<', 1400, '>', 250, 0.07, 0.135, 3, 1300, 300, 0.10},
    {"L372", 1, 7, '>', 1400, '>', 100, 0.135, 0.205, 3, 1500, 200, 0.17},
    {"L373", 1, 7, '>', 1400, '>', 100, 0.205, 0.275, 3, 1500, 200, 0.24},
    {"L374", 1, 7, '>', 1400, '>', 100, 0.275, 0.345, 3, 1500, 200, 0.31},
    {"L382", 1, 7, '>', 1400, '>', 100, 0.135, 0.205, 3, 1500, 200, 0.17},
    {"L461", 0.1, 1, '<', 1000, '<', 400, 0.07, 0.135, 0.5, 900, 300, 0.10},
    {"L492", 0.1, 1, '<', 1200, '<', 600, 0.135, 0.205, 0.5, 1100, 500, 0.17},
};

bool holds(char cmp, double threshold, double v) { return cmp == '<' ? v < threshold : v > threshold; }

// Independent first-match evaluation over the transcribed table.
std::string oracle_classify(double k, double p_cu, double p_cd, double s_wi) {
    if (k < 0.1) return "LD5";
    for (const Row& r : kRows)
        if (k >= r.k_lo && k < r.k_hi && holds(r.cu, r.pcu, p_cu) && holds(r.cd, r.pcd, p_cd) && s_wi >= r.w_lo &&
            s_wi < r.w_hi)
            return r.code;
    return "UNCLASSIFIED";
}

// Tag-balance check; enough to catch a truncated or mis-nested document.
bool well_formed_xml(const std::string& s) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while ((i = s.find('<', i)) != std::string::npos) {
        const std::size_t j = s.find('>', i);
        if (j == std::string::npos) return false;
        const std::string tag = s.substr(i + 1, j - i - 1);
        i = j + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        if (tag.back() == '/') continue;
        const auto name_end = tag.find_first_of(" \t\n");
        if (tag[0] == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) return false;
            stack.pop_back();
        } else {
            stack.push_back(tag.substr(0, name_end));
        }
    }
    return stack.empty();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Catalog, FifteenRulesMatchingTranscription) {
    const auto cat = default_catalog();
    ASSERT_EQ(cat.size(), 15u);
    for (std::size_t i = 0; i < 14; ++i) {
        const Row& r = kRows[i];
        const CatalogRule& c = cat[i];
        EXPECT_EQ(c.code.str(), r.code);
        EXPECT_EQ(c.k_mD.lo, r.k_lo);
        EXPECT_EQ(c.k_mD.hi, r.k_hi);
        ASSERT_TRUE(c.p_cu && c.p_cd && c.s_wi);
        EXPECT_EQ(c.p_cu->cmp == Comparison::less ? '<' : '>', r.cu);
        EXPECT_EQ(c.p_cu->psi, r.pcu);
        EXPECT_EQ(c.p_cd->cmp == Comparison::less ? '<' : '>', r.cd);
        EXPECT_EQ(c.p_cd->psi, r.pcd);
        EXPECT_EQ(c.s_wi->lo, r.w_lo);
        EXPECT_EQ(c.s_wi->hi, r.w_hi);
    }
    EXPECT_EQ(cat[14].code.str(), "LD5");
    EXPECT_EQ(cat[14].k_mD.hi, 0.1);
    EXPECT_FALSE(cat[14].p_cu || cat[14].p_cd || cat[14].s_wi);
}

TEST(Catalog, SpotRows) {
    const auto cat = default_catalog();
    for (const auto& r : cat) {
        if (r.code.str() == "L231") {
            EXPECT_EQ(r.k_mD.lo, 7.0);
            EXPECT_EQ(r.k_mD.hi, 60.0);
        }
        if (r.code.str() == "L374") {
            EXPECT_EQ(r.s_wi->lo, 0.275);
            EXPECT_EQ(r.s_wi->hi, 0.345);
        }
    }
}

TEST(Catalog, RepresentativeRoundTrip) {
    int ok = 0;
    for (const Row& r : kRows) {
        const auto res = classify(r.k, {r.p_cd, r.p_cu, r.s_wi});
        EXPECT_EQ(res.code_string(), oracle_classify(r.k, r.p_cu, r.p_cd, r.s_wi)) << r.code;
        if (res.code_string() == r.code) ++ok;
    }
    EXPECT_EQ(classify(0.05, {1, 2, 0.5}).code_string(), "LD5");
    // L382 repeats L372's predicates verbatim, so first match always takes L372.
    EXPECT_EQ(classify(3, {200, 1500, 0.17}).code_string(), "L372");
    EXPECT_EQ(ok, 13);
}

TEST(Classify, Examples) {
    EXPECT_EQ(classify(80, {50, 300, 0.10}).code_string(), "L111");
    EXPECT_EQ(classify(30, {90, 600, 0.10}).code_string(), "L231");
    EXPECT_EQ(classify(0.05, {1e4, 2e4, 0.9}).code_string(), "LD5");
    const auto u = classify(80, {50, 300, 0.50});
    EXPECT_FALSE(u.code);
    EXPECT_FALSE(u.rule_id);
    EXPECT_EQ(u.code_string(), "UNCLASSIFIED");
    ASSERT_TRUE(u.nearest_code);
    EXPECT_EQ(u.nearest_code->str(), "L111");
    EXPECT_EQ(*u.nearest_rule_id, 1);
    ASSERT_EQ(u.violations.size(), 1u);
    EXPECT_EQ(u.violations[0], "s_wi outside all buckets");
}

TEST(Classify, MatchedResultHasNoDiagnostics) {
    const auto r = classify(80, {50, 300, 0.10});
    ASSERT_TRUE(r.code && r.rule_id);
    EXPECT_EQ(*r.rule_id, 1);
    EXPECT_FALSE(r.nearest_rule_id);
    EXPECT_TRUE(r.violations.empty());
}

TEST(Classify, NearestTieGoesToLowestId) {
    // p_cu exactly 400 fails both L111 (<400) and L121 (>400); one violation each.
    auto cat = default_catalog();
    std::reverse(cat.begin(), cat.end());
    const auto r = classify(80, {50, 400, 0.10}, cat);
    EXPECT_FALSE(r.code);
    EXPECT_EQ(*r.nearest_rule_id, 1);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_NE(r.violations[0].find("p_cu"), std::string::npos);
}

TEST(Classify, AgreesWithOracleAndDecodedRanges) {
    Rng rng(2024);
    const auto cat = default_catalog();
    int classified = 0;
    for (int i = 0; i < 20000; ++i) {
        const double k = std::pow(10.0, rng.uniform(-1.5, 3.0));
        const double p_cd = std::pow(10.0, rng.uniform(0.5, 3.0));
        const double p_cu = std::pow(10.0, rng.uniform(2.0, 3.5));
        const double s_wi = rng.uniform(0.02, 0.4);
        const auto r = classify(k, {p_cd, p_cu, s_wi}, cat);
        ASSERT_EQ(r.code_string(), oracle_classify(k, p_cu, p_cd, s_wi));
        ASSERT_EQ(r.code.has_value(), r.rule_id.has_value());
        ASSERT_NE(r.code.has_value(), r.nearest_rule_id.has_value());
        ASSERT_EQ(r.code.has_value(), r.violations.empty());
        if (!r.code) continue;
        ++classified;
        const auto d = decode_code(r.code->str());
        EXPECT_TRUE(d.perm_mD.contains(k));
        if (d.swi) {
            EXPECT_TRUE(d.swi->contains(s_wi));
        }
        const auto again = classify(k, {p_cd, p_cu, s_wi}, cat);
        EXPECT_EQ(again.code_string(), r.code_string());
    }
    EXPECT_GT(classified, 1000);
}

TEST(Classify, BoundaryAtSixtyOnlyMovesPermDigit) {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const PcShape pc{std::pow(10.0, rng.uniform(0.5, 2.5)), std::pow(10.0, rng.uniform(2.0, 3.2)), rng.uniform(0.07, 0.2)};
        const auto below = classify(std::nextafter(60.0, 0.0), pc), at = classify(60.0, pc);
        if (below.code) {
            EXPECT_EQ(below.code->perm_class, 2);
        }
        if (at.code) {
            EXPECT_EQ(at.code->perm_class, 1);
        }
        for (double k : {60.0, 75.0, 400.0, 1e4}) EXPECT_EQ(classify(k, pc).code_string(), at.code_string());
        for (double k : {7.0, 20.0, 59.0}) EXPECT_EQ(classify(k, pc).code_string(), below.code_string());
    }
    // Both sides matched: the rule family shifts but the swi digit keeps its bucket.
    const auto lo = classify(30, {20, 800, 0.10}), hi = classify(80, {20, 800, 0.10});
    EXPECT_EQ(lo.code_string(), "L241");
    EXPECT_EQ(hi.code_string(), "L121");
    EXPECT_EQ(lo.code->swi_bucket, hi.code->swi_bucket);
}

TEST(Classify, RejectsNonPositivePermeability) {
    try {
        classify(0.0, {1, 2, 0.1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveInput);
    }
}

TEST(Code, Decode) {
    const auto d = decode_code("L492");
    EXPECT_EQ(d.code.perm_class, 4);
    EXPECT_EQ(d.perm_mD.lo, 0.1);
    EXPECT_EQ(d.perm_mD.hi, 1.0);
    EXPECT_EQ(d.pc_shape, 9);
    EXPECT_EQ(d.code.swi_bucket, 2);
    EXPECT_EQ(d.swi->lo, 0.135);
    const auto n = decode_code("LD5");
    EXPECT_TRUE(n.code.non_reservoir());
    EXPECT_FALSE(n.pc_shape);
    EXPECT_FALSE(n.swi);
    EXPECT_EQ(n.perm_mD.hi, 0.1);
    for (const auto& r : default_catalog()) EXPECT_EQ(parse_code(r.code.str()), r.code);
}

TEST(Code, Malformed) {
    for (const char* s : {"X123", "", "L", "L12", "L1234", "L023", "L503", "L105", "L130", "LD4", "LD", "l111", "L1a1"}) {
        try {
            decode_code(s);
            ADD_FAILURE() << s;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::MalformedCode) << s;
        }
    }
}

TEST(Catalog, JsonRoundTrip) {
    const auto cat = default_catalog();
    const auto j = to_json(cat);
    const auto back = catalog_from_json(nlohmann::json::parse(j.dump()));
    ASSERT_EQ(back.size(), cat.size());
    EXPECT_EQ(to_json(back), j);
    EXPECT_TRUE(j[0]["k_max"].is_null());
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const double k = std::pow(10.0, rng.uniform(-1.5, 3.0));
        const PcShape pc{std::pow(10.0, rng.uniform(0.5, 3.0)), std::pow(10.0, rng.uniform(2.0, 3.5)), rng.uniform(0.02, 0.4)};
        EXPECT_EQ(classify(k, pc, back).code_string(), classify(k, pc, cat).code_string());
    }
}

TEST(Catalog, OverrideChangesDataNotCode) {
    // Swap the reading of the pressure pair for one row and check the engine follows.
    auto j = to_json(default_catalog());
    j[0]["pcu"]["psi"] = 100;
    j[0]["pcd"]["psi"] = 400;
    const auto cat = catalog_from_json(j);
    EXPECT_EQ(classify(80, {300, 50, 0.10}, cat).code_string(), "L111");
    EXPECT_EQ(classify(80, {50, 300, 0.10}, cat).code_string(), "UNCLASSIFIED");
}

TEST(Catalog, BadOverrides) {
    auto expect = [](nlohmann::json j, ErrorCode code) {
        try {
            catalog_from_json(j);
            ADD_FAILURE() << j.dump();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), code) << j.dump();
        }
    };
    expect(nlohmann::json::object(), ErrorCode::ParseError);
    auto j = to_json(default_catalog());
    j[2]["k_min"] = 70;
    expect(j, ErrorCode::BadParams);
    j = to_json(default_catalog());
    j[0]["pcu"]["psi"] = -5;
    expect(j, ErrorCode::BadParams);
    j = to_json(default_catalog());
    j[0]["pcu"]["cmp"] = "=";
    expect(j, ErrorCode::ParseError);
    j = to_json(default_catalog());
    j[1]["code"] = "Q111";
    expect(j, ErrorCode::MalformedCode);
    j = to_json(default_catalog());
    j[3].erase("id");
    expect(j, ErrorCode::ParseError);
}

TEST(Camo, CheckArithmetic) {
    const auto rel = default_camo_relation();
    const double phi = 0.2, on = rel.at(MorphologyClass::connected)(phi);
    auto c = camo_check(rel, phi, on, MorphologyClass::connected);
    EXPECT_NEAR(c.deviation_decades, 0.0, 1e-12);
    EXPECT_TRUE(c.consistent);
    c = camo_check(rel, phi, 10 * on, MorphologyClass::connected, 0.5);
    EXPECT_NEAR(c.deviation_decades, 1.0, 1e-12);
    EXPECT_FALSE(c.consistent);
    c = camo_check(rel, phi, 2 * on, MorphologyClass::connected);
    EXPECT_NEAR(c.deviation_decades, std::log10(2.0), 1e-12);
    EXPECT_TRUE(c.consistent);
    c = camo_check(rel, phi, on / 2, MorphologyClass::connected);
    EXPECT_NEAR(c.deviation_decades, std::log10(2.0), 1e-12);
}

TEST(Camo, ScaleInvariance) {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        CamoRelation rel;
        const double a = std::pow(10.0, rng.uniform(-1, 3)), b = rng.uniform(0.5, 5), s = std::pow(10.0, rng.uniform(-2, 2));
        rel.curves[MorphologyClass::micropore] = {a, b, 0, 1};
        CamoRelation scaled;
        scaled.curves[MorphologyClass::micropore] = {a * s, b, 0, 1};
        const double phi = rng.uniform(0.02, 0.4), k = std::pow(10.0, rng.uniform(-2, 3));
        EXPECT_NEAR(camo_check(rel, phi, k, MorphologyClass::micropore).deviation_decades,
                    camo_check(scaled, phi, k * s, MorphologyClass::micropore).deviation_decades, 1e-9);
    }
}

TEST(Camo, MissingCoefficients) {
    CamoRelation rel;
    rel.curves[MorphologyClass::connected] = {1, 1, 0, 1};
    try {
        camo_check(rel, 0.2, 1, MorphologyClass::micropore);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingClassCoefficients);
    }
}

TEST(Chart, EmptySamplesAxesAndCurves) {
    const auto rel = default_camo_relation();
    const auto svg = render_camo_svg(rel, {});
    EXPECT_TRUE(well_formed_xml(svg));
    EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
    EXPECT_NE(svg.find("Porosity (fraction)"), std::string::npos);
    EXPECT_NE(svg.find("Permeability (mD)"), std::string::npos);
    std::size_t polylines = 0, circles = 0;
    for (std::size_t p = 0; (p = svg.find("<polyline", p)) != std::string::npos; ++p) ++polylines;
    for (std::size_t p = 0; (p = svg.find("<circle", p)) != std::string::npos; ++p) ++circles;
    EXPECT_EQ(polylines, 3u);
    EXPECT_EQ(circles, 0u);
    const auto csv = render_camo_csv(rel, {});
    std::istringstream in(csv);
    std::string line;
    int rows = 0;
    std::getline(in, line);
    EXPECT_EQ(line, "series,class,code,phi,k_mD");
    while (std::getline(in, line)) {
        EXPECT_EQ(line.rfind("curve,", 0), 0u);
        ++rows;
    }
    EXPECT_EQ(rows, 303);
}

TEST(Chart, SampleOnCurveAndFiles) {
    TempDir tmp;
    const auto rel = default_camo_relation();
    const double phi = 0.173;
    const double k = rel.at(MorphologyClass::non_connected)(phi);
    const std::vector<ChartSample> samples{{phi, k, MorphologyClass::non_connected, "L231"},
                                           {0.05, 0.02, MorphologyClass::micropore, "LD5"}};
    emit_camo_chart(rel, samples, tmp / "a.svg", tmp / "a.csv");
    emit_camo_chart(rel, samples, tmp / "b.svg", tmp / "b.csv");
    const auto svg = slurp(tmp / "a.svg"), csv = slurp(tmp / "a.csv");
    EXPECT_EQ(svg, slurp(tmp / "b.svg"));
    EXPECT_EQ(csv, slurp(tmp / "b.csv"));
    EXPECT_TRUE(well_formed_xml(svg));
    EXPECT_NE(svg.find(">L231</text>"), std::string::npos);
    EXPECT_NE(svg.find(">LD5</text>"), std::string::npos);

    std::istringstream in(csv);
    std::string line;
    bool found = false;
    while (std::getline(in, line)) {
        if (line.rfind("sample,non_connected,L231,", 0) != 0) continue;
        std::istringstream f(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(f, cell, ',')) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 5u);
        EXPECT_NEAR(std::stod(cells[3]), phi, 1e-9);
        EXPECT_NEAR(std::stod(cells[4]), k, 1e-9 * k);
        found = true;
    }
    EXPECT_TRUE(found);
}

TEST(Chart, UnwritablePath) {
    try {
        emit_camo_chart(default_camo_relation(), {}, "/nonexistent_dir_drt/x.svg", "/nonexistent_dir_drt/x.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoFailure);
    }
}
