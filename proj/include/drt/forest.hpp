#pragma once

// Random-forest voxel classifier: bootstrap-bagged CART trees with exact
// Gini split search, deterministic per-tree RNG streams, and a JSON model file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/error.hpp"
#include "drt/filterbank.hpp"
#include "drt/parallel.hpp"
#include "drt/random.hpp"
#include "drt/volume.hpp"

namespace drt {

inline constexpr int kForestFormatVersion = 1;

struct ForestHyperparameters {
    std::size_t n_trees = 100;
    std::size_t max_depth = 16;
    std::size_t min_samples_split = 2;
    /// 0 selects ceil(sqrt(F)).
    std::size_t features_per_split = 0;
    double bag_fraction = 1.0;

    std::size_t resolved_features_per_split(std::size_t feature_count) const {
        if (features_per_split > 0) return features_per_split;
        return static_cast<std::size_t>(std::ceil(std::sqrt(double(feature_count))));
    }

    void validate(std::size_t feature_count) const {
        if (n_trees < 1) throw Error(ErrorCode::BadHyperparameters, "n_trees must be >= 1");
        if (min_samples_split < 2) throw Error(ErrorCode::BadHyperparameters, "min_samples_split must be >= 2");
        if (!(bag_fraction > 0.0) || !std::isfinite(bag_fraction))
            throw Error(ErrorCode::BadHyperparameters, "bag_fraction must be positive");
        if (features_per_split > feature_count)
            throw Error(ErrorCode::BadHyperparameters, "features_per_split exceeds feature count");
    }

    bool operator==(const ForestHyperparameters&) const = default;
};

inline nlohmann::json to_json(const ForestHyperparameters& hp) {
    return {{"n_trees", hp.n_trees},
            {"max_depth", hp.max_depth},
            {"min_samples_split", hp.min_samples_split},
            {"features_per_split", hp.features_per_split},
            {"bag_fraction", hp.bag_fraction}};
}

inline ForestHyperparameters hyperparameters_from_json(const nlohmann::json& j) {
    ForestHyperparameters hp;
    try {
        if (j.contains("n_trees")) hp.n_trees = j.at("n_trees").get<std::size_t>();
        if (j.contains("max_depth")) hp.max_depth = j.at("max_depth").get<std::size_t>();
        if (j.contains("min_samples_split")) hp.min_samples_split = j.at("min_samples_split").get<std::size_t>();
        if (j.contains("features_per_split")) hp.features_per_split = j.at("features_per_split").get<std::size_t>();
        if (j.contains("bag_fraction")) hp.bag_fraction = j.at("bag_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadHyperparameters, e.what());
    }
    return hp;
}

/// N x F row-major sample matrix with one class id per row.
struct TrainingSet {
    std::size_t feature_count = 0;
    std::vector<float> samples;
    std::vector<std::uint16_t> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {samples.data() + i * feature_count, feature_count}; }

    void add(std::span<const float> features, std::uint16_t label) {
        if (features.size() != feature_count) throw Error(ErrorCode::DimensionMismatch, "sample width mismatch");
        samples.insert(samples.end(), features.begin(), features.end());
        labels.push_back(label);
    }

    void validate() const {
        if (class_names.empty()) throw Error(ErrorCode::EmptyClass, "no classes defined");
        if (feature_count == 0) throw Error(ErrorCode::DimensionMismatch, "feature count is zero");
        if (samples.size() != labels.size() * feature_count)
            throw Error(ErrorCode::DimensionMismatch, "sample matrix does not match label count");
        std::vector<std::size_t> counts(class_names.size(), 0);
        for (auto l : labels) {
            if (l >= class_names.size()) throw Error(ErrorCode::UnknownClassId, "label " + std::to_string(l));
            ++counts[l];
        }
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] == 0) throw Error(ErrorCode::EmptyClass, "class '" + class_names[c] + "' has no samples");
            if (counts[c] < 2) throw Error(ErrorCode::EmptyClass, "class '" + class_names[c] + "' needs >= 2 samples");
        }
        for (float v : samples)
            if (!std::isfinite(v)) throw Error(ErrorCode::BadParams, "non-finite feature value");
    }
};

struct TreeNode {
    /// -1 marks a leaf.
    std::int32_t feature = -1;
    /// Samples with value <= threshold go left.
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    /// Row into DecisionTree::leaf_probs for leaves.
    std::int32_t leaf = -1;

    bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    /// n_leaves x n_classes.
    std::vector<double> leaf_probs;

    std::span<const double> leaf(std::size_t leaf_row, std::size_t n_classes) const {
        return {leaf_probs.data() + leaf_row * n_classes, n_classes};
    }

    std::int32_t find_leaf(std::span<const float> x) const {
        std::int32_t n = 0;
        while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
            const auto& node = nodes[static_cast<std::size_t>(n)];
            n = double(x[static_cast<std::size_t>(node.feature)]) <= node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<std::size_t>(n)].leaf;
    }

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [n, d] = stack.back();
            stack.pop_back();
            const auto& node = nodes[static_cast<std::size_t>(n)];
            if (node.feature < 0) {
                best = std::max(best, d);
            } else {
                stack.emplace_back(node.left, d + 1);
                stack.emplace_back(node.right, d + 1);
            }
        }
        return best;
    }

    bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    ForestHyperparameters hyperparameters;
    std::uint64_t rng_seed = 0;
    std::size_t feature_count = 0;
    /// Present for image models; segment_volume rebuilds features with it.
    std::optional<FeatureBankConfig> feature_bank;
    std::vector<std::string> class_names;
    /// NaN when no sample was ever out of bag.
    double oob_accuracy = std::numeric_limits<double>::quiet_NaN();

    std::size_t class_count() const { return class_names.size(); }
};

struct Prediction {
    std::uint16_t class_id = 0;
    std::vector<double> probabilities;
};

namespace detail {

inline double gini_sum(const std::vector<std::size_t>& counts, std::size_t n) {
    // n * gini = n - sum(c^2) / n
    if (n == 0) return 0.0;
    double s = 0.0;
    for (auto c : counts) s += double(c) * double(c);
    return double(n) - s / double(n);
}

class TreeBuilder {
public:
    TreeBuilder(const TrainingSet& ts, const ForestHyperparameters& hp, Rng& rng)
        : ts_(ts), hp_(hp), rng_(rng), n_classes_(ts.class_names.size()),
          fps_(hp.resolved_features_per_split(ts.feature_count)) {}

    DecisionTree build(std::vector<std::uint32_t> sample) {
        tree_ = {};
        grow(std::move(sample), 0);
        return std::move(tree_);
    }

private:
    std::int32_t make_leaf(const std::vector<std::size_t>& counts, std::size_t n) {
        TreeNode node;
        node.leaf = static_cast<std::int32_t>(tree_.leaf_probs.size() / n_classes_);
        for (auto c : counts) tree_.leaf_probs.push_back(double(c) / double(n));
        tree_.nodes.push_back(node);
        return static_cast<std::int32_t>(tree_.nodes.size() - 1);
    }

    std::int32_t grow(std::vector<std::uint32_t> idx, std::size_t depth) {
        std::vector<std::size_t> counts(n_classes_, 0);
        for (auto i : idx) ++counts[ts_.labels[i]];
        const std::size_t n = idx.size();
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || depth >= hp_.max_depth || n < hp_.min_samples_split) return make_leaf(counts, n);

        // Features for this node, without replacement (partial Fisher-Yates), tried in ascending order.
        std::vector<std::size_t> feats(ts_.feature_count);
        std::iota(feats.begin(), feats.end(), std::size_t{0});
        for (std::size_t i = 0; i < fps_; ++i) std::swap(feats[i], feats[i + rng_.below(feats.size() - i)]);
        feats.resize(fps_);
        std::sort(feats.begin(), feats.end());

        double best_score = std::numeric_limits<double>::infinity();
        std::int32_t best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<float, std::uint32_t>> col(n);
        std::vector<std::size_t> left(n_classes_), right(n_classes_);
        for (std::size_t f : feats) {
            for (std::size_t k = 0; k < n; ++k) col[k] = {ts_.samples[idx[k] * ts_.feature_count + f], idx[k]};
            std::sort(col.begin(), col.end());
            std::fill(left.begin(), left.end(), 0);
            right = counts;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const auto lab = ts_.labels[col[k].second];
                ++left[lab];
                --right[lab];
                if (!(col[k].first < col[k + 1].first)) continue;
                const double score = gini_sum(left, k + 1) + gini_sum(right, n - k - 1);
                if (score < best_score) {
                    best_score = score;
                    best_feature = static_cast<std::int32_t>(f);
                    best_threshold = 0.5 * (double(col[k].first) + double(col[k + 1].first));
                }
            }
        }
        if (best_feature < 0) return make_leaf(counts, n);

        std::vector<std::uint32_t> li, ri;
        for (auto i : idx)
            (double(ts_.samples[i * ts_.feature_count + std::size_t(best_feature)]) <= best_threshold ? li : ri)
                .push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        const auto self = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{best_feature, best_threshold, -1, -1, -1});
        const auto l = grow(std::move(li), depth + 1);
        const auto r = grow(std::move(ri), depth + 1);
        tree_.nodes[static_cast<std::size_t>(self)].left = l;
        tree_.nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    const TrainingSet& ts_;
    const ForestHyperparameters& hp_;
    Rng& rng_;
    std::size_t n_classes_;
    std::size_t fps_;
    DecisionTree tree_;
};

} // namespace detail

/// Mean of leaf vectors across trees; argmax with ties to the lowest class id.
inline void predict_into(const ForestModel& m, std::span<const float> x, std::span<double> probs) {
    if (x.size() != m.feature_count)
        throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(m.feature_count) + " features, got " +
                                                      std::to_string(x.size()));
    const std::size_t c = m.class_count();
    std::fill(probs.begin(), probs.end(), 0.0);
    for (const auto& t : m.trees) {
        const auto leaf = t.leaf(static_cast<std::size_t>(t.find_leaf(x)), c);
        for (std::size_t k = 0; k < c; ++k) probs[k] += leaf[k];
    }
    for (auto& p : probs) p /= double(m.trees.size());
}

inline std::uint16_t argmax_class(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > probs[best]) best = k;
    return static_cast<std::uint16_t>(best);
}

inline Prediction predict(const ForestModel& m, std::span<const float> features) {
    Prediction p;
    p.probabilities.resize(m.class_count());
    predict_into(m, features, p.probabilities);
    p.class_id = argmax_class(p.probabilities);
    return p;
}

inline ForestModel train_forest(const TrainingSet& ts, const ForestHyperparameters& hp, std::uint64_t seed,
                                Parallel par = {}) {
    ts.validate();
    hp.validate(ts.feature_count);
    if (ts.size() > std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorCode::BadParams, "training set too large");

    ForestModel m;
    m.hyperparameters = hp;
    m.rng_seed = seed;
    m.feature_count = ts.feature_count;
    m.class_names = ts.class_names;
    m.trees.resize(hp.n_trees);

    const std::size_t n = ts.size();
    const auto draws = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(hp.bag_fraction * double(n))));
    std::vector<std::vector<bool>> in_bag(hp.n_trees);

    parallel_for(hp.n_trees, par, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            Rng rng(stream_seed(seed, t));
            std::vector<std::uint32_t> sample(draws);
            in_bag[t].assign(n, false);
            for (auto& s : sample) {
                s = static_cast<std::uint32_t>(rng.below(n));
                in_bag[t][s] = true;
            }
            detail::TreeBuilder builder(ts, hp, rng);
            m.trees[t] = builder.build(std::move(sample));
        }
    });

    const std::size_t c = m.class_count();
    std::vector<double> votes(n * c, 0.0);
    std::vector<std::size_t> oob_trees(n, 0);
    for (std::size_t t = 0; t < hp.n_trees; ++t)
        for (std::size_t i = 0; i < n; ++i) {
            if (in_bag[t][i]) continue;
            const auto leaf = m.trees[t].leaf(static_cast<std::size_t>(m.trees[t].find_leaf(ts.row(i))), c);
            for (std::size_t k = 0; k < c; ++k) votes[i * c + k] += leaf[k];
            ++oob_trees[i];
        }
    std::size_t evaluated = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (oob_trees[i] == 0) continue;
        ++evaluated;
        correct += argmax_class({votes.data() + i * c, c}) == ts.labels[i];
    }
    if (evaluated > 0) m.oob_accuracy = double(correct) / double(evaluated);
    return m;
}

struct Segmentation {
    LabelVolume labels;
    /// Max class probability per voxel.
    GrayVolume confidence;
};

inline Segmentation segment_volume(const ForestModel& m, const GrayVolume& v, Parallel par = {}) {
    if (!m.feature_bank) throw Error(ErrorCode::BadModelFile, "model carries no feature bank configuration");
    const FeatureStack fs = build_feature_stack(v, *m.feature_bank, par);
    if (fs.feature_count() != m.feature_count)
        throw Error(ErrorCode::DimensionMismatch, "feature bank does not match model feature count");
    const Encoding enc = m.class_count() <= 256 ? Encoding::u8 : Encoding::u16;
    Segmentation out{LabelVolume(derived_header(v.header(), ValueKind::label, enc), 0),
                     GrayVolume(derived_header(v.header(), ValueKind::grayscale, Encoding::f32), 0.0f)};
    parallel_for(v.size(), par, [&](std::size_t begin, std::size_t end) {
        std::vector<float> x(fs.feature_count());
        std::vector<double> probs(m.class_count());
        for (std::size_t i = begin; i < end; ++i) {
            fs.gather(i, x);
            predict_into(m, x, probs);
            const auto c = argmax_class(probs);
            out.labels[i] = c;
            out.confidence[i] = static_cast<float>(probs[c]);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Model file

inline nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       leaf = nlohmann::json::array(), probs = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            leaf.push_back(n.leaf);
        }
        const std::size_t c = m.class_count();
        for (std::size_t r = 0; r * c < t.leaf_probs.size(); ++r) {
            const auto l = t.leaf(r, c);
            probs.push_back(std::vector<double>(l.begin(), l.end()));
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                         {"leaf", leaf}, {"probs", probs}});
    }
    nlohmann::json j{{"version", kForestFormatVersion},
                     {"hyperparameters", to_json(m.hyperparameters)},
                     {"rng_seed", m.rng_seed},
                     {"feature_count", m.feature_count},
                     {"feature_bank", m.feature_bank ? to_json(*m.feature_bank) : nlohmann::json(nullptr)},
                     {"class_names", m.class_names},
                     {"trees", trees}};
    j["oob_accuracy"] = std::isnan(m.oob_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(m.oob_accuracy);
    return j;
}

inline ForestModel model_from_json(const nlohmann::json& j) {
    auto bad = [](const std::string& msg) { return Error(ErrorCode::BadModelFile, msg); };
    if (!j.is_object()) throw bad("model is not a JSON object");
    const auto vit = j.find("version");
    if (vit == j.end()) throw bad("missing version field");
    long long version = -1;
    if (vit->is_number_integer()) {
        version = vit->get<long long>();
    } else if (vit->is_string()) {
        try {
            version = std::stoll(vit->get<std::string>());
        } catch (...) {
            throw bad("unreadable version field");
        }
    } else {
        throw bad("unreadable version field");
    }
    if (version != kForestFormatVersion)
        throw Error(ErrorCode::VersionMismatch, "model version " + std::to_string(version) + ", reader supports " +
                                                    std::to_string(kForestFormatVersion));
    ForestModel m;
    try {
        m.hyperparameters = hyperparameters_from_json(j.at("hyperparameters"));
        m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        m.feature_count = j.at("feature_count").get<std::size_t>();
        if (!j.at("feature_bank").is_null()) m.feature_bank = feature_bank_from_json(j.at("feature_bank"));
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        const auto& oob = j.at("oob_accuracy");
        m.oob_accuracy = oob.is_null() ? std::numeric_limits<double>::quiet_NaN() : oob.get<double>();
        const std::size_t c = m.class_count();
        if (c == 0) throw bad("no classes");
        for (const auto& jt : j.at("trees")) {
            DecisionTree t;
            const auto feature = jt.at("feature").get<std::vector<std::int32_t>>();
            const auto threshold = jt.at("threshold").get<std::vector<double>>();
            const auto left = jt.at("left").get<std::vector<std::int32_t>>();
            const auto right = jt.at("right").get<std::vector<std::int32_t>>();
            const auto leaf = jt.at("leaf").get<std::vector<std::int32_t>>();
            const auto probs = jt.at("probs").get<std::vector<std::vector<double>>>();
            const std::size_t nn = feature.size();
            if (nn == 0 || threshold.size() != nn || left.size() != nn || right.size() != nn || leaf.size() != nn)
                throw bad("tree arrays disagree in length");
            for (const auto& p : probs) {
                if (p.size() != c) throw bad("leaf probability vector has wrong length");
                double s = 0.0;
                for (double v : p) {
                    if (!(v >= 0.0)) throw bad("negative leaf probability");
                    s += v;
                }
                if (std::abs(s - 1.0) > 1e-9) throw bad("leaf probabilities do not sum to 1");
                t.leaf_probs.insert(t.leaf_probs.end(), p.begin(), p.end());
            }
            for (std::size_t i = 0; i < nn; ++i) {
                const TreeNode node{feature[i], threshold[i], left[i], right[i], leaf[i]};
                if (node.feature >= 0) {
                    if (std::size_t(node.feature) >= m.feature_count) throw bad("split feature index out of range");
                    // Children are always emitted after their parent.
                    if (node.left <= std::int32_t(i) || node.right <= std::int32_t(i) || std::size_t(node.left) >= nn ||
                        std::size_t(node.right) >= nn)
                        throw bad("bad child index");
                } else if (node.leaf < 0 || std::size_t(node.leaf) >= probs.size()) {
                    throw bad("bad leaf index");
                }
                t.nodes.push_back(node);
            }
            m.trees.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw bad(e.what());
    }
    if (m.trees.empty()) throw bad("model has no trees");
    if (m.feature_bank && m.feature_bank->feature_count() != m.feature_count)
        throw bad("feature bank does not match feature_count");
    return m;
}

inline std::string serialize_model(const ForestModel& m) { return to_json(m).dump() + "\n"; }

inline void save_model(const ForestModel& m, const std::filesystem::path& path) {
    write_text_file(path, serialize_model(m));
}

inline ForestModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadModelFile, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace drt
