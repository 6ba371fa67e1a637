#pragma once

// Gaussian scale-space features and histogram-mixture porosity thresholding.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/error.hpp"
#include "drt/parallel.hpp"
#include "drt/volume.hpp"

namespace drt {

enum class BoundaryMode { mirror, clamp };

inline std::string to_string(BoundaryMode m) { return m == BoundaryMode::mirror ? "mirror" : "clamp"; }

/// Maps an out-of-range coordinate back into [0, n).
/// mirror is half-sample symmetric (... b a | a b c | c b ...), repeated with period 2n.
inline std::size_t boundary_index(long i, std::size_t n, BoundaryMode mode) {
    const long ln = static_cast<long>(n);
    if (mode == BoundaryMode::clamp) return static_cast<std::size_t>(std::clamp(i, 0L, ln - 1));
    long m = i % (2 * ln);
    if (m < 0) m += 2 * ln;
    if (m >= ln) m = 2 * ln - 1 - m;
    return static_cast<std::size_t>(m);
}

/// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-double(i * i) / (2.0 * sigma * sigma));
        w[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace detail {

// One separable pass along `axis` (0 = x, 1 = y, 2 = z), in place on `buf`.
inline void convolve_axis(std::vector<double>& buf, const Dims& d, int axis, const std::vector<double>& kernel,
                          BoundaryMode mode, Parallel par) {
    const std::size_t n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
    const std::size_t lines = d.count() / n;
    const long radius = static_cast<long>(kernel.size() / 2);

    parallel_for(lines, par, [&](std::size_t begin, std::size_t end) {
        std::vector<double> line(n), padded(n + 2 * radius);
        for (std::size_t li = begin; li < end; ++li) {
            // First voxel of line `li`: the line index enumerates the other two axes.
            std::size_t base;
            if (axis == 0) base = li * d.nx;
            else if (axis == 1) base = (li % d.nx) + (li / d.nx) * d.nx * d.ny;
            else base = li;
            for (std::size_t i = 0; i < n; ++i) line[i] = buf[base + i * stride];
            for (long i = -radius; i < long(n) + radius; ++i)
                padded[static_cast<std::size_t>(i + radius)] = line[boundary_index(i, n, mode)];
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                const double* src = padded.data() + i;
                for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * src[k];
                buf[base + i * stride] = acc;
            }
        }
    });
}

inline std::string format_sigma(double s) {
    char b[32];
    std::snprintf(b, sizeof b, "%g", s);
    return b;
}

} // namespace detail

/// Separable 3-D Gaussian smoothing; accumulation in double, output f32.
inline GrayVolume gaussian_smooth(const GrayVolume& v, double sigma_vox, BoundaryMode mode = BoundaryMode::mirror,
                                  Parallel par = {}) {
    if (!(sigma_vox > 0.0)) throw Error(ErrorCode::BadParams, "sigma must be positive");
    if (sigma_vox > double(v.dims().min()) / 2.0)
        throw Error(ErrorCode::SigmaTooLarge, "sigma " + detail::format_sigma(sigma_vox) + " exceeds min(dims)/2");
    const auto kernel = gaussian_kernel(sigma_vox);
    std::vector<double> buf(v.data().begin(), v.data().end());
    for (int axis = 0; axis < 3; ++axis) detail::convolve_axis(buf, v.dims(), axis, kernel, mode, par);
    GrayVolume out(derived_header(v.header(), ValueKind::grayscale, Encoding::f32));
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<float>(buf[i]);
    return out;
}

inline GrayVolume difference_of_gaussian(const GrayVolume& v, double sigma_lo, double sigma_hi,
                                         BoundaryMode mode = BoundaryMode::mirror, Parallel par = {}) {
    if (!(sigma_lo < sigma_hi)) throw Error(ErrorCode::BadSigmaOrder, "sigma_lo must be below sigma_hi");
    GrayVolume lo = gaussian_smooth(v, sigma_lo, mode, par);
    const GrayVolume hi = gaussian_smooth(v, sigma_hi, mode, par);
    for (std::size_t i = 0; i < lo.size(); ++i) lo[i] -= hi[i];
    return lo;
}

struct FeatureBankConfig {
    std::vector<double> sigmas_vox{1.0, 2.0, 4.0, 8.0};
    bool include_raw = true;
    BoundaryMode boundary_mode = BoundaryMode::mirror;

    void validate() const {
        if (sigmas_vox.empty()) throw Error(ErrorCode::BadParams, "feature bank needs at least one sigma");
        for (std::size_t i = 0; i < sigmas_vox.size(); ++i) {
            if (!(sigmas_vox[i] > 0.0) || !std::isfinite(sigmas_vox[i]))
                throw Error(ErrorCode::BadParams, "sigmas must be positive");
            if (i > 0 && !(sigmas_vox[i] > sigmas_vox[i - 1]))
                throw Error(ErrorCode::BadSigmaOrder, "sigmas must be strictly ascending");
        }
    }

    std::size_t feature_count() const { return (include_raw ? 1 : 0) + 2 * sigmas_vox.size() - 1; }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> names;
        if (include_raw) names.emplace_back("raw");
        for (double s : sigmas_vox) names.push_back("gauss_" + detail::format_sigma(s));
        for (std::size_t i = 0; i + 1 < sigmas_vox.size(); ++i)
            names.push_back("dog_" + detail::format_sigma(sigmas_vox[i]) + "_" + detail::format_sigma(sigmas_vox[i + 1]));
        return names;
    }

    bool operator==(const FeatureBankConfig&) const = default;
};

inline nlohmann::json to_json(const FeatureBankConfig& c) {
    return {{"sigmas_vox", c.sigmas_vox}, {"include_raw", c.include_raw}, {"boundary_mode", to_string(c.boundary_mode)}};
}

inline FeatureBankConfig feature_bank_from_json(const nlohmann::json& j) {
    FeatureBankConfig c;
    try {
        if (j.contains("sigmas_vox")) c.sigmas_vox = j.at("sigmas_vox").get<std::vector<double>>();
        if (j.contains("include_raw")) c.include_raw = j.at("include_raw").get<bool>();
        if (j.contains("boundary_mode")) {
            const auto m = j.at("boundary_mode").get<std::string>();
            if (m == "mirror") c.boundary_mode = BoundaryMode::mirror;
            else if (m == "clamp") c.boundary_mode = BoundaryMode::clamp;
            else throw Error(ErrorCode::BadParams, "unknown boundary_mode '" + m + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadParams, std::string("feature_bank: ") + e.what());
    }
    c.validate();
    return c;
}

/// Channel-major feature planes over a volume grid.
struct FeatureStack {
    Dims dims;
    std::vector<std::string> names;
    std::vector<std::vector<float>> channels;

    std::size_t feature_count() const { return channels.size(); }
    std::size_t voxel_count() const { return dims.count(); }

    const std::vector<float>& channel(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error(ErrorCode::BadParams, "no feature named " + name);
        return channels[static_cast<std::size_t>(it - names.begin())];
    }

    void gather(std::size_t voxel, std::span<float> out) const {
        for (std::size_t f = 0; f < channels.size(); ++f) out[f] = channels[f][voxel];
    }
};

/// Features ordered [raw?, G(s1..sk), DoG(s1,s2)..DoG(s{k-1},sk)].
inline FeatureStack build_feature_stack(const GrayVolume& v, const FeatureBankConfig& cfg, Parallel par = {}) {
    cfg.validate();
    FeatureStack fs;
    fs.dims = v.dims();
    fs.names = cfg.feature_names();
    if (cfg.include_raw) fs.channels.emplace_back(v.data().begin(), v.data().end());
    std::vector<GrayVolume> smoothed;
    for (double s : cfg.sigmas_vox) smoothed.push_back(gaussian_smooth(v, s, cfg.boundary_mode, par));
    for (const auto& g : smoothed) fs.channels.emplace_back(g.data().begin(), g.data().end());
    for (std::size_t i = 0; i + 1 < smoothed.size(); ++i) {
        std::vector<float> dog(v.size());
        for (std::size_t k = 0; k < dog.size(); ++k) dog[k] = smoothed[i][k] - smoothed[i + 1][k];
        fs.channels.push_back(std::move(dog));
    }
    return fs;
}

// ---------------------------------------------------------------------------
// Histogram Gaussian-mixture thresholding

struct MixtureComponent {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

struct ThresholdOptions {
    std::size_t bins = 256;
    int max_iterations = 200;
    /// Convergence on the change of mean per-voxel log-likelihood.
    double tolerance = 1e-8;
};

struct ThresholdResult {
    LabelVolume labels;
    /// Strictly increasing; class c holds intensities in (t[c-1], t[c]].
    std::vector<double> thresholds;
    /// Sorted by ascending mean.
    std::vector<MixtureComponent> components;
    int iterations = 0;
};

namespace detail {

inline double log_normal_pdf(double x, const MixtureComponent& c) {
    const double d = x - c.mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * c.variance) - d * d / (2.0 * c.variance);
}

// Abscissa in (a.mean, b.mean) where the weighted densities of a and b cross.
inline double density_crossing(const MixtureComponent& a, const MixtureComponent& b) {
    const double qa = 1.0 / (2.0 * b.variance) - 1.0 / (2.0 * a.variance);
    const double qb = a.mean / a.variance - b.mean / b.variance;
    const double qc = b.mean * b.mean / (2.0 * b.variance) - a.mean * a.mean / (2.0 * a.variance) +
                      std::log(a.weight / std::sqrt(a.variance)) - std::log(b.weight / std::sqrt(b.variance));
    const double mid = 0.5 * (a.mean + b.mean);
    std::vector<double> roots;
    const double scale = std::max({std::abs(qb), std::abs(qc), 1e-300});
    if (std::abs(qa) * std::max(1.0, mid * mid) < 1e-12 * scale) {
        if (qb != 0.0) roots.push_back(-qc / qb);
    } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            // Numerically stable pair.
            const double q = -0.5 * (qb + std::copysign(sq, qb));
            if (q != 0.0) {
                roots.push_back(q / qa);
                roots.push_back(qc / q);
            } else {
                roots.push_back(-qb / (2.0 * qa));
            }
        }
    }
    double best = mid;
    double best_gap = std::numeric_limits<double>::infinity();
    for (double r : roots)
        if (r > a.mean && r < b.mean && std::abs(r - mid) < best_gap) {
            best = r;
            best_gap = std::abs(r - mid);
        }
    return best;
}

} // namespace detail

/// Fits an n-component 1-D Gaussian mixture to the intensity histogram by EM and
/// labels voxels by the crossings of adjacent weighted component densities.
inline ThresholdResult iroga_threshold(const GrayVolume& v, int n_components, ThresholdOptions opt = {}) {
    if (n_components != 2 && n_components != 3) throw Error(ErrorCode::BadParams, "n_components must be 2 or 3");
    const std::size_t k = static_cast<std::size_t>(n_components);
    {
        std::set<float> distinct;
        for (float x : v.data()) {
            distinct.insert(x);
            if (distinct.size() >= k) break;
        }
        if (distinct.size() < k)
            throw Error(ErrorCode::DegenerateHistogram, "fewer distinct intensities than mixture components");
    }
    const auto [mn_it, mx_it] = std::minmax_element(v.data().begin(), v.data().end());
    const double lo = *mn_it, hi = *mx_it;
    const std::size_t nb = opt.bins;
    const double width = (hi - lo) / double(nb);
    std::vector<double> hist(nb, 0.0), centers(nb);
    for (std::size_t i = 0; i < nb; ++i) centers[i] = lo + (double(i) + 0.5) * width;
    for (float x : v.data()) {
        auto b = static_cast<std::size_t>((double(x) - lo) / width);
        hist[std::min(b, nb - 1)] += 1.0;
    }
    const double total = double(v.size());
    const double var_floor = width * width / 12.0;

    // Deterministic k-means++ seeding: mode bin first, then the bin maximizing count * D^2.
    std::vector<double> seeds;
    seeds.push_back(centers[static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin())]);
    while (seeds.size() < k) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < nb; ++i) {
            double d2 = std::numeric_limits<double>::infinity();
            for (double s : seeds) d2 = std::min(d2, (centers[i] - s) * (centers[i] - s));
            if (hist[i] * d2 > best) {
                best = hist[i] * d2;
                arg = i;
            }
        }
        seeds.push_back(centers[arg]);
    }
    std::sort(seeds.begin(), seeds.end());

    std::vector<MixtureComponent> comp(k);
    {
        std::vector<double> m0(k, 0.0), m1(k, 0.0), m2(k, 0.0);
        for (std::size_t i = 0; i < nb; ++i) {
            if (hist[i] == 0.0) continue;
            std::size_t c = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (std::abs(centers[i] - seeds[j]) < std::abs(centers[i] - seeds[c])) c = j;
            m0[c] += hist[i];
            m1[c] += hist[i] * centers[i];
            m2[c] += hist[i] * centers[i] * centers[i];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (m0[j] == 0.0) {
                comp[j] = {1.0 / double(k), seeds[j], std::max(var_floor, (hi - lo) * (hi - lo) / 16.0)};
                continue;
            }
            const double mean = m1[j] / m0[j];
            comp[j] = {m0[j] / total, mean, std::max(var_floor, m2[j] / m0[j] - mean * mean)};
        }
    }

    std::vector<double> resp(nb * k);
    double prev_ll = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double lp = std::log(comp[j].weight) + detail::log_normal_pdf(centers[i], comp[j]);
                resp[i * k + j] = lp;
                mx = std::max(mx, lp);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += std::exp(resp[i * k + j] - mx);
            const double lse = mx + std::log(s);
            for (std::size_t j = 0; j < k; ++j) resp[i * k + j] = std::exp(resp[i * k + j] - lse);
            ll += hist[i] * lse;
        }
        ll /= total;
        if (std::abs(ll - prev_ll) < opt.tolerance) {
            converged = true;
            break;
        }
        prev_ll = ll;
        // M step
        for (std::size_t j = 0; j < k; ++j) {
            double n = 0.0, m1 = 0.0;
            for (std::size_t i = 0; i < nb; ++i) {
                n += hist[i] * resp[i * k + j];
                m1 += hist[i] * resp[i * k + j] * centers[i];
            }
            if (!(n > 0.0)) throw Error(ErrorCode::NoConvergence, "mixture component collapsed to zero weight");
            const double mean = m1 / n;
            double m2 = 0.0;
            for (std::size_t i = 0; i < nb; ++i) {
                const double d = centers[i] - mean;
                m2 += hist[i] * resp[i * k + j] * d * d;
            }
            comp[j] = {n / total, mean, std::max(var_floor, m2 / n)};
        }
    }
    if (!converged)
        throw Error(ErrorCode::NoConvergence, "EM did not converge in " + std::to_string(opt.max_iterations) + " iterations");

    std::sort(comp.begin(), comp.end(), [](const auto& a, const auto& b) { return a.mean < b.mean; });
    for (std::size_t j = 0; j + 1 < k; ++j)
        if (!(comp[j].mean < comp[j + 1].mean))
            throw Error(ErrorCode::DegenerateHistogram, "mixture components share a mean");

    ThresholdResult out;
    out.components = comp;
    out.iterations = it;
    for (std::size_t j = 0; j + 1 < k; ++j) out.thresholds.push_back(detail::density_crossing(comp[j], comp[j + 1]));
    out.labels = LabelVolume(derived_header(v.header(), ValueKind::label, Encoding::u8), 0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint16_t c = 0;
        for (double t : out.thresholds)
            if (double(v[i]) > t) ++c;
        out.labels[i] = c;
    }
    return out;
}

} // namespace drt
