#pragma once

// Geometry of segmented volumes: connectivity, exact Euclidean distance,
// inscribed-sphere local thickness, throat-size distributions and the
// intensity -> throat-size calibration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "drt/error.hpp"
#include "drt/parallel.hpp"
#include "drt/volume.hpp"

namespace drt {

/// Nonzero voxels are foreground.
using Mask = Volume<std::uint8_t>;

inline Mask make_mask(const LabelVolume& labels, const std::set<std::uint16_t>& foreground) {
    Mask m(derived_header(labels.header(), ValueKind::label, Encoding::u8), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = foreground.count(labels[i]) ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Connected components

struct ComponentMap {
    /// 0 = background, components 1..count in order of first voxel (flat index).
    Volume<std::uint32_t> ids;
    std::size_t count = 0;
    /// sizes[id - 1]
    std::vector<std::size_t> sizes;
    /// percolates[id - 1][axis]: touches both faces normal to that axis.
    std::vector<std::array<bool, 3>> percolates;

    bool percolates_any(std::size_t id) const {
        const auto& p = percolates[id - 1];
        return p[0] || p[1] || p[2];
    }
    bool percolates_all(std::size_t id) const {
        const auto& p = percolates[id - 1];
        return p[0] && p[1] && p[2];
    }
    /// Largest component, ties to the lowest id; 0 when there is none.
    std::size_t dominant() const {
        std::size_t best = 0;
        for (std::size_t i = 0; i < sizes.size(); ++i)
            if (best == 0 || sizes[i] > sizes[best - 1]) best = i + 1;
        return best;
    }
};

namespace detail {

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent_[a] = b;
    }

private:
    std::vector<std::size_t> parent_;
};

// Neighbor offsets preceding the voxel in flat order.
inline std::vector<std::array<int, 3>> backward_offsets(int connectivity) {
    std::vector<std::array<int, 3>> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (connectivity == 6 && manhattan != 1) continue;
                if (dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)))) out.push_back({dx, dy, dz});
            }
    return out;
}

} // namespace detail

/// Labels 6- or 26-connected foreground components. An empty foreground gives count 0.
inline ComponentMap connected_components(const Mask& mask, int connectivity = 26) {
    if (connectivity != 6 && connectivity != 26) throw Error(ErrorCode::BadParams, "connectivity must be 6 or 26");
    const Dims d = mask.dims();
    detail::DisjointSet ds(mask.size());
    const auto offsets = detail::backward_offsets(connectivity);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const std::size_t i = mask.index(x, y, z);
                if (!mask[i]) continue;
                for (const auto& o : offsets) {
                    const long nx = long(x) + o[0], ny = long(y) + o[1], nz = long(z) + o[2];
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= long(d.nx) || ny >= long(d.ny) || nz >= long(d.nz)) continue;
                    const std::size_t j = mask.index(std::size_t(nx), std::size_t(ny), std::size_t(nz));
                    if (mask[j]) ds.unite(i, j);
                }
            }

    ComponentMap cm;
    cm.ids = Volume<std::uint32_t>(derived_header(mask.header(), ValueKind::label, Encoding::f32), 0);
    std::vector<std::uint32_t> root_id(mask.size(), 0);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const std::size_t i = mask.index(x, y, z);
                if (!mask[i]) continue;
                const std::size_t r = ds.find(i);
                if (root_id[r] == 0) {
                    root_id[r] = static_cast<std::uint32_t>(++cm.count);
                    cm.sizes.push_back(0);
                    cm.percolates.push_back({false, false, false});
                }
                const std::uint32_t id = root_id[r];
                cm.ids[i] = id;
                ++cm.sizes[id - 1];
            }

    // Percolation: record face contacts, then require both faces per axis.
    std::vector<std::array<bool, 6>> faces(cm.count, {false, false, false, false, false, false});
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const auto id = cm.ids(x, y, z);
                if (!id) continue;
                auto& f = faces[id - 1];
                f[0] |= x == 0;
                f[1] |= x == d.nx - 1;
                f[2] |= y == 0;
                f[3] |= y == d.ny - 1;
                f[4] |= z == 0;
                f[5] |= z == d.nz - 1;
            }
    for (std::size_t c = 0; c < cm.count; ++c)
        cm.percolates[c] = {faces[c][0] && faces[c][1], faces[c][2] && faces[c][3], faces[c][4] && faces[c][5]};
    return cm;
}

inline ComponentMap connected_components(const LabelVolume& labels, const std::set<std::uint16_t>& foreground,
                                         int connectivity = 26) {
    return connected_components(make_mask(labels, foreground), connectivity);
}

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform

namespace detail {

// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher) over finite sites.
inline void edt_1d(const double* f, double* out, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& zb) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.clear();
    zb.clear();
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] == inf) continue;
        while (!v.empty()) {
            const std::size_t p = v.back();
            const double s = ((f[q] + double(q * q)) - (f[p] + double(p * p))) / (2.0 * double(q) - 2.0 * double(p));
            if (s <= zb.back()) {
                v.pop_back();
                zb.pop_back();
            } else {
                zb.push_back(s);
                v.push_back(q);
                break;
            }
        }
        if (v.empty()) {
            v.push_back(q);
            zb.push_back(-inf);
        }
    }
    if (v.empty()) {
        std::fill(out, out + n, inf);
        return;
    }
    std::size_t k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (k + 1 < v.size() && zb[k + 1] < double(q)) ++k;
        const double dq = double(q) - double(v[k]);
        out[q] = dq * dq + f[v[k]];
    }
}

} // namespace detail

/// Squared Euclidean distance (voxel units) from each foreground voxel to the
/// nearest background voxel; background is 0, and +inf when no background exists.
inline Volume<double> squared_distance_transform(const Mask& mask, Parallel par = {}) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Dims d = mask.dims();
    Volume<double> sq(derived_header(mask.header(), ValueKind::distance, Encoding::f32), 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) sq[i] = mask[i] ? inf : 0.0;

    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
        const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
        const std::size_t lines = d.count() / n;
        parallel_for(lines, par, [&](std::size_t begin, std::size_t end) {
            std::vector<double> f(n), g(n), zb;
            std::vector<std::size_t> v;
            for (std::size_t li = begin; li < end; ++li) {
                std::size_t base;
                if (axis == 0) base = li * d.nx;
                else if (axis == 1) base = (li % d.nx) + (li / d.nx) * d.nx * d.ny;
                else base = li;
                for (std::size_t i = 0; i < n; ++i) f[i] = sq[base + i * stride];
                detail::edt_1d(f.data(), g.data(), n, v, zb);
                for (std::size_t i = 0; i < n; ++i) sq[base + i * stride] = g[i];
            }
        });
    }
    return sq;
}

inline Volume<double> euclidean_distance_transform(const Mask& mask, Parallel par = {}) {
    Volume<double> out = squared_distance_transform(mask, par);
    for (auto& v : out.data()) v = std::sqrt(v);
    return out;
}

/// Diameter (um) of the largest inscribed sphere covering each foreground voxel.
inline GrayVolume local_thickness(const Mask& mask, double voxel_size_um, Parallel par = {}) {
    if (!(voxel_size_um > 0.0)) throw Error(ErrorCode::BadParams, "voxel size must be positive");
    const Dims d = mask.dims();
    GrayVolume out(derived_header(mask.header(), ValueKind::throat_size, Encoding::f32), 0.0f);
    out.header().voxel_size_um = voxel_size_um;
    const Volume<double> sq = squared_distance_transform(mask, par);

    std::vector<double> best(mask.size(), 0.0);
    bool unbounded = false;
    for (std::size_t i = 0; i < mask.size(); ++i) unbounded |= std::isinf(sq[i]);
    if (unbounded) {
        // No background anywhere: thickness is unbounded.
        for (std::size_t i = 0; i < mask.size(); ++i) out[i] = std::numeric_limits<float>::infinity();
        return out;
    }

    // Ball centers, pruned where a neighbor's ball already contains this one.
    struct Center {
        double r2;
        std::size_t x, y, z;
    };
    std::vector<Center> centers;
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const double r2 = sq(x, y, z);
                if (r2 <= 0.0) continue;
                const double r = std::sqrt(r2);
                bool covered = false;
                for (int dz = -1; dz <= 1 && !covered; ++dz)
                    for (int dy = -1; dy <= 1 && !covered; ++dy)
                        for (int dx = -1; dx <= 1 && !covered; ++dx) {
                            if (!dx && !dy && !dz) continue;
                            const long nx = long(x) + dx, ny = long(y) + dy, nz = long(z) + dz;
                            if (nx < 0 || ny < 0 || nz < 0 || nx >= long(d.nx) || ny >= long(d.ny) || nz >= long(d.nz))
                                continue;
                            const double rn = std::sqrt(sq(std::size_t(nx), std::size_t(ny), std::size_t(nz)));
                            covered = rn >= r + std::sqrt(double(dx * dx + dy * dy + dz * dz));
                        }
                if (!covered) centers.push_back({r2, x, y, z});
            }
    std::stable_sort(centers.begin(), centers.end(), [](const Center& a, const Center& b) { return a.r2 > b.r2; });

    // Paint balls; z-slabs are disjoint so workers never share a voxel.
    parallel_for(d.nz, par, [&](std::size_t z0, std::size_t z1) {
        for (const auto& c : centers) {
            const long r = static_cast<long>(std::floor(std::sqrt(c.r2)));
            const long zlo = std::max(long(z0), long(c.z) - r), zhi = std::min(long(z1) - 1, long(c.z) + r);
            for (long z = zlo; z <= zhi; ++z) {
                const double dz2 = double((z - long(c.z)) * (z - long(c.z)));
                for (long y = std::max(0L, long(c.y) - r); y <= std::min(long(d.ny) - 1, long(c.y) + r); ++y) {
                    const double dy2 = double((y - long(c.y)) * (y - long(c.y)));
                    if (dz2 + dy2 > c.r2) continue;
                    for (long x = std::max(0L, long(c.x) - r); x <= std::min(long(d.nx) - 1, long(c.x) + r); ++x) {
                        const double dx2 = double((x - long(c.x)) * (x - long(c.x)));
                        if (dz2 + dy2 + dx2 > c.r2) continue;
                        const std::size_t i = mask.index(std::size_t(x), std::size_t(y), std::size_t(z));
                        if (mask[i] && c.r2 > best[i]) best[i] = c.r2;
                    }
                }
            }
        }
    });
    for (std::size_t i = 0; i < mask.size(); ++i)
        out[i] = static_cast<float>(2.0 * voxel_size_um * std::sqrt(best[i]));
    return out;
}

// ---------------------------------------------------------------------------
// Throat-size distribution

struct ThroatCutoffs {
    double t_micro_um = 10.0;
    double t_macro_um = 100.0;
};

struct PoreThroatDistribution {
    std::vector<double> bin_edges_um;
    std::vector<std::size_t> counts;
    double f_micro = 0.0, f_meso = 0.0, f_macro = 0.0;
    ThroatCutoffs cutoffs;
    /// Geometric bin centers of histogram peaks, ascending.
    std::vector<double> peaks_um;
    std::size_t pore_voxels = 0;

    double bin_center(std::size_t i) const { return std::sqrt(bin_edges_um[i] * bin_edges_um[i + 1]); }
};

namespace detail {

// Local maxima (plateaus collapse to their middle bin) with topographic
// prominence >= min_prominence; the histogram is padded with zeros.
inline std::vector<std::size_t> find_peaks(const std::vector<std::size_t>& h, double min_prominence) {
    const std::size_t n = h.size();
    auto at = [&](long i) -> std::size_t { return (i < 0 || i >= long(n)) ? 0 : h[std::size_t(i)]; };
    std::vector<std::size_t> peaks;
    std::size_t a = 0;
    while (a < n) {
        std::size_t b = a;
        while (b + 1 < n && h[b + 1] == h[a]) ++b;
        const std::size_t height = h[a];
        if (height > 0 && at(long(a) - 1) < height && at(long(b) + 1) < height) {
            std::size_t left_min = height, right_min = height;
            long i = long(a) - 1;
            for (; i >= 0 && h[std::size_t(i)] <= height; --i) left_min = std::min(left_min, h[std::size_t(i)]);
            if (i < 0) left_min = 0;
            i = long(b) + 1;
            for (; i < long(n) && h[std::size_t(i)] <= height; ++i) right_min = std::min(right_min, h[std::size_t(i)]);
            if (i >= long(n)) right_min = 0;
            const double prominence = double(height) - double(std::max(left_min, right_min));
            if (prominence >= min_prominence) peaks.push_back(a + (b - a) / 2);
        }
        a = b + 1;
    }
    return peaks;
}

} // namespace detail

/// Log-binned histogram of positive thickness values with micro/meso/macro mass fractions.
inline PoreThroatDistribution throat_distribution(const GrayVolume& thickness, ThroatCutoffs cutoffs,
                                                  std::size_t n_bins = 32) {
    if (!(cutoffs.t_micro_um > 0.0) || !(cutoffs.t_micro_um < cutoffs.t_macro_um))
        throw Error(ErrorCode::BadParams, "cutoffs must satisfy 0 < t_micro < t_macro");
    if (n_bins < 1) throw Error(ErrorCode::BadParams, "n_bins must be >= 1");
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    std::size_t n = 0, micro = 0, macro = 0;
    for (float t : thickness.data()) {
        if (!(t > 0.0f) || !std::isfinite(t)) continue;
        ++n;
        lo = std::min(lo, double(t));
        hi = std::max(hi, double(t));
        micro += double(t) < cutoffs.t_micro_um;
        macro += double(t) > cutoffs.t_macro_um;
    }
    if (n == 0) throw Error(ErrorCode::NoPoreVoxels, "thickness volume has no pore voxels");

    PoreThroatDistribution d;
    d.cutoffs = cutoffs;
    d.pore_voxels = n;
    d.f_micro = double(micro) / double(n);
    d.f_macro = double(macro) / double(n);
    d.f_meso = double(n - micro - macro) / double(n);

    if (hi <= lo * (1.0 + 1e-12)) {
        // Single value: widen symmetrically in log space so it sits inside the range.
        lo /= 1.01;
        hi *= 1.01;
    }
    const double llo = std::log(lo), step = (std::log(hi) - llo) / double(n_bins);
    d.bin_edges_um.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) d.bin_edges_um[i] = std::exp(llo + step * double(i));
    d.bin_edges_um.front() = lo;
    d.bin_edges_um.back() = hi;
    d.counts.assign(n_bins, 0);
    for (float t : thickness.data()) {
        if (!(t > 0.0f) || !std::isfinite(t)) continue;
        const double pos = (std::log(double(t)) - llo) / step;
        const auto b = pos <= 0.0 ? std::size_t{0} : std::min(n_bins - 1, static_cast<std::size_t>(pos));
        ++d.counts[b];
    }
    for (auto p : detail::find_peaks(d.counts, 0.05 * double(n))) d.peaks_um.push_back(d.bin_center(p));
    return d;
}

/// Thickness value at mass quantile q in [0, 1] over positive voxels.
inline double thickness_quantile(const GrayVolume& thickness, double q) {
    std::vector<float> v;
    for (float t : thickness.data())
        if (t > 0.0f && std::isfinite(t)) v.push_back(t);
    if (v.empty()) throw Error(ErrorCode::NoPoreVoxels, "thickness volume has no pore voxels");
    const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * double(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + long(k), v.end());
    return v[k];
}

// ---------------------------------------------------------------------------
// Intensity -> throat-size calibration

class IntensityThroatCalibration {
public:
    IntensityThroatCalibration(std::vector<double> intensity, std::vector<double> throat_um)
        : x_(std::move(intensity)), y_(std::move(throat_um)) {
        if (x_.size() < 2 || x_.size() != y_.size()) throw Error(ErrorCode::TooFewPoints, "need >= 2 control points");
        for (std::size_t i = 1; i < x_.size(); ++i)
            if (!(x_[i] > x_[i - 1]) || y_[i] < y_[i - 1])
                throw Error(ErrorCode::BadParams, "control points must be increasing in intensity and non-decreasing");
    }

    const std::vector<double>& intensities() const { return x_; }
    const std::vector<double>& throat_sizes_um() const { return y_; }

    /// Piecewise-linear, clamped to the end values outside the control range.
    double operator()(double intensity) const {
        if (intensity <= x_.front()) return y_.front();
        if (intensity >= x_.back()) return y_.back();
        const auto it = std::upper_bound(x_.begin(), x_.end(), intensity);
        const std::size_t j = std::size_t(it - x_.begin());
        const double t = (intensity - x_[j - 1]) / (x_[j] - x_[j - 1]);
        return y_[j - 1] + t * (y_[j] - y_[j - 1]);
    }

private:
    std::vector<double> x_, y_;
};

/// Isotonic (pool-adjacent-violators) fit of throat size on intensity.
inline IntensityThroatCalibration fit_intensity_calibration(std::vector<std::pair<double, double>> pairs) {
    if (pairs.size() < 2) throw Error(ErrorCode::TooFewPoints, "need >= 2 calibration pairs");
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    struct Block {
        double sum, weight;
        std::size_t first, last;  // range of unique intensities
        double mean() const { return sum / weight; }
    };
    std::vector<double> xs;
    std::vector<Block> blocks;
    for (const auto& [x, y] : pairs) {
        if (!std::isfinite(x) || !std::isfinite(y)) throw Error(ErrorCode::BadParams, "non-finite calibration pair");
        if (!xs.empty() && xs.back() == x) {
            blocks.back().sum += y;
            blocks.back().weight += 1.0;
        } else {
            xs.push_back(x);
            blocks.push_back({y, 1.0, xs.size() - 1, xs.size() - 1});
        }
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
            Block b = blocks.back();
            blocks.pop_back();
            blocks.back().sum += b.sum;
            blocks.back().weight += b.weight;
            blocks.back().last = b.last;
        }
    }
    if (xs.size() < 2) throw Error(ErrorCode::TooFewPoints, "need >= 2 distinct intensities");
    std::vector<double> ys(xs.size());
    for (const auto& b : blocks)
        for (std::size_t i = b.first; i <= b.last; ++i) ys[i] = b.mean();
    return IntensityThroatCalibration(std::move(xs), std::move(ys));
}

inline GrayVolume apply_calibration(const IntensityThroatCalibration& cal, const GrayVolume& intensity) {
    GrayVolume out(derived_header(intensity.header(), ValueKind::throat_size, Encoding::f32), 0.0f);
    for (std::size_t i = 0; i < intensity.size(); ++i) out[i] = static_cast<float>(cal(intensity[i]));
    return out;
}

} // namespace drt
