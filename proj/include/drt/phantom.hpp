#pragma once

// Synthetic two-phase test volumes with known ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "drt/error.hpp"
#include "drt/random.hpp"
#include "drt/volume.hpp"

namespace drt {

enum class PhantomKind { sphere_pack, single_sphere, layered };

struct PhantomParams {
    /// Sphere radii in voxels. single_sphere uses radii[0].
    std::vector<double> radii{5.0};
    /// Spheres per radius for sphere_pack (parallel to radii).
    std::vector<std::size_t> counts{1};
    /// Layer thicknesses along z for layered; must sum to nz.
    std::vector<std::size_t> layers;
    /// Optional per-layer intensity; default alternates grain/pore.
    std::vector<double> layer_intensities;
    double pore_intensity = 50.0;
    double grain_intensity = 200.0;
    double noise_sigma = 0.0;
    double voxel_size_um = 28.0;
    std::uint64_t seed = 1;
};

struct Sphere {
    double cx, cy, cz, r;
};

struct Phantom {
    GrayVolume gray;
    /// 0 = grain, 1 = pore for sphere phantoms; layer index for layered.
    LabelVolume labels;
    std::vector<Sphere> spheres;
    /// Fraction of voxels labeled 1.
    double pore_fraction = 0.0;
    /// Sum of analytic sphere volumes over the domain volume (spheres only).
    double analytic_pore_fraction = 0.0;
};

namespace detail {

inline void paint_sphere(LabelVolume& lab, const Sphere& s) {
    const Dims d = lab.dims();
    const auto lo = [](double c, double r) { return static_cast<long>(std::max(0.0, std::ceil(c - r))); };
    const auto hi = [](double c, double r, std::size_t n) {
        return static_cast<long>(std::min(static_cast<double>(n - 1), std::floor(c + r)));
    };
    const double r2 = s.r * s.r;
    for (long z = lo(s.cz, s.r); z <= hi(s.cz, s.r, d.nz); ++z)
        for (long y = lo(s.cy, s.r); y <= hi(s.cy, s.r, d.ny); ++y)
            for (long x = lo(s.cx, s.r); x <= hi(s.cx, s.r, d.nx); ++x) {
                const double dx = x - s.cx, dy = y - s.cy, dz = z - s.cz;
                if (dx * dx + dy * dy + dz * dz <= r2) lab(x, y, z) = 1;
            }
}

inline bool sphere_fits(const Sphere& s, const Dims& d) {
    return s.cx - s.r >= 0 && s.cy - s.r >= 0 && s.cz - s.r >= 0 && s.cx + s.r <= double(d.nx - 1) &&
           s.cy + s.r <= double(d.ny - 1) && s.cz + s.r <= double(d.nz - 1);
}

} // namespace detail

/// Builds a grayscale volume (with additive Gaussian noise) and its label truth.
inline Phantom make_phantom(PhantomKind kind, Dims dims, const PhantomParams& p) {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8) throw Error(ErrorCode::BadParams, "phantom dims must be >= 8");
    if (!(p.noise_sigma >= 0.0)) throw Error(ErrorCode::BadParams, "noise sigma must be >= 0");

    VolumeHeader gh;
    gh.dims = dims;
    gh.voxel_size_um = p.voxel_size_um;
    gh.value_kind = ValueKind::grayscale;
    gh.element_encoding = Encoding::f32;
    Phantom out;
    out.labels = LabelVolume(derived_header(gh, ValueKind::label, Encoding::u8), 0);
    Rng rng(p.seed);

    std::vector<double> layer_value;
    switch (kind) {
        case PhantomKind::single_sphere: {
            if (p.radii.empty() || !(p.radii[0] > 0)) throw Error(ErrorCode::BadParams, "radius must be positive");
            const Sphere s{double(dims.nx / 2), double(dims.ny / 2), double(dims.nz / 2), p.radii[0]};
            if (!detail::sphere_fits(s, dims)) throw Error(ErrorCode::BadParams, "radius exceeds domain");
            out.spheres.push_back(s);
            break;
        }
        case PhantomKind::sphere_pack: {
            if (p.radii.size() != p.counts.size() || p.radii.empty())
                throw Error(ErrorCode::BadParams, "radii and counts must be non-empty and parallel");
            std::vector<std::size_t> order(p.radii.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p.radii[a] > p.radii[b]; });
            for (std::size_t idx : order) {
                const double r = p.radii[idx];
                if (!(r > 0) || 2 * r > double(dims.min() - 1)) throw Error(ErrorCode::BadParams, "radius exceeds domain");
                for (std::size_t c = 0; c < p.counts[idx]; ++c) {
                    bool placed = false;
                    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
                        const Sphere s{rng.uniform(r, double(dims.nx - 1) - r), rng.uniform(r, double(dims.ny - 1) - r),
                                       rng.uniform(r, double(dims.nz - 1) - r), r};
                        placed = std::none_of(out.spheres.begin(), out.spheres.end(), [&](const Sphere& o) {
                            const double dx = o.cx - s.cx, dy = o.cy - s.cy, dz = o.cz - s.cz;
                            const double gap = o.r + s.r + 1.0;
                            return dx * dx + dy * dy + dz * dz < gap * gap;
                        });
                        if (placed) out.spheres.push_back(s);
                    }
                    if (!placed) throw Error(ErrorCode::BadParams, "cannot place non-overlapping spheres; lower the count");
                }
            }
            break;
        }
        case PhantomKind::layered: {
            std::size_t total = 0;
            for (auto t : p.layers) total += t;
            if (p.layers.empty() || total != dims.nz || std::find(p.layers.begin(), p.layers.end(), 0u) != p.layers.end())
                throw Error(ErrorCode::BadParams, "layer thicknesses must be positive and sum to nz");
            if (p.layers.size() > 65535) throw Error(ErrorCode::BadParams, "too many layers");
            if (!p.layer_intensities.empty() && p.layer_intensities.size() != p.layers.size())
                throw Error(ErrorCode::BadParams, "layer_intensities must match layers");
            std::size_t z = 0;
            for (std::size_t li = 0; li < p.layers.size(); ++li) {
                for (std::size_t k = 0; k < p.layers[li]; ++k, ++z)
                    for (std::size_t y = 0; y < dims.ny; ++y)
                        for (std::size_t x = 0; x < dims.nx; ++x) out.labels(x, y, z) = static_cast<std::uint16_t>(li);
                layer_value.push_back(p.layer_intensities.empty() ? (li % 2 ? p.pore_intensity : p.grain_intensity)
                                                                  : p.layer_intensities[li]);
            }
            if (p.layers.size() > 255) out.labels.header().element_encoding = Encoding::u16;
            break;
        }
    }

    double sphere_volume = 0.0;
    for (const auto& s : out.spheres) {
        detail::paint_sphere(out.labels, s);
        sphere_volume += 4.0 / 3.0 * std::numbers::pi * s.r * s.r * s.r;
    }
    out.analytic_pore_fraction = sphere_volume / double(dims.count());

    out.gray = GrayVolume(gh, 0.0f);
    std::size_t pore = 0;
    for (std::size_t i = 0; i < dims.count(); ++i) {
        const auto l = out.labels[i];
        pore += (l == 1);
        double v = kind == PhantomKind::layered ? layer_value[l] : (l == 1 ? p.pore_intensity : p.grain_intensity);
        if (p.noise_sigma > 0) v += p.noise_sigma * rng.normal();
        out.gray[i] = static_cast<float>(v);
    }
    out.pore_fraction = double(pore) / double(dims.count());
    return out;
}

} // namespace drt
