#pragma once

#include "salt/core.hpp"
#include "salt/label_tree.hpp"
#include "salt/rng.hpp"

namespace salt {

/// The 10-node fixture hierarchy used by the toy harness:
/// root -> {background, body}; body -> {thoracic_cavity, other_body};
/// thoracic_cavity -> {lungs, mediastinum, other_thx};
/// lungs -> {lung_left, lung_right}.
inline LabelTree make_t1_tree() {
    return parse_tree("0\t-\troot\n"
                      "1\t0\tbackground\n"
                      "2\t0\tbody\n"
                      "3\t2\tthoracic_cavity\n"
                      "4\t2\tother_body\n"
                      "5\t3\tlungs\n"
                      "6\t3\tmediastinum\n"
                      "7\t3\tother_thx\n"
                      "8\t5\tlung_left\n"
                      "9\t5\tlung_right\n");
}

struct PhantomConfig {
    GridDims dims{48, 48, 48};
    Spacing spacing{1.5, 1.5, 1.5};
    double noise_sigma = 5.0; // Hounsfield units
};

/// Synthetic nested-anatomy volume: ellipsoidal body, thoracic cavity inside
/// it, two lung ellipsoids and a mediastinum box inside that; the "other"
/// leaves fill each parent's remainder. Intensities are per-leaf Hounsfield
/// means plus Gaussian noise.
struct Phantom {
    Volume<float> intensity;
    LabelVolume labels;
    std::uint64_t seed = 0;
};

namespace detail {

struct Ellipsoid {
    double cx, cy, cz; // fractions of the grid
    double rx, ry, rz;

    bool contains(double fx, double fy, double fz) const {
        const double dx = (fx - cx) / rx;
        const double dy = (fy - cy) / ry;
        const double dz = (fz - cz) / rz;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

struct Box {
    double x0, x1, y0, y1, z0, z1;

    bool contains(double fx, double fy, double fz) const {
        return fx >= x0 && fx <= x1 && fy >= y0 && fy <= y1 && fz >= z0 && fz <= z1;
    }
};

} // namespace detail

/// Deterministic per seed. The tree must provide the T1 leaf names
/// (background, other_body, other_thx, mediastinum, lung_left, lung_right);
/// ids are looked up by name so reordered trees work too.
inline Phantom generate_phantom(const PhantomConfig& config, const LabelTree& tree,
                                std::uint64_t seed) {
    const auto& d = config.dims;
    if (d.x < 16 || d.y < 16 || d.z < 16)
        throw std::invalid_argument("generate_phantom: dims too small for nested regions "
                                    "(need at least 16 voxels per axis)");

    auto id_of = [&](const char* name) {
        const auto id = tree.find(name);
        if (!id)
            throw std::invalid_argument(std::string("generate_phantom: tree lacks leaf '") +
                                        name + "'");
        return static_cast<std::uint16_t>(*id);
    };
    const std::uint16_t background = id_of("background");
    const std::uint16_t other_body = id_of("other_body");
    const std::uint16_t other_thx = id_of("other_thx");
    const std::uint16_t mediastinum = id_of("mediastinum");
    const std::uint16_t lung_left = id_of("lung_left");
    const std::uint16_t lung_right = id_of("lung_right");

    // Region shapes in grid fractions; containment is enforced by assigning
    // each voxel to the innermost region whose ancestors it also lies in.
    const detail::Ellipsoid body{0.5, 0.5, 0.5, 0.47, 0.47, 0.48};
    const detail::Ellipsoid thorax{0.5, 0.5, 0.52, 0.36, 0.36, 0.40};
    const detail::Ellipsoid lungL{0.32, 0.5, 0.55, 0.15, 0.22, 0.27};
    const detail::Ellipsoid lungR{0.68, 0.5, 0.55, 0.15, 0.22, 0.27};
    const detail::Box medi{0.38, 0.62, 0.26, 0.74, 0.28, 0.80};

    // Hounsfield-like means per leaf, spread far enough apart for the toy
    // network to separate all classes from intensity alone.
    std::vector<double> mean_hu(tree.node_count(), 0.0);
    mean_hu[background] = -1000.0;
    mean_hu[other_body] = 1000.0;
    mean_hu[other_thx] = 300.0;
    mean_hu[mediastinum] = 650.0;
    mean_hu[lung_left] = -400.0;
    mean_hu[lung_right] = -50.0;

    Phantom ph;
    ph.seed = seed;
    ph.intensity = Volume<float>(d, 0.0f, config.spacing);
    ph.labels = LabelVolume(d, background, config.spacing);

    std::size_t n_thorax = 0, n_lungs = 0, n_medi = 0;
    std::mt19937_64 gen(seed);
    std::size_t v = 0;
    for (std::uint32_t z = 0; z < d.z; ++z)
        for (std::uint32_t y = 0; y < d.y; ++y)
            for (std::uint32_t x = 0; x < d.x; ++x, ++v) {
                const double fx = (x + 0.5) / d.x;
                const double fy = (y + 0.5) / d.y;
                const double fz = (z + 0.5) / d.z;

                std::uint16_t label = background;
                if (body.contains(fx, fy, fz)) {
                    label = other_body;
                    if (thorax.contains(fx, fy, fz)) {
                        ++n_thorax;
                        label = other_thx;
                        if (lungL.contains(fx, fy, fz)) {
                            label = lung_left;
                            ++n_lungs;
                        } else if (lungR.contains(fx, fy, fz)) {
                            label = lung_right;
                            ++n_lungs;
                        } else if (medi.contains(fx, fy, fz)) {
                            label = mediastinum;
                            ++n_medi;
                        }
                    }
                }
                ph.labels[v] = label;
                const double hu = mean_hu[label] + config.noise_sigma * rng::gaussian(gen);
                ph.intensity[v] = static_cast<float>(hu);
            }

    if (n_thorax == 0 || n_lungs == 0 || n_medi == 0)
        throw std::invalid_argument("generate_phantom: regions cannot nest at requested dims");
    return ph;
}

/// Clamp to [-1024, 1024] Hounsfield units, then map affinely to [0, 1].
inline Volume<float> normalize_intensity(const Volume<float>& volume) {
    Volume<float> out(volume.dims(), 0.0f, volume.spacing());
    for (std::size_t i = 0; i < volume.size(); ++i) {
        float v = std::clamp(volume[i], -1024.0f, 1024.0f);
        out[i] = (v + 1024.0f) / 2048.0f;
    }
    return out;
}

/// One random crop applied at identical offsets to both volumes; offsets are
/// uniform over all valid placements and fully determined by the seed.
inline std::pair<Volume<float>, LabelVolume> random_crop(const Volume<float>& intensity,
                                                         const LabelVolume& labels,
                                                         GridDims size, std::uint64_t seed) {
    const auto& d = intensity.dims();
    if (labels.dims() != d)
        throw std::invalid_argument("random_crop: volume dimensions differ");
    if (size.x > d.x || size.y > d.y || size.z > d.z)
        throw std::invalid_argument("random_crop: crop size exceeds volume");

    std::mt19937_64 gen(seed);
    const std::uint32_t ox = static_cast<std::uint32_t>(rng::below(gen, d.x - size.x + 1));
    const std::uint32_t oy = static_cast<std::uint32_t>(rng::below(gen, d.y - size.y + 1));
    const std::uint32_t oz = static_cast<std::uint32_t>(rng::below(gen, d.z - size.z + 1));

    Volume<float> ci(size, 0.0f, intensity.spacing());
    LabelVolume cl(size, 0, labels.spacing());
    for (std::uint32_t z = 0; z < size.z; ++z)
        for (std::uint32_t y = 0; y < size.y; ++y)
            for (std::uint32_t x = 0; x < size.x; ++x) {
                ci(x, y, z) = intensity(ox + x, oy + y, oz + z);
                cl(x, y, z) = labels(ox + x, oy + y, oz + z);
            }
    return {std::move(ci), std::move(cl)};
}

} // namespace salt
