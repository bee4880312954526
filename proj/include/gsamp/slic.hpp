#pragma once

#include "gsamp/error.hpp"
#include "gsamp/image.hpp"
#include "gsamp/parallel.hpp"
#include "gsamp/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace gsamp {

/// Per-pixel superpixel labels in 1..count, row-major.
struct SuperpixelMap {
    Index height = 0;
    Index width = 0;
    Index count = 0;
    std::vector<Index> labels;

    Index label(Index y, Index x) const { return labels[static_cast<std::size_t>(y * width + x)]; }

    /// Checks that labels cover 1..count with no empty group.
    void validate() const
    {
        if (labels.size() != static_cast<std::size_t>(height * width)) {
            throw ShapeError("superpixel map: label count does not match the image shape");
        }
        std::vector<char> seen(static_cast<std::size_t>(count), 0);
        for (Index l : labels) {
            if (l < 1 || l > count) {
                throw ValidationError("superpixel label " + std::to_string(l) + " outside 1.." + std::to_string(count));
            }
            seen[static_cast<std::size_t>(l - 1)] = 1;
        }
        for (Index g = 0; g < count; ++g) {
            if (!seen[static_cast<std::size_t>(g)]) {
                throw ValidationError("superpixel " + std::to_string(g + 1) + " is empty");
            }
        }
    }

    GroupPartition to_partition() const
    {
        std::vector<Index> zero_based(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            zero_based[i] = labels[i] - 1;
        }
        return GroupPartition::from_labels(zero_based);
    }

    static SuperpixelMap from_partition(const GroupPartition& part, Index height, Index width)
    {
        part.require_strict("superpixel map");
        if (part.node_count() != height * width) {
            throw ShapeError("superpixel map: partition size does not match the image shape");
        }
        SuperpixelMap m;
        m.height = height;
        m.width = width;
        m.count = part.group_count();
        m.labels.resize(static_cast<std::size_t>(part.node_count()));
        for (Index g = 0; g < part.group_count(); ++g) {
            for (Index i : part.members(g)) {
                m.labels[static_cast<std::size_t>(i)] = g + 1;
            }
        }
        return m;
    }

    /// Pixels of each superpixel that touch the image border or another
    /// superpixel (4-neighborhood), as (x, y) pairs in raster order.
    std::vector<std::vector<std::array<Index, 2>>> boundaries() const
    {
        std::vector<std::vector<std::array<Index, 2>>> out(static_cast<std::size_t>(count));
        for (Index y = 0; y < height; ++y) {
            for (Index x = 0; x < width; ++x) {
                const Index l = label(y, x);
                const bool edge = y == 0 || x == 0 || y == height - 1 || x == width - 1 || label(y - 1, x) != l ||
                                  label(y + 1, x) != l || label(y, x - 1) != l || label(y, x + 1) != l;
                if (edge) {
                    out[static_cast<std::size_t>(l - 1)].push_back({x, y});
                }
            }
        }
        return out;
    }
};

inline SuperpixelMap superpixels_from_raster(const Raster& r)
{
    if (r.channels != 1) {
        throw ValidationError("superpixel label image must be single-channel");
    }
    SuperpixelMap m;
    m.height = r.height;
    m.width = r.width;
    m.labels.assign(r.samples.begin(), r.samples.end());
    m.count = m.labels.empty() ? 0 : *std::max_element(m.labels.begin(), m.labels.end());
    m.validate();
    return m;
}

inline Raster superpixels_to_raster(const SuperpixelMap& m)
{
    if (m.count > 65535) {
        throw SizeError("superpixel map: more than 65535 labels cannot be stored in 16 bits");
    }
    Raster r;
    r.height = m.height;
    r.width = m.width;
    r.channels = 1;
    r.bit_depth = 16;
    r.samples.assign(m.labels.begin(), m.labels.end());
    return r;
}

/// sRGB in [0,1] to CIELAB under D65.
inline std::array<double, 3> rgb_to_lab(double r, double g, double b)
{
    auto lin = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
    const double rl = lin(r), gl = lin(g), bl = lin(b);
    const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
    auto f = [](double t) { return t > 216.0 / 24389.0 ? std::cbrt(t) : (24389.0 / 27.0 * t + 16.0) / 116.0; };
    const double fx = f(x), fy = f(y), fz = f(z);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct SlicOptions {
    double compactness = 10.0;
    int iterations = 10;
    unsigned threads = 0;
};

namespace detail {

/// 4-connected components of a label image; returns the component id per
/// pixel and fills the size of each component.
inline std::vector<Index> label_components(const std::vector<Index>& labels, Index h, Index w,
                                           std::vector<Index>& sizes, std::vector<Index>& owner)
{
    std::vector<Index> comp(labels.size(), -1);
    sizes.clear();
    owner.clear();
    std::vector<Index> stack;
    for (Index start = 0; start < h * w; ++start) {
        if (comp[static_cast<std::size_t>(start)] >= 0) {
            continue;
        }
        const auto id = static_cast<Index>(sizes.size());
        const Index l = labels[static_cast<std::size_t>(start)];
        sizes.push_back(0);
        owner.push_back(l);
        comp[static_cast<std::size_t>(start)] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const Index p = stack.back();
            stack.pop_back();
            ++sizes.back();
            const Index y = p / w, x = p % w;
            const Index nb[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1};
            for (Index q : nb) {
                if (q >= 0 && comp[static_cast<std::size_t>(q)] < 0 && labels[static_cast<std::size_t>(q)] == l) {
                    comp[static_cast<std::size_t>(q)] = id;
                    stack.push_back(q);
                }
            }
        }
    }
    return comp;
}

/// Keeps the largest component of every label and merges each remaining
/// (orphan) component into the largest adjacent kept superpixel, then
/// renumbers labels 1..N in raster order of first appearance.
inline void enforce_connectivity(std::vector<Index>& labels, Index h, Index w)
{
    while (true) {
        std::vector<Index> sizes, owner;
        const auto comp = label_components(labels, h, w, sizes, owner);
        std::map<Index, Index> largest; // label -> component
        std::map<Index, Index> label_size;
        for (std::size_t c = 0; c < sizes.size(); ++c) {
            const Index l = owner[c];
            auto it = largest.find(l);
            if (it == largest.end() || sizes[c] > sizes[static_cast<std::size_t>(it->second)]) {
                largest[l] = static_cast<Index>(c);
            }
        }
        for (const auto& [l, c] : largest) {
            label_size[l] = sizes[static_cast<std::size_t>(c)];
        }
        std::vector<char> kept(sizes.size(), 0);
        for (const auto& [l, c] : largest) {
            kept[static_cast<std::size_t>(c)] = 1;
        }
        if (std::all_of(kept.begin(), kept.end(), [](char k) { return k != 0; })) {
            break;
        }
        // best kept neighbor of each orphan: largest superpixel, ties to the smaller label
        std::vector<Index> target(sizes.size(), -1);
        for (Index p = 0; p < h * w; ++p) {
            const Index c = comp[static_cast<std::size_t>(p)];
            if (kept[static_cast<std::size_t>(c)]) {
                continue;
            }
            const Index y = p / w, x = p % w;
            const Index nb[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1};
            for (Index q : nb) {
                if (q < 0) {
                    continue;
                }
                const Index cq = comp[static_cast<std::size_t>(q)];
                if (cq == c || !kept[static_cast<std::size_t>(cq)]) {
                    continue;
                }
                const Index lq = labels[static_cast<std::size_t>(q)];
                Index& t = target[static_cast<std::size_t>(c)];
                if (t < 0 || label_size[lq] > label_size[t] || (label_size[lq] == label_size[t] && lq < t)) {
                    t = lq;
                }
            }
        }
        bool merged = false;
        for (Index p = 0; p < h * w; ++p) {
            const Index t = target[static_cast<std::size_t>(comp[static_cast<std::size_t>(p)])];
            if (t >= 0) {
                labels[static_cast<std::size_t>(p)] = t;
                merged = true;
            }
        }
        if (!merged) {
            break; // cannot happen on a connected pixel grid
        }
    }
    std::map<Index, Index> renumber;
    for (auto& l : labels) {
        auto [it, inserted] = renumber.try_emplace(l, static_cast<Index>(renumber.size()) + 1);
        l = it->second;
    }
}

} // namespace detail

/// Simplified SLIC: k-means in (L, a, b, x, y) with spatial weight
/// compactness / S, seeded on a regular grid of step S = sqrt(n / target)
/// and restricted to a 2S x 2S window around each center.
inline SuperpixelMap slic_superpixels(const ImageTensor& img, Index target, const SlicOptions& opt = {})
{
    if (img.channels != 3) {
        throw ParseError("slic_superpixels: expected 3 channels", 0);
    }
    const Index h = img.height;
    const Index w = img.width;
    const Index n = h * w;
    if (target < 1 || target > n) {
        throw DomainError("slic_superpixels: target count must lie in [1, pixel count]");
    }
    std::vector<std::array<double, 3>> lab(static_cast<std::size_t>(n));
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t p) {
            const Index y = static_cast<Index>(p) / w, x = static_cast<Index>(p) % w;
            lab[p] = rgb_to_lab(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
        },
        opt.threads);

    const double step = std::sqrt(static_cast<double>(n) / static_cast<double>(target));
    const auto grid_x = std::max<Index>(1, std::lround(static_cast<double>(w) / step));
    const auto grid_y = std::max<Index>(1, std::lround(static_cast<double>(h) / step));
    struct Center {
        double l, a, b, x, y;
    };
    std::vector<Center> centers;
    auto px = [&](Index y, Index x) -> const std::array<double, 3>& {
        return lab[static_cast<std::size_t>(std::clamp<Index>(y, 0, h - 1) * w + std::clamp<Index>(x, 0, w - 1))];
    };
    auto gradient = [&](Index y, Index x) {
        double g = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double dx = px(y, x + 1)[c] - px(y, x - 1)[c];
            const double dy = px(y + 1, x)[c] - px(y - 1, x)[c];
            g += dx * dx + dy * dy;
        }
        return g;
    };
    // seeds closer than three pixels would collide when perturbed
    const bool perturb = step >= 3.0;
    for (Index gy = 0; gy < grid_y; ++gy) {
        for (Index gx = 0; gx < grid_x; ++gx) {
            Index cy = std::min<Index>(h - 1, static_cast<Index>((gy + 0.5) * static_cast<double>(h) / grid_y));
            Index cx = std::min<Index>(w - 1, static_cast<Index>((gx + 0.5) * static_cast<double>(w) / grid_x));
            // move the seed to the lowest-gradient position of its 3x3 neighborhood
            double best = gradient(cy, cx);
            Index by = cy, bx = cx;
            for (Index dy = -1; dy <= 1 && perturb; ++dy) {
                for (Index dx = -1; dx <= 1; ++dx) {
                    if (cy + dy < 0 || cy + dy >= h || cx + dx < 0 || cx + dx >= w) {
                        continue;
                    }
                    const double g = gradient(cy + dy, cx + dx);
                    if (g < best) {
                        best = g;
                        by = cy + dy;
                        bx = cx + dx;
                    }
                }
            }
            const auto& c = lab[static_cast<std::size_t>(by * w + bx)];
            centers.push_back({c[0], c[1], c[2], static_cast<double>(bx), static_cast<double>(by)});
        }
    }

    const double spatial = opt.compactness / step;
    const Index cells_x = std::max<Index>(1, static_cast<Index>(std::ceil(static_cast<double>(w) / step)));
    const Index cells_y = std::max<Index>(1, static_cast<Index>(std::ceil(static_cast<double>(h) / step)));
    std::vector<Index> labels(static_cast<std::size_t>(n), 0);
    for (int it = 0; it < opt.iterations; ++it) {
        // bucket centers on a grid of cell size S so each pixel scans only nearby centers
        std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(cells_x * cells_y));
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const Index bx = std::clamp<Index>(static_cast<Index>(centers[k].x / step), 0, cells_x - 1);
            const Index by = std::clamp<Index>(static_cast<Index>(centers[k].y / step), 0, cells_y - 1);
            buckets[static_cast<std::size_t>(by * cells_x + bx)].push_back(static_cast<Index>(k));
        }
        parallel_for(
            static_cast<std::size_t>(h),
            [&](std::size_t yi) {
                const auto y = static_cast<Index>(yi);
                for (Index x = 0; x < w; ++x) {
                    const auto& p = lab[static_cast<std::size_t>(y * w + x)];
                    const Index bx = std::clamp<Index>(static_cast<Index>(x / step), 0, cells_x - 1);
                    const Index by = std::clamp<Index>(static_cast<Index>(y / step), 0, cells_y - 1);
                    double best = std::numeric_limits<double>::infinity();
                    Index best_k = -1;
                    double best_any = std::numeric_limits<double>::infinity();
                    Index best_any_k = 0;
                    for (Index oy = std::max<Index>(0, by - 2); oy <= std::min(cells_y - 1, by + 2); ++oy) {
                        for (Index ox = std::max<Index>(0, bx - 2); ox <= std::min(cells_x - 1, bx + 2); ++ox) {
                            for (Index k : buckets[static_cast<std::size_t>(oy * cells_x + ox)]) {
                                const auto& c = centers[static_cast<std::size_t>(k)];
                                const double dxy = (c.x - x) * (c.x - x) + (c.y - y) * (c.y - y);
                                const double dc = (c.l - p[0]) * (c.l - p[0]) + (c.a - p[1]) * (c.a - p[1]) +
                                                  (c.b - p[2]) * (c.b - p[2]);
                                const double d = dc + spatial * spatial * dxy;
                                const bool in_window = std::abs(c.x - x) <= step && std::abs(c.y - y) <= step;
                                if (in_window && (d < best || (d == best && k < best_k))) {
                                    best = d;
                                    best_k = k;
                                }
                                if (d < best_any || (d == best_any && k < best_any_k)) {
                                    best_any = d;
                                    best_any_k = k;
                                }
                            }
                        }
                    }
                    labels[static_cast<std::size_t>(y * w + x)] = best_k >= 0 ? best_k : best_any_k;
                }
            },
            opt.threads);
        // serial accumulation keeps the reduction order fixed
        std::vector<std::array<double, 6>> acc(centers.size(), std::array<double, 6>{});
        for (Index p = 0; p < n; ++p) {
            auto& a = acc[static_cast<std::size_t>(labels[static_cast<std::size_t>(p)])];
            const auto& v = lab[static_cast<std::size_t>(p)];
            a[0] += v[0];
            a[1] += v[1];
            a[2] += v[2];
            a[3] += static_cast<double>(p % w);
            a[4] += static_cast<double>(p / w);
            a[5] += 1.0;
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (acc[k][5] > 0.0) {
                const double inv = 1.0 / acc[k][5];
                centers[k] = {acc[k][0] * inv, acc[k][1] * inv, acc[k][2] * inv, acc[k][3] * inv, acc[k][4] * inv};
            }
        }
    }
    if (opt.iterations <= 0) {
        for (Index p = 0; p < n; ++p) {
            const Index gx = std::min<Index>(grid_x - 1, static_cast<Index>((p % w) * grid_x / w));
            const Index gy = std::min<Index>(grid_y - 1, static_cast<Index>((p / w) * grid_y / h));
            labels[static_cast<std::size_t>(p)] = gy * grid_x + gx;
        }
    }
    detail::enforce_connectivity(labels, h, w);
    SuperpixelMap m;
    m.height = h;
    m.width = w;
    m.labels = std::move(labels);
    m.count = *std::max_element(m.labels.begin(), m.labels.end());
    return m;
}

} // namespace gsamp
