#pragma once

#include "gsamp/coherence.hpp"
#include "gsamp/decoder.hpp"
#include "gsamp/error.hpp"
#include "gsamp/image.hpp"
#include "gsamp/random.hpp"
#include "gsamp/sampling.hpp"
#include "gsamp/slic.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace gsamp {

/// SNR reported for exact recovery.
inline constexpr double snr_cap_db = 300.0;

/// 20 log10(||x|| / ||x - xstar||), capped at snr_cap_db.
inline double snr_db(const Eigen::VectorXd& x, const Eigen::VectorXd& xstar)
{
    if (x.size() != xstar.size()) {
        throw ShapeError("snr: reference and estimate differ in length");
    }
    const double ref = x.norm();
    if (!(ref > 0.0)) {
        throw DomainError("snr: zero reference signal");
    }
    const double err = (x - xstar).norm();
    if (err == 0.0) {
        return snr_cap_db;
    }
    return std::min(snr_cap_db, 20.0 * std::log10(ref / err));
}

struct EmulatedLabels {
    std::vector<int> labels;  ///< 0/1 per draw
    Eigen::VectorXd y_tilde;  ///< label * |N_l|^{1/2} per draw
    Eigen::VectorXd y;        ///< label * beta^{-1/2} per sampled row
};

/// A drawn group is labeled 1 when the mean of the binary ground truth over
/// it is strictly above 0.5.
inline EmulatedLabels emulate_labels(const Eigen::VectorXd& truth, const GroupPartition& part, const SampleDraw& draw)
{
    if (truth.size() != part.node_count()) {
        throw ShapeError("emulate_labels: ground truth length does not match the partition");
    }
    EmulatedLabels out;
    const auto s = static_cast<Index>(draw.omega.size());
    out.labels.resize(static_cast<std::size_t>(s));
    out.y_tilde.resize(s);
    std::vector<double> rows;
    for (Index j = 0; j < s; ++j) {
        const Index l = draw.omega[static_cast<std::size_t>(j)];
        const auto& mem = part.members(l);
        double mean = 0.0;
        for (Index i : mem) {
            mean += truth[i];
        }
        mean /= static_cast<double>(mem.size());
        const int label = mean > 0.5 ? 1 : 0;
        out.labels[static_cast<std::size_t>(j)] = label;
        out.y_tilde[j] = label * std::sqrt(static_cast<double>(mem.size()));
        for (Index i : mem) {
            rows.push_back(label * part.node_scale()[i]);
        }
    }
    out.y = Eigen::Map<Eigen::VectorXd>(rows.data(), static_cast<Index>(rows.size()));
    return out;
}

/// 1 where the estimate is strictly above `threshold`.
inline std::vector<std::uint8_t> threshold_mask(const Eigen::VectorXd& estimate, double threshold = 0.5)
{
    std::vector<std::uint8_t> m(static_cast<std::size_t>(estimate.size()));
    for (Index i = 0; i < estimate.size(); ++i) {
        m[static_cast<std::size_t>(i)] = estimate[i] > threshold ? 1 : 0;
    }
    return m;
}

struct SyntheticScene {
    ImageTensor image;
    Eigen::VectorXd truth; ///< 1 on the object, row-major
};

/// Two-region test image: a striped (orange and near-black) ellipse with a
/// thin tail on a smooth blue-green background with a horizontal shading
/// ramp, plus Gaussian noise.
inline SyntheticScene synthetic_two_region(Index height, Index width, std::uint64_t seed, double noise = 0.03,
                                           Index stripe_period = 3)
{
    if (stripe_period < 1) {
        throw DomainError("synthetic_two_region: stripe period must be positive");
    }
    SyntheticScene sc;
    sc.image = ImageTensor::zeros(height, width, 3);
    sc.truth = Eigen::VectorXd::Zero(height * width);
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, noise);
    const double cy = 0.5 * height, cx = 0.42 * width;
    const double ry = 0.28 * height, rx = 0.22 * width;
    for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) {
            const double ey = (y - cy) / ry, ex = (x - cx) / rx;
            const bool body = ey * ey + ex * ex <= 1.0;
            const bool tail = std::abs(y - cy) <= 0.05 * height && x >= cx && x <= 0.85 * width;
            const bool obj = body || tail;
            sc.truth[y * width + x] = obj ? 1.0 : 0.0;
            double base[3];
            if (obj) {
                const bool light = ((x + y / 2) / stripe_period) % 2 == 0;
                base[0] = light ? 0.95 : 0.1;
                base[1] = light ? 0.55 : 0.08;
                base[2] = light ? 0.1 : 0.05;
            } else {
                const double ramp = static_cast<double>(x) / static_cast<double>(std::max<Index>(1, width - 1));
                base[0] = 0.3 + 0.1 * ramp;
                base[1] = 0.55;
                base[2] = 0.35 + 0.1 * ramp;
            }
            for (int c = 0; c < 3; ++c) {
                sc.image.at(y, x, c) = std::clamp(base[c] + gauss(rng), 0.0, 1.0);
            }
        }
    }
    return sc;
}

/// Everything label-independent that the segmentation decoders need.
struct SegmentationModel {
    ImageTensor image;
    SuperpixelMap superpixels;
    std::shared_ptr<const GroupPartition> partition;
    std::shared_ptr<const SparseGraph> graph;
    std::optional<Laplacian> laplacian;
    Eigen::SparseMatrix<double> reduced;
    double lambda_max = 0.0;         ///< upper estimate for L
    double reduced_lambda_max = 0.0; ///< upper estimate for the reduced Laplacian
    double graph_ms = 0.0;
    double reduced_ms = 0.0;
    KnnGraphInfo knn;
};

struct SegmentationModelOptions {
    Index superpixels = 60;
    SlicOptions slic;
    Index k_nn = 9;
    double sigma_percentile = 25.0;
    unsigned threads = 0;
};

inline SegmentationModel build_segmentation_model(const ImageTensor& img, const SegmentationModelOptions& opt,
                                                  const SuperpixelMap* given = nullptr)
{
    if (img.height * img.width < opt.k_nn + 1) {
        throw DomainError("segmentation: image has fewer pixels than k_nn + 1");
    }
    SegmentationModel m;
    m.image = img;
    detail::Stopwatch sw;
    SlicOptions so = opt.slic;
    so.threads = opt.threads;
    m.superpixels = given ? *given : slic_superpixels(img, opt.superpixels, so);
    if (m.superpixels.height != img.height || m.superpixels.width != img.width) {
        throw ShapeError("segmentation: superpixel map does not match the image");
    }
    m.partition = std::make_shared<const GroupPartition>(m.superpixels.to_partition());
    m.graph = std::make_shared<const SparseGraph>(image_graph(img, opt.k_nn, opt.sigma_percentile, &m.knn, opt.threads));
    m.laplacian = build_laplacian(m.graph, LaplacianVariant::combinatorial);
    m.lambda_max = estimate_lambda_max(*m.laplacian);
    m.graph_ms = sw.millis();
    detail::Stopwatch sr;
    m.reduced = build_reduced_laplacian(*m.laplacian, *m.partition, SmoothnessFilter::identity());
    const auto& lt = m.reduced;
    m.reduced_lambda_max =
        operator_norm_estimate([&lt](const Eigen::VectorXd& z) -> Eigen::VectorXd { return lt * z; }, lt.rows());
    m.reduced_ms = sr.millis();
    return m;
}

enum class SegmentationDecoder {
    fast,          ///< reduced problem over the N groups only
    full,          ///< pixel-level problem from a zero start
    fast_then_full ///< pixel-level problem initialized by the lifted reduced solution
};

struct SegmentationDecodeOptions {
    SegmentationDecoder decoder = SegmentationDecoder::fast_then_full;
    double gamma = 0.0; ///< 0 selects the equality-constrained limit
    ConstrainedOptions constrained{1e-8, 5000, DuplicatePolicy::strict, std::nullopt, 0.0};
    SolverOptions solver{1e-10, 5000, std::nullopt, true};
};

struct SegmentationDecode {
    std::optional<DecodeResult> fast;
    std::optional<DecodeResult> full;

    const Eigen::VectorXd& estimate() const { return full ? full->estimate : fast->estimate; }
};

/// Reconstructs the label signal from per-draw labels with the chosen decoder.
inline SegmentationDecode decode_labels(const SegmentationModel& model, const SampleDraw& draw,
                                        const std::vector<int>& labels, const SegmentationDecodeOptions& opt = {})
{
    if (labels.size() != draw.omega.size()) {
        throw ShapeError("decode_labels: one label per draw is required");
    }
    if (draw.omega.empty()) {
        throw DomainError("decode_labels: nothing to reconstruct from zero labels");
    }
    const SampleOperators ops(model.partition, draw);
    const auto& part = *model.partition;
    Eigen::VectorXd y_tilde(ops.s());
    Eigen::VectorXd y(ops.m());
    for (Index j = 0; j < ops.s(); ++j) {
        const int label = labels[static_cast<std::size_t>(j)];
        if (label != 0 && label != 1) {
            throw ValidationError("decode_labels: labels must be 0 or 1");
        }
        const auto& mem = part.members(draw.omega[static_cast<std::size_t>(j)]);
        y_tilde[j] = label * std::sqrt(static_cast<double>(mem.size()));
        for (std::size_t r = 0; r < mem.size(); ++r) {
            y[ops.offset(j) + static_cast<Index>(r)] = label * part.node_scale()[mem[r]];
        }
    }
    SegmentationDecode out;
    const bool constrained = !(opt.gamma > 0.0);
    const auto g = SmoothnessFilter::identity();
    if (opt.decoder != SegmentationDecoder::full) {
        if (constrained) {
            auto co = opt.constrained;
            co.lipschitz = model.reduced_lambda_max;
            out.fast = constrained_decode_reduced(model.reduced, ops, y_tilde, co);
        } else {
            out.fast = fast_decode(model.reduced, ops, y_tilde, opt.gamma, opt.solver);
        }
    }
    if (opt.decoder != SegmentationDecoder::fast) {
        std::optional<Eigen::VectorXd> init;
        if (opt.decoder == SegmentationDecoder::fast_then_full) {
            init = out.fast->estimate;
        }
        if (constrained) {
            auto co = opt.constrained;
            co.lipschitz = model.lambda_max;
            co.initial = init;
            out.full = constrained_decode_full(*model.laplacian, g, ops, y, co);
        } else {
            auto so = opt.solver;
            so.initial = init;
            out.full = full_decode(*model.laplacian, g, ops, y, opt.gamma, so);
        }
    }
    return out;
}

/// Labels accumulated per group (0-based id -> 0/1) turned into a draw that
/// visits every labeled group once, in ascending id order.
inline std::pair<SampleDraw, std::vector<int>> draw_from_labels(const std::map<Index, int>& labels,
                                                                const SamplingDistribution& dist)
{
    SampleDraw d;
    d.dist = dist;
    std::vector<int> vals;
    for (const auto& [g, v] : labels) {
        d.omega.push_back(g);
        vals.push_back(v);
    }
    return {std::move(d), std::move(vals)};
}

} // namespace gsamp
