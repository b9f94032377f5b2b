#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rowserve/value.hpp"

namespace rowserve::lime {

/// Raw 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    Bytes rgb;

    bool operator==(const Image& other) const {
        return width == other.width && height == other.height && rgb == other.rgb;
    }
};

struct TabularSegmentation {
    int feature_count = 0;              // d
    std::vector<double> neutral_values; // length d
};

struct GridSegmentation {
    int width = 0, height = 0;
    int cell_w = 0, cell_h = 0;
    std::array<uint8_t, 3> neutral_color = {127, 127, 127};

    int cells_x() const { return (width + cell_w - 1) / cell_w; }
    int cells_y() const { return (height + cell_h - 1) / cell_h; }
    int segment_count() const { return cells_x() * cells_y(); }
};

struct SegmentationSpec {
    std::variant<TabularSegmentation, GridSegmentation> kind;

    int segment_count() const;
    void validate() const;  // throws ConfigError
    bool tabular() const { return std::holds_alternative<TabularSegmentation>(kind); }
};

/// Boolean segment states; true = segment kept.
using Mask = std::vector<uint8_t>;

struct LimeConfig {
    int num_samples = 1000;                 // n
    double kernel_width = 0.25;             // sigma
    std::optional<double> l1_penalty;       // lambda; unset = data-driven default
    double on_probability = 0.5;            // p
    uint64_t seed = 0;

    void validate() const;
};

struct Explanation {
    std::vector<double> weights;  // length d
    double intercept = 0;
    int sample_count = 0;         // surviving samples used in the fit
    double weighted_r2 = 0;
};

struct Instance {
    std::variant<std::vector<double>, Image> v;

    static Instance tabular(std::vector<double> features) { return {std::move(features)}; }
    static Instance image(Image img) { return {std::move(img)}; }

    const std::vector<double>& features() const { return std::get<std::vector<double>>(v); }
    const Image& img() const { return std::get<Image>(v); }
    bool is_tabular() const { return std::holds_alternative<std::vector<double>>(v); }
};

/// pixel -> segment id map, dense ids in [0, d), row-major cells.
std::vector<int> segment_grid(int width, int height, int cell_w, int cell_h);

/// n masks; mask 0 is all-ones (the unperturbed anchor), the rest draw each bit
/// independently with probability p. Deterministic under seed.
std::vector<Mask> sample_masks(int d, const LimeConfig& config);

/// Segments with bit true are copied, bits false replaced by the neutral
/// value/color. All-ones returns the instance bit-exact.
Instance perturb(const Instance& instance, const Mask& mask, const SegmentationSpec& seg);

/// exp(-D^2 / sigma^2) with D = 1 - popcount(mask)/d.
double kernel_weight(const Mask& mask, double sigma);

/// Weighted lasso via cyclic coordinate descent with soft-thresholding;
/// intercept unpenalized. Converges when the largest coefficient change in a
/// sweep drops below 1e-9, capped at 10000 sweeps.
struct LassoFit {
    std::vector<double> weights;
    double intercept = 0;
};
LassoFit fit_weighted_lasso(const std::vector<Mask>& X, const std::vector<double>& y,
                            const std::vector<double>& w, double l1_penalty);

/// Data-driven default penalty: 0.01 * max_j |sum_i w_i X_ij y_i| / sum_i w_i.
double default_l1_penalty(const std::vector<Mask>& X, const std::vector<double>& y,
                          const std::vector<double>& w);

using Blackbox = std::function<double(const Instance&)>;

struct ExplainStats {
    std::atomic<uint64_t> evaluations{0};
    std::atomic<uint64_t> dropped_samples{0};
};

/// One explanation per instance, order preserved. Outer parallelism across
/// instances, inner parallelism across the perturbed samples of each instance.
/// A blackbox failure drops that sample; fewer than d+1 survivors is an error
/// for that instance (reported via the optional slot).
std::vector<std::optional<Explanation>> explain(const std::vector<Instance>& instances,
                                                const Blackbox& blackbox,
                                                const SegmentationSpec& seg,
                                                const LimeConfig& config,
                                                ExplainStats* stats = nullptr);

}  // namespace rowserve::lime
