#include "rowserve/lime.hpp"

#include <cmath>
#include <future>
#include <random>
#include <thread>

namespace rowserve::lime {

int SegmentationSpec::segment_count() const {
    if (const auto* t = std::get_if<TabularSegmentation>(&kind)) return t->feature_count;
    return std::get<GridSegmentation>(kind).segment_count();
}

void SegmentationSpec::validate() const {
    if (const auto* t = std::get_if<TabularSegmentation>(&kind)) {
        if (t->feature_count < 1) throw ConfigError("segmentation needs featureCount >= 1");
        if (t->neutral_values.size() != static_cast<size_t>(t->feature_count)) {
            throw ConfigError("neutralValues length " + std::to_string(t->neutral_values.size()) +
                              " != featureCount " + std::to_string(t->feature_count));
        }
        return;
    }
    const auto& g = std::get<GridSegmentation>(kind);
    if (g.width < 1 || g.height < 1 || g.cell_w < 1 || g.cell_h < 1) {
        throw ConfigError("grid segmentation needs positive dimensions");
    }
}

void LimeConfig::validate() const {
    if (num_samples < 1) throw ConfigError("lime numSamples must be >= 1");
    if (kernel_width <= 0) throw ConfigError("lime kernelWidth must be positive");
    if (l1_penalty && (*l1_penalty < 0 || !std::isfinite(*l1_penalty))) {
        throw ConfigError("lime l1Penalty must be finite and non-negative");
    }
    if (on_probability <= 0 || on_probability >= 1) {
        throw ConfigError("lime onProbability must be in (0, 1)");
    }
}

std::vector<int> segment_grid(int width, int height, int cell_w, int cell_h) {
    if (width < 1 || height < 1 || cell_w < 1 || cell_h < 1) {
        throw ConfigError("segment_grid needs positive dimensions");
    }
    int cells_x = (width + cell_w - 1) / cell_w;
    std::vector<int> map(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            map[static_cast<size_t>(y) * width + x] = (y / cell_h) * cells_x + (x / cell_w);
        }
    }
    return map;
}

namespace {

// Portable uniform in [0, 1): raw engine output, not std::bernoulli_distribution,
// so mask streams are identical across standard libraries.
double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<Mask> sample_masks(int d, const LimeConfig& config) {
    if (d < 1) throw ConfigError("sample_masks needs d >= 1");
    std::vector<Mask> masks;
    masks.reserve(static_cast<size_t>(config.num_samples));
    masks.emplace_back(static_cast<size_t>(d), uint8_t{1});  // anchor: the unperturbed instance
    std::mt19937_64 rng(config.seed);
    for (int s = 1; s < config.num_samples; ++s) {
        Mask m(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) {
            m[static_cast<size_t>(j)] = next_unit(rng) < config.on_probability ? 1 : 0;
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

Instance perturb(const Instance& instance, const Mask& mask, const SegmentationSpec& seg) {
    if (static_cast<int>(mask.size()) != seg.segment_count()) {
        throw ConfigError("mask length " + std::to_string(mask.size()) +
                          " != segment count " + std::to_string(seg.segment_count()));
    }
    if (const auto* t = std::get_if<TabularSegmentation>(&seg.kind)) {
        const auto& feats = instance.features();
        if (feats.size() != mask.size()) {
            throw ConfigError("instance has " + std::to_string(feats.size()) +
                              " features, segmentation declares " + std::to_string(mask.size()));
        }
        std::vector<double> out(feats.size());
        for (size_t j = 0; j < feats.size(); ++j) {
            out[j] = mask[j] ? feats[j] : t->neutral_values[j];
        }
        return Instance::tabular(std::move(out));
    }
    const auto& g = std::get<GridSegmentation>(seg.kind);
    const Image& img = instance.img();
    if (img.width != g.width || img.height != g.height ||
        img.rgb.size() != static_cast<size_t>(g.width) * g.height * 3) {
        throw ConfigError("image does not match grid dimensions");
    }
    Image out = img;
    int cells_x = g.cells_x();
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            int segment = (y / g.cell_h) * cells_x + (x / g.cell_w);
            if (mask[static_cast<size_t>(segment)]) continue;
            size_t off = (static_cast<size_t>(y) * g.width + x) * 3;
            out.rgb[off] = g.neutral_color[0];
            out.rgb[off + 1] = g.neutral_color[1];
            out.rgb[off + 2] = g.neutral_color[2];
        }
    }
    return Instance::image(std::move(out));
}

double kernel_weight(const Mask& mask, double sigma) {
    if (sigma <= 0) throw ConfigError("kernel width must be positive");
    if (mask.empty()) throw ConfigError("empty mask");
    size_t on = 0;
    for (uint8_t b : mask) on += b ? 1 : 0;
    double distance = 1.0 - static_cast<double>(on) / static_cast<double>(mask.size());
    return std::exp(-(distance * distance) / (sigma * sigma));
}

namespace {

struct Sample {
    Mask mask;
    double output = 0;
    bool ok = false;
};

std::optional<Explanation> explain_one(const Instance& instance, const Blackbox& blackbox,
                                       const SegmentationSpec& seg, const LimeConfig& config,
                                       uint64_t instance_seed, ExplainStats* stats,
                                       unsigned inner_threads) {
    LimeConfig local = config;
    local.seed = instance_seed;
    int d = seg.segment_count();
    std::vector<Mask> masks = sample_masks(d, local);

    std::vector<Sample> samples(masks.size());
    for (size_t i = 0; i < masks.size(); ++i) samples[i].mask = masks[i];

    // inner parallel collection: perturb + evaluate each state sample
    std::atomic<size_t> next{0};
    auto eval_range = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= samples.size()) break;
            if (stats) stats->evaluations.fetch_add(1);
            try {
                Instance perturbed = perturb(instance, samples[i].mask, seg);
                samples[i].output = blackbox(perturbed);
                samples[i].ok = std::isfinite(samples[i].output);
            } catch (...) {
                samples[i].ok = false;
            }
            if (!samples[i].ok && stats) stats->dropped_samples.fetch_add(1);
        }
    };
    if (inner_threads <= 1 || samples.size() < 2) {
        eval_range();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < inner_threads; ++t) pool.emplace_back(eval_range);
        for (auto& t : pool) t.join();
    }

    std::vector<Mask> X;
    std::vector<double> y, w;
    for (auto& s : samples) {
        if (!s.ok) continue;
        X.push_back(std::move(s.mask));
        y.push_back(s.output);
        w.push_back(kernel_weight(X.back(), config.kernel_width));
    }
    if (static_cast<int>(X.size()) < d + 1) {
        return std::nullopt;  // too few surviving samples to identify d weights
    }

    double penalty = config.l1_penalty ? *config.l1_penalty : default_l1_penalty(X, y, w);
    LassoFit fit = fit_weighted_lasso(X, y, w, penalty);

    double wsum = 0, ybar = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        wsum += w[i];
        ybar += w[i] * y[i];
    }
    ybar /= wsum;
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        double pred = fit.intercept;
        for (size_t j = 0; j < X[i].size(); ++j) {
            if (X[i][j]) pred += fit.weights[j];
        }
        ss_res += w[i] * (y[i] - pred) * (y[i] - pred);
        ss_tot += w[i] * (y[i] - ybar) * (y[i] - ybar);
    }

    Explanation exp;
    exp.weights = std::move(fit.weights);
    exp.intercept = fit.intercept;
    exp.sample_count = static_cast<int>(X.size());
    // near-constant outputs: the fit is exact, call it 1 rather than 0/0
    double tot_floor = 1e-12 * std::max(1.0, ybar * ybar) * static_cast<double>(y.size());
    exp.weighted_r2 = ss_tot <= tot_floor ? 1.0 : 1.0 - ss_res / ss_tot;
    return exp;
}

}  // namespace

std::vector<std::optional<Explanation>> explain(const std::vector<Instance>& instances,
                                                const Blackbox& blackbox,
                                                const SegmentationSpec& seg,
                                                const LimeConfig& config, ExplainStats* stats) {
    seg.validate();
    config.validate();
    if (instances.empty()) throw ConfigError("explain needs at least one instance");
    if (config.num_samples < seg.segment_count()) {
        fprintf(stderr, "warning: lime numSamples %d < segment count %d; fit underdetermined\n",
                config.num_samples, seg.segment_count());
    }

    unsigned hw = std::max(2u, std::thread::hardware_concurrency());
    unsigned outer = std::min<unsigned>(hw, static_cast<unsigned>(instances.size()));
    unsigned inner = std::max(1u, hw / outer);

    std::vector<std::optional<Explanation>> out(instances.size());
    std::atomic<size_t> next{0};
    auto run_instances = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= instances.size()) break;
            // per-instance seed keeps runs deterministic and instances decorrelated
            out[i] = explain_one(instances[i], blackbox, seg, config,
                                 config.seed + static_cast<uint64_t>(i), stats, inner);
        }
    };
    if (outer <= 1) {
        run_instances();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < outer; ++t) pool.emplace_back(run_instances);
        for (auto& t : pool) t.join();
    }
    return out;
}

}  // namespace rowserve::lime
