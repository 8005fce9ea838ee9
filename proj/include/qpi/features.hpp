// Per-grain measurements on unwrapped phase maps and the population
// statistics built from them: segmentation, mean phase, optical volume,
// threshold classification, class stats, Welch's t-test and normalized
// histograms.
#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qpi/field.hpp"
#include "qpi/population.hpp"

namespace qpi {

struct PollenMask {
    GridSpec grid;
    std::vector<bool> membership;
    std::size_t area_px = 0;
    std::size_t perimeter_px = 0; // mask/non-mask edge transitions, grid border included

    bool empty() const { return area_px == 0; }
};

struct FeatureRecord {
    std::size_t grain_id = 0;
    std::string file;
    std::size_t area_px = 0;
    double area_um2 = 0.0;
    double perimeter_um = 0.0;
    double mean_phase = 0.0;   // radians
    double max_phase = 0.0;    // radians
    double optical_volume = 0.0; // radians * um^2
    GrainLabel label = GrainLabel::unknown;
};

struct PopulationStats {
    GrainLabel label = GrainLabel::unknown;
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0; // sample (n-1) standard deviation
};

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0; // two-sided
};

// Midpoint of the two class means of the reference population table.
inline constexpr double default_classify_threshold = 6.455;

namespace detail {

// Otsu's threshold over a fixed-bin histogram of the values.
inline double otsu_threshold(const std::vector<double>& values, double lo, double hi) {
    constexpr std::size_t nbins = 256;
    std::vector<double> histo(nbins, 0.0);
    const double span = hi - lo;
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / span * nbins);
        histo[std::min(b, nbins - 1)] += 1.0;
    }
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (std::size_t b = 0; b < nbins; ++b) sum_all += static_cast<double>(b) * histo[b];
    double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
    std::size_t best_bin = 0;
    for (std::size_t b = 0; b + 1 < nbins; ++b) {
        w0 += histo[b];
        if (w0 == 0.0) continue;
        const double w1 = total - w0;
        if (w1 == 0.0) break;
        sum0 += static_cast<double>(b) * histo[b];
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_bin = b;
        }
    }
    return lo + (static_cast<double>(best_bin) + 1.0) * span / nbins;
}

inline double quantile_sorted(std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(i);
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

// Largest 4-connected component of the thresholded foreground.
inline std::vector<bool> largest_component(const std::vector<bool>& fg, std::size_t w,
                                           std::size_t h) {
    std::vector<std::int32_t> comp(fg.size(), -1);
    std::int32_t ncomp = 0;
    std::size_t best_size = 0;
    std::int32_t best = -1;
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < fg.size(); ++start) {
        if (!fg[start] || comp[start] >= 0) continue;
        const std::int32_t id = ncomp++;
        std::size_t size = 0;
        comp[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t i = queue.front();
            queue.pop_front();
            ++size;
            const std::size_t x = i % w, y = i / w;
            const std::size_t nbrs[4] = {x > 0 ? i - 1 : i, x + 1 < w ? i + 1 : i,
                                         y > 0 ? i - w : i, y + 1 < h ? i + w : i};
            for (std::size_t nb : nbrs)
                if (nb != i && fg[nb] && comp[nb] < 0) {
                    comp[nb] = id;
                    queue.push_back(nb);
                }
        }
        if (size > best_size) {
            best_size = size;
            best = id;
        }
    }
    std::vector<bool> out(fg.size(), false);
    if (best >= 0)
        for (std::size_t i = 0; i < fg.size(); ++i) out[i] = (comp[i] == best);
    return out;
}

// Fill interior holes: everything not reachable from the border through
// non-mask pixels becomes mask.
inline void fill_holes(std::vector<bool>& mask, std::size_t w, std::size_t h) {
    std::vector<bool> outside(mask.size(), false);
    std::deque<std::size_t> queue;
    auto push = [&](std::size_t i) {
        if (!mask[i] && !outside[i]) {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for (std::size_t x = 0; x < w; ++x) {
        push(x);
        push((h - 1) * w + x);
    }
    for (std::size_t y = 0; y < h; ++y) {
        push(y * w);
        push(y * w + w - 1);
    }
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const std::size_t x = i % w, y = i / w;
        if (x > 0) push(i - 1);
        if (x + 1 < w) push(i + 1);
        if (y > 0) push(i - w);
        if (y + 1 < h) push(i + w);
    }
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i] && !outside[i]) mask[i] = true;
}

inline std::size_t perimeter_transitions(const std::vector<bool>& mask, std::size_t w,
                                         std::size_t h) {
    std::size_t edges = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!mask[y * w + x]) continue;
            if (x == 0 || !mask[y * w + x - 1]) ++edges;
            if (x + 1 == w || !mask[y * w + x + 1]) ++edges;
            if (y == 0 || !mask[(y - 1) * w + x]) ++edges;
            if (y + 1 == h || !mask[(y + 1) * w + x]) ++edges;
        }
    return edges;
}

} // namespace detail

// Threshold level for automatic segmentation: Otsu seeds a foreground
// estimate, whose high quantile gives a robust peak; the final level is a
// fraction of that peak, raised for plateau-like profiles (value mass
// concentrated at the peak) and floored at the background noise level.
// A fixed fraction cannot serve both profile shapes: a hemispherical cap
// needs a low cut to keep its thin rim, a smoothed plateau needs a higher
// cut to shed its blur skirt.
inline double auto_segment_level(const PhaseMap& phase) {
    const std::vector<double>& v = phase.values;
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi - lo > 1e-12)) throw std::runtime_error("segment: no grain found (flat phase map)");

    const double seed = detail::otsu_threshold(v, lo, hi);
    std::vector<double> fg;
    for (double x : v)
        if (x >= seed) fg.push_back(x);
    if (fg.empty()) throw std::runtime_error("segment: no grain found (empty foreground)");

    // q95 rather than the extreme tail: robust against isolated 2*pi spikes
    // that congruent unwrapping can leave on residue-laden rims.
    const double peak = detail::quantile_sorted(fg, 0.95);
    if (!(peak > 0.0)) throw std::runtime_error("segment: no grain found (non-positive peak)");
    double concentrated = 0.0;
    for (double x : fg)
        if (x >= 0.8 * peak) concentrated += 1.0;
    const double conc = concentrated / static_cast<double>(fg.size());
    // Cap-like profiles cut at ~0.15 of the peak to keep the thin rim;
    // plateau-like ones cut near half height, which puts the boundary at the
    // blurred edge's midpoint and sheds the skirt. Hemispherical caps measure
    // conc ~0.45 and plateaus ~0.94, so the ramp sits in the gap.
    const double beta = 0.15 + 0.35 * std::clamp((conc - 0.55) / 0.30, 0.0, 1.0);

    // Background floor from the 8-px border frame.
    const std::size_t w = phase.grid.width, h = phase.grid.height;
    double bsum = 0.0, bsum2 = 0.0;
    std::size_t bcount = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (x < 8 || y < 8 || x + 8 >= w || y + 8 >= h) {
                const double val = v[y * w + x];
                bsum += val;
                bsum2 += val * val;
                ++bcount;
            }
    const double bmean = bsum / static_cast<double>(bcount);
    const double bstd = std::sqrt(std::max(0.0, bsum2 / static_cast<double>(bcount) - bmean * bmean));

    return std::max({beta * peak, bmean + 4.0 * bstd, 1e-6});
}

// Threshold, keep the largest 4-connected component, fill interior holes.
inline PollenMask segment(const PhaseMap& phase, std::optional<double> level = std::nullopt) {
    if (phase.wrapped) throw std::invalid_argument("segment: phase must be unwrapped");
    if (!phase.finite()) throw std::invalid_argument("segment: non-finite phase");
    const std::size_t w = phase.grid.width, h = phase.grid.height;

    const double t = level ? *level : auto_segment_level(phase);
    std::vector<bool> fg(phase.values.size(), false);
    std::size_t nfg = 0;
    for (std::size_t i = 0; i < fg.size(); ++i)
        if (phase.values[i] >= t) {
            fg[i] = true;
            ++nfg;
        }
    if (nfg == 0) throw std::runtime_error("segment: no grain found (empty foreground)");

    std::vector<bool> mask = detail::largest_component(fg, w, h);
    detail::fill_holes(mask, w, h);

    PollenMask out;
    out.grid = phase.grid;
    out.membership = std::move(mask);
    out.area_px = static_cast<std::size_t>(
        std::count(out.membership.begin(), out.membership.end(), true));
    if (out.area_px == 0) throw std::runtime_error("segment: no grain found");
    out.perimeter_px = detail::perimeter_transitions(out.membership, w, h);
    return out;
}

inline double mean_phase(const PhaseMap& phase, const PollenMask& mask) {
    if (phase.wrapped) throw std::invalid_argument("mean_phase: phase must be unwrapped");
    require_same_grid(phase.grid, mask.grid, "mean_phase");
    if (mask.empty()) throw std::invalid_argument("mean_phase: empty mask");
    double acc = 0.0;
    for (std::size_t i = 0; i < phase.values.size(); ++i)
        if (mask.membership[i]) acc += phase.values[i];
    return acc / static_cast<double>(mask.area_px);
}

inline double optical_volume(const PhaseMap& phase, const PollenMask& mask, const GridSpec& grid) {
    if (phase.wrapped) throw std::invalid_argument("optical_volume: phase must be unwrapped");
    require_same_grid(phase.grid, mask.grid, "optical_volume");
    require_same_grid(phase.grid, grid, "optical_volume");
    if (mask.empty()) throw std::invalid_argument("optical_volume: empty mask");
    double acc = 0.0;
    for (std::size_t i = 0; i < phase.values.size(); ++i)
        if (mask.membership[i]) acc += phase.values[i];
    return acc * grid.pixel_pitch * grid.pixel_pitch;
}

// Mean phase at or above the threshold counts as viable.
inline GrainLabel classify(double mean_phase_value, double threshold = default_classify_threshold) {
    if (!std::isfinite(mean_phase_value)) throw std::invalid_argument("classify: non-finite input");
    return mean_phase_value >= threshold ? GrainLabel::viable : GrainLabel::nonviable;
}

inline FeatureRecord extract_features(const PhaseMap& unwrapped, const PollenMask& mask,
                                      std::size_t grain_id,
                                      double threshold = default_classify_threshold) {
    FeatureRecord rec;
    rec.grain_id = grain_id;
    rec.area_px = mask.area_px;
    const double q = unwrapped.grid.pixel_pitch;
    rec.area_um2 = static_cast<double>(mask.area_px) * q * q;
    rec.perimeter_um = static_cast<double>(mask.perimeter_px) * q;
    rec.mean_phase = mean_phase(unwrapped, mask);
    rec.optical_volume = optical_volume(unwrapped, mask, unwrapped.grid);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < unwrapped.values.size(); ++i)
        if (mask.membership[i]) mx = std::max(mx, unwrapped.values[i]);
    rec.max_phase = mx;
    rec.label = classify(rec.mean_phase, threshold);
    return rec;
}

// Sample mean and (n-1) standard deviation of mean_phase per class; classes
// with fewer than two members are rejected.
inline std::vector<PopulationStats> population_stats(const std::vector<FeatureRecord>& records,
                                                     bool include_unknown = false) {
    std::map<GrainLabel, std::vector<double>> groups;
    for (const auto& r : records) {
        if (r.label == GrainLabel::unknown && !include_unknown) continue;
        groups[r.label].push_back(r.mean_phase);
    }
    std::vector<PopulationStats> out;
    for (auto& [label, vals] : groups) {
        if (vals.size() < 2)
            throw std::invalid_argument(std::string("population_stats: class ") + to_string(label) +
                                        " has fewer than 2 records");
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        PopulationStats s;
        s.label = label;
        s.n = vals.size();
        s.mean = mean;
        s.std = std::sqrt(ss / static_cast<double>(vals.size() - 1));
        out.push_back(s);
    }
    return out;
}

// Welch's unequal-variance t-test, two-sided p via the Student t CDF with
// Welch-Satterthwaite degrees of freedom. t is signed as mean_b - mean_a.
inline WelchResult welch_t(const PopulationStats& a, const PopulationStats& b) {
    if (a.n < 2 || b.n < 2) throw std::invalid_argument("welch_t: both classes need n >= 2");
    if (a.std < 0.0 || b.std < 0.0) throw std::invalid_argument("welch_t: negative std");
    const double va = a.std * a.std / static_cast<double>(a.n);
    const double vb = b.std * b.std / static_cast<double>(b.n);
    if (!(va + vb > 0.0))
        throw std::invalid_argument("welch_t: degenerate variances (both classes constant)");
    WelchResult r;
    r.t = (b.mean - a.mean) / std::sqrt(va + vb);
    r.dof = (va + vb) * (va + vb) /
            (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
    boost::math::students_t_distribution<double> dist(r.dof);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    double density = 0.0;
};

// Normalized histogram with bins covering [0, max + bin_width); densities
// integrate to one.
inline std::vector<HistogramBin> histogram(const std::vector<double>& values, double bin_width) {
    if (values.empty()) throw std::invalid_argument("histogram: empty input");
    if (!(bin_width > 0.0)) throw std::invalid_argument("histogram: bin_width must be > 0");
    double mx = 0.0;
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("histogram: values must be finite and >= 0");
        mx = std::max(mx, v);
    }
    const auto nbins = static_cast<std::size_t>(std::floor(mx / bin_width)) + 1;
    std::vector<HistogramBin> bins(nbins);
    for (std::size_t b = 0; b < nbins; ++b) {
        bins[b].left = static_cast<double>(b) * bin_width;
        bins[b].right = static_cast<double>(b + 1) * bin_width;
    }
    const double unit = 1.0 / (static_cast<double>(values.size()) * bin_width);
    for (double v : values) {
        auto b = static_cast<std::size_t>(v / bin_width);
        bins[std::min(b, nbins - 1)].density += unit;
    }
    return bins;
}

} // namespace qpi
