#pragma once

// Error statistics of a run: control tracking (truth against the commanded
// circle) and estimation (estimate against truth), as box statistics.

#include <driftlab/controller.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/frames.hpp>
#include <driftlab/logs.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace driftlab::metrics {

struct BoxStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
};

/// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> v)
{
    if (v.empty()) {
        throw DomainError("box_stats: no samples");
    }
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return v[lo] + frac * (v[hi] - v[lo]);
    };
    BoxStats b;
    b.min = v.front();
    b.max = v.back();
    b.q1 = quantile(0.25);
    b.median = quantile(0.5);
    b.q3 = quantile(0.75);
    double sum = 0.0;
    for (double x : v) sum += x;
    b.mean = std::clamp(sum / static_cast<double>(v.size()), b.min, b.max);
    b.count = v.size();
    return b;
}

struct ErrorStats {
    BoxStats radius;   ///< m
    BoxStats sideslip; ///< rad
};

struct MetricsWindow {
    double t_start = -std::numeric_limits<double>::infinity();
    double t_end = std::numeric_limits<double>::infinity();

    bool contains(double t) const { return t >= t_start && t <= t_end; }
};

struct MetricsReport {
    ErrorStats tracking;                 ///< |d - r0|, |beta - beta_ref| of the truth
    std::optional<ErrorStats> estimation; ///< |d_hat - d|, |beta_hat - beta|
    double laps = 0.0;
    double lap_period = 0.0;
};

inline double distance_to(double x, double y, const controller::CircleTask& task)
{
    return std::hypot(x - task.x0, y - task.y0);
}

inline ErrorStats tracking_errors(const std::vector<logs::TrajectoryRow>& truth,
                                  const controller::CircleTask& task, const MetricsWindow& w)
{
    std::vector<double> rad;
    std::vector<double> slip;
    for (const auto& r : truth) {
        if (!w.contains(r.t)) continue;
        rad.push_back(std::abs(distance_to(r.x, r.y, task) - task.r0));
        slip.push_back(std::abs(frames::wrap_angle(r.beta - task.beta_ref)));
    }
    if (rad.empty()) {
        throw DomainError("metrics: no truth samples in the window");
    }
    return {box_stats(std::move(rad)), box_stats(std::move(slip))};
}

/// Pairs each estimate row with the nearest truth row (within align_tol) and
/// collects radius and sideslip estimation errors.
inline ErrorStats estimation_errors(const std::vector<logs::TrajectoryRow>& truth,
                                    const std::vector<logs::EstimateRow>& est,
                                    const controller::CircleTask& task, const MetricsWindow& w,
                                    double align_tol = 0.01)
{
    std::vector<double> rad;
    std::vector<double> slip;
    for (const auto& e : est) {
        if (!w.contains(e.t)) continue;
        auto it = std::lower_bound(truth.begin(), truth.end(), e.t,
                                   [](const logs::TrajectoryRow& r, double t) { return r.t < t; });
        const logs::TrajectoryRow* best = nullptr;
        double gap = std::numeric_limits<double>::infinity();
        if (it != truth.end()) {
            best = &*it;
            gap = std::abs(it->t - e.t);
        }
        if (it != truth.begin()) {
            const auto& prev = *(it - 1);
            if (std::abs(prev.t - e.t) < gap) {
                best = &prev;
                gap = std::abs(prev.t - e.t);
            }
        }
        if (best == nullptr || gap > align_tol) continue;
        rad.push_back(std::abs(distance_to(e.x, e.y, task) - distance_to(best->x, best->y, task)));
        slip.push_back(std::abs(frames::wrap_angle(e.beta - best->beta)));
    }
    if (rad.empty()) {
        throw DomainError("metrics: estimate and truth logs do not overlap");
    }
    return {box_stats(std::move(rad)), box_stats(std::move(slip))};
}

/// Laps from the unwrapped heading winding over the window.
inline double lap_count(const std::vector<logs::TrajectoryRow>& truth, const MetricsWindow& w)
{
    double winding = 0.0;
    const logs::TrajectoryRow* prev = nullptr;
    for (const auto& r : truth) {
        if (!w.contains(r.t)) continue;
        if (prev != nullptr) {
            winding += frames::wrap_angle(r.psi - prev->psi);
        }
        prev = &r;
    }
    return std::abs(winding) / (2.0 * std::numbers::pi);
}

inline MetricsReport compute_metrics(const std::vector<logs::TrajectoryRow>& truth,
                                     const std::vector<logs::EstimateRow>& est,
                                     const controller::CircleTask& task, const MetricsWindow& w = {})
{
    MetricsReport rep;
    rep.tracking = tracking_errors(truth, task, w);
    if (!est.empty()) {
        rep.estimation = estimation_errors(truth, est, task, w);
    }
    rep.laps = lap_count(truth, w);
    double t0 = std::numeric_limits<double>::infinity();
    double t1 = -std::numeric_limits<double>::infinity();
    for (const auto& r : truth) {
        if (!w.contains(r.t)) continue;
        t0 = std::min(t0, r.t);
        t1 = std::max(t1, r.t);
    }
    rep.lap_period = rep.laps > 0.0 ? (t1 - t0) / rep.laps : 0.0;
    return rep;
}

inline nlohmann::ordered_json to_json(const BoxStats& b)
{
    return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3},
            {"max", b.max}, {"mean", b.mean}, {"count", b.count}};
}

inline nlohmann::ordered_json to_json(const ErrorStats& e)
{
    return {{"radius_m", to_json(e.radius)}, {"sideslip_rad", to_json(e.sideslip)}};
}

inline nlohmann::ordered_json to_json(const MetricsReport& r)
{
    nlohmann::ordered_json j;
    j["tracking"] = to_json(r.tracking);
    if (r.estimation) {
        j["estimation"] = to_json(*r.estimation);
    }
    j["laps"] = r.laps;
    j["lap_period_s"] = r.lap_period;
    return j;
}

} // namespace driftlab::metrics
