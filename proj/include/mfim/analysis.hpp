#pragma once

// Sum rule C^S(t) = sum_r C^S_r(t), renormalized correlators C~_r = C_r / C^S,
// spatial variance, and power-law transport fits.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/model.hpp"
#include "mfim/sampling.hpp"
#include "mfim/stats.hpp"

namespace mfim {

inline constexpr double kDefaultFloor = 0.05;

struct SumRuleSeries {
    std::vector<double> times;
    std::vector<double> values;
    /// closed-form constant for MAIN_TEXT parameters
    std::optional<double> constant;
};

inline SumRuleSeries sum_rule(const CorrelatorGrid& g, const ModelParams* p = nullptr) {
    if (static_cast<int>(g.values.rows()) != g.L) throw InvalidArgument("grid must hold every offset r");
    SumRuleSeries s;
    s.times = g.times;
    for (Eigen::Index t = 0; t < g.values.cols(); ++t) s.values.push_back(g.values.col(t).sum());
    if (p && p->variant == Variant::MAIN_TEXT) s.constant = sum_rule_constant(*p);
    return s;
}

struct MitigatedGrid {
    CorrelatorGrid raw;
    SumRuleSeries sum;
    /// C~_r(t); flagged columns are left at zero
    Eigen::MatrixXd renorm;
    std::vector<bool> flagged;
    double floor = kDefaultFloor;

    std::vector<double> series(int offset) const { return CorrelatorGrid::row_vector(renorm, raw.row_of(offset)); }
};

inline MitigatedGrid renormalize(const CorrelatorGrid& g, double floor = kDefaultFloor, const ModelParams* p = nullptr) {
    MitigatedGrid m;
    m.raw = g;
    m.sum = sum_rule(g, p);
    m.floor = floor;
    m.renorm = Eigen::MatrixXd::Zero(g.values.rows(), g.values.cols());
    for (Eigen::Index t = 0; t < g.values.cols(); ++t) {
        const double s = m.sum.values[static_cast<std::size_t>(t)];
        const bool flag = std::abs(s) < floor;
        m.flagged.push_back(flag);
        if (!flag) m.renorm.col(t) = g.values.col(t) / s;
    }
    return m;
}

/// Sigma~^2(t) = sum r^2 C~_r - (sum r C~_r)^2 over unflagged times.
inline VarianceSeries spatial_variance(const MitigatedGrid& m) {
    VarianceSeries v;
    v.times = m.raw.times;
    for (Eigen::Index t = 0; t < m.renorm.cols(); ++t) {
        if (m.flagged[static_cast<std::size_t>(t)]) {
            v.values.push_back(0.0);
            v.flagged.push_back(true);
            continue;
        }
        double s1 = 0, s2 = 0;
        for (std::size_t k = 0; k < m.raw.r.size(); ++k) {
            const double w = m.renorm(static_cast<Eigen::Index>(k), t);
            s1 += m.raw.r[k] * w;
            s2 += static_cast<double>(m.raw.r[k]) * m.raw.r[k] * w;
        }
        v.values.push_back(s2 - s1 * s1);
        v.flagged.push_back(false);
    }
    return v;
}

enum class FitKind : std::uint8_t { DECAY, GROWTH };

struct FitWindow {
    double t_min = 2.0;
    double t_max = 9.0;
};

/// Decay-fit windows: Omega = 2 uses [2, 9]; other fields use [1, 5].
inline FitWindow default_fit_window(double omega) {
    if (std::abs(omega - 2.0) < 1e-12) return {2.0, 9.0};
    return {1.0, 5.0};
}

struct TransportFit {
    FitKind kind = FitKind::DECAY;
    double amplitude = 0.0;
    double z = 0.0;
    double exponent = 0.0;
    FitWindow window;
    double residual_rms = 0.0;
    std::size_t points = 0;
};

/// Log-log least squares: DECAY a t^{-1/z}, GROWTH b t^{2/z}. Points outside the
/// window, flagged, or non-positive are excluded; fewer than 5 remaining points refuse the fit.
inline TransportFit fit_power_law(const std::vector<double>& times, const std::vector<double>& values, FitWindow w,
                                  FitKind kind, const std::vector<bool>* flagged = nullptr) {
    if (times.size() != values.size()) throw InvalidArgument("times and values differ in length");
    if (!(w.t_max > w.t_min)) throw InvalidArgument("fit window must have t_max > t_min");
    std::vector<double> x, y;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < w.t_min - 1e-12 || times[k] > w.t_max + 1e-12) continue;
        if (flagged && (*flagged)[k]) continue;
        if (!(values[k] > 0.0) || !(times[k] > 0.0)) continue;
        x.push_back(times[k]);
        y.push_back(values[k]);
    }
    if (x.size() < 5)
        throw FitRefused("power-law fit needs at least 5 usable points in [" + std::to_string(w.t_min) + ", " +
                         std::to_string(w.t_max) + "], got " + std::to_string(x.size()));
    const LineFit f = fit_loglog(x, y);
    TransportFit out;
    out.kind = kind;
    out.window = w;
    out.exponent = f.slope;
    out.amplitude = std::exp(f.intercept);
    out.residual_rms = f.residual_rms;
    out.points = f.points;
    if (kind == FitKind::DECAY) {
        if (!(f.slope < 0.0)) throw FitRefused("decay fit produced a non-negative slope; z undefined");
        out.z = -1.0 / f.slope;
    } else {
        if (!(f.slope > 0.0)) throw FitRefused("growth fit produced a non-positive slope; z undefined");
        out.z = 2.0 / f.slope;
    }
    return out;
}

inline TransportFit fit_decay(const MitigatedGrid& m, FitWindow w) {
    return fit_power_law(m.raw.times, m.series(0), w, FitKind::DECAY, &m.flagged);
}

inline TransportFit fit_growth(const MitigatedGrid& m, FitWindow w) {
    const auto v = spatial_variance(m);
    return fit_power_law(v.times, v.values, w, FitKind::GROWTH, &v.flagged);
}

struct HeatmapRow {
    double t = 0.0;
    int r = 0;
    double value = 0.0;
    bool flagged = false;
};

/// Long-format (t, r, C~_r) table, |times| x L rows.
inline std::vector<HeatmapRow> export_heatmap(const MitigatedGrid& m) {
    std::vector<HeatmapRow> rows;
    for (Eigen::Index t = 0; t < m.renorm.cols(); ++t)
        for (std::size_t k = 0; k < m.raw.r.size(); ++k)
            rows.push_back({m.raw.times[static_cast<std::size_t>(t)], m.raw.r[k],
                            m.renorm(static_cast<Eigen::Index>(k), t), m.flagged[static_cast<std::size_t>(t)]});
    return rows;
}

/// Largest |r| with |C~_r(t)| above `threshold`, per time; -1 where flagged.
inline std::vector<int> light_cone_front(const MitigatedGrid& m, double threshold) {
    std::vector<int> out;
    for (Eigen::Index t = 0; t < m.renorm.cols(); ++t) {
        if (m.flagged[static_cast<std::size_t>(t)]) {
            out.push_back(-1);
            continue;
        }
        int front = 0;
        for (std::size_t k = 0; k < m.raw.r.size(); ++k)
            if (std::abs(m.renorm(static_cast<Eigen::Index>(k), t)) > threshold) front = std::max(front, std::abs(m.raw.r[k]));
        out.push_back(front);
    }
    return out;
}

/// Time average (trapezoid) of (a - b)^2 restricted to [t_min, t_max].
inline double mean_squared_difference(const std::vector<double>& t, const std::vector<double>& a,
                                      const std::vector<double>& b, double t_min, double t_max) {
    std::vector<double> tt, d;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_min - 1e-12 && t[k] <= t_max + 1e-12) {
            tt.push_back(t[k]);
            d.push_back((a[k] - b[k]) * (a[k] - b[k]));
        }
    if (tt.size() < 2) throw InvalidArgument("window holds fewer than two samples");
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < tt.size(); ++k) acc += 0.5 * (d[k] + d[k + 1]) * (tt[k + 1] - tt[k]);
    return acc / (tt.back() - tt.front());
}

/// Time average (trapezoid) of |a - b| restricted to [t_min, t_max].
inline double mean_abs_difference(const std::vector<double>& t, const std::vector<double>& a,
                                  const std::vector<double>& b, double t_min, double t_max) {
    std::vector<double> tt, d;
    for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] >= t_min - 1e-12 && t[k] <= t_max + 1e-12) {
            tt.push_back(t[k]);
            d.push_back(std::abs(a[k] - b[k]));
        }
    if (tt.size() < 2) throw InvalidArgument("window holds fewer than two samples");
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < tt.size(); ++k) acc += 0.5 * (d[k] + d[k + 1]) * (tt[k + 1] - tt[k]);
    return acc / (tt.back() - tt.front());
}

/// First time at which the sum rule drops below `level`; nullopt if it never does.
inline std::optional<double> crossing_time(const SumRuleSeries& s, double level) {
    for (std::size_t k = 0; k < s.times.size(); ++k)
        if (s.values[k] < level) return s.times[k];
    return std::nullopt;
}

}  // namespace mfim
