#pragma once

#include "freqlens/dataset.hpp"
#include "freqlens/errors.hpp"
#include "freqlens/io_util.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

namespace freqlens {

// Values above 1 + this tolerance get a warning attached to the sweep. The
// row-normalized estimator is not mathematically bounded by 1, so values are
// reported as computed rather than clamped.
inline constexpr double kLfrOvershootTolerance = 1e-6;

// Grid of filter widths. Each entry is 1/delta: the variance of the
// Gaussian's Fourier transform, i.e. the frequency width outside which the
// filter suppresses power.
struct FilterWidthGrid {
    std::vector<double> widths;

    static constexpr double kDefaultLo = 1e-1;
    static constexpr double kDefaultHi = 1e3;
    static constexpr int kDefaultCount = 40;

    static FilterWidthGrid log_spaced(double lo, double hi, int count) {
        if (!(lo > 0.0) || !(hi > lo) || count < 2) {
            throw invalid_parameter_error("log_spaced grid needs 0 < lo < hi and count >= 2");
        }
        FilterWidthGrid grid;
        grid.widths.resize(static_cast<std::size_t>(count));
        const double log_lo = std::log10(lo);
        const double log_hi = std::log10(hi);
        for (int i = 0; i < count; ++i) {
            grid.widths[static_cast<std::size_t>(i)] =
                std::pow(10.0, log_lo + (log_hi - log_lo) * i / (count - 1));
        }
        grid.widths.front() = lo;
        grid.widths.back() = hi;
        return grid;
    }

    static FilterWidthGrid default_grid() { return log_spaced(kDefaultLo, kDefaultHi, kDefaultCount); }

    std::size_t size() const { return widths.size(); }

    void validate() const {
        if (widths.size() < 2) throw invalid_parameter_error("width grid needs at least 2 entries");
        for (std::size_t i = 0; i < widths.size(); ++i) {
            if (!(widths[i] > 0.0) || !std::isfinite(widths[i])) {
                throw invalid_parameter_error("width grid entries must be positive finite");
            }
            if (i > 0 && !(widths[i] > widths[i - 1])) {
                throw invalid_parameter_error("width grid must be strictly increasing");
            }
        }
    }
};

// Per-width LFR values aligned with a grid.
struct FilterSweep {
    FilterWidthGrid grid;
    std::vector<double> lfr_values;
    std::vector<std::string> warnings;
};

// Piecewise-linear derivative of an LFR sweep, reported at consecutive-pair
// midpoints.
struct RdfCurve {
    std::vector<double> midpoints;
    std::vector<double> slopes;
    bool normalized = false;
};

// G(r^2) = exp(-r^2 / (2 delta)), the Gaussian kernel with spatial variance
// delta evaluated at squared distance r^2.
inline double gaussian_kernel_weight(double squared_distance, double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw invalid_parameter_error("gaussian kernel: delta must be positive finite, got " +
                                      format_double(delta));
    }
    if (!(squared_distance >= 0.0) || !std::isfinite(squared_distance)) {
        throw invalid_parameter_error("gaussian kernel: squared distance must be nonnegative finite");
    }
    return std::exp(-squared_distance / (2.0 * delta));
}

// Dense matrix of |x_i - x_j|^2. Computed through the Gram matrix, so tiny
// negative round-off is clamped to zero; the diagonal is exactly zero.
inline Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd& points) {
    const Eigen::VectorXd sq_norms = points.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = -2.0 * (points * points.transpose());
    d2.colwise() += sq_norms;
    d2.rowwise() += sq_norms.transpose();
    d2 = d2.cwiseMax(0.0);
    d2.diagonal().setZero();
    return d2;
}

namespace detail {

inline void require_delta(double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw invalid_parameter_error("delta must be positive finite, got " + format_double(delta));
    }
}

// y^low = row-normalized kernel smoothing of the target rows.
inline Eigen::MatrixXd low_pass_from_distances(const Eigen::MatrixXd& sq_dists,
                                               const Eigen::MatrixXd& targets, double delta) {
    const Eigen::ArrayXXd kernel = (-sq_dists.array() / (2.0 * delta)).exp();
    const Eigen::ArrayXd row_mass = kernel.rowwise().sum();  // >= 1: includes the self term
    Eigen::MatrixXd low = kernel.matrix() * targets;
    low.array().colwise() /= row_mass;
    return low;
}

inline double lfr_from_distances(const Eigen::MatrixXd& sq_dists, const Eigen::MatrixXd& targets,
                                 double delta) {
    const double total_power = targets.squaredNorm();
    if (!(total_power > 0.0)) {
        throw undefined_ratio_error("LFR undefined: targets have zero power");
    }
    return low_pass_from_distances(sq_dists, targets, delta).squaredNorm() / total_power;
}

}  // namespace detail

// Row-stochastic filter matrix W[i][j] = G(x_i - x_j) / C_i with
// C_i = sum_j G(x_i - x_j). Every row sums to one and the diagonal entry is
// the row maximum.
inline Eigen::MatrixXd build_filter_weights(const Eigen::MatrixXd& points, double delta) {
    detail::require_delta(delta);
    if (points.rows() < 1) throw invalid_parameter_error("filter weights need at least one point");
    if (!points.allFinite()) throw invalid_parameter_error("filter weights: points must be finite");
    Eigen::MatrixXd w = (-pairwise_squared_distances(points).array() / (2.0 * delta)).exp();
    const Eigen::VectorXd row_mass = w.rowwise().sum();
    w.array().colwise() /= row_mass.array();
    return w;
}

// Low-frequency component y_i^low: every output row is a convex combination
// of target rows.
inline Eigen::MatrixXd low_pass_filter(const LabeledDataset& data, double delta) {
    data.validate();
    detail::require_delta(delta);
    return detail::low_pass_from_distances(pairwise_squared_distances(data.points), data.targets, delta);
}

// Low Frequency Ratio: sum_i |y_i^low|^2 / sum_i |y_i|^2.
inline double lfr(const LabeledDataset& data, double delta) {
    data.validate();
    detail::require_delta(delta);
    return detail::lfr_from_distances(pairwise_squared_distances(data.points), data.targets, delta);
}

// Evaluates the LFR across a grid of widths 1/delta. The pairwise distance
// matrix is computed once and reused for every width.
inline FilterSweep lfr_sweep(const LabeledDataset& data, const FilterWidthGrid& grid) {
    data.validate();
    grid.validate();
    const Eigen::MatrixXd sq_dists = pairwise_squared_distances(data.points);

    FilterSweep sweep;
    sweep.grid = grid;
    sweep.lfr_values.reserve(grid.size());
    for (const double width : grid.widths) {
        const double value = detail::lfr_from_distances(sq_dists, data.targets, 1.0 / width);
        if (value > 1.0 + kLfrOvershootTolerance) {
            sweep.warnings.push_back("LFR " + format_double(value) + " exceeds 1 at width " +
                                     format_double(width));
        }
        sweep.lfr_values.push_back(value);
    }
    return sweep;
}

// Ratio Density Function: linear slope of the LFR between consecutive grid
// points, reported at the pair midpoint. With normalize set, slopes are
// divided by the maximum slope whenever that maximum is positive.
inline RdfCurve rdf_from_lfr(const FilterSweep& sweep, bool normalize) {
    if (sweep.lfr_values.size() < 2) {
        throw insufficient_data_error("RDF needs at least 2 sweep points, got " +
                                      std::to_string(sweep.lfr_values.size()));
    }
    sweep.grid.validate();
    if (sweep.lfr_values.size() != sweep.grid.size()) {
        throw shape_error("sweep values and grid length mismatch");
    }

    RdfCurve curve;
    const std::size_t m = sweep.lfr_values.size() - 1;
    curve.midpoints.resize(m);
    curve.slopes.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double dw = sweep.grid.widths[k + 1] - sweep.grid.widths[k];
        curve.midpoints[k] = 0.5 * (sweep.grid.widths[k] + sweep.grid.widths[k + 1]);
        curve.slopes[k] = (sweep.lfr_values[k + 1] - sweep.lfr_values[k]) / dw;
    }
    if (normalize) {
        double max_slope = curve.slopes[0];
        for (const double s : curve.slopes) max_slope = std::max(max_slope, s);
        if (max_slope > 0.0) {
            for (double& s : curve.slopes) s /= max_slope;
        }
        curve.normalized = true;
    }
    return curve;
}

// Width at which the RDF attains its maximum. Ties break toward the smaller
// width. A curve with no strictly positive slope has no peak.
inline double rdf_peak(const RdfCurve& curve) {
    if (curve.slopes.empty()) throw insufficient_data_error("RDF curve is empty");
    std::size_t best = 0;
    for (std::size_t k = 1; k < curve.slopes.size(); ++k) {
        if (curve.slopes[k] > curve.slopes[best]) best = k;
    }
    if (!(curve.slopes[best] > 0.0)) {
        throw no_peak_error("RDF has no positive slope; the target has no resolvable peak");
    }
    return curve.midpoints[best];
}

inline std::string sweep_to_csv(const FilterSweep& sweep) {
    std::string out = "inv_delta,lfr\n";
    for (std::size_t i = 0; i < sweep.lfr_values.size(); ++i) {
        out += format_double(sweep.grid.widths[i]) + "," + format_double(sweep.lfr_values[i]) + "\n";
    }
    return out;
}

inline std::string rdf_to_csv(const RdfCurve& curve) {
    std::string out = "inv_delta_mid,rdf\n";
    for (std::size_t i = 0; i < curve.slopes.size(); ++i) {
        out += format_double(curve.midpoints[i]) + "," + format_double(curve.slopes[i]) + "\n";
    }
    return out;
}

}  // namespace freqlens
