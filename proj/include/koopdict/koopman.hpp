#pragma once

// Koopman eigenpairs on a non-recurrent trajectory grid.
//
// Row i of the grid follows the flow from the initial-manifold sample s_i and
// column j sits at time r_j. An eigenfunction restricted to the grid is
// psi_{i,j} = e^{lambda r_j} h_i, so fitting an observable q_{i,j} for fixed
// lambda is the least-squares problem min_h ||(E(lambda) kron I_n) h - b|| with
// b = vec(q) (i fastest, j slowest). The Kronecker structure decouples it into n
// scalar problems, solved in closed form. Modes are extracted greedily: each new
// pair is fitted to the residual left by the previous ones.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdict/csv.hpp"
#include "koopdict/dynsys.hpp"
#include "koopdict/error.hpp"

namespace koopdict::koopman {

using cplx = std::complex<double>;

/// Largest |Re(lambda)| * r_m admitted before e^{lambda r} is deemed to overflow.
inline constexpr double kExponentLimit = 700.0;

/// n x (m+1) samples q_{i,j} with the shared time grid and the s_i parameters.
struct ObservableGrid {
    Eigen::MatrixXcd values;
    Eigen::VectorXd times;
    Eigen::VectorXd s_params;

    ObservableGrid() = default;
    ObservableGrid(Eigen::MatrixXcd v, Eigen::VectorXd t, Eigen::VectorXd s)
        : values(std::move(v)), times(std::move(t)), s_params(std::move(s)) {
        validate();
    }

    void validate() const {
        if (values.rows() < 1 || values.cols() < 2) throw InvalidArgument("observable grid needs n >= 1, m >= 1");
        if (times.size() != values.cols()) throw InvalidArgument("observable grid: time count != column count");
        if (s_params.size() != values.rows()) throw InvalidArgument("observable grid: s count != row count");
        if (!values.allFinite()) throw NumericError("observable grid has non-finite values");
        if (times[0] != 0.0) throw InvalidArgument("observable grid: r_0 must be 0");
        const double step = times[1] - times[0];
        if (!(step > 0.0)) throw InvalidArgument("observable grid: times must ascend");
        for (Eigen::Index j = 1; j < times.size(); ++j)
            if (std::abs((times[j] - times[j - 1]) - step) > 1e-9 * std::max(1.0, std::abs(times[j])))
                throw InvalidArgument("observable grid: times must be uniform");
    }

    Eigen::Index n() const { return values.rows(); }
    Eigen::Index m() const { return values.cols() - 1; }

    /// vec(q): i fastest, j slowest.
    Eigen::VectorXcd flat() const { return Eigen::Map<const Eigen::VectorXcd>(values.data(), values.size()); }
};

using ObservableFn = std::function<cplx(const Eigen::VectorXd&)>;

inline ObservableGrid evaluate_observable(const dynsys::TrajectoryGrid& grid, const ObservableFn& q) {
    const auto n = static_cast<Eigen::Index>(grid.n());
    Eigen::MatrixXcd values(n, grid.m() + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = grid.row(static_cast<std::size_t>(i));
        for (Eigen::Index j = 0; j < row.size(); ++j) {
            const cplx v = q(row.states.col(j));
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw NumericError("observable is non-finite at grid point (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
            values(i, j) = v;
        }
    }
    return ObservableGrid(std::move(values), grid.times(), grid.s_params());
}

/// Ordered, duplicate-free candidate eigenvalues.
struct LambdaGrid {
    std::vector<cplx> candidates;

    LambdaGrid() = default;
    explicit LambdaGrid(std::vector<cplx> c) : candidates(std::move(c)) { validate(); }

    /// count points uniformly on [lo, hi] of the real axis.
    static LambdaGrid real_range(double lo, double hi, int count) { return rectangle(lo, hi, count, 0.0, 0.0, 1); }

    /// Re x Im product grid, imaginary part varying fastest.
    static LambdaGrid rectangle(double re_lo, double re_hi, int re_count, double im_lo, double im_hi, int im_count) {
        if (re_count < 1 || im_count < 1) throw InvalidArgument("lambda grid counts must be >= 1");
        if ((re_count > 1 && !(re_hi > re_lo)) || (im_count > 1 && !(im_hi > im_lo)))
            throw InvalidArgument("lambda grid bounds must ascend");
        std::vector<cplx> c;
        c.reserve(static_cast<std::size_t>(re_count) * static_cast<std::size_t>(im_count));
        auto at = [](double lo, double hi, int count, int k) {
            return count == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
        };
        for (int a = 0; a < re_count; ++a)
            for (int b = 0; b < im_count; ++b) c.emplace_back(at(re_lo, re_hi, re_count, a), at(im_lo, im_hi, im_count, b));
        return LambdaGrid(std::move(c));
    }

    void validate() const {
        if (candidates.empty()) throw InvalidArgument("lambda grid is empty");
        for (std::size_t a = 0; a < candidates.size(); ++a) {
            if (!std::isfinite(candidates[a].real()) || !std::isfinite(candidates[a].imag()))
                throw InvalidArgument("lambda grid has a non-finite candidate");
            for (std::size_t b = a + 1; b < candidates.size(); ++b)
                if (candidates[a] == candidates[b]) throw InvalidArgument("lambda grid has duplicate candidates");
        }
    }

    bool is_real_line() const {
        return std::all_of(candidates.begin(), candidates.end(), [&](cplx c) { return c.imag() == candidates[0].imag(); });
    }

    std::size_t size() const { return candidates.size(); }
};

struct EigenPair {
    cplx lambda;
    Eigen::VectorXcd h;
    /// psi_{i,j} = e^{lambda r_j} h_i
    Eigen::MatrixXcd psi;
    /// ||vec(psi) - target||_2 for the target it was fitted to.
    double fit_error = 0.0;
};

struct ErrorCurvePoint {
    cplx lambda;
    double fit_error;
    /// Rejected by the overflow guard; fit_error is +inf.
    bool overflow = false;
};

struct ScanResult {
    EigenPair best;
    std::size_t best_index = 0;
    std::vector<ErrorCurvePoint> curve;
};

struct ModeDecomposition {
    std::vector<EigenPair> modes;
    /// ||R_k||_2 for k = 0..K, R_0 = b.
    std::vector<double> residual_norms;
    std::vector<std::vector<ErrorCurvePoint>> error_curves;
    std::vector<std::size_t> selected_indices;
    Eigen::VectorXd times;
    Eigen::VectorXd s_params;
    std::string observable;
};

struct ScanOptions {
    /// Golden-section pass on the bracket around the coarse minimum (real-line grids only).
    bool refine = false;
    int refine_iterations = 60;
};

// ---------------------------------------------------------------------------

inline bool overflows(cplx lambda, const Eigen::VectorXd& times) {
    return std::abs(lambda.real()) * times.cwiseAbs().maxCoeff() > kExponentLimit;
}

/// E_j = e^{lambda r_j}.
inline Eigen::VectorXcd build_E(cplx lambda, const Eigen::VectorXd& times) {
    if (times.size() < 1) throw InvalidArgument("build_E: empty time grid");
    if (overflows(lambda, times))
        throw NumericError("build_E: e^{lambda r} overflows for lambda = (" + csv::fmt(lambda.real()) + ", " +
                           csv::fmt(lambda.imag()) + ")");
    Eigen::VectorXcd e(times.size());
    for (Eigen::Index j = 0; j < times.size(); ++j) e[j] = std::exp(lambda * times[j]);
    return e;
}

struct H0Fit {
    Eigen::VectorXcd h;
    double fit_error = 0.0;
};

/// Closed-form h minimizing ||(E kron I_n) h - vec(target)||_2 for n x (m+1)
/// `target`: h_i = sum_j conj(E_j) target_{i,j} / sum_j |E_j|^2.
inline H0Fit solve_h0(cplx lambda, const Eigen::MatrixXcd& target, const Eigen::VectorXd& times) {
    if (target.cols() != times.size()) throw InvalidArgument("solve_h0: time count != column count");
    const Eigen::VectorXcd e = build_E(lambda, times);
    const double denom = e.squaredNorm();
    if (!(denom > 0.0) || !std::isfinite(denom)) throw NumericError("solve_h0: degenerate exponential basis");
    H0Fit fit;
    fit.h = (target * e.conjugate()) / denom;
    fit.fit_error = (fit.h * e.transpose() - target).norm();
    if (!std::isfinite(fit.fit_error)) throw NumericError("solve_h0: non-finite residual");
    return fit;
}

inline H0Fit solve_h0(cplx lambda, const ObservableGrid& q) { return solve_h0(lambda, q.values, q.times); }

/// p = A(lambda) h reshaped to n x (m+1).
inline Eigen::MatrixXcd mode_grid(cplx lambda, const Eigen::VectorXcd& h, const Eigen::VectorXd& times) {
    return h * build_E(lambda, times).transpose();
}

namespace detail {

inline double fit_error_at(double re, double im, const Eigen::MatrixXcd& target, const Eigen::VectorXd& times) {
    const cplx lambda(re, im);
    if (overflows(lambda, times)) return std::numeric_limits<double>::infinity();
    return solve_h0(lambda, target, times).fit_error;
}

/// Golden-section search for the minimum of the fit error over Re(lambda) in [lo, hi].
inline double golden_section(double lo, double hi, double im, const Eigen::MatrixXcd& target,
                             const Eigen::VectorXd& times, int iterations) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = fit_error_at(c, im, target, times), fd = fit_error_at(d, im, target, times);
    for (int it = 0; it < iterations; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fit_error_at(c, im, target, times);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fit_error_at(d, im, target, times);
        }
    }
    return fc <= fd ? c : d;
}

}  // namespace detail

/// Fits every candidate to `target`; the best is the first minimum in grid order.
inline ScanResult scan_lambda(const Eigen::MatrixXcd& target, const Eigen::VectorXd& times, const LambdaGrid& grid,
                              const ScanOptions& opts = {}) {
    grid.validate();
    ScanResult out;
    out.curve.reserve(grid.size());
    std::optional<std::size_t> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const cplx lambda = grid.candidates[k];
        if (overflows(lambda, times)) {
            out.curve.push_back({lambda, std::numeric_limits<double>::infinity(), true});
            continue;
        }
        const double err = solve_h0(lambda, target, times).fit_error;
        out.curve.push_back({lambda, err, false});
        if (!best || err < best_err) {
            best = k;
            best_err = err;
        }
    }
    if (!best) throw NumericError("scan_lambda: every lambda candidate overflows");

    out.best_index = *best;
    cplx lambda = grid.candidates[*best];
    if (opts.refine && grid.size() > 1 && grid.is_real_line()) {
        const std::size_t lo = *best == 0 ? 0 : *best - 1;
        const std::size_t hi = std::min(*best + 1, grid.size() - 1);
        const double re = detail::golden_section(grid.candidates[lo].real(), grid.candidates[hi].real(),
                                                 lambda.imag(), target, times, opts.refine_iterations);
        if (detail::fit_error_at(re, lambda.imag(), target, times) < best_err) lambda = cplx(re, lambda.imag());
    }

    H0Fit fit = solve_h0(lambda, target, times);
    out.best.lambda = lambda;
    out.best.psi = mode_grid(lambda, fit.h, times);
    out.best.h = std::move(fit.h);
    out.best.fit_error = fit.fit_error;
    return out;
}

inline ScanResult scan_lambda(const ObservableGrid& q, const LambdaGrid& grid, const ScanOptions& opts = {}) {
    return scan_lambda(q.values, q.times, grid, opts);
}

/// Greedy extraction of K modes; R_{k+1} = R_k - vec(psi_{k+1}).
inline ModeDecomposition greedy_decompose(const ObservableGrid& q, const LambdaGrid& grid, int K,
                                          const ScanOptions& opts = {}, std::string observable = {}) {
    if (K < 1) throw InvalidArgument("greedy_decompose: K must be >= 1");
    q.validate();
    ModeDecomposition d;
    d.times = q.times;
    d.s_params = q.s_params;
    d.observable = std::move(observable);

    Eigen::VectorXcd residual = q.flat();
    d.residual_norms.push_back(residual.norm());
    for (int k = 0; k < K; ++k) {
        const Eigen::Map<const Eigen::MatrixXcd> target(residual.data(), q.n(), q.m() + 1);
        ScanResult scan = scan_lambda(Eigen::MatrixXcd(target), q.times, grid, opts);
        EigenPair mode = std::move(scan.best);

        Eigen::VectorXcd next = residual - Eigen::Map<const Eigen::VectorXcd>(mode.psi.data(), mode.psi.size());
        double next_norm = next.norm();
        if (next_norm > d.residual_norms.back()) {
            // Rounding made the least-squares step worse than h = 0; take h = 0.
            mode.h.setZero();
            mode.psi.setZero();
            next = residual;
            next_norm = d.residual_norms.back();
        }
        mode.fit_error = next_norm;
        residual = std::move(next);
        d.residual_norms.push_back(next_norm);
        d.selected_indices.push_back(scan.best_index);
        d.error_curves.push_back(std::move(scan.curve));
        d.modes.push_back(std::move(mode));
    }
    for (std::size_t k = 1; k < d.residual_norms.size(); ++k)
        if (d.residual_norms[k] > d.residual_norms[k - 1])
            throw NumericError("greedy residual increased at mode " + std::to_string(k));
    return d;
}

/// Entrywise sum of the extracted mode grids.
inline Eigen::MatrixXcd reconstruct(const ModeDecomposition& d) {
    if (d.modes.empty()) throw InvalidArgument("reconstruct: no modes");
    Eigen::MatrixXcd sum = d.modes.front().psi;
    for (std::size_t k = 1; k < d.modes.size(); ++k) sum += d.modes[k].psi;
    return sum;
}

// ---------------------------------------------------------------------------
// export

/// error_vs_lambda_mode{k}.csv, h_mode{k}.csv (k = 1..K) and min_error_vs_mode.csv.
/// Returns the paths written.
inline std::vector<std::filesystem::path> write_decomposition_csv(const std::filesystem::path& dir,
                                                                  const ModeDecomposition& d) {
    std::vector<std::filesystem::path> files;
    for (std::size_t k = 0; k < d.modes.size(); ++k) {
        const auto tag = std::to_string(k + 1);
        {
            auto path = dir / ("error_vs_lambda_mode" + tag + ".csv");
            csv::Writer w(path, "lambda_re,lambda_im,fit_error");
            for (const auto& pt : d.error_curves[k]) {
                w.field(pt.lambda.real()).field(pt.lambda.imag());
                if (pt.overflow)
                    w.field(std::string_view("inf"));
                else
                    w.field(pt.fit_error);
                w.end_row();
            }
            files.push_back(std::move(path));
        }
        {
            auto path = dir / ("h_mode" + tag + ".csv");
            csv::Writer w(path, "s,h_re,h_im");
            const auto& h = d.modes[k].h;
            for (Eigen::Index i = 0; i < h.size(); ++i) {
                w.field(d.s_params[i]).field(h[i].real()).field(h[i].imag());
                w.end_row();
            }
            files.push_back(std::move(path));
        }
    }
    auto path = dir / "min_error_vs_mode.csv";
    csv::Writer w(path, "mode,residual_norm");
    for (std::size_t k = 0; k < d.residual_norms.size(); ++k) {
        w.field(k).field(d.residual_norms[k]);
        w.end_row();
    }
    files.push_back(std::move(path));
    return files;
}

}  // namespace koopdict::koopman
