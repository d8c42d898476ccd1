#pragma once

// Trajectory simulation for the benchmark systems: fixed-step RK4, the Van der
// Pol oscillator, a 1-D two-field reaction-diffusion system (method of lines),
// the quadratic 3-D lifting map, min-max scaling and the initial segment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "koopdict/csv.hpp"
#include "koopdict/error.hpp"

namespace koopdict::dynsys {

using StateVector = Eigen::VectorXd;

/// Uniformly sampled trajectory. Column j of `states` is the state at t0 + j*dt.
struct Trajectory {
    Eigen::MatrixXd states;
    double dt = 1.0;
    double t0 = 0.0;

    Trajectory() = default;
    Trajectory(Eigen::MatrixXd s, double step, double start = 0.0)
        : states(std::move(s)), dt(step), t0(start) {
        if (states.cols() < 2) throw InvalidArgument("trajectory needs at least 2 states");
        if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("trajectory dt must be > 0");
    }

    Eigen::Index dim() const { return states.rows(); }
    Eigen::Index size() const { return states.cols(); }
    double time(Eigen::Index j) const { return t0 + static_cast<double>(j) * dt; }
    StateVector state(Eigen::Index j) const { return states.col(j); }
};

inline constexpr double kDefaultNonRecurrenceTol = 1e-3;

/// n rows (one trajectory per initial-manifold sample s_i) on a shared time
/// grid r_0 = 0 < r_1 < ... < r_m. Construction rejects recurrent rows.
class TrajectoryGrid {
public:
    TrajectoryGrid(std::vector<Trajectory> rows, Eigen::VectorXd s_params,
                   double nonrecurrence_tol = kDefaultNonRecurrenceTol)
        : rows_(std::move(rows)), s_(std::move(s_params)) {
        if (rows_.size() < 2) throw InvalidArgument("trajectory grid needs n >= 2 rows");
        if (static_cast<std::size_t>(s_.size()) != rows_.size())
            throw InvalidArgument("trajectory grid: s parameter count != row count");
        const auto& r0 = rows_.front();
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            if (r.dim() != r0.dim() || r.size() != r0.size())
                throw InvalidArgument("trajectory grid row " + std::to_string(i) + " has mismatched shape");
            if (r.dt != r0.dt) throw InvalidArgument("trajectory grid rows must share dt");
            if (!r.states.allFinite())
                throw NumericError("trajectory grid row " + std::to_string(i) + " has non-finite states");
        }
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& st = rows_[i].states;
            double closest = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 1; j < st.cols(); ++j)
                closest = std::min(closest, (st.col(j) - st.col(0)).norm());
            if (!(closest > nonrecurrence_tol))
                throw InvalidArgument("trajectory grid row " + std::to_string(i) +
                                      " is recurrent (returns within " + csv::fmt(closest) +
                                      " of its start, tolerance " + csv::fmt(nonrecurrence_tol) + ")");
        }
    }

    std::size_t n() const { return rows_.size(); }
    /// Number of time intervals; each row has m() + 1 samples.
    Eigen::Index m() const { return rows_.front().size() - 1; }
    Eigen::Index dim() const { return rows_.front().dim(); }
    double dt() const { return rows_.front().dt; }

    const Trajectory& row(std::size_t i) const { return rows_[i]; }
    const std::vector<Trajectory>& rows() const { return rows_; }
    const Eigen::VectorXd& s_params() const { return s_; }

    Eigen::VectorXd times() const {
        return Eigen::VectorXd::LinSpaced(m() + 1, 0.0, static_cast<double>(m()) * dt());
    }

    /// All states stacked row-major by (i, j): sample (i, j) lands at row i*(m+1)+j.
    Eigen::MatrixXd flatten() const {
        const Eigen::Index cols = m() + 1;
        Eigen::MatrixXd out(static_cast<Eigen::Index>(n()) * cols, dim());
        for (std::size_t i = 0; i < n(); ++i)
            out.middleRows(static_cast<Eigen::Index>(i) * cols, cols) = rows_[i].states.transpose();
        return out;
    }

    /// Inverse of flatten() with new per-sample coordinates (any width).
    TrajectoryGrid with_states(const Eigen::MatrixXd& flat,
                               double nonrecurrence_tol = kDefaultNonRecurrenceTol) const {
        const Eigen::Index cols = m() + 1;
        if (flat.rows() != static_cast<Eigen::Index>(n()) * cols)
            throw InvalidArgument("with_states: sample count does not match grid");
        std::vector<Trajectory> rows;
        rows.reserve(n());
        for (std::size_t i = 0; i < n(); ++i)
            rows.emplace_back(flat.middleRows(static_cast<Eigen::Index>(i) * cols, cols).transpose(), dt());
        return TrajectoryGrid(std::move(rows), s_, nonrecurrence_tol);
    }

private:
    std::vector<Trajectory> rows_;
    Eigen::VectorXd s_;
};

struct VdpParams {
    double mu = 1.0;
    double dt = 0.02;
    int n_steps = 100;
};

enum class Nonlinearity { cubic, identity };

inline double apply(Nonlinearity f, double u) {
    return f == Nonlinearity::cubic ? u * u * u - u : u;
}

struct RdParams {
    double D = 0.0322;
    double epsilon = 0.01;
    double alpha = 0.01;
    int n_x = 100;
    double dt = 1e-3;
    double t_end = 60.0;
    /// Keep every `output_stride`-th integration step.
    int output_stride = 500;
    Nonlinearity nonlinearity = Nonlinearity::cubic;
    /// false drops the reaction terms, leaving two decoupled heat equations.
    bool reaction = true;

    double dx() const { return 1.0 / static_cast<double>(n_x - 1); }
    double stability_number() const { return D * dt / (dx() * dx()); }

    long long total_steps() const { return std::llround(t_end / dt); }

    void validate() const {
        if (n_x < 3) throw InvalidArgument("rd: n_x must be >= 3");
        if (!(D >= 0.0) || !std::isfinite(D)) throw InvalidArgument("rd: D must be finite and >= 0");
        if (!(epsilon > 0.0)) throw InvalidArgument("rd: epsilon must be > 0");
        if (!std::isfinite(alpha)) throw InvalidArgument("rd: alpha must be finite");
        if (!(dt > 0.0) || !(t_end > 0.0)) throw InvalidArgument("rd: dt and t_end must be > 0");
        if (output_stride < 1) throw InvalidArgument("rd: output_stride must be >= 1");
        if (stability_number() > 0.5)
            throw InvalidArgument("rd: explicit scheme unstable, D*dt/dx^2 = " + csv::fmt(stability_number()) +
                                  " > 0.5");
        const long long steps = total_steps();
        if (steps < 1 || std::abs(static_cast<double>(steps) * dt - t_end) > 1e-9 * t_end)
            throw InvalidArgument("rd: t_end must be an integer multiple of dt");
        if (steps % output_stride != 0)
            throw InvalidArgument("rd: step count must be a multiple of output_stride");
    }
};

/// Straight segment a -> b carrying n uniform parameters s_i = i/(n-1).
struct LambdaSegment {
    StateVector a;
    StateVector b;
    int n = 2;

    Eigen::VectorXd s_values() const {
        if (n < 2) throw InvalidArgument("lambda segment needs n >= 2 samples");
        return Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// integration

/// One classical RK4 step.
template <class Field>
StateVector rk4_step(Field&& f, const StateVector& x, double dt) {
    const StateVector k1 = f(x);
    const StateVector k2 = f(StateVector(x + 0.5 * dt * k1));
    const StateVector k3 = f(StateVector(x + 0.5 * dt * k2));
    const StateVector k4 = f(StateVector(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Fixed-step RK4. Stores every `stride`-th state, so the result holds
/// n_steps/stride + 1 states with spacing stride*dt.
template <class Field>
Trajectory integrate_rk4(Field&& f, const StateVector& x0, double dt, long long n_steps, int stride = 1) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("integrate_rk4: dt must be > 0");
    if (n_steps < 1) throw InvalidArgument("integrate_rk4: n_steps must be >= 1");
    if (stride < 1 || n_steps % stride != 0)
        throw InvalidArgument("integrate_rk4: n_steps must be a positive multiple of stride");
    if (!x0.allFinite()) throw InvalidArgument("integrate_rk4: non-finite initial state");

    const Eigen::Index kept = static_cast<Eigen::Index>(n_steps / stride) + 1;
    Eigen::MatrixXd states(x0.size(), kept);
    states.col(0) = x0;
    StateVector x = x0;
    for (long long k = 1; k <= n_steps; ++k) {
        x = rk4_step(f, x, dt);
        if (!x.allFinite()) throw NumericError("integration diverged at step " + std::to_string(k));
        if (k % stride == 0) states.col(static_cast<Eigen::Index>(k / stride)) = x;
    }
    return Trajectory(std::move(states), dt * stride);
}

// ---------------------------------------------------------------------------
// Van der Pol

inline auto vdp_field(double mu) {
    return [mu](const StateVector& x) {
        StateVector dx(2);
        dx[0] = x[1];
        dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
        return dx;
    };
}

inline std::vector<StateVector> sample_lambda_segment(const LambdaSegment& seg) {
    if (seg.n < 2) throw InvalidArgument("lambda segment needs n >= 2 samples");
    if (seg.a.size() != seg.b.size()) throw InvalidArgument("lambda segment endpoints differ in dimension");
    if (seg.a == seg.b) throw InvalidArgument("lambda segment endpoints coincide");
    const Eigen::VectorXd s = seg.s_values();
    std::vector<StateVector> out;
    out.reserve(static_cast<std::size_t>(seg.n));
    for (Eigen::Index i = 0; i < s.size(); ++i) out.push_back(seg.a + s[i] * (seg.b - seg.a));
    return out;
}

inline TrajectoryGrid simulate_vdp_ensemble(const VdpParams& p, const LambdaSegment& seg,
                                            double nonrecurrence_tol = kDefaultNonRecurrenceTol) {
    if (seg.a.size() != 2 || seg.b.size() != 2)
        throw InvalidArgument("vdp ensemble: segment endpoints must be 2-D");
    if (!std::isfinite(p.mu) || !(p.mu > 0.0)) throw InvalidArgument("vdp: mu must be finite and > 0");
    const auto starts = sample_lambda_segment(seg);
    std::vector<Trajectory> rows;
    rows.reserve(starts.size());
    for (const auto& x0 : starts) rows.push_back(integrate_rk4(vdp_field(p.mu), x0, p.dt, p.n_steps));
    return TrajectoryGrid(std::move(rows), seg.s_values(), nonrecurrence_tol);
}

/// (x1, x2) -> (x1, x2, x1^2 + x2^2)
inline Trajectory lift_vdp_3d(const Trajectory& traj2d) {
    if (traj2d.dim() != 2) throw InvalidArgument("lift_vdp_3d: input must be 2-D");
    Eigen::MatrixXd out(3, traj2d.size());
    out.topRows(2) = traj2d.states;
    out.row(2) = traj2d.states.colwise().squaredNorm();
    return Trajectory(std::move(out), traj2d.dt, traj2d.t0);
}

inline TrajectoryGrid lift_vdp_3d(const TrajectoryGrid& grid,
                                  double nonrecurrence_tol = kDefaultNonRecurrenceTol) {
    std::vector<Trajectory> rows;
    rows.reserve(grid.n());
    for (const auto& r : grid.rows()) rows.push_back(lift_vdp_3d(r));
    return TrajectoryGrid(std::move(rows), grid.s_params(), nonrecurrence_tol);
}

// ---------------------------------------------------------------------------
// reaction-diffusion

/// Fields stored as n_x x n_t: row ix is the time series at x_ix.
struct RdSolution {
    Trajectory u1;
    Trajectory u2;
    Eigen::VectorXd x;
};

/// Right-hand side of the two-field system on the stacked state (u1; u2).
/// Boundary nodes carry zero time derivative (fixed Dirichlet values).
class RdField {
public:
    explicit RdField(const RdParams& p) : p_(p), inv_dx2_(1.0 / (p.dx() * p.dx())) {}

    StateVector operator()(const StateVector& y) const {
        const Eigen::Index nx = p_.n_x;
        StateVector dy = StateVector::Zero(2 * nx);
        const auto u1 = y.head(nx);
        const auto u2 = y.tail(nx);
        for (Eigen::Index i = 1; i + 1 < nx; ++i) {
            const double lap1 = (u1[i - 1] - 2.0 * u1[i] + u1[i + 1]) * inv_dx2_;
            const double lap2 = (u2[i - 1] - 2.0 * u2[i] + u2[i + 1]) * inv_dx2_;
            dy[i] = p_.D * lap1;
            dy[nx + i] = p_.D * lap2;
            if (p_.reaction) {
                dy[i] += (u2[i] - apply(p_.nonlinearity, u1[i])) / p_.epsilon;
                dy[nx + i] += -u1[i] + p_.alpha;
            }
        }
        return dy;
    }

private:
    RdParams p_;
    double inv_dx2_;
};

inline Eigen::VectorXd rd_grid(int n_x) { return Eigen::VectorXd::LinSpaced(n_x, 0.0, 1.0); }

/// Default initial condition: u1 = 0.1 sin(2 pi x) + 0.1, u2 = 0.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> rd_default_initial(int n_x) {
    const Eigen::VectorXd x = rd_grid(n_x);
    Eigen::VectorXd u1 = (0.1 * (2.0 * std::numbers::pi * x.array()).sin() + 0.1).matrix();
    return {std::move(u1), Eigen::VectorXd::Zero(n_x)};
}

inline RdSolution simulate_rd(const RdParams& p, const Eigen::VectorXd& u1_0, const Eigen::VectorXd& u2_0) {
    p.validate();
    if (u1_0.size() != p.n_x || u2_0.size() != p.n_x)
        throw InvalidArgument("simulate_rd: initial vectors must have length n_x");
    StateVector y0(2 * p.n_x);
    y0 << u1_0, u2_0;
    Trajectory full = integrate_rk4(RdField(p), y0, p.dt, p.total_steps(), p.output_stride);
    return RdSolution{Trajectory(full.states.topRows(p.n_x), full.dt),
                      Trajectory(full.states.bottomRows(p.n_x), full.dt), rd_grid(p.n_x)};
}

// ---------------------------------------------------------------------------
// scaling

/// Per-column affine map to [0, 1]. Constant columns map to 0.5 and are flagged.
struct ScaleRecord {
    Eigen::VectorXd min;
    Eigen::VectorXd range;
    std::vector<bool> degenerate;

    bool any_degenerate() const {
        for (bool d : degenerate)
            if (d) return true;
        return false;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const {
        if (data.cols() != min.size()) throw InvalidArgument("scale: column count mismatch");
        Eigen::MatrixXd out(data.rows(), data.cols());
        for (Eigen::Index c = 0; c < data.cols(); ++c) {
            if (degenerate[static_cast<std::size_t>(c)])
                out.col(c).setConstant(0.5);
            else
                out.col(c) = (data.col(c).array() - min[c]) / range[c];
        }
        return out;
    }

    Eigen::MatrixXd invert(const Eigen::MatrixXd& scaled) const {
        if (scaled.cols() != min.size()) throw InvalidArgument("unscale: column count mismatch");
        Eigen::MatrixXd out(scaled.rows(), scaled.cols());
        for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
            if (degenerate[static_cast<std::size_t>(c)])
                out.col(c).setConstant(min[c]);
            else
                out.col(c) = (scaled.col(c).array() * range[c] + min[c]).matrix();
        }
        return out;
    }
};

/// Rows are samples, columns are coordinates.
inline std::pair<Eigen::MatrixXd, ScaleRecord> minmax_scale(const Eigen::MatrixXd& data) {
    if (data.rows() == 0 || data.cols() == 0) throw InvalidArgument("minmax_scale: empty data");
    if (!data.allFinite()) throw InvalidArgument("minmax_scale: non-finite data");
    ScaleRecord rec;
    rec.min = data.colwise().minCoeff().transpose();
    rec.range = data.colwise().maxCoeff().transpose() - rec.min;
    rec.degenerate.resize(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index c = 0; c < data.cols(); ++c) rec.degenerate[static_cast<std::size_t>(c)] = rec.range[c] == 0.0;
    Eigen::MatrixXd scaled = rec.apply(data);
    return {std::move(scaled), std::move(rec)};
}

inline Eigen::MatrixXd minmax_unscale(const Eigen::MatrixXd& scaled, const ScaleRecord& rec) {
    return rec.invert(scaled);
}

// ---------------------------------------------------------------------------
// export

/// Header `row,step,t,x0,x1,...`; one line per (row, step).
inline void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryGrid& grid) {
    std::string header = "row,step,t";
    for (Eigen::Index c = 0; c < grid.dim(); ++c) header += ",x" + std::to_string(c);
    csv::Writer w(path, header);
    for (std::size_t i = 0; i < grid.n(); ++i) {
        const auto& r = grid.row(i);
        for (Eigen::Index j = 0; j < r.size(); ++j) {
            w.field(i).field(static_cast<long long>(j)).field(r.time(j));
            for (Eigen::Index c = 0; c < r.dim(); ++c) w.field(r.states(c, j));
            w.end_row();
        }
    }
}

}  // namespace koopdict::dynsys
