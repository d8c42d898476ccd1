#pragma once

// Time-delay (Takens) embedding of sampled series into fixed-width windows.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdict/error.hpp"

namespace koopdict::delay {

enum class Centering { causal, centered };

struct DelayConfig {
    int k = 5;
    int tau = 1;
    Centering centering = Centering::centered;

    void validate() const {
        if (k < 1) throw InvalidArgument("delay: window k must be >= 1");
        if (tau < 1) throw InvalidArgument("delay: lag tau must be >= 1");
        if (centering == Centering::centered && k % 2 == 0)
            throw InvalidArgument("delay: centered windows need odd k");
    }

    /// Samples spanned by one window.
    long span() const { return static_cast<long>(k - 1) * tau; }

    /// Offset of the window's reference sample from its first sample.
    long anchor_offset() const { return centering == Centering::centered ? span() / 2 : 0; }

    friend bool operator==(const DelayConfig&, const DelayConfig&) = default;
};

/// T' x (k*c) windows cut verbatim from a length-T source.
///
/// Row t always holds (y_t, y_{t+tau}, ..., y_{t+(k-1)tau}); the two centerings
/// differ only in which source sample a row is attributed to: `anchor(t)` is t
/// for causal windows and t + (k-1)tau/2 for centered ones.
struct DelayVectorSeries {
    Eigen::MatrixXd vectors;
    long source_length = 0;
    DelayConfig config;

    Eigen::Index rows() const { return vectors.rows(); }
    Eigen::Index width() const { return vectors.cols(); }
    long anchor(Eigen::Index row) const { return static_cast<long>(row) + config.anchor_offset(); }
};

inline DelayVectorSeries delay_embed(std::span<const double> series, const DelayConfig& cfg) {
    cfg.validate();
    const long T = static_cast<long>(series.size());
    if (T < cfg.span() + 1)
        throw InvalidArgument("delay_embed: series of length " + std::to_string(T) + " too short for k=" +
                              std::to_string(cfg.k) + ", tau=" + std::to_string(cfg.tau));
    const long rows = T - cfg.span();
    Eigen::MatrixXd out(rows, cfg.k);
    for (long t = 0; t < rows; ++t)
        for (int c = 0; c < cfg.k; ++c) out(t, c) = series[static_cast<std::size_t>(t + static_cast<long>(c) * cfg.tau)];
    return DelayVectorSeries{std::move(out), T, cfg};
}

inline DelayVectorSeries delay_embed(const Eigen::VectorXd& series, const DelayConfig& cfg) {
    return delay_embed(std::span<const double>(series.data(), static_cast<std::size_t>(series.size())), cfg);
}

/// Row-wise concatenation in argument order.
inline DelayVectorSeries stack_channels(const std::vector<DelayVectorSeries>& parts) {
    if (parts.empty()) throw InvalidArgument("stack_channels: no inputs");
    const auto& first = parts.front();
    Eigen::Index width = 0;
    for (const auto& p : parts) {
        if (p.rows() != first.rows()) throw InvalidArgument("stack_channels: mismatched row counts");
        if (!(p.config == first.config)) throw InvalidArgument("stack_channels: mismatched delay configs");
        if (p.source_length != first.source_length) throw InvalidArgument("stack_channels: mismatched source lengths");
        width += p.width();
    }
    Eigen::MatrixXd out(first.rows(), width);
    Eigen::Index col = 0;
    for (const auto& p : parts) {
        out.middleCols(col, p.width()) = p.vectors;
        col += p.width();
    }
    return DelayVectorSeries{std::move(out), first.source_length, first.config};
}

/// Whether k delays suffice to embed an attractor of dimension d (k > 2d).
/// Advisory only. Note the sufficiency direction: the often-quoted "k < 2d+1"
/// reads the inequality backwards.
inline bool check_takens_bound(double attractor_dim, int k) {
    if (!(attractor_dim >= 0.0)) throw InvalidArgument("check_takens_bound: dimension must be >= 0");
    return static_cast<double>(k) > 2.0 * attractor_dim;
}

}  // namespace koopdict::delay
