// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "quakecast/error.hpp"

namespace quakecast {

namespace detail {
inline void check_pair(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) {
        throw DomainError("metric inputs differ in length: " + std::to_string(y.size()) + " vs " +
                          std::to_string(yhat.size()));
    }
    if (y.empty()) throw DomainError("metric on empty input");
}
}  // namespace detail

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
    detail::check_pair(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

inline double mae(std::span<const double> y, std::span<const double> yhat) {
    detail::check_pair(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

/// Coefficient of determination 1 - SS_res / SS_tot. Negative when the
/// predictions do worse than the mean of y.
inline double r_squared(std::span<const double> y, std::span<const double> yhat) {
    detail::check_pair(y, yhat);
    if (y.size() < 2) throw DomainError("r_squared needs at least 2 samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (yhat[i] - y[i]) * (yhat[i] - y[i]);
        ss_tot += (mean - y[i]) * (mean - y[i]);
    }
    if (ss_tot == 0.0) throw DomainError("r_squared is undefined for constant targets");
    return 1.0 - ss_res / ss_tot;
}

enum class MetricSpace { Scaled, Raw };

inline std::string_view to_string(MetricSpace s) { return s == MetricSpace::Scaled ? "scaled" : "raw"; }

struct EvalReport {
    double rmse = 0.0;
    double mae = 0.0;
    double r2 = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
    std::size_t n = 0;
    MetricSpace space = MetricSpace::Scaled;
};

/// All three metrics at once; r2 is NaN when y is constant or n < 2.
inline EvalReport evaluate(std::span<const double> y, std::span<const double> yhat,
                           MetricSpace space = MetricSpace::Scaled) {
    EvalReport r;
    r.rmse = rmse(y, yhat);
    r.mae = mae(y, yhat);
    r.n = y.size();
    r.space = space;
    try {
        r.r2 = r_squared(y, yhat);
    } catch (const DomainError&) {
        r.r2 = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

}  // namespace quakecast
