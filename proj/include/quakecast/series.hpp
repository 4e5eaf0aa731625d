// SPDX-License-Identifier: Apache-2.0
#pragma once

// Monthly series construction, zero-order-hold imputation, min-max scaling,
// chronological splitting and sliding-window sample generation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quakecast/catalog.hpp"
#include "quakecast/error.hpp"

namespace quakecast {

// ---------------------------------------------------------------- calendar

struct YearMonth {
    int year = 1970;
    int month = 1;  // 1..12

    auto operator<=>(const YearMonth&) const = default;

    static YearMonth of(TimePoint t) {
        const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(t)};
        return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month()))};
    }

    /// Months since year 0, used for arithmetic.
    long ordinal() const { return static_cast<long>(year) * 12 + (month - 1); }

    static YearMonth from_ordinal(long n) {
        long y = n / 12;
        long m = n % 12;
        if (m < 0) {
            m += 12;
            --y;
        }
        return {static_cast<int>(y), static_cast<int>(m) + 1};
    }

    YearMonth plus(long months) const { return from_ordinal(ordinal() + months); }

    std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }

    static std::optional<YearMonth> parse(std::string_view s) {
        if (s.size() != 7 || s[4] != '-') return std::nullopt;
        int y = 0, m = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            if (i == 4) continue;
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            (i < 4 ? y : m) = (i < 4 ? y : m) * 10 + (s[i] - '0');
        }
        if (m < 1 || m > 12) return std::nullopt;
        return YearMonth{y, m};
    }
};

/// Calendar months from `first` to `last`, both inclusive.
inline std::size_t months_between(YearMonth first, YearMonth last) {
    if (last < first) throw DomainError("month range " + first.str() + " .. " + last.str() + " is empty");
    return static_cast<std::size_t>(last.ordinal() - first.ordinal() + 1);
}

// ---------------------------------------------------------------- series

enum class SeriesCase { Count, MaxMagnitude };

inline std::string_view to_string(SeriesCase c) {
    return c == SeriesCase::Count ? "count" : "maxmag";
}

inline SeriesCase parse_series_case(std::string_view s) {
    if (s == "count") return SeriesCase::Count;
    if (s == "maxmag") return SeriesCase::MaxMagnitude;
    throw ConfigError("unknown case '" + std::string(s) + "' (expected count or maxmag)");
}

struct MonthlySeries {
    RegionId region;
    SeriesCase kind = SeriesCase::Count;
    YearMonth start;
    std::vector<double> values;

    YearMonth month_at(std::size_t i) const { return start.plus(static_cast<long>(i)); }
};

/// Per-month event count, or per-month maximum magnitude (0 for quiet months),
/// over the inclusive month range [first, last].
inline MonthlySeries aggregate_monthly(const std::vector<CatalogEvent>& events, RegionId region,
                                       SeriesCase kind, YearMonth first, YearMonth last) {
    MonthlySeries s{region, kind, first, std::vector<double>(months_between(first, last), 0.0)};
    for (const auto& e : events) {
        const YearMonth ym = YearMonth::of(e.time);
        if (ym < first || last < ym) {
            throw DomainError("event at " + format_time(e.time) + " falls outside " + first.str() +
                              " .. " + last.str());
        }
        double& slot = s.values[static_cast<std::size_t>(ym.ordinal() - first.ordinal())];
        if (kind == SeriesCase::Count) {
            slot += 1.0;
        } else {
            slot = std::max(slot, e.magnitude);
        }
    }
    return s;
}

/// Replaces every zero by the most recent preceding non-zero value. Leading
/// zeros stay zero.
inline std::vector<double> zoh_impute(std::span<const double> values) {
    if (values.empty()) throw DomainError("zoh_impute on an empty sequence");
    std::vector<double> out(values.begin(), values.end());
    std::optional<double> last;
    for (auto& v : out) {
        if (v != 0.0) {
            last = v;
        } else if (last) {
            v = *last;
        }
    }
    return out;
}

// ---------------------------------------------------------------- scaling

struct ScalerParams {
    double min = 0.0;
    double max = 1.0;

    bool operator==(const ScalerParams&) const = default;
};

inline ScalerParams fit_scaler(std::span<const double> train_values) {
    if (train_values.size() < 2) {
        throw DomainError("fit_scaler needs at least 2 values, got " + std::to_string(train_values.size()));
    }
    const auto [lo, hi] = std::minmax_element(train_values.begin(), train_values.end());
    return {*lo, *hi};
}

inline double apply_scaler(double x, const ScalerParams& p) {
    const double range = p.max - p.min;
    return range > 0.0 ? (x - p.min) / range : 0.0;
}

inline double invert_scaler(double y, const ScalerParams& p) {
    return y * (p.max - p.min) + p.min;
}

inline std::vector<double> apply_scaler(std::span<const double> values, const ScalerParams& p) {
    if (!(p.min <= p.max)) throw DomainError("scaler min exceeds max");
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(), [&](double x) { return apply_scaler(x, p); });
    return out;
}

inline std::vector<double> invert_scaler(std::span<const double> values, const ScalerParams& p) {
    if (!(p.min <= p.max)) throw DomainError("scaler min exceeds max");
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(), [&](double y) { return invert_scaler(y, p); });
    return out;
}

// ---------------------------------------------------------------- split & windows

/// Number of leading months that go to training: floor(ratio * T).
inline std::size_t train_length(std::size_t total, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
}

/// Chronological split; each side must keep at least window + 1 months.
inline std::pair<std::vector<double>, std::vector<double>> split_train_test(
    std::span<const double> values, double ratio, std::size_t window) {
    const std::size_t n_train = train_length(values.size(), ratio);
    const std::size_t n_test = values.size() - n_train;
    if (n_train < window + 1 || n_test < window + 1) {
        throw ConfigError("split " + std::to_string(n_train) + "/" + std::to_string(n_test) +
                          " leaves a side shorter than window + 1 = " + std::to_string(window + 1));
    }
    return {std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n_train)),
            std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(n_train), values.end())};
}

/// Stride-1 input windows of `window` values with the next value as target.
struct WindowedDataset {
    std::size_t window = 0;
    std::vector<double> inputs;   // size() x window, row-major
    std::vector<double> targets;  // size()

    std::size_t size() const { return targets.size(); }

    std::span<const double> input(std::size_t i) const {
        return std::span<const double>(inputs).subspan(i * window, window);
    }
};

inline WindowedDataset make_windows(std::span<const double> values, std::size_t window) {
    if (window == 0) throw DomainError("window must be at least 1");
    if (values.size() <= window) {
        throw DomainError("series of length " + std::to_string(values.size()) +
                          " is too short for window " + std::to_string(window));
    }
    WindowedDataset ds;
    ds.window = window;
    const std::size_t n = values.size() - window;
    ds.inputs.reserve(n * window);
    ds.targets.reserve(n);
    for (std::size_t t = window; t < values.size(); ++t) {
        ds.inputs.insert(ds.inputs.end(), values.begin() + static_cast<std::ptrdiff_t>(t - window),
                         values.begin() + static_cast<std::ptrdiff_t>(t));
        ds.targets.push_back(values[t]);
    }
    return ds;
}

// ---------------------------------------------------------------- prepared series

/// One region/case series after the full preparation pipeline:
/// split -> ZOH on the training months only -> scaler fitted on the imputed
/// training months -> scaling of every month with those parameters.
struct PreparedSeries {
    RegionId region;
    SeriesCase kind = SeriesCase::Count;
    YearMonth start;
    std::size_t window = 12;
    double split_ratio = 0.8;
    std::size_t train_months = 0;
    ScalerParams scaler;
    std::vector<double> raw;
    std::vector<double> imputed;  // ZOH on the training prefix, raw afterwards
    std::vector<double> scaled;   // scaled `imputed`

    std::size_t months() const { return raw.size(); }
    std::size_t test_months() const { return raw.size() - train_months; }
    YearMonth month_at(std::size_t i) const { return start.plus(static_cast<long>(i)); }

    WindowedDataset train_windows() const {
        return make_windows(std::span<const double>(scaled).first(train_months), window);
    }

    /// One sample per test month. Inputs draw on the preceding `window` months
    /// of the unimputed series, so the first samples look back into training.
    WindowedDataset test_windows() const {
        const std::size_t from = train_months - window;
        const auto context = apply_scaler(std::span<const double>(raw).subspan(from), scaler);
        return make_windows(context, window);
    }
};

inline PreparedSeries prepare_series(const MonthlySeries& series, std::size_t window, double ratio) {
    auto [train, test] = split_train_test(series.values, ratio, window);
    PreparedSeries p;
    p.region = series.region;
    p.kind = series.kind;
    p.start = series.start;
    p.window = window;
    p.split_ratio = ratio;
    p.train_months = train.size();
    p.raw = series.values;
    p.imputed = zoh_impute(train);
    p.imputed.insert(p.imputed.end(), test.begin(), test.end());
    p.scaler = fit_scaler(std::span<const double>(p.imputed).first(p.train_months));
    p.scaled = apply_scaler(p.imputed, p.scaler);
    return p;
}

}  // namespace quakecast
