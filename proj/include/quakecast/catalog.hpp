// SPDX-License-Identifier: Apache-2.0
#pragma once

// Earthquake catalog ingestion: CSV parsing, deduplication, filtering and
// assignment of events to the cells of a rectangular latitude/longitude grid.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "quakecast/csv.hpp"
#include "quakecast/error.hpp"

namespace quakecast {

using TimePoint = std::chrono::sys_seconds;

// ---------------------------------------------------------------- time

/// Earliest accepted event time (exclusive): 1900-01-01T00:00:00Z.
inline TimePoint catalog_epoch() {
    using namespace std::chrono;
    return sys_days{year{1900} / January / 1};
}

/// Parses `YYYY-MM-DD`, optionally followed by `T` or a blank and
/// `HH:MM[:SS[.fff]]`, and an optional `Z` or `+00:00` suffix. Fractional
/// seconds are truncated. Returns nullopt on any malformed or non-UTC input.
inline std::optional<TimePoint> parse_time(std::string_view text) {
    using namespace std::chrono;
    const std::string s = csv::trim(text);
    auto digits = [&](std::size_t pos, std::size_t n, int& out) {
        if (pos + n > s.size()) return false;
        out = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (s[i] < '0' || s[i] > '9') return false;
            out = out * 10 + (s[i] - '0');
        }
        return true;
    };
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    if (!digits(0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
        !digits(8, 2, d)) {
        return std::nullopt;
    }
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        if (!digits(pos + 1, 2, hh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
            !digits(pos + 4, 2, mm)) {
            return std::nullopt;
        }
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            if (!digits(pos + 1, 2, ss)) return std::nullopt;
            pos += 3;
            if (pos < s.size() && s[pos] == '.') {
                ++pos;
                const std::size_t start = pos;
                while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
                if (pos == start) return std::nullopt;
            }
        }
    }
    const std::string_view rest = std::string_view(s).substr(pos);
    if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000")) return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

inline std::string format_time(TimePoint t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss<seconds> hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

struct TimeRange {
    TimePoint start;
    TimePoint end;

    bool contains(TimePoint t) const { return t >= start && t <= end; }
};

/// Catalog window used by default: 1966-01-15 through the end of 2021-05-22.
inline TimeRange default_time_range() {
    using namespace std::chrono;
    return {sys_days{year{1966} / January / 15},
            sys_days{year{2021} / May / 22} + hours{23} + minutes{59} + seconds{59}};
}

// ---------------------------------------------------------------- events

struct CatalogEvent {
    TimePoint time;
    double latitude = 0.0;
    double longitude = 0.0;
    std::optional<double> depth;  // km, provenance only
    double magnitude = 0.0;

    bool operator==(const CatalogEvent&) const = default;
};

/// Header names of the mandatory and optional columns.
struct CatalogColumns {
    std::string time = "time";
    std::string latitude = "latitude";
    std::string longitude = "longitude";
    std::string depth = "depth";  // optional; empty string disables it
    std::string magnitude = "mag";
};

struct RejectedRow {
    std::size_t line;
    std::string reason;
};

struct ParsedCatalog {
    std::vector<CatalogEvent> events;
    std::vector<RejectedRow> rejects;
};

/// Parses a header-led CSV catalog. Malformed rows end up in `rejects` with
/// their line number; a missing mandatory column raises ConfigError.
inline ParsedCatalog parse_catalog(std::istream& in, const CatalogColumns& columns = {}) {
    csv::Reader reader(in);
    std::vector<std::string> row;
    ParsedCatalog out;
    if (!reader.next(row)) return out;

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < row.size(); ++i) index.emplace(csv::trim(row[i]), i);
    auto column = [&](const std::string& name) -> std::size_t {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("catalog is missing mandatory column '" + name + "'");
        return it->second;
    };
    const std::size_t c_time = column(columns.time);
    const std::size_t c_lat = column(columns.latitude);
    const std::size_t c_lon = column(columns.longitude);
    const std::size_t c_mag = column(columns.magnitude);
    std::optional<std::size_t> c_depth;
    if (!columns.depth.empty()) {
        if (auto it = index.find(columns.depth); it != index.end()) c_depth = it->second;
    }
    const std::size_t needed = std::max({c_time, c_lat, c_lon, c_mag, c_depth.value_or(0)}) + 1;

    while (reader.next(row)) {
        const std::size_t line = reader.line();
        if (row.size() == 1 && csv::trim(row[0]).empty()) continue;
        auto reject = [&](std::string reason) { out.rejects.push_back({line, std::move(reason)}); };
        if (row.size() < needed) {
            reject("expected at least " + std::to_string(needed) + " fields, found " +
                   std::to_string(row.size()));
            continue;
        }
        const auto time = parse_time(row[c_time]);
        if (!time) {
            reject("unparseable " + columns.time + " '" + row[c_time] + "'");
            continue;
        }
        if (*time <= catalog_epoch()) {
            reject(columns.time + " before 1900-01-01");
            continue;
        }
        const auto lat = csv::parse_double(row[c_lat]);
        if (!lat || !(*lat >= -90.0 && *lat <= 90.0)) {
            reject("invalid " + columns.latitude + " '" + row[c_lat] + "'");
            continue;
        }
        const auto lon = csv::parse_double(row[c_lon]);
        if (!lon || !(*lon >= -180.0 && *lon <= 180.0)) {
            reject("invalid " + columns.longitude + " '" + row[c_lon] + "'");
            continue;
        }
        const auto mag = csv::parse_double(row[c_mag]);
        if (!mag || !std::isfinite(*mag) || *mag < 0.0) {
            reject("invalid " + columns.magnitude + " '" + row[c_mag] + "'");
            continue;
        }
        std::optional<double> depth;
        if (c_depth && !csv::trim(row[*c_depth]).empty()) {
            depth = csv::parse_double(row[*c_depth]);
            if (!depth || !std::isfinite(*depth) || *depth < 0.0) {
                reject("invalid " + columns.depth + " '" + row[*c_depth] + "'");
                continue;
            }
        }
        out.events.push_back({*time, *lat, *lon, depth, *mag});
    }
    return out;
}

/// Writes events with the default USGS header. When `regions` is given it must
/// be parallel to `events` and adds a trailing `region` column.
inline void serialize_catalog(std::ostream& out, const std::vector<CatalogEvent>& events,
                              const std::vector<int>* regions = nullptr) {
    std::vector<std::string> header{"time", "latitude", "longitude", "depth", "mag"};
    if (regions) header.push_back("region");
    csv::write_row(out, header);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        std::vector<std::string> fields{format_time(e.time), csv::format_double(e.latitude),
                                        csv::format_double(e.longitude),
                                        e.depth ? csv::format_double(*e.depth) : std::string{},
                                        csv::format_double(e.magnitude)};
        if (regions) fields.push_back(std::to_string(regions->at(i)));
        csv::write_row(out, fields);
    }
}

inline void write_rejects(std::ostream& out, const std::vector<RejectedRow>& rejects) {
    csv::write_row(out, {"line", "reason"});
    for (const auto& r : rejects) csv::write_row(out, {std::to_string(r.line), r.reason});
}

/// Removes repeated (time, latitude, longitude, magnitude) tuples, keeping the
/// first occurrence in input order.
inline std::vector<CatalogEvent> deduplicate(const std::vector<CatalogEvent>& events) {
    using Key = std::tuple<std::int64_t, double, double, double>;
    std::set<Key> seen;
    std::vector<CatalogEvent> out;
    out.reserve(events.size());
    for (const auto& e : events) {
        Key key{e.time.time_since_epoch().count(), e.latitude, e.longitude, e.magnitude};
        if (seen.insert(key).second) out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------- grid

/// Row-major cell label; index 1 is the northwest cell by default.
struct RegionId {
    int index = 1;

    bool operator==(const RegionId&) const = default;
    auto operator<=>(const RegionId&) const = default;
};

/// Equal-width rows x cols partition of a latitude/longitude box. Cells are
/// half-open [edge_i, edge_{i+1}) with the last cell on each axis closed.
struct RegionGrid {
    double lat_min = 23.0;
    double lat_max = 45.0;
    double lon_min = 75.0;
    double lon_max = 119.0;
    std::size_t rows = 3;
    std::size_t cols = 3;
    /// labels[row * cols + col] is the RegionId of that cell (row 0 = north).
    std::vector<int> labels{1, 2, 3, 4, 5, 6, 7, 8, 9};

    void validate() const {
        if (!(lat_min < lat_max) || !(lon_min < lon_max)) {
            throw ConfigError("region grid needs lat_min < lat_max and lon_min < lon_max");
        }
        if (rows != 3 || cols != 3) throw ConfigError("region grid must be 3 x 3");
        std::vector<int> sorted = labels;
        std::sort(sorted.begin(), sorted.end());
        std::vector<int> expected(rows * cols);
        std::iota(expected.begin(), expected.end(), 1);
        if (sorted != expected) throw ConfigError("region labels must be a permutation of 1..9");
    }

    std::size_t cell_count() const { return rows * cols; }

    double lat_edge(std::size_t i) const {
        return i == rows ? lat_max : lat_min + (lat_max - lat_min) * static_cast<double>(i) / static_cast<double>(rows);
    }
    double lon_edge(std::size_t j) const {
        return j == cols ? lon_max : lon_min + (lon_max - lon_min) * static_cast<double>(j) / static_cast<double>(cols);
    }

    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }

    RegionId region_at(std::size_t row, std::size_t col) const {
        return RegionId{labels.at(row * cols + col)};
    }

    /// (row, col) of a label.
    std::pair<std::size_t, std::size_t> cell_of(RegionId id) const {
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == id.index) return {k / cols, k % cols};
        throw DomainError("unknown region " + std::to_string(id.index));
    }
};

inline RegionId assign_region(double lat, double lon, const RegionGrid& grid) {
    if (!grid.contains(lat, lon)) {
        throw DomainError("location (" + csv::format_double(lat) + ", " + csv::format_double(lon) +
                          ") lies outside the region grid");
    }
    std::size_t band = 0;  // counted from the south
    while (band + 1 < grid.rows && lat >= grid.lat_edge(band + 1)) ++band;
    std::size_t col = 0;
    while (col + 1 < grid.cols && lon >= grid.lon_edge(col + 1)) ++col;
    return grid.region_at(grid.rows - 1 - band, col);
}

inline RegionId assign_region(const CatalogEvent& event, const RegionGrid& grid) {
    return assign_region(event.latitude, event.longitude, grid);
}

/// Keeps events with magnitude >= min_magnitude, time inside the closed range
/// and location inside the grid box (all edges inclusive).
inline std::vector<CatalogEvent> filter_events(const std::vector<CatalogEvent>& events,
                                               double min_magnitude, const TimeRange& range,
                                               const RegionGrid& grid) {
    if (!std::isfinite(min_magnitude)) throw DomainError("minimum magnitude must be finite");
    if (!(range.start < range.end)) throw DomainError("time range start must precede its end");
    std::vector<CatalogEvent> out;
    for (const auto& e : events) {
        if (e.magnitude >= min_magnitude && range.contains(e.time) &&
            grid.contains(e.latitude, e.longitude)) {
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace quakecast
