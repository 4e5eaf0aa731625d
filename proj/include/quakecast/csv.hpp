// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal RFC 4180 reader/writer: comma separated, double-quote quoting,
// doubled quotes as escapes, CRLF or LF line endings.

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace quakecast::csv {

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Reads the next record into `fields`. Returns false at end of input.
    /// line() afterwards reports the 1-based line where the record started.
    bool next(std::vector<std::string>& fields) {
        fields.clear();
        int ch = in_.get();
        if (ch == EOF) return false;
        record_line_ = ++line_;
        if (first_) {
            first_ = false;
            if (ch == 0xEF && in_.peek() == 0xBB) {
                in_.get();
                if (in_.peek() == 0xBF) in_.get();
                ch = in_.get();
                if (ch == EOF) return false;
            }
        }
        std::string field;
        bool quoted = false;
        bool field_started = false;
        for (;; ch = in_.get()) {
            if (quoted) {
                if (ch == EOF) break;
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        quoted = false;
                    }
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(static_cast<char>(ch));
                }
                continue;
            }
            if (ch == EOF || ch == '\n') break;
            if (ch == '\r') {
                if (in_.peek() == '\n') continue;
                break;
            }
            if (ch == ',') {
                fields.push_back(std::move(field));
                field.clear();
                field_started = false;
                continue;
            }
            if (ch == '"' && !field_started) {
                quoted = true;
                field_started = true;
                continue;
            }
            field_started = true;
            field.push_back(static_cast<char>(ch));
        }
        fields.push_back(std::move(field));
        return true;
    }

    std::size_t line() const { return record_line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
    std::size_t record_line_ = 0;
    bool first_ = true;
};

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << quote(fields[i]);
    }
    out << '\n';
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

/// Strict full-field parse; surrounding blanks are ignored.
inline std::optional<double> parse_double(std::string_view text) {
    const std::string s = trim(text);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace quakecast::csv
