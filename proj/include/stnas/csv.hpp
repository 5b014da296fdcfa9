#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "stnas/errors.hpp"

namespace stnas::csv {

// Deterministic, round-trippable formatting: integral values print without a
// decimal point, everything else with max_digits10 significant digits.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt(std::int64_t v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline double parse_double(const std::string& s) {
    if (s == "nan" || s.empty()) return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("not a number: \"" + s + "\"");
    return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& fields, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += sep;
        out += fields[i];
    }
    return out;
}

// Rows of a CSV file including the header row; trailing newline tolerated.
inline std::vector<std::vector<std::string>> read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path, 0);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split(line));
    }
    return rows;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw FormatError("cannot open " + path + " for writing", 0);
    }

    void row(const std::vector<std::string>& fields) { out_ << join(fields) << "\n"; }
    void raw(const std::string& line) { out_ << line << "\n"; }

private:
    std::ofstream out_;
};

}  // namespace stnas::csv
