#pragma once

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bartsel/errors.hpp"
#include "bartsel/math.hpp"

namespace bartsel {

// Predictor columns plus one response vector. Columns are stored
// variable-major since the sampler scans one variable across rows.
struct Dataset {
    std::vector<std::vector<double>> predictors;  // K columns of length n
    std::vector<double> response;                 // length n
    std::vector<std::string> names;               // K column labels

    std::size_t n() const { return response.size(); }
    std::size_t k() const { return predictors.size(); }

    void validate() const {
        if (k() < 1) throw ValidationError("dataset needs at least one predictor");
        if (n() < 2) throw ValidationError("dataset needs at least two rows");
        if (names.size() != k()) throw ValidationError("column name count mismatch");
        for (const auto& col : predictors) {
            if (col.size() != n()) throw ValidationError("ragged predictor column");
            if (!all_finite(col)) throw ValidationError("non-finite predictor value");
        }
        if (!all_finite(response)) throw ValidationError("non-finite response value");
    }

    std::vector<double> row(std::size_t i) const {
        std::vector<double> x(k());
        for (std::size_t j = 0; j < k(); ++j) x[j] = predictors[j][i];
        return x;
    }

    Dataset with_response(std::vector<double> y) const {
        Dataset d{predictors, std::move(y), names};
        return d;
    }

    // Column subset, order preserved. Used for refits on selected variables.
    Dataset select_columns(std::span<const std::size_t> cols) const {
        Dataset d;
        d.response = response;
        for (std::size_t j : cols) {
            d.predictors.push_back(predictors[j]);
            d.names.push_back(names[j]);
        }
        return d;
    }

    Dataset subset_rows(std::span<const std::size_t> rows) const {
        Dataset d;
        d.names = names;
        d.predictors.assign(k(), {});
        for (std::size_t j = 0; j < k(); ++j) {
            d.predictors[j].reserve(rows.size());
            for (std::size_t i : rows) d.predictors[j].push_back(predictors[j][i]);
        }
        d.response.reserve(rows.size());
        for (std::size_t i : rows) d.response.push_back(response[i]);
        return d;
    }
};

// Affine map y -> (y - shift) / scale and its inverse.
struct Standardization {
    double shift = 0.0;
    double scale = 1.0;

    double standardize(double y) const { return (y - shift) / scale; }
    double destandardize(double z) const { return z * scale + shift; }
};

// Maps the observed response range onto [-0.5, 0.5].
inline std::pair<std::vector<double>, Standardization> standardize_response(std::span<const double> response) {
    if (response.size() < 2) throw ValidationError("degenerate response");
    const auto [lo_it, hi_it] = std::minmax_element(response.begin(), response.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw ValidationError("degenerate response");
    Standardization std_map{0.5 * (lo + hi), hi - lo};
    std::vector<double> out(response.size());
    for (std::size_t i = 0; i < response.size(); ++i) out[i] = std_map.standardize(response[i]);
    return {std::move(out), std_map};
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) fields.push_back(field);
    if (!line.empty() && line.back() == delim) fields.emplace_back();
    return fields;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& raw, std::size_t line_no, const std::string& col) {
    const std::string s = trim(raw);
    if (s.empty())
        throw ValidationError("missing value at line " + std::to_string(line_no) + ", column '" + col + "'");
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ValidationError("non-numeric value '" + s + "' at line " + std::to_string(line_no) + ", column '" +
                              col + "'");
    return value;
}

}  // namespace detail

// Delimited text with a header row; the named column becomes the response and
// every other column a predictor. Missing or non-numeric cells are an error.
inline Dataset read_csv(const std::string& path, const std::string& response_col, char delim = ',') {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty dataset file: " + path);
    auto header = detail::split_line(line, delim);
    for (auto& h : header) h = detail::trim(h);

    std::ptrdiff_t response_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == response_col) response_idx = static_cast<std::ptrdiff_t>(j);
    if (response_idx < 0) throw ValidationError("response column '" + response_col + "' not in header");

    Dataset d;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (static_cast<std::ptrdiff_t>(j) != response_idx) d.names.push_back(header[j]);
    d.predictors.assign(d.names.size(), {});

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_line(line, delim);
        if (fields.size() != header.size())
            throw ValidationError("expected " + std::to_string(header.size()) + " fields at line " +
                                  std::to_string(line_no) + ", got " + std::to_string(fields.size()));
        std::size_t out_j = 0;
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const double v = detail::parse_number(fields[j], line_no, header[j]);
            if (static_cast<std::ptrdiff_t>(j) == response_idx)
                d.response.push_back(v);
            else
                d.predictors[out_j++].push_back(v);
        }
    }
    d.validate();
    return d;
}

// Round-trips through read_csv exactly: 17 significant digits.
inline void write_csv(const Dataset& d, const std::string& path, const std::string& response_col = "y",
                      char delim = ',') {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    out << response_col;
    for (const auto& name : d.names) out << delim << name;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < d.n(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", d.response[i]);
        out << buf;
        for (std::size_t j = 0; j < d.k(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", d.predictors[j][i]);
            out << delim << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace bartsel
