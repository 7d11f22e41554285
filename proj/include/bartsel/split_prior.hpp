#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"

namespace bartsel {

// Per-variable prior importance probabilities plus the influence parameter c.
// Splitting variable k is proposed with probability proportional to 1 + c * m_k.
struct PriorSpec {
    std::vector<double> probabilities;  // m_k in [0, 1]
    double c = 0.0;

    void validate() const {
        if (c < 0.0) throw ValidationError("prior influence c must be >= 0");
        for (double p : probabilities)
            if (!(p >= 0.0) || !(p <= 1.0)) throw ValidationError("prior probability outside [0, 1]");
    }
};

inline std::vector<double> compute_weights(const PriorSpec& spec) {
    spec.validate();
    std::vector<double> w(spec.probabilities.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = 1.0 + spec.c * spec.probabilities[k];
    return w;
}

inline std::vector<double> uniform_weights(std::size_t k) {
    if (k < 1) throw ValidationError("need at least one variable");
    return std::vector<double>(k, 1.0);
}

// Weight 2 on the given variables, 1 elsewhere, so a doubled variable is
// proposed with probability 2 / (K + |set|).
inline std::vector<double> doubled_weights(std::span<const std::size_t> doubled_set, std::size_t k) {
    auto w = uniform_weights(k);
    for (std::size_t idx : doubled_set) {
        if (idx >= k) throw ValidationError("doubled index out of range");
        w[idx] = 2.0;
    }
    return w;
}

// Two-column delimited file: variable name, probability in [0, 1]. Every name
// must exist in the dataset header; unlisted variables get probability 0.
inline PriorSpec read_prior_file(const std::string& path, const std::vector<std::string>& dataset_names, double c,
                                 bool clamp = false) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open prior file: " + path);
    PriorSpec spec;
    spec.c = c;
    spec.probabilities.assign(dataset_names.size(), 0.0);
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        auto fields = detail::split_line(trimmed, ',');
        if (fields.size() == 1) fields = detail::split_line(trimmed, '\t');
        if (fields.size() != 2)
            throw ValidationError("prior file line " + std::to_string(line_no) + ": expected 'name,probability'");
        const std::string name = detail::trim(fields[0]);
        const auto it = std::find(dataset_names.begin(), dataset_names.end(), name);
        if (it == dataset_names.end())
            throw ValidationError("prior file names unknown variable '" + name + "'");
        if (!seen.insert(name).second)
            throw ValidationError("prior file repeats variable '" + name + "'");
        double p = detail::parse_number(fields[1], line_no, name);
        if (!(p >= 0.0) || !(p <= 1.0))
            throw ValidationError("prior probability for '" + name + "' outside [0, 1]");
        if (clamp) p = std::clamp(p, 0.05, 0.95);
        spec.probabilities[static_cast<std::size_t>(it - dataset_names.begin())] = p;
    }
    spec.validate();
    return spec;
}

}  // namespace bartsel
