#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bartsel/datagen.hpp"
#include "bartsel/dataset.hpp"
#include "bartsel/errors.hpp"
#include "bartsel/inclusion.hpp"
#include "bartsel/metrics.hpp"
#include "bartsel/selection.hpp"
#include "bartsel/split_prior.hpp"

namespace bartsel {

enum class Command { kSelect, kSimulate, kDiagnose };

// Everything one invocation needs; defaults are recorded in the emitted
// report so a run can be replayed from its own output.
struct RunConfig {
    Command command = Command::kSelect;

    // select
    std::string data_path;
    std::string response_col = "y";
    std::string prior_file;
    std::vector<double> c_grid;
    bool clamp_prior = false;
    Strategy strategy = Strategy::kCvBest;

    // simulate / diagnose
    ScenarioSpec scenario;
    std::size_t replicates = 10;
    std::vector<Strategy> strategies;
    std::size_t diag_datasets = 10;
    std::size_t diag_runs = 5;

    // shared
    Hyperparams hp;
    double alpha = 0.05;
    std::size_t permutations = 100;
    std::size_t perm_restarts = 1;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::size_t workers = default_workers();
    std::string out_path;
    std::string csv_path;

    void validate() const {
        hp.validate();
        if (!(alpha > 0.0) || !(alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
        if (permutations < 1) throw ValidationError("need at least one permutation");
        if (out_path.empty()) throw ValidationError("--out is required");
        switch (command) {
            case Command::kSelect:
                if (data_path.empty()) throw ValidationError("select needs --data");
                if (folds < 2) throw ValidationError("--folds must be at least 2");
                if (!prior_file.empty() && strategy != Strategy::kCvBest && c_grid.size() != 1)
                    throw ValidationError(
                        "a prior file with a fixed strategy needs a single-value --c-grid; use --strategy cv "
                        "to tune c");
                break;
            case Command::kSimulate:
                if (strategies.empty()) throw ValidationError("simulate needs at least one --strategy");
                if (replicates < 1) throw ValidationError("--replicates must be at least 1");
                if (!prior_file.empty()) throw ValidationError("--prior-file applies to select only");
                scenario.validate();
                break;
            case Command::kDiagnose:
                if (diag_datasets < 1 || diag_runs < 1)
                    throw ValidationError("diagnose needs --datasets and --runs of at least 1");
                if (!prior_file.empty()) throw ValidationError("--prior-file applies to select only");
                scenario.validate();
                break;
        }
    }
};

namespace detail {

inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write output file: " + path);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + path);
    }
    fs::rename(tmp, target);
}

inline nlohmann::json hyperparams_json(const Hyperparams& hp) {
    return {{"trees", hp.m},
            {"tree_prior_alpha", hp.tree_prior_alpha},
            {"tree_prior_beta", hp.tree_prior_beta},
            {"k_mu", hp.k_mu},
            {"nu", hp.nu},
            {"q", hp.q},
            {"burn", hp.n_burn},
            {"post", hp.n_post},
            {"restarts", hp.n_restarts},
            {"move_probs", {hp.move_probs.grow, hp.move_probs.prune, hp.move_probs.change}}};
}

inline nlohmann::json config_json(const RunConfig& cfg) {
    nlohmann::json j{{"alpha", cfg.alpha},
                     {"permutations", cfg.permutations},
                     {"perm_restarts", cfg.perm_restarts},
                     {"seed", cfg.seed},
                     {"workers", cfg.workers},
                     {"hyperparams", hyperparams_json(cfg.hp)},
                     {"out", cfg.out_path}};
    switch (cfg.command) {
        case Command::kSelect:
            j["command"] = "select";
            j["data"] = cfg.data_path;
            j["response_col"] = cfg.response_col;
            j["strategy"] = strategy_name(cfg.strategy);
            j["folds"] = cfg.folds;
            if (!cfg.prior_file.empty()) {
                j["prior_file"] = cfg.prior_file;
                j["clamp_prior"] = cfg.clamp_prior;
                j["c_grid"] = cfg.c_grid;
            }
            if (!cfg.csv_path.empty()) j["csv"] = cfg.csv_path;
            break;
        case Command::kSimulate: {
            j["command"] = "simulate";
            std::vector<std::string> names;
            for (Strategy s : cfg.strategies) names.push_back(strategy_name(s));
            j["strategies"] = names;
            j["replicates"] = cfg.replicates;
            j["folds"] = cfg.folds;
            j["scenario"] = {{"kind", cfg.scenario.kind == ScenarioKind::kNull       ? "null"
                                      : cfg.scenario.kind == ScenarioKind::kLinear   ? "linear"
                                                                                     : "friedman"},
                             {"n", cfg.scenario.n},
                             {"p", cfg.scenario.p},
                             {"p0", cfg.scenario.p0},
                             {"sigma_sq", cfg.scenario.sigma_sq}};
            break;
        }
        case Command::kDiagnose:
            j["command"] = "diagnose";
            j["datasets"] = cfg.diag_datasets;
            j["runs"] = cfg.diag_runs;
            j["scenario"] = {{"kind", "null"}, {"n", cfg.scenario.n}, {"p", cfg.scenario.p}};
            break;
    }
    return j;
}

inline nlohmann::json strategy_block(const SelectionResult& res, const std::vector<std::string>& names) {
    std::vector<std::string> selected;
    for (std::size_t k : res.selected) selected.push_back(names[k]);
    nlohmann::json j{{"thresholds", res.thresholds}, {"selected", selected}};
    if (res.strategy == Strategy::kGlobalMax) j["threshold"] = res.global_max_threshold;
    if (res.strategy == Strategy::kGlobalSe) j["c_star"] = res.c_star;
    return j;
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// Full selection pipeline on a dataset file: restart-averaged proportions,
// permutation null, thresholds for every strategy, optional cross-validated
// winner, JSON report (plus optional per-variable CSV).
inline nlohmann::json cmd_select(const RunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    const Dataset data = read_csv(cfg.data_path, cfg.response_col);

    std::optional<PriorSpec> prior;
    if (!cfg.prior_file.empty())
        prior = read_prior_file(cfg.prior_file, data.names, 0.0, cfg.clamp_prior);

    SelectionResult headline;
    if (cfg.strategy == Strategy::kCvBest) {
        CvOptions opts;
        opts.folds = cfg.folds;
        opts.alpha = cfg.alpha;
        opts.permutations = cfg.permutations;
        opts.perm_restarts = cfg.perm_restarts;
        opts.workers = cfg.workers;
        headline = select_cv_best(data, cfg.hp, prior, cfg.c_grid, opts, cfg.seed);
    } else {
        std::vector<double> weights;
        double c_used = 0.0;
        if (prior) {
            PriorSpec spec = *prior;
            spec.c = cfg.c_grid.front();
            c_used = spec.c;
            weights = compute_weights(spec);
        } else {
            weights = uniform_weights(data.k());
        }
        headline = run_strategy(data, cfg.hp, weights, cfg.strategy,
                                {.alpha = cfg.alpha,
                                 .permutations = cfg.permutations,
                                 .perm_restarts = cfg.perm_restarts,
                                 .workers = cfg.workers},
                                cfg.seed);
        headline.prior_c = c_used;
    }

    const auto local = threshold_local(headline.proportions, headline.null_matrix, cfg.alpha);
    const auto gmax = threshold_global_max(headline.proportions, headline.null_matrix, cfg.alpha);
    const auto gse = threshold_global_se(headline.proportions, headline.null_matrix, cfg.alpha);

    std::vector<std::string> selected_names;
    for (std::size_t k : headline.selected) selected_names.push_back(data.names[k]);

    nlohmann::json report{
        {"config", detail::config_json(cfg)},
        {"dataset", {{"path", cfg.data_path}, {"n", data.n()}, {"k", data.k()}, {"variables", data.names}}},
        {"proportions", headline.proportions},
        {"strategies",
         {{"local", detail::strategy_block(local, data.names)},
          {"global-max", detail::strategy_block(gmax, data.names)},
          {"global-se", detail::strategy_block(gse, data.names)}}},
        {"selection",
         {{"strategy", strategy_name(cfg.strategy)},
          {"selected", selected_names},
          {"thresholds", headline.thresholds}}},
        {"seeds",
         {{"master", headline.master_seed},
          {"perm_restarts", headline.perm_restarts},
          {"unpermuted_restarts", headline.unpermuted_restarts}}}};
    if (cfg.strategy == Strategy::kCvBest) {
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& cell : headline.cv_errors)
            errors.push_back(
                {{"strategy", strategy_name(cell.strategy)}, {"c", cell.c}, {"l2", cell.total_sq_error}});
        report["cv"] = {{"winner", strategy_name(headline.cv_winner)},
                        {"c", headline.cv_winner_c},
                        {"errors", errors}};
    }
    if (prior) report["prior_c"] = headline.prior_c;
    report["timing"] = {{"seconds", detail::elapsed_seconds(start)}};

    detail::write_file_atomic(cfg.out_path, report.dump(2) + "\n");

    if (!cfg.csv_path.empty()) {
        std::ostringstream csv;
        csv << "variable,proportion,threshold_local,threshold_global_max,threshold_global_se,"
               "selected_local,selected_global_max,selected_global_se,selected\n";
        auto in = [](const std::vector<std::size_t>& sel, std::size_t k) {
            return std::find(sel.begin(), sel.end(), k) != sel.end() ? 1 : 0;
        };
        char buf[64];
        for (std::size_t k = 0; k < data.k(); ++k) {
            csv << data.names[k];
            for (double v : {headline.proportions[k], local.thresholds[k], gmax.thresholds[k],
                             gse.thresholds[k]}) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                csv << ',' << buf;
            }
            csv << ',' << in(local.selected, k) << ',' << in(gmax.selected, k) << ',' << in(gse.selected, k)
                << ',' << in(headline.selected, k) << '\n';
        }
        detail::write_file_atomic(cfg.csv_path, csv.str());
    }
    return report;
}

// One simulation cell: per replicate, generate data, run every requested
// strategy, score against the true set; emits replicate rows then per-strategy
// mean and standard-error rows.
inline nlohmann::json cmd_simulate(const RunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();

    struct Row {
        std::size_t replicate;
        Strategy strategy;
        std::size_t selected_count;
        PrecisionRecallF1 score;
    };
    std::vector<Row> rows;

    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
        ScenarioSpec spec = cfg.scenario;
        spec.seed = Rng::stream(cfg.seed, 0x9100 + rep).next_u64();
        const auto generated = generate(spec);
        const std::uint64_t run_seed = Rng::stream(cfg.seed, 0x9200 + rep).next_u64();

        // the null and unpermuted proportions are shared across strategies
        std::optional<SelectionResult> first;
        for (Strategy strategy : cfg.strategies) {
            SelectionResult res;
            if (strategy == Strategy::kCvBest) {
                CvOptions opts;
                opts.folds = cfg.folds;
                opts.alpha = cfg.alpha;
                opts.permutations = cfg.permutations;
                opts.perm_restarts = cfg.perm_restarts;
                opts.workers = cfg.workers;
                res = select_cv_best(generated.dataset, cfg.hp, std::nullopt, {}, opts, run_seed);
            } else if (!first) {
                res = run_strategy(generated.dataset, cfg.hp, uniform_weights(generated.dataset.k()),
                                   strategy,
                                   {.alpha = cfg.alpha,
                                    .permutations = cfg.permutations,
                                    .perm_restarts = cfg.perm_restarts,
                                    .workers = cfg.workers},
                                   run_seed);
                first = res;
            } else {
                res = detail::apply_strategy(strategy, first->proportions, first->null_matrix, cfg.alpha);
            }
            const auto counts = confusion(res.selected, generated.true_set, cfg.scenario.p);
            rows.push_back({rep, strategy, res.selected.size(), precision_recall_f1(counts)});
        }
    }

    std::ostringstream csv;
    csv << "row_type,replicate,strategy,selected_count,precision,recall,f1,precision_se,recall_se,f1_se\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& row : rows)
        csv << "replicate," << row.replicate << ',' << strategy_name(row.strategy) << ','
            << row.selected_count << ',' << fmt(row.score.precision) << ',' << fmt(row.score.recall) << ','
            << fmt(row.score.f1) << ",,,\n";

    nlohmann::json summary_json = nlohmann::json::array();
    for (Strategy strategy : cfg.strategies) {
        std::vector<double> precisions, recalls, f1s;
        for (const auto& row : rows) {
            if (row.strategy != strategy) continue;
            precisions.push_back(row.score.precision);
            recalls.push_back(row.score.recall);
            f1s.push_back(row.score.f1);
        }
        const double n = static_cast<double>(precisions.size());
        auto se = [&](const std::vector<double>& v) {
            return v.size() < 2 ? 0.0 : sample_sd(v) / std::sqrt(n);
        };
        csv << "summary,," << strategy_name(strategy) << ",," << fmt(mean_of(precisions)) << ','
            << fmt(mean_of(recalls)) << ',' << fmt(mean_of(f1s)) << ',' << fmt(se(precisions)) << ','
            << fmt(se(recalls)) << ',' << fmt(se(f1s)) << '\n';
        summary_json.push_back({{"strategy", strategy_name(strategy)},
                                {"mean_precision", mean_of(precisions)},
                                {"mean_recall", mean_of(recalls)},
                                {"mean_f1", mean_of(f1s)},
                                {"se_f1", se(f1s)}});
    }
    detail::write_file_atomic(cfg.out_path, csv.str());

    nlohmann::json report{{"config", detail::config_json(cfg)}, {"summary", summary_json}};
    report["timing"] = {{"seconds", detail::elapsed_seconds(start)}};
    return report;
}

// Nested-dispersion diagnostic: I null datasets x J independent runs, the
// p_ijk array and its decomposition into run-, dataset-, and variable-level
// standard deviations.
inline nlohmann::json cmd_diagnose(const RunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();

    const std::size_t n_datasets = cfg.diag_datasets, n_runs = cfg.diag_runs;
    std::vector<std::vector<std::vector<double>>> p_ijk(
        n_datasets, std::vector<std::vector<double>>(n_runs));
    std::vector<Dataset> datasets(n_datasets);
    for (std::size_t i = 0; i < n_datasets; ++i)
        datasets[i] = gen_null(cfg.scenario.n, cfg.scenario.p, Rng::stream(cfg.seed, 0xD000 + i).next_u64());

    Hyperparams hp = cfg.hp;
    const auto weights = uniform_weights(cfg.scenario.p);
    parallel_for(n_datasets * n_runs, cfg.workers, [&](std::size_t task) {
        const std::size_t i = task / n_runs, j = task % n_runs;
        auto samples = run_chain(datasets[i], hp, weights,
                                 Rng::stream(cfg.seed, 0xE000 + task).next_u64());
        p_ijk[i][j] = posterior_mean_proportions(samples, cfg.scenario.p);
    });

    const auto decomp = nested_variance_decomposition(p_ijk);
    std::vector<double> mean_s_ik(cfg.scenario.p, 0.0);
    for (std::size_t k = 0; k < cfg.scenario.p; ++k) {
        for (std::size_t i = 0; i < n_datasets; ++i) mean_s_ik[k] += decomp.s_ik[i][k];
        mean_s_ik[k] /= static_cast<double>(n_datasets);
    }

    nlohmann::json report{{"config", detail::config_json(cfg)},
                          {"p_ijk", p_ijk},
                          {"s_ik", decomp.s_ik},
                          {"s_k", decomp.s_k},
                          {"mean_s_ik", mean_s_ik},
                          {"s", decomp.s},
                          {"variable_means", decomp.variable_means},
                          {"grand_mean", decomp.grand_mean}};
    report["timing"] = {{"seconds", detail::elapsed_seconds(start)}};
    detail::write_file_atomic(cfg.out_path, report.dump(2) + "\n");
    return report;
}

inline nlohmann::json run_command(const RunConfig& cfg) {
    switch (cfg.command) {
        case Command::kSelect: return cmd_select(cfg);
        case Command::kSimulate: return cmd_simulate(cfg);
        case Command::kDiagnose: return cmd_diagnose(cfg);
    }
    throw ValidationError("unknown command");
}

}  // namespace bartsel
