#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bartsel/cli.hpp"

namespace {

const std::map<std::string, bartsel::Strategy> kStrategyNames{
    {"local", bartsel::Strategy::kLocal},
    {"global-max", bartsel::Strategy::kGlobalMax},
    {"global-se", bartsel::Strategy::kGlobalSe},
    {"cv", bartsel::Strategy::kCvBest}};

const std::map<std::string, bartsel::ScenarioKind> kScenarioNames{
    {"null", bartsel::ScenarioKind::kNull},
    {"linear", bartsel::ScenarioKind::kLinear},
    {"friedman", bartsel::ScenarioKind::kFriedman}};

void add_shared_options(CLI::App& cmd, bartsel::RunConfig& cfg) {
    cmd.add_option("--trees", cfg.hp.m, "Trees in the ensemble")->capture_default_str();
    cmd.add_option("--burn", cfg.hp.n_burn, "Burn-in iterations per chain")->capture_default_str();
    cmd.add_option("--post", cfg.hp.n_post, "Retained iterations per chain")->capture_default_str();
    cmd.add_option("--restarts", cfg.hp.n_restarts, "Chain restarts averaged for the unpermuted run")
        ->capture_default_str();
    cmd.add_option("--permutations", cfg.permutations, "Response permutations for the null distribution")
        ->capture_default_str();
    cmd.add_option("--perm-restarts", cfg.perm_restarts, "Restarts per permutation run")
        ->capture_default_str();
    cmd.add_option("--alpha", cfg.alpha, "Selection level")->capture_default_str();
    cmd.add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
    cmd.add_option("--workers", cfg.workers, "Worker threads (affects wall time only)")
        ->capture_default_str();
    cmd.add_option("--out", cfg.out_path, "Output report path")->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BART variable selection via permutation-null thresholds"};
    app.require_subcommand(1);

    bartsel::RunConfig cfg;
    std::vector<std::string> strategy_names;

    auto* select = app.add_subcommand("select", "Select variables for a CSV dataset");
    select->add_option("--data", cfg.data_path, "Dataset CSV (header row required)")->required();
    select->add_option("--response-col", cfg.response_col, "Response column name")->capture_default_str();
    select->add_option("--strategy", cfg.strategy, "Thresholding strategy")
        ->transform(CLI::CheckedTransformer(kStrategyNames))
        ->default_str("cv");
    select->add_option("--prior-file", cfg.prior_file, "Two-column file: variable name, prior probability");
    select->add_option("--c-grid", cfg.c_grid, "Prior influence values to tune over")->delimiter(',');
    select->add_flag("--clamp-prior", cfg.clamp_prior, "Clamp prior probabilities to [0.05, 0.95]");
    select->add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
    select->add_option("--csv", cfg.csv_path, "Optional per-variable CSV output");
    add_shared_options(*select, cfg);

    auto* simulate = app.add_subcommand("simulate", "Score strategies on synthetic data");
    simulate->add_option("--scenario", cfg.scenario.kind, "Data-generating process")
        ->transform(CLI::CheckedTransformer(kScenarioNames))
        ->required();
    simulate->add_option("--n", cfg.scenario.n, "Sample size")->capture_default_str();
    simulate->add_option("--p", cfg.scenario.p, "Predictor count")->capture_default_str();
    simulate->add_option("--p0", cfg.scenario.p0, "True predictor count (linear scenario)")
        ->capture_default_str();
    simulate->add_option("--noise", cfg.scenario.sigma_sq, "Noise variance sigma^2")->capture_default_str();
    simulate->add_option("--replicates", cfg.replicates, "Datasets per cell")->capture_default_str();
    simulate->add_option("--strategy", strategy_names, "Strategy to score (repeatable)")
        ->required()
        ->check(CLI::IsMember({"local", "global-max", "global-se", "cv"}));
    simulate->add_option("--folds", cfg.folds, "Cross-validation folds (cv strategy)")
        ->capture_default_str();
    add_shared_options(*simulate, cfg);

    auto* diagnose = app.add_subcommand("diagnose", "Nested-dispersion diagnostic on null data");
    diagnose->add_option("--datasets", cfg.diag_datasets, "Independent null datasets")
        ->capture_default_str();
    diagnose->add_option("--runs", cfg.diag_runs, "Independent runs per dataset")->capture_default_str();
    diagnose->add_option("--n", cfg.scenario.n, "Sample size")->capture_default_str();
    diagnose->add_option("--p", cfg.scenario.p, "Predictor count")->capture_default_str();
    add_shared_options(*diagnose, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (select->parsed()) cfg.command = bartsel::Command::kSelect;
    if (simulate->parsed()) {
        cfg.command = bartsel::Command::kSimulate;
        for (const auto& name : strategy_names) cfg.strategies.push_back(kStrategyNames.at(name));
    }
    if (diagnose->parsed()) {
        cfg.command = bartsel::Command::kDiagnose;
        cfg.scenario.kind = bartsel::ScenarioKind::kNull;
        cfg.scenario.p0 = 0;
    }

    try {
        bartsel::run_command(cfg);
    } catch (const bartsel::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
