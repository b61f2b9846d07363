#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "bethe/data.hpp"
#include "bethe/trainer.hpp"

namespace bethe::bench {

enum class MethodFamily { Regression, Binary, Ova, Ordinal, Map, Ensemble };

/// One benchmark method: a head family plus its covariance variant,
/// hyperparameter regime, FS flag and backbone depth.
struct MethodSpec {
    MethodFamily family = MethodFamily::Regression;
    Variant variant = Variant::V1;
    RegimeKind regime = RegimeKind::Eb;
    double fixed_alpha = 1.0;
    bool fs = false;
    int depth = 1;

    bool is_bethe() const {
        return family != MethodFamily::Map && family != MethodFamily::Ensemble;
    }
    std::string name() const;
};

/// Parses a space-separated method description, e.g. "regression v2 eb fs"
/// or "ordinal v3 cv 2l" or "map" or "binary v1 fixed:0.5 0l".
MethodSpec parse_method(const std::string& text);

struct ExperimentPlan {
    std::vector<std::string> dataset_specs;
    std::vector<MethodSpec> methods;
    std::vector<std::uint64_t> seeds = default_seeds();
    std::string out_dir = "results";

    static std::vector<std::uint64_t> default_seeds();  // 5..24
};

/// Plain-text key=value plan file with repeatable `dataset` and `method`
/// keys, a `seeds` range (a..b or comma list) and an `out` directory.
ExperimentPlan load_plan(const std::string& path);

std::vector<std::uint64_t> parse_seed_range(const std::string& text);

struct RunRecord {
    std::string dataset;
    std::string method;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double nll = std::nan("");
    double rmse = std::nan("");
    double acc = std::nan("");
    double calib_err = std::nan("");
    double ece = std::nan("");
    double alpha = std::nan("");
    double sigma_obs_sq = std::nan("");
    double oracle_test_nll = std::nan("");
    std::size_t steps = 0;
    double wall_seconds = 0.0;  // timing sidecar only, never in records.csv
    std::string diagnostics;    // failure-mode flags, surfaced in the run log
};

/// Trains and evaluates one (dataset, method, seed) cell. Failures are
/// captured in the record, never thrown.
RunRecord run_cell(const Dataset& raw, const std::string& dataset_name, const MethodSpec& method,
                   std::uint64_t seed, Trajectory* trajectory_out);

/// Executes the whole plan and writes records.csv, per-run trajectory CSVs
/// and a (non-deterministic) timings.csv under the plan's out directory.
/// Returns the number of failed cells.
int cmd_run(const ExperimentPlan& plan, std::size_t jobs, std::ostream& log);

/// Aggregates a records.csv into per-dataset mean-NLL tables with the best
/// method bolded and statistically indistinguishable methods italicized
/// (two-sided paired t-test, p >= 0.05).
int cmd_report(const std::string& records_csv, const std::string& out_dir, std::ostream& log);

/// Per-(dataset, method) mean test-NLL difference CV - EB with a one-sided
/// paired t-test in the observed direction.
int cmd_eb_vs_cv(const ExperimentPlan& plan, std::size_t jobs, std::ostream& log);

/// Trains point-estimate and Bethe classifiers on the two-moons toy set and
/// emits a probability/variance lattice for external plotting.
int cmd_two_moons(const std::string& out_dir, std::size_t resolution, std::uint64_t seed,
                  std::ostream& log);

/// Reads back a records.csv (used by report and by tests).
std::vector<RunRecord> read_records_csv(const std::string& path);

}  // namespace bethe::bench
