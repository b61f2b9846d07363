#include <CLI11.hpp>
#include <iostream>

#include "bethe/bench.hpp"
#include "bethe/verify.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Bethe last-layer benchmark runner"};
    app.require_subcommand(1);

    std::string plan_path, seeds_text, out_dir, records_path;
    std::size_t jobs = 1, resolution = 100;
    std::uint64_t seed = 5;

    auto add_plan_options = [&](CLI::App* cmd) {
        cmd->add_option("--plan", plan_path, "experiment plan file")->required();
        cmd->add_option("--seeds", seeds_text, "seed range a..b or comma list (overrides plan)");
        cmd->add_option("--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out_dir, "output directory (overrides plan)");
    };

    CLI::App* run = app.add_subcommand("run", "execute every (dataset, method, seed) cell");
    add_plan_options(run);

    CLI::App* report =
        app.add_subcommand("report", "aggregate a records.csv into significance-marked tables");
    report->add_option("--records", records_path, "records.csv from a run")->required();
    report->add_option("--out", out_dir, "output directory")->required();

    CLI::App* ebcv = app.add_subcommand(
        "eb-vs-cv", "paired comparison of empirical Bayes vs grid-search cross-validation");
    add_plan_options(ebcv);

    CLI::App* moons =
        app.add_subcommand("two-moons", "train on two moons and emit a probability lattice");
    moons->add_option("--out", out_dir, "output directory")->required();
    moons->add_option("--resolution", resolution, "lattice points per axis");
    moons->add_option("--seed", seed, "generator and training seed");

    app.add_subcommand("verify", "run the numerical self-check suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || ebcv->parsed()) {
            bethe::bench::ExperimentPlan plan = bethe::bench::load_plan(plan_path);
            if (!seeds_text.empty()) plan.seeds = bethe::bench::parse_seed_range(seeds_text);
            if (!out_dir.empty()) plan.out_dir = out_dir;
            if (run->parsed()) return bethe::bench::cmd_run(plan, jobs, std::cout) > 0 ? 1 : 0;
            return bethe::bench::cmd_eb_vs_cv(plan, jobs, std::cout);
        }
        if (report->parsed())
            return bethe::bench::cmd_report(records_path, out_dir, std::cout);
        if (moons->parsed())
            return bethe::bench::cmd_two_moons(out_dir, resolution, seed, std::cout);
        const int failures = bethe::verify::run_all(std::cout);
        std::cout << (failures == 0 ? "all checks passed" : "checks FAILED") << "\n";
        return failures == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
