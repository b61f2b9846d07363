#include "bethe/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bethe/metrics.hpp"

namespace bethe::bench {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt3(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

double parse_double_or_nan(const std::string& s) {
    if (s.empty()) return std::nan("");
    return std::stod(s);
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char ch : s) out += (ch == ',' || ch == '\n' || ch == '\r') ? ';' : ch;
    return out;
}

constexpr const char* kRecordsHeader =
    "dataset,method,seed,status,nll,rmse,acc,calib_err,ece,alpha,sigma_obs_sq,"
    "oracle_test_nll,steps,error";

}  // namespace

std::string MethodSpec::name() const {
    std::string out;
    switch (family) {
        case MethodFamily::Regression: out = "regression"; break;
        case MethodFamily::Binary: out = "binary"; break;
        case MethodFamily::Ova: out = "ova"; break;
        case MethodFamily::Ordinal: out = "ordinal"; break;
        case MethodFamily::Map: out = "map"; break;
        case MethodFamily::Ensemble: out = "ensemble"; break;
    }
    if (is_bethe()) {
        out += "-" + variant_name(variant);
        switch (regime) {
            case RegimeKind::Eb: out += "-eb"; break;
            case RegimeKind::Cv: out += "-cv"; break;
            case RegimeKind::Fixed: {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%g", fixed_alpha);
                out += std::string("-fixed:") + buf;
                break;
            }
        }
        if (fs) out += "-fs";
    }
    if (depth != 1) out += "-" + std::to_string(depth) + "l";
    return out;
}

MethodSpec parse_method(const std::string& text) {
    MethodSpec spec;
    std::istringstream in(text);
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("empty method description");
    if (tok == "regression")
        spec.family = MethodFamily::Regression;
    else if (tok == "binary")
        spec.family = MethodFamily::Binary;
    else if (tok == "ova")
        spec.family = MethodFamily::Ova;
    else if (tok == "ordinal")
        spec.family = MethodFamily::Ordinal;
    else if (tok == "map")
        spec.family = MethodFamily::Map;
    else if (tok == "ensemble")
        spec.family = MethodFamily::Ensemble;
    else
        throw std::runtime_error("unknown method family: " + tok);
    while (in >> tok) {
        if (tok == "v1" || tok == "v2" || tok == "v3")
            spec.variant = variant_from_name(tok);
        else if (tok == "eb")
            spec.regime = RegimeKind::Eb;
        else if (tok == "cv")
            spec.regime = RegimeKind::Cv;
        else if (tok.rfind("fixed:", 0) == 0) {
            spec.regime = RegimeKind::Fixed;
            spec.fixed_alpha = std::stod(tok.substr(6));
        } else if (tok == "fs")
            spec.fs = true;
        else if (tok == "0l")
            spec.depth = 0;
        else if (tok == "1l")
            spec.depth = 1;
        else if (tok == "2l")
            spec.depth = 2;
        else
            throw std::runtime_error("unknown method token: " + tok);
    }
    if (!spec.is_bethe() && (spec.fs || spec.regime != RegimeKind::Eb))
        throw std::runtime_error("fs/regime modifiers only apply to Bethe methods: " + text);
    return spec;
}

std::vector<std::uint64_t> ExperimentPlan::default_seeds() {
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = 5; s <= 24; ++s) out.push_back(s);
    return out;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    std::vector<std::uint64_t> out;
    const std::string t = trim(text);
    const auto dots = t.find("..");
    if (dots != std::string::npos) {
        const std::uint64_t lo = std::stoull(t.substr(0, dots));
        const std::uint64_t hi = std::stoull(t.substr(dots + 2));
        if (hi < lo) throw std::runtime_error("bad seed range: " + text);
        for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
        return out;
    }
    for (const std::string& part : split_on(t, ','))
        if (!trim(part).empty()) out.push_back(std::stoull(trim(part)));
    if (out.empty()) throw std::runtime_error("empty seed list: " + text);
    return out;
}

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan: " + path);
    ExperimentPlan plan;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed plan line (expected key = value): " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key == "dataset")
            plan.dataset_specs.push_back(value);
        else if (key == "method")
            plan.methods.push_back(parse_method(value));
        else if (key == "seeds")
            plan.seeds = parse_seed_range(value);
        else if (key == "out")
            plan.out_dir = value;
        else
            throw std::runtime_error("unknown plan key '" + key + "' in " + path);
    }
    if (plan.dataset_specs.empty()) throw std::runtime_error("plan lists no datasets");
    if (plan.methods.empty()) throw std::runtime_error("plan lists no methods");
    if (plan.seeds.empty()) throw std::runtime_error("plan lists no seeds");
    return plan;
}

namespace {

TrainConfig config_for(const MethodSpec& method, const Dataset& raw, std::uint64_t seed) {
    TrainConfig cfg;
    switch (method.family) {
        case MethodFamily::Regression: cfg.head = HeadKind::Regression; break;
        case MethodFamily::Binary: cfg.head = HeadKind::Binary; break;
        case MethodFamily::Ova: cfg.head = HeadKind::Ova; break;
        case MethodFamily::Ordinal: cfg.head = HeadKind::Ordinal; break;
        case MethodFamily::Map:
        case MethodFamily::Ensemble:
            cfg.head = raw.task == TaskKind::Regression ? HeadKind::MapRegression
                                                        : HeadKind::MapClass;
            break;
    }
    cfg.variant = method.variant;
    cfg.regime = method.regime;
    cfg.fixed_alpha = method.fixed_alpha;
    cfg.fs = method.fs;
    cfg.depth = method.depth;
    cfg.seed = seed;
    return cfg;
}

void check_plan_compatibility(const Dataset& raw, const MethodSpec& method) {
    const bool regression_method = method.family == MethodFamily::Regression;
    const bool class_method = method.family == MethodFamily::Binary ||
                              method.family == MethodFamily::Ova ||
                              method.family == MethodFamily::Ordinal;
    if (regression_method && raw.task != TaskKind::Regression)
        throw std::runtime_error("method " + method.name() + " needs a regression dataset, " +
                                 raw.name + " is classification");
    if (class_method && raw.task != TaskKind::Classification)
        throw std::runtime_error("method " + method.name() + " needs a classification dataset, " +
                                 raw.name + " is regression");
    if (method.family == MethodFamily::Binary && raw.num_classes != 2)
        throw std::runtime_error("binary method on " + raw.name + " with " +
                                 std::to_string(raw.num_classes) + " classes");
}

void fill_regression_metrics(RunRecord& rec, const RegressionPredictive& pred, const Matrix& y) {
    rec.nll = gaussian_nll(pred, y);
    rec.rmse = rmse(pred, y);
    rec.calib_err = calib_err(pred, y);
}

void fill_class_metrics(RunRecord& rec, const ClassPredictive& pred,
                        const std::vector<int>& labels) {
    rec.nll = class_nll(pred, labels);
    rec.acc = accuracy(pred, labels);
    rec.ece = ece(pred, labels);
}

}  // namespace

RunRecord run_cell(const Dataset& raw, const std::string& dataset_name, const MethodSpec& method,
                   std::uint64_t seed, Trajectory* trajectory_out) {
    RunRecord rec;
    rec.dataset = dataset_name;
    rec.method = method.name();
    rec.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        check_plan_compatibility(raw, method);
        SplitIndices idx = split(raw.size(), seed);
        Dataset processed = preprocess(raw, idx);
        FoldedData data = fold(processed, idx);
        TrainConfig cfg = config_for(method, raw, seed);

        // test targets in original units
        Matrix y_test = data.y_test;
        for (std::size_t i = 0; i < y_test.size(); ++i) y_test[i] += data.target_mean;

        if (method.family == MethodFamily::Ensemble) {
            DeepEnsemble ens = deep_ensemble(cfg, data);
            if (raw.task == TaskKind::Regression) {
                fill_regression_metrics(
                    rec, ens.predict_regression(data.x_test, data.target_mean), y_test);
            } else {
                fill_class_metrics(rec, ens.predict_class(data.x_test),
                                   data.labels_of(data.y_test));
            }
        } else {
            TrainResult result;
            if (method.is_bethe() && method.regime == RegimeKind::Cv) {
                CvResult cv = cv_select(cfg, data);
                result = std::move(cv.result);
                rec.alpha = cv.best_alpha;
            } else {
                result = train(cfg, data);
                if (method.is_bethe()) rec.alpha = result.model.alpha_summary();
            }
            rec.steps = result.steps_run;
            rec.oracle_test_nll = result.oracle_test_nll;
            if (result.alpha_runaway) rec.diagnostics += "[alpha-runaway]";
            if (result.variance_starved) rec.diagnostics += "[variance-starved]";
            if (trajectory_out) *trajectory_out = std::move(result.trajectory);

            if (raw.task == TaskKind::Regression) {
                double sigma_override = -1.0;
                if (cfg.head == HeadKind::MapRegression)
                    sigma_override = std::fmax(
                        mean_squared_error_value(result.model, data.x_val, data.y_val), 1e-12);
                RegressionPredictive pred = predict_regression(
                    result.model, data.x_test, data.target_mean, sigma_override);
                fill_regression_metrics(rec, pred, y_test);
                rec.sigma_obs_sq =
                    sigma_override > 0.0 ? sigma_override : result.model.sigma_obs_sq();
            } else {
                fill_class_metrics(rec, predict_class(result.model, data.x_test),
                                   data.labels_of(data.y_test));
            }
        }
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

namespace {

struct Cell {
    std::size_t dataset_idx;
    std::size_t method_idx;
    std::uint64_t seed;
};

struct CellOutput {
    RunRecord record;
    Trajectory trajectory;
};

std::vector<CellOutput> run_cells(const std::vector<Dataset>& datasets,
                                  const std::vector<std::string>& names,
                                  const ExperimentPlan& plan, bool keep_trajectories,
                                  std::size_t jobs, std::ostream& log, std::mutex& log_mutex) {
    std::vector<Cell> cells;
    for (std::size_t di = 0; di < datasets.size(); ++di)
        for (std::size_t mi = 0; mi < plan.methods.size(); ++mi)
            for (std::uint64_t seed : plan.seeds) cells.push_back({di, mi, seed});

    std::vector<CellOutput> outputs(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            Trajectory traj;
            outputs[i].record =
                run_cell(datasets[cell.dataset_idx], names[cell.dataset_idx],
                         plan.methods[cell.method_idx], cell.seed,
                         keep_trajectories ? &traj : nullptr);
            outputs[i].trajectory = std::move(traj);
            std::lock_guard<std::mutex> lock(log_mutex);
            const RunRecord& r = outputs[i].record;
            log << (r.ok ? "done " : "FAILED ") << r.dataset << " " << r.method << " seed "
                << r.seed;
            if (!r.diagnostics.empty()) log << " " << r.diagnostics;
            if (!r.ok) log << " (" << r.error << ")";
            log << "\n";
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return outputs;
}

void write_records_csv(const std::string& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# bethe-records v1\n" << kRecordsHeader << "\n";
    for (const RunRecord& r : records) {
        out << r.dataset << "," << r.method << "," << r.seed << ","
            << (r.ok ? "ok" : "failed") << "," << fmt(r.nll) << "," << fmt(r.rmse) << ","
            << fmt(r.acc) << "," << fmt(r.calib_err) << "," << fmt(r.ece) << ","
            << fmt(r.alpha) << "," << fmt(r.sigma_obs_sq) << "," << fmt(r.oracle_test_nll)
            << "," << r.steps << "," << sanitize(r.error) << "\n";
    }
}

std::string trajectory_filename(const RunRecord& r) {
    return r.dataset + "__" + r.method + "__s" + std::to_string(r.seed) + ".csv";
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step,train_total,train_prior,train_data,val_nll,test_nll,alpha,sigma_obs_sq\n";
    for (const auto& pt : traj)
        out << pt.step << "," << fmt(pt.train_total) << "," << fmt(pt.train_prior) << ","
            << fmt(pt.train_data) << "," << fmt(pt.val_nll) << "," << fmt(pt.test_nll) << ","
            << fmt(pt.alpha) << "," << fmt(pt.sigma_obs_sq) << "\n";
}

std::vector<Dataset> load_plan_datasets(const ExperimentPlan& plan,
                                        std::vector<std::string>& names) {
    std::vector<Dataset> datasets;
    for (const std::string& spec_path : plan.dataset_specs) {
        DatasetSpec spec = load_dataset_spec(spec_path);
        if (spec.csv_path.empty())
            throw std::runtime_error("dataset spec " + spec_path + " lists no csv");
        Dataset ds = load_csv(spec.csv_path, spec);
        names.push_back(spec.name);
        datasets.push_back(std::move(ds));
    }
    // fail fast on incompatible (dataset, method) pairs before any training
    for (std::size_t di = 0; di < datasets.size(); ++di)
        for (const MethodSpec& method : plan.methods)
            check_plan_compatibility(datasets[di], method);
    return datasets;
}

}  // namespace

int cmd_run(const ExperimentPlan& plan, std::size_t jobs, std::ostream& log) {
    std::vector<std::string> names;
    std::vector<Dataset> datasets = load_plan_datasets(plan, names);

    fs::create_directories(plan.out_dir);
    fs::create_directories(plan.out_dir + "/trajectories");

    std::mutex log_mutex;
    std::vector<CellOutput> outputs =
        run_cells(datasets, names, plan, true, jobs, log, log_mutex);

    std::vector<RunRecord> records;
    for (auto& o : outputs) records.push_back(o.record);
    write_records_csv(plan.out_dir + "/records.csv", records);
    for (const auto& o : outputs)
        if (o.record.ok && !o.trajectory.empty())
            write_trajectory_csv(plan.out_dir + "/trajectories/" + trajectory_filename(o.record),
                                 o.trajectory);
    {
        std::ofstream timings(plan.out_dir + "/timings.csv");
        timings << "# wall-clock sidecar; not deterministic across runs\n";
        timings << "dataset,method,seed,wall_seconds\n";
        for (const RunRecord& r : records)
            timings << r.dataset << "," << r.method << "," << r.seed << "," << r.wall_seconds
                    << "\n";
    }

    int failures = 0;
    for (const RunRecord& r : records)
        if (!r.ok) ++failures;
    log << "wrote " << records.size() << " records to " << plan.out_dir << "/records.csv ("
        << failures << " failed)\n";
    return failures;
}

std::vector<RunRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records: " + path);
    std::string line;
    std::vector<RunRecord> out;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // tolerate extra columns appended by future versions
            if (line.rfind("dataset,method,seed,status", 0) != 0)
                throw std::runtime_error("unrecognized records header: " + line);
            continue;
        }
        auto f = split_on(line, ',');
        if (f.size() < 14) throw std::runtime_error("short records row: " + line);
        RunRecord r;
        r.dataset = f[0];
        r.method = f[1];
        r.seed = std::stoull(f[2]);
        r.ok = f[3] == "ok";
        r.nll = parse_double_or_nan(f[4]);
        r.rmse = parse_double_or_nan(f[5]);
        r.acc = parse_double_or_nan(f[6]);
        r.calib_err = parse_double_or_nan(f[7]);
        r.ece = parse_double_or_nan(f[8]);
        r.alpha = parse_double_or_nan(f[9]);
        r.sigma_obs_sq = parse_double_or_nan(f[10]);
        r.oracle_test_nll = parse_double_or_nan(f[11]);
        r.steps = static_cast<std::size_t>(std::stoull(f[12]));
        r.error = f[13];
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

struct CellStats {
    std::map<std::uint64_t, double> nll_by_seed;
    double mean() const {
        double acc = 0.0;
        std::size_t n = 0;
        for (const auto& [seed, v] : nll_by_seed) {
            (void)seed;
            acc += v;
            ++n;
        }
        return n == 0 ? std::nan("") : acc / static_cast<double>(n);
    }
};

}  // namespace

int cmd_report(const std::string& records_csv, const std::string& out_dir, std::ostream& log) {
    std::vector<RunRecord> records = read_records_csv(records_csv);
    std::vector<std::string> datasets, methods;
    std::map<std::pair<std::string, std::string>, CellStats> table;
    for (const RunRecord& r : records) {
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
            datasets.push_back(r.dataset);
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
        if (r.ok && !std::isnan(r.nll)) table[{r.dataset, r.method}].nll_by_seed[r.seed] = r.nll;
    }

    fs::create_directories(out_dir);
    std::ofstream md(out_dir + "/report.md");
    std::ofstream csv(out_dir + "/report.csv");
    if (!md || !csv) throw std::runtime_error("cannot write report files under " + out_dir);

    md << "# Benchmark report\n\n";
    md << "Mean test NLL over seeds. **bold** = best mean per dataset; *italic* = not\n";
    md << "significantly worse than the best (two-sided paired t-test, p >= 0.05).\n\n";
    md << "| method |";
    for (const auto& ds : datasets) md << " " << ds << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) md << "---|";
    md << "\n";

    csv << "dataset,method,n_seeds,nll_mean,marker\n";

    std::map<std::string, std::string> best_method;
    for (const auto& ds : datasets) {
        double best = HUGE_VAL;
        for (const auto& m : methods) {
            auto it = table.find({ds, m});
            if (it == table.end()) continue;
            const double mean = it->second.mean();
            if (mean < best) {
                best = mean;
                best_method[ds] = m;
            }
        }
    }

    for (const auto& m : methods) {
        md << "| " << m << " |";
        for (const auto& ds : datasets) {
            auto it = table.find({ds, m});
            if (it == table.end()) {
                log << "warning: no runs for (" << ds << ", " << m << ")\n";
                md << "  |";
                csv << ds << "," << m << ",0,,missing\n";
                continue;
            }
            const double mean = it->second.mean();
            std::string marker = "plain";
            std::string cell = fmt3(mean);
            if (best_method[ds] == m) {
                marker = "best";
                cell = "**" + cell + "**";
            } else {
                // pair by common seeds against the best method
                const auto& best_stats = table[{ds, best_method[ds]}];
                std::vector<double> a, b;
                for (const auto& [seed, v] : it->second.nll_by_seed) {
                    auto bit = best_stats.nll_by_seed.find(seed);
                    if (bit != best_stats.nll_by_seed.end()) {
                        a.push_back(v);
                        b.push_back(bit->second);
                    }
                }
                if (a.size() >= 2 && paired_t_test(a, b) >= 0.05) {
                    marker = "tied";
                    cell = "*" + cell + "*";
                }
            }
            md << " " << cell << " |";
            csv << ds << "," << m << "," << it->second.nll_by_seed.size() << "," << fmt(mean)
                << "," << marker << "\n";
        }
        md << "\n";
    }
    log << "wrote " << out_dir << "/report.md and report.csv\n";
    return 0;
}

int cmd_eb_vs_cv(const ExperimentPlan& plan, std::size_t jobs, std::ostream& log) {
    for (const MethodSpec& m : plan.methods)
        if (!m.is_bethe())
            throw std::runtime_error("eb-vs-cv only applies to Bethe methods, got " + m.name());

    std::vector<std::string> names;
    std::vector<Dataset> datasets = load_plan_datasets(plan, names);
    fs::create_directories(plan.out_dir);

    // one plan per regime, same seeds
    ExperimentPlan eb_plan = plan, cv_plan = plan;
    for (auto& m : eb_plan.methods) m.regime = RegimeKind::Eb;
    for (auto& m : cv_plan.methods) m.regime = RegimeKind::Cv;

    std::mutex log_mutex;
    auto eb_out = run_cells(datasets, names, eb_plan, false, jobs, log, log_mutex);
    auto cv_out = run_cells(datasets, names, cv_plan, false, jobs, log, log_mutex);

    std::ofstream csv(plan.out_dir + "/eb_vs_cv.csv");
    std::ofstream md(plan.out_dir + "/eb_vs_cv.md");
    csv << "# positive = CV better (lower NLL) than EB; one-sided paired t-test in the "
           "observed direction\n";
    csv << "dataset,method,n_seeds,nll_cv_minus_eb,p_one_sided,sign_reliable\n";
    md << "# EB vs grid-search CV\n\n";
    md << "Mean test-NLL difference (CV - EB); *italics*: the sign is not statistically\n";
    md << "reliable (one-sided paired t-test in the observed direction, p >= 0.05).\n\n";
    md << "| dataset | method | CV - EB | p |\n|---|---|---|---|\n";

    const std::size_t cells_per_regime = eb_out.size();
    std::size_t idx = 0;
    for (std::size_t di = 0; di < datasets.size(); ++di) {
        for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
            std::vector<double> eb_nll, cv_nll;
            for (std::size_t si = 0; si < plan.seeds.size(); ++si, ++idx) {
                const RunRecord& e = eb_out[idx].record;
                const RunRecord& c = cv_out[idx].record;
                if (e.ok && c.ok && !std::isnan(e.nll) && !std::isnan(c.nll)) {
                    eb_nll.push_back(e.nll);
                    cv_nll.push_back(c.nll);
                }
            }
            MethodSpec neutral = plan.methods[mi];
            neutral.regime = RegimeKind::Eb;
            std::string method_name = neutral.name();
            const auto pos = method_name.find("-eb");
            if (pos != std::string::npos) method_name.erase(pos, 3);
            if (eb_nll.size() < 2) {
                log << "warning: fewer than 2 paired seeds for (" << names[di] << ", "
                    << method_name << ")\n";
                continue;
            }
            double diff = 0.0;
            for (std::size_t i = 0; i < eb_nll.size(); ++i) diff += cv_nll[i] - eb_nll[i];
            diff /= static_cast<double>(eb_nll.size());
            const double p = paired_t_test_observed_direction(cv_nll, eb_nll);
            const bool reliable = p < 0.05;
            csv << names[di] << "," << method_name << "," << eb_nll.size() << "," << fmt(diff)
                << "," << fmt(p) << "," << (reliable ? "yes" : "no") << "\n";
            const std::string cell = reliable ? fmt3(diff) : "*" + fmt3(diff) + "*";
            md << "| " << names[di] << " | " << method_name << " | " << cell << " | "
               << fmt3(p) << " |\n";
        }
    }
    (void)cells_per_regime;
    log << "wrote " << plan.out_dir << "/eb_vs_cv.csv and eb_vs_cv.md\n";
    return 0;
}

int cmd_two_moons(const std::string& out_dir, std::size_t resolution, std::uint64_t seed,
                  std::ostream& log) {
    if (resolution < 2) throw std::runtime_error("two-moons: resolution must be >= 2");
    Dataset ds = gen_two_moons(200, 0.15, seed);
    SplitIndices idx = split(ds.size(), seed);
    FoldedData data = fold(ds, idx);  // raw coordinates, no standardization

    TrainConfig map_cfg;
    map_cfg.head = HeadKind::MapClass;
    map_cfg.seed = seed;
    TrainResult map_res = train(map_cfg, data);

    TrainConfig bethe_cfg;
    bethe_cfg.head = HeadKind::Binary;
    bethe_cfg.variant = Variant::V3;
    bethe_cfg.seed = seed;
    TrainResult bethe_res = train(bethe_cfg, data);

    Matrix grid(resolution * resolution, 2);
    for (std::size_t i = 0; i < resolution; ++i) {
        const double x2 =
            -2.5 + 6.0 * static_cast<double>(i) / static_cast<double>(resolution - 1);
        for (std::size_t j = 0; j < resolution; ++j) {
            const double x1 =
                -2.5 + 6.0 * static_cast<double>(j) / static_cast<double>(resolution - 1);
            grid(i * resolution + j, 0) = x1;
            grid(i * resolution + j, 1) = x2;
        }
    }
    ClassPredictive p_map = predict_class(map_res.model, grid);
    ClassPredictive p_bethe = predict_class(bethe_res.model, grid);
    ForwardMessage bethe_msg = head_messages(bethe_res.model, grid)[0];

    fs::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/two_moons_grid.csv");
        out << "x1,x2,p_map,p_bethe,v_bethe\n";
        for (std::size_t r = 0; r < grid.rows(); ++r)
            out << fmt(grid(r, 0)) << "," << fmt(grid(r, 1)) << "," << fmt(p_map.probs(r, 1))
                << "," << fmt(p_bethe.probs(r, 1)) << "," << fmt(bethe_msg.v[r]) << "\n";
    }
    {
        std::ofstream out(out_dir + "/two_moons_train.csv");
        out << "x1,x2,label\n";
        for (std::size_t r : idx.train)
            out << fmt(ds.x(r, 0)) << "," << fmt(ds.x(r, 1)) << "," << static_cast<int>(ds.y[r])
                << "\n";
    }
    log << "wrote " << out_dir << "/two_moons_grid.csv (" << grid.rows() << " rows) and "
        << out_dir << "/two_moons_train.csv\n";
    return 0;
}

}  // namespace bethe::bench
