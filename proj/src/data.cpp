#include "bethe/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bethe/rng.hpp"
#include "bethe/special_functions.hpp"

namespace bethe {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    const std::string t = trim(cell);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw std::runtime_error("unparseable value '" + t + "' at data row " +
                                 std::to_string(row) + ", column '" + column + "'");
    if (!std::isfinite(v))
        throw std::runtime_error("non-finite value at data row " + std::to_string(row) +
                                 ", column '" + column + "'");
    return v;
}

std::string dirname_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

}  // namespace

std::vector<int> Dataset::labels() const {
    std::vector<int> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<int>(y[i]);
    return out;
}

std::vector<int> FoldedData::labels_of(const Matrix& y) const {
    std::vector<int> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<int>(y[i]);
    return out;
}

SplitIndices split(std::size_t n, std::uint64_t seed) {
    if (n < 5) throw std::invalid_argument("split: need at least 5 samples");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    const auto n_train = static_cast<std::size_t>(0.6 * static_cast<double>(n));
    const auto n_trval = static_cast<std::size_t>(0.8 * static_cast<double>(n));
    SplitIndices idx;
    idx.train.assign(perm.begin(), perm.begin() + n_train);
    idx.val.assign(perm.begin() + n_train, perm.begin() + n_trval);
    idx.test.assign(perm.begin() + n_trval, perm.end());
    return idx;
}

DatasetSpec load_dataset_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset spec: " + path);
    DatasetSpec spec;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed spec line (expected key = value): " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key == "name") {
            spec.name = value;
        } else if (key == "csv") {
            spec.csv_path = value;
        } else if (key == "target") {
            spec.target = value;
        } else if (key == "task") {
            if (value == "regression")
                spec.task = TaskKind::Regression;
            else if (value == "classification")
                spec.task = TaskKind::Classification;
            else
                throw std::runtime_error("unknown task '" + value + "' in " + path);
        } else if (key == "categorical") {
            for (auto& col : split_fields(value, ','))
                if (!col.empty()) spec.categorical.push_back(col);
        } else if (key == "labels") {
            for (auto& lbl : split_fields(value, ','))
                if (!lbl.empty()) spec.label_order.push_back(lbl);
        } else {
            throw std::runtime_error("unknown spec key '" + key + "' in " + path);
        }
    }
    if (spec.name.empty()) spec.name = path;
    if (!spec.csv_path.empty() && spec.csv_path.front() != '/')
        spec.csv_path = dirname_of(path) + "/" + spec.csv_path;
    return spec;
}

Dataset load_csv(const std::string& path, const DatasetSpec& spec) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
    const std::vector<std::string> header = split_fields(line, ',');

    std::size_t target_col = header.size();
    if (spec.target == "last") {
        target_col = header.size() - 1;
    } else {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == spec.target) target_col = c;
        if (target_col == header.size())
            throw std::runtime_error("target column '" + spec.target + "' not found in " + path);
    }
    std::vector<bool> categorical(header.size(), false);
    for (const std::string& col : spec.categorical) {
        bool found = false;
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == col) {
                categorical[c] = true;
                found = true;
            }
        if (!found)
            throw std::runtime_error("categorical column '" + col + "' not found in " + path);
    }

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split_fields(line, ',');
        if (fields.size() != header.size())
            throw std::runtime_error("row " + std::to_string(rows.size() + 1) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(header.size()) + " in " + path);
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw std::runtime_error("csv has no data rows: " + path);
    const std::size_t n = rows.size();

    Dataset ds;
    ds.name = spec.name;
    ds.task = spec.task;

    // feature columns: numeric pass-through or one-hot expansion
    std::vector<std::vector<double>> columns;  // column-major staging
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == target_col) continue;
        if (!categorical[c]) {
            std::vector<double> col(n);
            for (std::size_t r = 0; r < n; ++r) col[r] = parse_number(rows[r][c], r, header[c]);
            columns.push_back(std::move(col));
            ds.feature_names.push_back(header[c]);
        } else {
            std::vector<std::string> levels;
            std::vector<std::size_t> level_of(n);
            for (std::size_t r = 0; r < n; ++r) {
                const std::string& v = rows[r][c];
                auto it = std::find(levels.begin(), levels.end(), v);
                if (it == levels.end()) {
                    levels.push_back(v);
                    level_of[r] = levels.size() - 1;
                } else {
                    level_of[r] = static_cast<std::size_t>(it - levels.begin());
                }
            }
            for (std::size_t lv = 0; lv < levels.size(); ++lv) {
                std::vector<double> col(n, 0.0);
                for (std::size_t r = 0; r < n; ++r)
                    if (level_of[r] == lv) col[r] = 1.0;
                columns.push_back(std::move(col));
                ds.feature_names.push_back(header[c] + "=" + levels[lv]);
            }
        }
    }

    ds.x = Matrix(n, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c)
        for (std::size_t r = 0; r < n; ++r) ds.x(r, c) = columns[c][r];

    ds.y = Matrix(n, 1);
    if (spec.task == TaskKind::Regression) {
        for (std::size_t r = 0; r < n; ++r)
            ds.y[r] = parse_number(rows[r][target_col], r, header[target_col]);
    } else {
        ds.class_names = spec.label_order;
        for (std::size_t r = 0; r < n; ++r) {
            const std::string& v = rows[r][target_col];
            auto it = std::find(ds.class_names.begin(), ds.class_names.end(), v);
            if (it == ds.class_names.end()) {
                if (!spec.label_order.empty())
                    throw std::runtime_error("label '" + v + "' not in the declared ordering");
                ds.class_names.push_back(v);
                it = ds.class_names.end() - 1;
            }
            ds.y[r] = static_cast<double>(it - ds.class_names.begin());
        }
        ds.num_classes = ds.class_names.size();
    }
    return ds;
}

Dataset preprocess(const Dataset& raw, const SplitIndices& idx) {
    const std::size_t d = raw.x.cols();
    std::vector<double> mean(d, 0.0), sigma(d, 0.0);
    const double n_train = static_cast<double>(idx.train.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r : idx.train) mean[c] += raw.x(r, c);
        mean[c] /= n_train;
        for (std::size_t r : idx.train) {
            const double dv = raw.x(r, c) - mean[c];
            sigma[c] += dv * dv;
        }
        sigma[c] = std::sqrt(sigma[c] / n_train);
    }

    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < d; ++c)
        if (sigma[c] >= 1e-10) kept.push_back(c);
    if (kept.empty()) throw std::runtime_error("preprocess: every feature is train-fold constant");

    Dataset out;
    out.name = raw.name;
    out.task = raw.task;
    out.num_classes = raw.num_classes;
    out.class_names = raw.class_names;
    out.x = Matrix(raw.x.rows(), kept.size());
    for (std::size_t r = 0; r < raw.x.rows(); ++r)
        for (std::size_t j = 0; j < kept.size(); ++j)
            out.x(r, j) = (raw.x(r, kept[j]) - mean[kept[j]]) / sigma[kept[j]];
    for (std::size_t j = 0; j < kept.size(); ++j)
        out.feature_names.push_back(raw.feature_names.empty() ? "f" + std::to_string(kept[j])
                                                              : raw.feature_names[kept[j]]);

    out.y = raw.y;
    if (raw.task == TaskKind::Regression) {
        double ymean = 0.0;
        for (std::size_t r : idx.train) ymean += raw.y[r];
        ymean /= n_train;
        for (std::size_t r = 0; r < out.y.size(); ++r) out.y[r] -= ymean;
        out.target_mean = ymean;
    }
    return out;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < m.cols(); ++c) out(i, c) = m(rows[i], c);
    return out;
}

FoldedData fold(const Dataset& processed, const SplitIndices& idx) {
    FoldedData f;
    f.task = processed.task;
    f.num_classes = processed.num_classes;
    f.target_mean = processed.target_mean;
    f.x_train = take_rows(processed.x, idx.train);
    f.x_val = take_rows(processed.x, idx.val);
    f.x_test = take_rows(processed.x, idx.test);
    f.y_train = take_rows(processed.y, idx.train);
    f.y_val = take_rows(processed.y, idx.val);
    f.y_test = take_rows(processed.y, idx.test);
    return f;
}

Dataset gen_linear_gaussian(std::size_t n, std::size_t d, double alpha_true, double sigma_true,
                            std::uint64_t seed) {
    if (!(alpha_true > 0.0) || sigma_true < 0.0)
        throw std::invalid_argument("gen_linear_gaussian: bad parameters");
    Rng rng(seed);
    Matrix w(d, 1);
    const double wscale = 1.0 / std::sqrt(alpha_true);
    for (std::size_t j = 0; j < d; ++j) w[j] = wscale * rng.gaussian();
    Dataset ds;
    ds.name = "linear-gaussian";
    ds.task = TaskKind::Regression;
    ds.x = Matrix(n, d);
    ds.y = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            ds.x(i, j) = rng.gaussian();
            dot += ds.x(i, j) * w[j];
        }
        ds.y[i] = dot + sigma_true * rng.gaussian();
    }
    return ds;
}

Dataset gen_probit_linear(std::size_t n, std::size_t d, double alpha_true, double c,
                          std::uint64_t seed) {
    if (!(alpha_true > 0.0) || !(c > 0.0))
        throw std::invalid_argument("gen_probit_linear: bad parameters");
    Rng rng(seed);
    Matrix w(d, 1);
    const double wscale = 1.0 / std::sqrt(alpha_true);
    for (std::size_t j = 0; j < d; ++j) w[j] = wscale * rng.gaussian();
    Dataset ds;
    ds.name = "probit-linear";
    ds.task = TaskKind::Classification;
    ds.num_classes = 2;
    ds.class_names = {"0", "1"};
    ds.x = Matrix(n, d);
    ds.y = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            ds.x(i, j) = rng.gaussian();
            dot += ds.x(i, j) * w[j];
        }
        ds.y[i] = rng.uniform() < sf::ndtr(dot / c) ? 1.0 : 0.0;
    }
    return ds;
}

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n % 2 != 0) throw std::invalid_argument("gen_two_moons: n must be even");
    const std::size_t half = n / 2;
    Rng rng(seed);
    Dataset ds;
    ds.name = "two-moons";
    ds.task = TaskKind::Classification;
    ds.num_classes = 2;
    ds.class_names = {"0", "1"};
    ds.x = Matrix(n, 2);
    ds.y = Matrix(n, 1);
    for (std::size_t i = 0; i < half; ++i) {
        const double t = M_PI * static_cast<double>(i) / static_cast<double>(half - 1);
        ds.x(i, 0) = std::cos(t) + noise * rng.gaussian();
        ds.x(i, 1) = std::sin(t) + noise * rng.gaussian();
        ds.y[i] = 0.0;
        ds.x(half + i, 0) = 1.0 - std::cos(t) + noise * rng.gaussian();
        ds.x(half + i, 1) = 0.5 - std::sin(t) + noise * rng.gaussian();
        ds.y[half + i] = 1.0;
    }
    return ds;
}

}  // namespace bethe
