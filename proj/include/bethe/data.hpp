#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bethe/matrix.hpp"

namespace bethe {

enum class TaskKind { Regression, Classification };

struct Dataset {
    std::string name;
    TaskKind task = TaskKind::Regression;
    Matrix x;  // N x d
    Matrix y;  // N x 1: real targets, or class indices stored as doubles
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;  // classification label order
    std::size_t num_classes = 0;
    double target_mean = 0.0;  // training-fold mean removed from regression targets

    std::size_t size() const { return x.rows(); }
    std::vector<int> labels() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Seeded 60/20/20 partition of 0..n-1 via Fisher-Yates; cut points at
/// floor(0.6 n) and floor(0.8 n). Deterministic per seed.
SplitIndices split(std::size_t n, std::uint64_t seed);

/// Plain-text key=value dataset description: csv path, target column, task,
/// categorical columns, optional label ordering.
struct DatasetSpec {
    std::string name;
    std::string csv_path;
    std::string target = "last";
    TaskKind task = TaskKind::Regression;
    std::vector<std::string> categorical;
    std::vector<std::string> label_order;
};

DatasetSpec load_dataset_spec(const std::string& path);

/// CSV with a header row; declared categorical columns are one-hot expanded
/// (full encoding, no dropped level); classification targets are mapped to
/// 0..K-1 in first-appearance order unless the spec fixes an ordering.
Dataset load_csv(const std::string& path, const DatasetSpec& spec);

/// Standardizes features with train-fold statistics, drops train-fold
/// near-constant columns (sigma < 1e-10), and centers regression targets by
/// the train-fold mean. The split must be computed before calling this.
Dataset preprocess(const Dataset& raw, const SplitIndices& idx);

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows);

/// Per-fold views of a preprocessed dataset.
struct FoldedData {
    TaskKind task = TaskKind::Regression;
    std::size_t num_classes = 0;
    double target_mean = 0.0;
    Matrix x_train, x_val, x_test;
    Matrix y_train, y_val, y_test;

    std::vector<int> labels_of(const Matrix& y) const;
};

FoldedData fold(const Dataset& processed, const SplitIndices& idx);

/// y = w^T x + noise with w ~ N(0, alpha_true^-1 I), x ~ N(0, I).
Dataset gen_linear_gaussian(std::size_t n, std::size_t d, double alpha_true, double sigma_true,
                            std::uint64_t seed);

/// Binary labels drawn from the probit model P(y = 1) = Phi(w^T x / c).
Dataset gen_probit_linear(std::size_t n, std::size_t d, double alpha_true, double c,
                          std::uint64_t seed);

/// Two interleaved unit half-circles with isotropic Gaussian noise.
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

}  // namespace bethe
