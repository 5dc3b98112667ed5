#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vqclust/matrix.hpp"

namespace vqclust {

enum class Stage { raw, fpkm, log, zscored };

const char* stage_name(Stage s);

// Samples-by-features expression table. Missing cells are NaN until
// impute_missing runs; afterwards the matrix is NaN-free.
struct ExpressionMatrix {
    Matrix values;  // n_samples x n_features
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_ids;
    Stage stage = Stage::raw;

    std::size_t n_samples() const { return values.rows; }
    std::size_t n_features() const { return values.cols; }
};

struct SampleMeta {
    std::string sample_id;
    std::optional<std::string> label;
    std::optional<double> survival_time;  // days
    std::optional<bool> event;            // true = death observed
};

enum class Orientation { samples_rows, features_rows };

// Delimited text with a header row and a leading id column. Delimiter is
// chosen from the extension: ',' for .csv, tab otherwise. Empty fields and
// the literal NA load as missing.
ExpressionMatrix load_matrix(const std::string& path, Orientation orientation);

void save_matrix(const ExpressionMatrix& m, const std::string& path);

// Metadata file with header sample_id,label,survival_time,event.
// label/survival columns may be empty; event must be 0 or 1 when present.
std::vector<SampleMeta> load_sample_meta(const std::string& path);

// FPKM[i,j] = counts[i,j] * 1e9 / (library_sizes[i] * feature_lengths[j])
ExpressionMatrix rsem_to_fpkm(const ExpressionMatrix& counts,
                              const std::vector<double>& feature_lengths,
                              const std::vector<double>& library_sizes);

// log2(x + 1) elementwise
ExpressionMatrix log_transform(const ExpressionMatrix& m);

struct FilterResult {
    ExpressionMatrix matrix;
    std::vector<std::string> removed_feature_ids;
};

// Drops features whose zero-expression fraction or missing fraction is
// strictly greater than the corresponding threshold (default 0.10 both).
FilterResult filter_features(const ExpressionMatrix& m, double zero_fraction_threshold = 0.10,
                             double na_fraction_threshold = 0.10);

// KNN-mean imputation: each missing cell becomes the mean of that feature
// over the k nearest samples (Euclidean distance on mutually observed
// features, among samples observing the feature). Observed cells are
// untouched.
ExpressionMatrix impute_missing(const ExpressionMatrix& m, std::size_t k = 10);

// Per-feature standardization with the population sd (divide by n).
// Constant features map to all zeros.
ExpressionMatrix zscore(const ExpressionMatrix& m);

}  // namespace vqclust
