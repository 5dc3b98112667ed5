#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vqclust/clustering.hpp"
#include "vqclust/models.hpp"
#include "vqclust/synth.hpp"

namespace vqclust {

// Raw INI content: ordered sections of ordered key = value pairs. Order is
// preserved so the manifest echo matches the file.
struct ConfigFile {
    using Section = std::vector<std::pair<std::string, std::string>>;
    std::vector<std::pair<std::string, Section>> sections;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    static ConfigFile parse(const std::string& path);
    static ConfigFile parse_text(const std::string& text, const std::string& origin);
};

struct PipelineConfig {
    // [input]
    bool use_synth = false;
    std::string expression_path;
    Orientation orientation = Orientation::samples_rows;
    std::string meta_path;       // optional
    std::string gene_sets_path;  // optional
    std::string truth_path;      // optional

    // [files] outputs of earlier stages consumed by standalone subcommands
    std::string matrix_path;
    std::string latents_path;
    std::string clusters_path;
    std::string model_path;
    std::string deg_path;

    // [synth]
    SynthConfig synth;

    // [preprocess]
    bool do_fpkm = false;
    std::string feature_lengths_path;
    std::string library_sizes_path;
    bool do_log = false;
    bool do_filter = true;
    double zero_fraction_threshold = 0.10;
    double na_fraction_threshold = 0.10;
    bool do_impute = true;
    std::size_t impute_k = 10;
    bool do_zscore = true;

    // [model]
    ModelKind model_kind = ModelKind::vqvae;
    TrainConfig train;

    // [cluster]
    ClusterAlgorithm cluster_algorithm = ClusterAlgorithm::kmeans;
    std::size_t k = 5;
    double spectral_gamma = 0.0;
    Covariance gmm_covariance = Covariance::diagonal;
    std::size_t cluster_max_iter = 300;
    std::size_t cluster_restarts = 10;  // best-inertia k-means restarts

    // [analysis]
    bool do_evaluate = true;
    bool do_project = true;
    double tsne_perplexity = 30.0;
    std::size_t tsne_iterations = 1000;
    bool do_deg = true;
    std::size_t deg_cluster = 0;
    double deg_lfc_threshold = 1.0;
    double deg_q_threshold = 0.05;
    bool do_enrich = false;
    bool do_survival = true;
    std::size_t lfg_groups = 3;

    // [run]
    std::uint64_t seed = 7;
    std::size_t threads = 1;

    ConfigFile raw;  // echoed into the manifest
};

// Validates every field against the module preconditions and reports all
// problems at once.
PipelineConfig validate_config(const ConfigFile& file);

}  // namespace vqclust
