#include "vqclust/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vqclust {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::vector<std::pair<std::string, std::vector<std::string>>> kKnownKeys = {
    {"input", {"synth", "expression", "orientation", "meta", "gene_sets", "truth"}},
    {"files", {"matrix", "latents", "clusters", "model", "deg"}},
    {"synth",
     {"n_samples", "n_features", "latent_dim", "n_clusters", "separation", "noise_sd",
      "censoring_rate", "hazards"}},
    {"preprocess",
     {"fpkm", "feature_lengths", "library_sizes", "log", "filter", "zero_fraction_threshold",
      "na_fraction_threshold", "impute", "impute_k", "zscore"}},
    {"model",
     {"kind", "latent_dim", "groups", "codebook_size", "beta", "hidden", "epochs", "batch_size",
      "learning_rate", "ema_codebook"}},
    {"cluster", {"algorithm", "k", "gamma", "covariance", "max_iter", "restarts"}},
    {"analysis",
     {"evaluate", "project", "tsne_perplexity", "tsne_iterations", "deg", "deg_cluster",
      "deg_lfc", "deg_q", "enrich", "survival", "lfg_groups"}},
    {"run", {"seed", "threads"}},
};

}  // namespace

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    for (const auto& [name, entries] : sections) {
        if (name != section) continue;
        for (const auto& [k, v] : entries)
            if (k == key) return true;
    }
    return false;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
    for (const auto& [name, entries] : sections) {
        if (name != section) continue;
        for (const auto& [k, v] : entries)
            if (k == key) return v;
    }
    return fallback;
}

ConfigFile ConfigFile::parse_text(const std::string& text, const std::string& origin) {
    ConfigFile file;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    Section* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                         ": unterminated section header");
            std::string name = trim(t.substr(1, t.size() - 2));
            file.sections.emplace_back(name, Section{});
            current = &file.sections.back().second;
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        if (!current)
            throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                     ": key outside any [section]");
        current->emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return file;
}

ConfigFile ConfigFile::parse(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

namespace {

class Validator {
public:
    explicit Validator(const ConfigFile& file) : file_(file) {}

    bool get_bool(const std::string& sec, const std::string& key, bool fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(sec, key, "expected a boolean, got '" + v + "'");
        return fallback;
    }

    double get_double(const std::string& sec, const std::string& key, double fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        try {
            std::size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            fail(sec, key, "expected a number, got '" + v + "'");
            return fallback;
        }
    }

    std::size_t get_size(const std::string& sec, const std::string& key, std::size_t fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        try {
            std::size_t pos = 0;
            long long i = std::stoll(v, &pos);
            if (pos != v.size() || i < 0) throw std::invalid_argument(v);
            return static_cast<std::size_t>(i);
        } catch (const std::exception&) {
            fail(sec, key, "expected a nonnegative integer, got '" + v + "'");
            return fallback;
        }
    }

    std::uint64_t get_u64(const std::string& sec, const std::string& key, std::uint64_t fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        try {
            std::size_t pos = 0;
            unsigned long long i = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return i;
        } catch (const std::exception&) {
            fail(sec, key, "expected a nonnegative integer, got '" + v + "'");
            return fallback;
        }
    }

    std::vector<double> get_doubles(const std::string& sec, const std::string& key,
                                    std::vector<double> fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(std::stod(trim(item)));
            } catch (const std::exception&) {
                fail(sec, key, "expected comma-separated numbers, got '" + v + "'");
                return fallback;
            }
        }
        return out;
    }

    std::vector<std::size_t> get_sizes(const std::string& sec, const std::string& key,
                                       std::vector<std::size_t> fallback) {
        std::string v = file_.get(sec, key);
        if (v.empty()) return fallback;
        if (v == "-") return {};
        std::vector<std::size_t> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                long long i = std::stoll(trim(item));
                if (i <= 0) throw std::invalid_argument(item);
                out.push_back(static_cast<std::size_t>(i));
            } catch (const std::exception&) {
                fail(sec, key, "expected comma-separated positive integers, got '" + v + "'");
                return fallback;
            }
        }
        return out;
    }

    void fail(const std::string& sec, const std::string& key, const std::string& why) {
        problems_.push_back("[" + sec + "] " + key + ": " + why);
    }

    void check_unknown_keys() {
        for (const auto& [name, entries] : file_.sections) {
            const std::vector<std::string>* known = nullptr;
            for (const auto& [sec, keys] : kKnownKeys)
                if (sec == name) known = &keys;
            if (!known) {
                problems_.push_back("unknown section [" + name + "]");
                continue;
            }
            for (const auto& [k, v] : entries) {
                bool found = false;
                for (const auto& key : *known) found = found || key == k;
                if (!found) problems_.push_back("[" + name + "] unknown key '" + k + "'");
            }
        }
    }

    void finish() const {
        if (problems_.empty()) return;
        std::string msg = "config validation failed:";
        for (const auto& p : problems_) msg += "\n  - " + p;
        throw std::runtime_error(msg);
    }

private:
    const ConfigFile& file_;
    std::vector<std::string> problems_;
};

}  // namespace

PipelineConfig validate_config(const ConfigFile& file) {
    Validator v(file);
    v.check_unknown_keys();

    PipelineConfig cfg;
    cfg.raw = file;

    cfg.use_synth = v.get_bool("input", "synth", false);
    cfg.expression_path = file.get("input", "expression");
    std::string orient = file.get("input", "orientation", "samples_rows");
    if (orient == "samples_rows")
        cfg.orientation = Orientation::samples_rows;
    else if (orient == "features_rows")
        cfg.orientation = Orientation::features_rows;
    else
        v.fail("input", "orientation", "must be samples_rows or features_rows");
    cfg.meta_path = file.get("input", "meta");
    cfg.gene_sets_path = file.get("input", "gene_sets");
    cfg.truth_path = file.get("input", "truth");
    if (!cfg.use_synth && cfg.expression_path.empty() && !file.has("files", "matrix") &&
        !file.has("files", "latents"))
        v.fail("input", "expression", "required unless synth = true or [files] provides data");

    cfg.matrix_path = file.get("files", "matrix");
    cfg.latents_path = file.get("files", "latents");
    cfg.clusters_path = file.get("files", "clusters");
    cfg.model_path = file.get("files", "model");
    cfg.deg_path = file.get("files", "deg");

    cfg.synth.n_samples = v.get_size("synth", "n_samples", 500);
    cfg.synth.n_features = v.get_size("synth", "n_features", 200);
    cfg.synth.latent_dim = v.get_size("synth", "latent_dim", 8);
    cfg.synth.n_clusters = v.get_size("synth", "n_clusters", 5);
    cfg.synth.separation = v.get_double("synth", "separation", 8.0);
    cfg.synth.noise_sd = v.get_double("synth", "noise_sd", 0.3);
    cfg.synth.censoring_rate = v.get_double("synth", "censoring_rate", 0.2);
    cfg.synth.hazards = v.get_doubles("synth", "hazards", {0.2, 0.4, 0.8, 1.6, 3.2});
    if (cfg.synth.n_clusters < 2) v.fail("synth", "n_clusters", "must be >= 2");
    if (!(cfg.synth.separation > 0.0)) v.fail("synth", "separation", "must be > 0");
    if (cfg.synth.noise_sd < 0.0) v.fail("synth", "noise_sd", "must be >= 0");
    if (!(cfg.synth.censoring_rate >= 0.0 && cfg.synth.censoring_rate < 1.0))
        v.fail("synth", "censoring_rate", "must be in [0,1)");
    if (cfg.synth.hazards.size() != cfg.synth.n_clusters)
        v.fail("synth", "hazards", "need exactly one hazard per cluster");

    cfg.do_fpkm = v.get_bool("preprocess", "fpkm", false);
    cfg.feature_lengths_path = file.get("preprocess", "feature_lengths");
    cfg.library_sizes_path = file.get("preprocess", "library_sizes");
    if (cfg.do_fpkm && (cfg.feature_lengths_path.empty() || cfg.library_sizes_path.empty()))
        v.fail("preprocess", "fpkm", "requires feature_lengths and library_sizes paths");
    cfg.do_log = v.get_bool("preprocess", "log", false);
    cfg.do_filter = v.get_bool("preprocess", "filter", true);
    cfg.zero_fraction_threshold = v.get_double("preprocess", "zero_fraction_threshold", 0.10);
    cfg.na_fraction_threshold = v.get_double("preprocess", "na_fraction_threshold", 0.10);
    if (!(cfg.zero_fraction_threshold > 0.0 && cfg.zero_fraction_threshold <= 1.0))
        v.fail("preprocess", "zero_fraction_threshold", "must be in (0,1]");
    if (!(cfg.na_fraction_threshold > 0.0 && cfg.na_fraction_threshold <= 1.0))
        v.fail("preprocess", "na_fraction_threshold", "must be in (0,1]");
    cfg.do_impute = v.get_bool("preprocess", "impute", true);
    cfg.impute_k = v.get_size("preprocess", "impute_k", 10);
    if (cfg.impute_k == 0) v.fail("preprocess", "impute_k", "must be >= 1");
    cfg.do_zscore = v.get_bool("preprocess", "zscore", true);

    std::string kind = file.get("model", "kind", "vqvae");
    try {
        cfg.model_kind = model_kind_from_name(kind);
    } catch (const std::exception&) {
        v.fail("model", "kind", "must be ae, vae, or vqvae");
    }
    cfg.train.latent_dim = v.get_size("model", "latent_dim", 64);
    cfg.train.groups = v.get_size("model", "groups", 8);
    cfg.train.codebook_size = v.get_size("model", "codebook_size", 64);
    cfg.train.beta = v.get_double("model", "beta", 0.25);
    cfg.train.hidden = v.get_sizes("model", "hidden", {512, 128});
    cfg.train.epochs = v.get_size("model", "epochs", 500);
    cfg.train.batch_size = v.get_size("model", "batch_size", 32);
    cfg.train.learning_rate = v.get_double("model", "learning_rate", 1e-3);
    cfg.train.ema_codebook = v.get_bool("model", "ema_codebook", false);
    if (cfg.train.latent_dim == 0) v.fail("model", "latent_dim", "must be >= 1");
    if (cfg.model_kind == ModelKind::vqvae) {
        if (cfg.train.groups == 0 || cfg.train.latent_dim % cfg.train.groups != 0)
            v.fail("model", "groups", "latent_dim must be a multiple of groups");
        if (cfg.train.codebook_size < 2) v.fail("model", "codebook_size", "must be >= 2");
    }
    if (cfg.train.batch_size == 0) v.fail("model", "batch_size", "must be >= 1");
    if (!(cfg.train.beta >= 0.0)) v.fail("model", "beta", "must be >= 0");
    if (!(cfg.train.learning_rate > 0.0)) v.fail("model", "learning_rate", "must be > 0");

    std::string algo = file.get("cluster", "algorithm", "kmeans");
    try {
        cfg.cluster_algorithm = cluster_algorithm_from_name(algo);
    } catch (const std::exception&) {
        v.fail("cluster", "algorithm", "must be kmeans, gmm, spectral, or hierarchical");
    }
    cfg.k = v.get_size("cluster", "k", 5);
    if (cfg.k == 0) v.fail("cluster", "k", "must be >= 1");
    cfg.spectral_gamma = v.get_double("cluster", "gamma", 0.0);
    std::string cov = file.get("cluster", "covariance", "diagonal");
    if (cov == "diagonal")
        cfg.gmm_covariance = Covariance::diagonal;
    else if (cov == "full")
        cfg.gmm_covariance = Covariance::full;
    else
        v.fail("cluster", "covariance", "must be diagonal or full");
    cfg.cluster_max_iter = v.get_size("cluster", "max_iter", 300);
    if (cfg.cluster_max_iter == 0) v.fail("cluster", "max_iter", "must be >= 1");
    cfg.cluster_restarts = v.get_size("cluster", "restarts", 10);
    if (cfg.cluster_restarts == 0) v.fail("cluster", "restarts", "must be >= 1");

    cfg.do_evaluate = v.get_bool("analysis", "evaluate", true);
    cfg.do_project = v.get_bool("analysis", "project", true);
    cfg.tsne_perplexity = v.get_double("analysis", "tsne_perplexity", 30.0);
    if (!(cfg.tsne_perplexity > 1.0)) v.fail("analysis", "tsne_perplexity", "must be > 1");
    cfg.tsne_iterations = v.get_size("analysis", "tsne_iterations", 1000);
    cfg.do_deg = v.get_bool("analysis", "deg", true);
    cfg.deg_cluster = v.get_size("analysis", "deg_cluster", 0);
    cfg.deg_lfc_threshold = v.get_double("analysis", "deg_lfc", 1.0);
    cfg.deg_q_threshold = v.get_double("analysis", "deg_q", 0.05);
    cfg.do_enrich = v.get_bool("analysis", "enrich", false);
    if (cfg.do_enrich && cfg.gene_sets_path.empty())
        v.fail("analysis", "enrich", "requires [input] gene_sets");
    cfg.do_survival = v.get_bool("analysis", "survival", true);
    cfg.lfg_groups = v.get_size("analysis", "lfg_groups", 3);
    if (cfg.lfg_groups == 0) v.fail("analysis", "lfg_groups", "must be >= 1");

    cfg.seed = v.get_u64("run", "seed", 7);
    cfg.threads = v.get_size("run", "threads", 1);
    if (cfg.threads == 0) v.fail("run", "threads", "must be >= 1");

    v.finish();
    return cfg;
}

}  // namespace vqclust
