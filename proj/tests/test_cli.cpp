#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vqclust/config.hpp"
#include "vqclust/pipeline.hpp"

using namespace vqclust;

namespace {

const char* kTinyConfig = R"(# tiny synthetic run
[input]
synth = true

[synth]
n_samples = 48
n_features = 30
latent_dim = 4
n_clusters = 5
separation = 8
noise_sd = 0.3
censoring_rate = 0.2
hazards = 0.2,0.4,0.8,1.6,3.2

[model]
kind = vqvae
latent_dim = 8
groups = 2
codebook_size = 8
hidden = 16
epochs = 25
batch_size = 16

[cluster]
algorithm = kmeans
k = 5

[analysis]
tsne_perplexity = 8
tsne_iterations = 150
deg_lfc = 0.1

[run]
seed = 7
)";

PipelineConfig tiny_config() {
    return validate_config(ConfigFile::parse_text(kTinyConfig, "tiny.ini"));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace

TEST_CASE("ini parsing keeps order and rejects malformed lines") {
    ConfigFile f = ConfigFile::parse_text("[a]\nx = 1\ny = two words\n[b]\nx = 3\n", "t");
    CHECK(f.get("a", "x") == "1");
    CHECK(f.get("a", "y") == "two words");
    CHECK(f.get("b", "x") == "3");
    CHECK(f.get("b", "missing", "dflt") == "dflt");
    CHECK(f.sections[0].first == "a");

    CHECK_THROWS_AS(ConfigFile::parse_text("x = 1\n", "t"), std::runtime_error);
    CHECK_THROWS_AS(ConfigFile::parse_text("[a]\nnot_a_pair\n", "t"), std::runtime_error);
    CHECK_THROWS_AS(ConfigFile::parse_text("[unterminated\n", "t"), std::runtime_error);
}

TEST_CASE("validate_config reports every problem at once") {
    ConfigFile f = ConfigFile::parse_text(
        "[input]\nsynth = true\n"
        "[model]\nkind = wrong\nbatch_size = 0\n"
        "[cluster]\nk = 0\n"
        "[mystery]\nfoo = 1\n",
        "t");
    try {
        validate_config(f);
        FAIL("expected validation failure");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("kind") != std::string::npos);
        CHECK(msg.find("batch_size") != std::string::npos);
        CHECK(msg.find("[cluster] k") != std::string::npos);
        CHECK(msg.find("mystery") != std::string::npos);
    }
}

TEST_CASE("validate_config fills documented defaults") {
    ConfigFile f = ConfigFile::parse_text("[input]\nsynth = true\n", "t");
    PipelineConfig cfg = validate_config(f);
    CHECK(cfg.train.latent_dim == 64);
    CHECK(cfg.train.groups == 8);
    CHECK(cfg.train.codebook_size == 64);
    CHECK(cfg.train.beta == 0.25);
    CHECK(cfg.train.hidden == std::vector<std::size_t>{512, 128});
    CHECK(cfg.train.epochs == 500);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.k == 5);
    CHECK(cfg.seed == 7);
    CHECK(cfg.synth.n_samples == 500);
}

TEST_CASE("synth subcommand writes the dataset files") {
    PipelineConfig cfg = tiny_config();
    run_subcommand("synth", cfg, "cli_tmp/synth");
    for (const char* f : {"expression.tsv", "truth.tsv", "meta.tsv", "manifest.json"})
        CHECK(exists(std::string("cli_tmp/synth/") + f));
}

TEST_CASE("pipeline produces the full artifact contract") {
    PipelineConfig cfg = tiny_config();
    run_subcommand("pipeline", cfg, "cli_tmp/run1");
    for (const char* f :
         {"expression.tsv", "truth.tsv", "meta.tsv", "preprocessed.tsv", "model.ckpt",
          "loss_history.tsv", "latents.tsv", "codes.tsv", "clusters.tsv", "metrics.json",
          "pca.tsv", "pca.svg", "tsne.tsv", "tsne.svg", "lfg.tsv", "deg.tsv", "km.tsv",
          "logrank.json", "manifest.json"})
        CHECK(exists(std::string("cli_tmp/run1/") + f));

    std::string metrics = slurp("cli_tmp/run1/metrics.json");
    for (const char* key : {"nmi", "purity", "silhouette", "ari", "k", "algorithm", "seed"})
        CHECK(metrics.find(key) != std::string::npos);

    std::string svg = slurp("cli_tmp/run1/pca.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("circle") != std::string::npos);
}

TEST_CASE("pipeline reruns are byte-identical apart from the manifest") {
    PipelineConfig cfg = tiny_config();
    run_subcommand("pipeline", cfg, "cli_tmp/det_a");
    run_subcommand("pipeline", cfg, "cli_tmp/det_b");
    std::size_t compared = 0;
    for (const auto& entry : std::filesystem::directory_iterator("cli_tmp/det_a")) {
        std::string name = entry.path().filename().string();
        if (name == "manifest.json") continue;  // carries the wall time
        CHECK(slurp("cli_tmp/det_a/" + name) == slurp("cli_tmp/det_b/" + name));
        ++compared;
    }
    CHECK(compared >= 15);
}

TEST_CASE("standalone stages chain through [files]") {
    PipelineConfig cfg = tiny_config();
    run_subcommand("pipeline", cfg, "cli_tmp/chain");
    std::string latents_before = slurp("cli_tmp/chain/latents.tsv");
    std::string model_before = slurp("cli_tmp/chain/model.ckpt");

    PipelineConfig eval_cfg = cfg;
    eval_cfg.latents_path = "cli_tmp/chain/latents.tsv";
    eval_cfg.clusters_path = "cli_tmp/chain/clusters.tsv";
    run_subcommand("evaluate", eval_cfg, "cli_tmp/chain_eval");
    CHECK(exists("cli_tmp/chain_eval/metrics.json"));
    // same latents and clusters -> same metrics as the pipeline run
    CHECK(slurp("cli_tmp/chain_eval/metrics.json") == slurp("cli_tmp/chain/metrics.json"));

    PipelineConfig cl_cfg = cfg;
    cl_cfg.latents_path = "cli_tmp/chain/latents.tsv";
    run_subcommand("cluster", cl_cfg, "cli_tmp/chain_cluster");
    CHECK(slurp("cli_tmp/chain_cluster/clusters.tsv") == slurp("cli_tmp/chain/clusters.tsv"));

    PipelineConfig enc_cfg = cfg;
    enc_cfg.model_path = "cli_tmp/chain/model.ckpt";
    enc_cfg.matrix_path = "cli_tmp/chain/preprocessed.tsv";
    run_subcommand("encode", enc_cfg, "cli_tmp/chain_encode");
    CHECK(slurp("cli_tmp/chain_encode/latents.tsv") == slurp("cli_tmp/chain/latents.tsv"));

    PipelineConfig surv_cfg = cfg;
    surv_cfg.clusters_path = "cli_tmp/chain/clusters.tsv";
    run_subcommand("survival", surv_cfg, "cli_tmp/chain_surv");
    CHECK(slurp("cli_tmp/chain_surv/km.tsv") == slurp("cli_tmp/chain/km.tsv"));
    CHECK(slurp("cli_tmp/chain_surv/logrank.json") == slurp("cli_tmp/chain/logrank.json"));

    // no subcommand may mutate its inputs
    CHECK(slurp("cli_tmp/chain/latents.tsv") == latents_before);
    CHECK(slurp("cli_tmp/chain/model.ckpt") == model_before);
}

TEST_CASE("unknown subcommand and missing prerequisites raise errors") {
    PipelineConfig cfg = tiny_config();
    CHECK_THROWS_AS(run_subcommand("bogus", cfg, "cli_tmp/x"), std::invalid_argument);
    CHECK_THROWS_AS(run_subcommand("encode", cfg, "cli_tmp/x"), std::runtime_error);
    CHECK_THROWS_AS(run_subcommand("evaluate", cfg, "cli_tmp/x"), std::runtime_error);
}

#ifdef VQCLUST_BIN
TEST_CASE("cli binary end-to-end: exit codes and outputs") {
    std::filesystem::create_directories("cli_tmp");
    {
        std::ofstream out("cli_tmp/tiny.ini");
        out << kTinyConfig;
    }
    std::string base = std::string(VQCLUST_BIN);
    int ok = std::system(
        (base + " synth --config cli_tmp/tiny.ini --out cli_tmp/bin_synth >/dev/null 2>&1")
            .c_str());
    CHECK(ok == 0);
    CHECK(exists("cli_tmp/bin_synth/expression.tsv"));

    {
        std::ofstream out("cli_tmp/broken.ini");
        out << "[model]\nkind = nope\n";
    }
    int bad = std::system(
        (base + " pipeline --config cli_tmp/broken.ini --out cli_tmp/bin_bad 2>cli_tmp/err.txt")
            .c_str());
    CHECK(bad != 0);
    std::string err = slurp("cli_tmp/err.txt");
    CHECK(err.find("error") != std::string::npos);
    CHECK(err.find('\n') == err.size() - 1);  // single-line machine-readable error
}
#endif
