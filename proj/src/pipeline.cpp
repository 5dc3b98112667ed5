#include "vqclust/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vqclust/biostats.hpp"
#include "vqclust/clustering.hpp"
#include "vqclust/clustmetrics.hpp"
#include "vqclust/dimred.hpp"
#include "vqclust/format.hpp"
#include "vqclust/models.hpp"
#include "vqclust/parallel.hpp"
#include "vqclust/svgplot.hpp"
#include "vqclust/synth.hpp"

namespace vqclust {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_g(double v) { return format_double(v); }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    return out;
}

// ---- artifact writers ----

void write_matrix_with_header(const std::string& path, const std::string& id_header,
                              const std::vector<std::string>& ids,
                              const std::vector<std::string>& columns, const Matrix& values) {
    auto out = open_out(path);
    out << id_header;
    for (const auto& c : columns) out << "\t" << c;
    out << "\n";
    for (std::size_t i = 0; i < values.rows; ++i) {
        out << ids[i];
        for (std::size_t j = 0; j < values.cols; ++j) out << "\t" << fmt_g(values.at(i, j));
        out << "\n";
    }
}

void write_latents(const std::string& path, const std::vector<std::string>& ids,
                   const Matrix& z) {
    std::vector<std::string> cols;
    for (std::size_t j = 0; j < z.cols; ++j) cols.push_back("z" + std::to_string(j + 1));
    write_matrix_with_header(path, "sample_id", ids, cols, z);
}

void write_codes(const std::string& path, const std::vector<std::string>& ids,
                 const std::vector<std::vector<std::size_t>>& codes) {
    auto out = open_out(path);
    out << "sample_id";
    if (!codes.empty())
        for (std::size_t g = 0; g < codes[0].size(); ++g) out << "\tc" << (g + 1);
    out << "\n";
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out << ids[i];
        for (std::size_t idx : codes[i]) out << "\t" << idx;
        out << "\n";
    }
}

void write_clusters(const std::string& path, const std::vector<std::string>& ids,
                    const std::vector<std::size_t>& labels) {
    auto out = open_out(path);
    out << "sample_id\tcluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << "\t" << labels[i] << "\n";
}

void write_truth(const std::string& path, const std::vector<std::string>& ids,
                 const std::vector<std::size_t>& labels) {
    auto out = open_out(path);
    out << "sample_id\ttrue_cluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << "\t" << labels[i] << "\n";
}

void write_projection_tsv(const std::string& path, const std::vector<std::string>& ids,
                          const Matrix& coords, const std::vector<std::string>& group) {
    auto out = open_out(path);
    out << "sample_id\tdim1\tdim2\tcluster_or_label\n";
    for (std::size_t i = 0; i < coords.rows; ++i)
        out << ids[i] << "\t" << fmt_g(coords.at(i, 0)) << "\t" << fmt_g(coords.at(i, 1)) << "\t"
            << group[i] << "\n";
}

void write_projection_svg(const std::string& path, const Matrix& coords,
                          const std::vector<std::string>& group, const std::string& title,
                          const std::string& xlab, const std::string& ylab) {
    std::vector<std::string> names;
    std::map<std::string, std::size_t> index;
    std::vector<ScatterSeries> series;
    for (std::size_t i = 0; i < coords.rows; ++i) {
        auto it = index.find(group[i]);
        if (it == index.end()) {
            it = index.emplace(group[i], series.size()).first;
            series.push_back({group[i], {}, {}});
        }
        series[it->second].x.push_back(coords.at(i, 0));
        series[it->second].y.push_back(coords.at(i, 1));
    }
    std::sort(series.begin(), series.end(),
              [](const ScatterSeries& a, const ScatterSeries& b) { return a.name < b.name; });
    write_scatter_svg(path, series, title, xlab, ylab);
}

void write_deg_tsv(const std::string& path, const std::vector<DegResult>& results) {
    auto out = open_out(path);
    out << "feature_id\tlog2fc\tp\tq\tstatus\n";
    for (const auto& r : results)
        out << r.feature_id << "\t" << fmt_g(r.log2_fold_change) << "\t" << fmt_g(r.p_value)
            << "\t" << fmt_g(r.q_value) << "\t" << deg_status_name(r.status) << "\n";
}

void write_enrich_tsv(const std::string& path, const std::vector<EnrichResult>& results) {
    auto out = open_out(path);
    out << "set_id\tset_size\toverlap\tp\tq\n";
    for (const auto& r : results)
        out << r.set_id << "\t" << r.set_size << "\t" << r.overlap << "\t" << fmt_g(r.p) << "\t"
            << fmt_g(r.q) << "\n";
}

void write_km_tsv(const std::string& path, const std::vector<std::size_t>& groups,
                  const std::vector<KmCurve>& curves) {
    auto out = open_out(path);
    out << "group\ttime\tn_at_risk\td_events\tsurvival\n";
    for (std::size_t g = 0; g < curves.size(); ++g)
        for (std::size_t i = 0; i < curves[g].times.size(); ++i)
            out << groups[g] << "\t" << fmt_g(curves[g].times[i]) << "\t" << curves[g].at_risk[i]
                << "\t" << curves[g].events[i] << "\t" << fmt_g(curves[g].survival[i]) << "\n";
}

void write_dendrogram_tsv(const std::string& path, const Dendrogram& d) {
    auto out = open_out(path);
    out << "node_a\tnode_b\theight\tsize\n";
    for (const auto& m : d.merges)
        out << m.node_a << "\t" << m.node_b << "\t" << fmt_g(m.height) << "\t" << m.size << "\n";
}

void write_loss_history(const std::string& path, const std::vector<double>& history) {
    auto out = open_out(path);
    out << "epoch\tloss\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        out << (e + 1) << "\t" << fmt_g(history[e]) << "\n";
}

void write_meta_tsv(const std::string& path, const std::vector<std::string>& ids,
                    const std::vector<std::string>& labels,
                    const std::vector<SurvivalRecord>& survival) {
    std::map<std::string, const SurvivalRecord*> by_id;
    for (const auto& r : survival) by_id[r.sample_id] = &r;
    auto out = open_out(path);
    out << "sample_id\tlabel\tsurvival_time\tevent\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << "\t" << (labels.empty() ? "" : labels[i]) << "\t";
        auto it = by_id.find(ids[i]);
        if (it != by_id.end())
            out << fmt_g(it->second->time) << "\t" << (it->second->event ? 1 : 0);
        else
            out << "\t";
        out << "\n";
    }
}

void write_json_file(const std::string& path, const ordered_json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

// ---- readers for chained stages ----

std::vector<std::pair<std::string, std::string>> read_two_columns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::pair<std::string, std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected two tab-separated columns");
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

std::vector<std::size_t> labels_for_ids(const std::string& path,
                                        const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> by_id;
    for (const auto& [id, value] : read_two_columns(path)) {
        try {
            by_id[id] = static_cast<std::size_t>(std::stoull(value));
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": non-integer cluster for sample '" + id + "'");
        }
    }
    std::vector<std::size_t> labels;
    labels.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::runtime_error(path + ": no cluster for sample '" + id + "'");
        labels.push_back(it->second);
    }
    return labels;
}

std::vector<double> per_id_values(const std::string& path, const std::vector<std::string>& ids,
                                  const std::string& what) {
    std::map<std::string, double> by_id;
    for (const auto& [id, value] : read_two_columns(path)) by_id[id] = std::stod(value);
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::runtime_error(path + ": missing " + what + " for id '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

// ---- stage context ----

struct RunState {
    PipelineConfig cfg;
    std::string dir;
    std::vector<std::string> inputs_read;

    std::string path(const std::string& name) const { return dir + "/" + name; }

    std::string note_input(const std::string& p) {
        if (!p.empty()) inputs_read.push_back(p);
        return p;
    }
};

std::optional<SynthData> maybe_synth(RunState& st) {
    if (!st.cfg.use_synth) return std::nullopt;
    SynthConfig sc = st.cfg.synth;
    sc.seed = derive_seed(st.cfg.seed, kSeedSynth);
    return generate(sc);
}

ExpressionMatrix load_source_matrix(RunState& st, std::optional<SynthData>& synth) {
    if (st.cfg.use_synth) {
        synth = maybe_synth(st);
        return synth->expression;
    }
    if (st.cfg.expression_path.empty())
        throw std::runtime_error("no expression input configured ([input] expression)");
    return load_matrix(st.note_input(st.cfg.expression_path), st.cfg.orientation);
}

struct PreprocessOutput {
    ExpressionMatrix analysis;  // stage right before z-scoring (for DEG)
    ExpressionMatrix model;     // z-scored when enabled, else same as analysis
    std::vector<std::string> removed_features;
};

PreprocessOutput preprocess(RunState& st, ExpressionMatrix m) {
    const PipelineConfig& cfg = st.cfg;
    PreprocessOutput out;
    if (cfg.do_fpkm) {
        auto lengths = per_id_values(st.note_input(cfg.feature_lengths_path), m.feature_ids,
                                     "feature length");
        auto sizes = per_id_values(st.note_input(cfg.library_sizes_path), m.sample_ids,
                                   "library size");
        m = rsem_to_fpkm(m, lengths, sizes);
    }
    if (cfg.do_log) m = log_transform(m);
    if (cfg.do_filter) {
        FilterResult fr =
            filter_features(m, cfg.zero_fraction_threshold, cfg.na_fraction_threshold);
        m = std::move(fr.matrix);
        out.removed_features = std::move(fr.removed_feature_ids);
    }
    bool has_missing = false;
    for (double v : m.values.data) has_missing = has_missing || std::isnan(v);
    if (cfg.do_impute && has_missing) m = impute_missing(m, cfg.impute_k);
    out.analysis = m;
    out.model = cfg.do_zscore ? zscore(m) : std::move(m);
    return out;
}

// Obtains the matrix a standalone stage should work on: an explicit
// [files] matrix when given, otherwise input + preprocessing.
ExpressionMatrix obtain_model_matrix(RunState& st) {
    if (!st.cfg.matrix_path.empty())
        return load_matrix(st.note_input(st.cfg.matrix_path), Orientation::samples_rows);
    std::optional<SynthData> synth;
    ExpressionMatrix raw = load_source_matrix(st, synth);
    return preprocess(st, std::move(raw)).model;
}

ExpressionMatrix obtain_latents(RunState& st) {
    if (!st.cfg.latents_path.empty())
        return load_matrix(st.note_input(st.cfg.latents_path), Orientation::samples_rows);
    throw std::runtime_error("this subcommand needs [files] latents");
}

std::vector<std::string> group_names(const std::vector<std::size_t>& labels) {
    std::vector<std::string> names;
    names.reserve(labels.size());
    for (std::size_t l : labels) names.push_back("cluster " + std::to_string(l));
    return names;
}

ClusterAssignment run_clustering(const PipelineConfig& cfg, const Matrix& x,
                                 std::uint64_t seed) {
    switch (cfg.cluster_algorithm) {
        case ClusterAlgorithm::kmeans:
            return kmeans(x, cfg.k, seed, cfg.cluster_max_iter, nullptr, cfg.cluster_restarts);
        case ClusterAlgorithm::gmm:
            return gmm_em(x, cfg.k, seed, cfg.cluster_max_iter, cfg.gmm_covariance).assignment;
        case ClusterAlgorithm::spectral:
            return spectral(x, cfg.k, seed, cfg.spectral_gamma, cfg.cluster_restarts);
        case ClusterAlgorithm::hierarchical: {
            // agglomerate samples: treat them as the columns of X^T
            Dendrogram dendro = hierarchical_corr(x.transposed(), Linkage::average);
            ClusterAssignment a;
            a.labels = cut_dendrogram(dendro, cfg.k);
            a.k = cfg.k;
            a.algorithm = ClusterAlgorithm::hierarchical;
            a.seed = seed;
            a.inertia_or_loglik = 0.0;
            return a;
        }
    }
    throw std::logic_error("unreachable clustering algorithm");
}

std::vector<SurvivalRecord> obtain_survival(RunState& st, std::optional<SynthData>& synth) {
    if (st.cfg.use_synth) {
        if (!synth) synth = maybe_synth(st);
        return synth->survival;
    }
    if (st.cfg.meta_path.empty())
        throw std::runtime_error("survival analysis needs [input] meta with survival columns");
    std::vector<SurvivalRecord> records;
    for (const auto& meta : load_sample_meta(st.note_input(st.cfg.meta_path))) {
        if (!meta.survival_time) continue;
        SurvivalRecord r;
        r.sample_id = meta.sample_id;
        r.time = *meta.survival_time;
        r.event = *meta.event;
        records.push_back(std::move(r));
    }
    if (records.empty()) throw std::runtime_error("no survival records in metadata");
    return records;
}

std::vector<std::size_t> obtain_truth(RunState& st, const std::vector<std::string>& ids,
                                      std::optional<SynthData>& synth) {
    if (!st.cfg.truth_path.empty()) return labels_for_ids(st.note_input(st.cfg.truth_path), ids);
    if (st.cfg.use_synth) {
        if (!synth) synth = maybe_synth(st);
        std::map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < synth->expression.sample_ids.size(); ++i)
            by_id[synth->expression.sample_ids[i]] = synth->true_labels[i];
        std::vector<std::size_t> out;
        for (const auto& id : ids) out.push_back(by_id.at(id));
        return out;
    }
    throw std::runtime_error("evaluation needs [input] truth (or synth data)");
}

// ---- per-stage work ----

void stage_write_synth(RunState& st, const SynthData& data) {
    save_matrix(data.expression, st.path("expression.tsv"));
    write_truth(st.path("truth.tsv"), data.expression.sample_ids, data.true_labels);
    std::vector<std::string> labels;
    for (std::size_t l : data.true_labels) labels.push_back("G" + std::to_string(l));
    write_meta_tsv(st.path("meta.tsv"), data.expression.sample_ids, labels, data.survival);
}

void stage_train(RunState& st, const ExpressionMatrix& model_input) {
    TrainConfig tc = st.cfg.train;
    tc.seed = derive_seed(st.cfg.seed, kSeedTrain);
    TrainResult result = train(st.cfg.model_kind, model_input, tc);
    save_model(result.model, st.path("model.ckpt"));
    write_loss_history(st.path("loss_history.tsv"), result.loss_history);
}

void stage_encode(RunState& st, const GenerativeModel& model, const ExpressionMatrix& data) {
    LatentTable table = encode_all(model, data);
    write_latents(st.path("latents.tsv"), data.sample_ids, table.z);
    if (model.kind == ModelKind::vqvae)
        write_codes(st.path("codes.tsv"), data.sample_ids, table.code_indices);
}

void stage_metrics(RunState& st, const Matrix& features, const std::vector<std::size_t>& labels,
                   const std::vector<std::size_t>* truth, std::uint64_t seed) {
    ordered_json j;
    if (truth) {
        j["nmi"] = nmi(labels, *truth);
        j["purity"] = purity(labels, *truth);
    } else {
        j["nmi"] = nullptr;
        j["purity"] = nullptr;
    }
    j["silhouette"] = silhouette(features, labels).mean;
    j["ari"] = truth ? ordered_json(adjusted_rand(labels, *truth)) : ordered_json(nullptr);
    j["k"] = st.cfg.k;
    j["algorithm"] = cluster_algorithm_name(st.cfg.cluster_algorithm);
    j["seed"] = seed;
    write_json_file(st.path("metrics.json"), j);
}

void stage_project(RunState& st, const Matrix& features, const std::vector<std::string>& ids,
                   const std::vector<std::string>& groups) {
    PcaResult p = pca(features, 2);
    write_projection_tsv(st.path("pca.tsv"), ids, p.projection.coords, groups);
    write_projection_svg(st.path("pca.svg"), p.projection.coords, groups, "PCA", "PC1", "PC2");

    TsneOptions opts;
    opts.perplexity = st.cfg.tsne_perplexity;
    // keep the precondition satisfied on small inputs
    double max_perp = (static_cast<double>(features.rows) - 1.0) / 3.0;
    if (opts.perplexity >= max_perp) opts.perplexity = std::max(1.5, max_perp * 0.75);
    opts.iterations = st.cfg.tsne_iterations;
    opts.seed = derive_seed(st.cfg.seed, kSeedTsne);
    Projection t = tsne(features, opts);
    write_projection_tsv(st.path("tsne.tsv"), ids, t.coords, groups);
    write_projection_svg(st.path("tsne.svg"), t.coords, groups, "t-SNE", "dim 1", "dim 2");
}

void stage_lfg(RunState& st, const Matrix& latents) {
    // constant latent columns carry no correlation signal; leave them out
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < latents.cols; ++j) {
        bool constant = true;
        for (std::size_t i = 1; i < latents.rows && constant; ++i)
            constant = latents.at(i, j) == latents.at(0, j);
        if (!constant) kept.push_back(j);
    }
    auto out = open_out(st.path("lfg.tsv"));
    out << "latent_feature\tgroup\n";
    if (kept.size() < 2) {
        for (std::size_t j = 0; j < latents.cols; ++j)
            out << "z" << (j + 1) << "\t-\n";
        return;
    }
    Matrix sub(latents.rows, kept.size());
    std::vector<std::string> names;
    for (std::size_t c = 0; c < kept.size(); ++c) {
        names.push_back("z" + std::to_string(kept[c] + 1));
        for (std::size_t i = 0; i < latents.rows; ++i) sub.at(i, c) = latents.at(i, kept[c]);
    }
    Dendrogram dendro = hierarchical_corr(sub, Linkage::average, &names);
    write_dendrogram_tsv(st.path("latent_dendrogram.tsv"), dendro);
    std::size_t n_groups = std::min(st.cfg.lfg_groups, kept.size());
    std::vector<std::size_t> groups = cut_dendrogram(dendro, n_groups);
    std::map<std::size_t, std::size_t> group_of;
    for (std::size_t c = 0; c < kept.size(); ++c) group_of[kept[c]] = groups[c];
    for (std::size_t j = 0; j < latents.cols; ++j) {
        auto it = group_of.find(j);
        out << "z" << (j + 1) << "\t";
        if (it == group_of.end())
            out << "-";
        else
            out << it->second;
        out << "\n";
    }
}

void stage_deg(RunState& st, const ExpressionMatrix& analysis,
               const std::vector<std::size_t>& labels) {
    std::vector<bool> in_group(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        in_group[i] = labels[i] == st.cfg.deg_cluster;
    auto results = deg(analysis, in_group, st.cfg.deg_lfc_threshold, st.cfg.deg_q_threshold);
    write_deg_tsv(st.path("deg.tsv"), results);
}

void stage_enrich_from_results(RunState& st, const std::vector<DegResult>& results) {
    std::set<std::string> universe, query;
    for (const auto& r : results) {
        universe.insert(r.feature_id);
        if (r.status != DegStatus::ns) query.insert(r.feature_id);
    }
    auto sets = load_gmt(st.note_input(st.cfg.gene_sets_path));
    write_enrich_tsv(st.path("enrich.tsv"), enrich(query, sets, universe));
}

std::vector<DegResult> read_deg_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    std::vector<DegResult> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        DegResult r;
        std::string lfc, p, q, status;
        std::getline(ss, r.feature_id, '\t');
        std::getline(ss, lfc, '\t');
        std::getline(ss, p, '\t');
        std::getline(ss, q, '\t');
        std::getline(ss, status, '\t');
        r.log2_fold_change = std::stod(lfc);
        r.p_value = std::stod(p);
        r.q_value = std::stod(q);
        r.status = status == "up" ? DegStatus::up
                                  : (status == "down" ? DegStatus::down : DegStatus::ns);
        out.push_back(std::move(r));
    }
    return out;
}

void stage_survival(RunState& st, std::vector<SurvivalRecord> records,
                    const std::vector<std::string>& ids,
                    const std::vector<std::size_t>& labels) {
    std::map<std::string, std::size_t> cluster_of;
    for (std::size_t i = 0; i < ids.size(); ++i) cluster_of[ids[i]] = labels[i];

    std::vector<SurvivalRecord> usable;
    for (auto& r : records) {
        auto it = cluster_of.find(r.sample_id);
        if (it == cluster_of.end()) continue;  // no cluster -> excluded from KM
        r.group = it->second;
        usable.push_back(r);
    }
    if (usable.empty()) throw std::runtime_error("no survival records match clustered samples");

    std::set<std::size_t> groups_present;
    for (const auto& r : usable) groups_present.insert(r.group);
    std::vector<std::size_t> group_list(groups_present.begin(), groups_present.end());

    std::vector<KmCurve> curves;
    for (std::size_t g : group_list) {
        std::vector<SurvivalRecord> group_records;
        for (const auto& r : usable)
            if (r.group == g) group_records.push_back(r);
        curves.push_back(km_curve(group_records));
    }
    write_km_tsv(st.path("km.tsv"), group_list, curves);

    // logrank needs dense group ids
    std::map<std::size_t, std::size_t> dense;
    for (std::size_t i = 0; i < group_list.size(); ++i) dense[group_list[i]] = i;
    for (auto& r : usable) r.group = dense[r.group];
    LogrankResult lr = logrank(usable, group_list.size());
    ordered_json j;
    j["chi_square"] = lr.chi_square;
    j["df"] = lr.df;
    j["p"] = lr.p;
    write_json_file(st.path("logrank.json"), j);
}

// ---- manifest ----

void write_manifest(const RunState& st, const std::string& command, double wall_seconds) {
    ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    ordered_json modules = ordered_json::object();
    for (const char* m : {"datamatrix", "autodiff", "generative", "clustering", "clustmetrics",
                          "dimred", "biostats", "synth", "cli"})
        modules[m] = kVersion;
    j["modules"] = modules;
    j["seed"] = st.cfg.seed;
    ordered_json stage_seeds = ordered_json::object();
    stage_seeds["synth"] = derive_seed(st.cfg.seed, kSeedSynth);
    stage_seeds["train"] = derive_seed(st.cfg.seed, kSeedTrain);
    stage_seeds["cluster"] = derive_seed(st.cfg.seed, kSeedCluster);
    stage_seeds["tsne"] = derive_seed(st.cfg.seed, kSeedTsne);
    j["stage_seeds"] = stage_seeds;
    j["threads"] = st.cfg.threads;
    j["inputs"] = st.inputs_read;
    ordered_json config = ordered_json::object();
    for (const auto& [section, entries] : st.cfg.raw.sections) {
        ordered_json sec = ordered_json::object();
        for (const auto& [k, v] : entries) sec[k] = v;
        config[section] = sec;
    }
    j["config"] = config;
    j["wall_time_seconds"] = wall_seconds;
    write_json_file(st.path("manifest.json"), j);
}

// ---- subcommands ----

void cmd_synth(RunState& st) {
    std::optional<SynthData> synth;
    if (!st.cfg.use_synth)
        throw std::runtime_error("synth subcommand requires [input] synth = true");
    synth = maybe_synth(st);
    stage_write_synth(st, *synth);
}

void cmd_preprocess(RunState& st) {
    std::optional<SynthData> synth;
    ExpressionMatrix raw = load_source_matrix(st, synth);
    PreprocessOutput pre = preprocess(st, std::move(raw));
    save_matrix(pre.model, st.path("preprocessed.tsv"));
    auto out = open_out(st.path("removed_features.txt"));
    for (const auto& f : pre.removed_features) out << f << "\n";
}

void cmd_train(RunState& st) {
    ExpressionMatrix m = obtain_model_matrix(st);
    stage_train(st, m);
}

void cmd_encode(RunState& st) {
    if (st.cfg.model_path.empty()) throw std::runtime_error("encode needs [files] model");
    GenerativeModel model = load_model(st.note_input(st.cfg.model_path));
    ExpressionMatrix m = obtain_model_matrix(st);
    stage_encode(st, model, m);
}

void cmd_cluster(RunState& st) {
    // clusters the latent table when provided, else the (preprocessed) matrix
    ExpressionMatrix features = st.cfg.latents_path.empty()
                                    ? obtain_model_matrix(st)
                                    : obtain_latents(st);
    ClusterAssignment a =
        run_clustering(st.cfg, features.values, derive_seed(st.cfg.seed, kSeedCluster));
    write_clusters(st.path("clusters.tsv"), features.sample_ids, a.labels);
}

void cmd_evaluate(RunState& st) {
    if (st.cfg.clusters_path.empty()) throw std::runtime_error("evaluate needs [files] clusters");
    ExpressionMatrix features = st.cfg.latents_path.empty()
                                    ? obtain_model_matrix(st)
                                    : obtain_latents(st);
    auto labels = labels_for_ids(st.note_input(st.cfg.clusters_path), features.sample_ids);
    std::optional<SynthData> synth;
    std::optional<std::vector<std::size_t>> truth;
    if (!st.cfg.truth_path.empty() || st.cfg.use_synth)
        truth = obtain_truth(st, features.sample_ids, synth);
    stage_metrics(st, features.values, labels, truth ? &*truth : nullptr,
                  derive_seed(st.cfg.seed, kSeedCluster));
}

void cmd_project(RunState& st) {
    ExpressionMatrix features = st.cfg.latents_path.empty()
                                    ? obtain_model_matrix(st)
                                    : obtain_latents(st);
    std::vector<std::string> groups(features.n_samples(), "all");
    if (!st.cfg.clusters_path.empty())
        groups = group_names(
            labels_for_ids(st.note_input(st.cfg.clusters_path), features.sample_ids));
    stage_project(st, features.values, features.sample_ids, groups);
}

void cmd_deg(RunState& st) {
    if (st.cfg.clusters_path.empty()) throw std::runtime_error("deg needs [files] clusters");
    std::optional<SynthData> synth;
    ExpressionMatrix raw = load_source_matrix(st, synth);
    PreprocessOutput pre = preprocess(st, std::move(raw));
    auto labels = labels_for_ids(st.note_input(st.cfg.clusters_path), pre.analysis.sample_ids);
    stage_deg(st, pre.analysis, labels);
}

void cmd_enrich(RunState& st) {
    if (st.cfg.deg_path.empty()) throw std::runtime_error("enrich needs [files] deg");
    if (st.cfg.gene_sets_path.empty()) throw std::runtime_error("enrich needs [input] gene_sets");
    auto results = read_deg_tsv(st.note_input(st.cfg.deg_path));
    stage_enrich_from_results(st, results);
}

void cmd_survival(RunState& st) {
    if (st.cfg.clusters_path.empty()) throw std::runtime_error("survival needs [files] clusters");
    std::optional<SynthData> synth;
    std::vector<SurvivalRecord> records = obtain_survival(st, synth);
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    for (const auto& [id, value] : read_two_columns(st.note_input(st.cfg.clusters_path))) {
        ids.push_back(id);
        labels.push_back(static_cast<std::size_t>(std::stoull(value)));
    }
    stage_survival(st, std::move(records), ids, labels);
}

void cmd_pipeline(RunState& st) {
    std::optional<SynthData> synth;
    ExpressionMatrix raw = load_source_matrix(st, synth);
    if (synth) stage_write_synth(st, *synth);

    PreprocessOutput pre = preprocess(st, std::move(raw));
    save_matrix(pre.model, st.path("preprocessed.tsv"));
    {
        auto out = open_out(st.path("removed_features.txt"));
        for (const auto& f : pre.removed_features) out << f << "\n";
    }

    TrainConfig tc = st.cfg.train;
    tc.seed = derive_seed(st.cfg.seed, kSeedTrain);
    TrainResult trained = train(st.cfg.model_kind, pre.model, tc);
    save_model(trained.model, st.path("model.ckpt"));
    write_loss_history(st.path("loss_history.tsv"), trained.loss_history);

    LatentTable table = encode_all(trained.model, pre.model);
    write_latents(st.path("latents.tsv"), pre.model.sample_ids, table.z);
    if (trained.model.kind == ModelKind::vqvae)
        write_codes(st.path("codes.tsv"), pre.model.sample_ids, table.code_indices);

    std::uint64_t cluster_seed = derive_seed(st.cfg.seed, kSeedCluster);
    ClusterAssignment assignment = run_clustering(st.cfg, table.z, cluster_seed);
    write_clusters(st.path("clusters.tsv"), pre.model.sample_ids, assignment.labels);

    if (st.cfg.do_evaluate) {
        std::optional<std::vector<std::size_t>> truth;
        if (st.cfg.use_synth || !st.cfg.truth_path.empty())
            truth = obtain_truth(st, pre.model.sample_ids, synth);
        stage_metrics(st, table.z, assignment.labels, truth ? &*truth : nullptr, cluster_seed);
    }

    if (st.cfg.do_project)
        stage_project(st, table.z, pre.model.sample_ids, group_names(assignment.labels));

    stage_lfg(st, table.z);

    if (st.cfg.do_deg) {
        stage_deg(st, pre.analysis, assignment.labels);
        if (st.cfg.do_enrich) {
            auto results = read_deg_tsv(st.path("deg.tsv"));
            stage_enrich_from_results(st, results);
        }
    }

    if (st.cfg.do_survival && (st.cfg.use_synth || !st.cfg.meta_path.empty())) {
        std::vector<SurvivalRecord> records = obtain_survival(st, synth);
        stage_survival(st, std::move(records), pre.model.sample_ids, assignment.labels);
    }
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
    static const std::vector<std::string> names = {
        "preprocess", "synth",   "train", "encode",  "cluster", "evaluate",
        "project",    "deg",     "enrich", "survival", "pipeline"};
    return names;
}

void run_subcommand(const std::string& name, const PipelineConfig& config,
                    const std::string& out_dir) {
    set_thread_count(config.threads);
    std::filesystem::create_directories(out_dir);

    RunState st;
    st.cfg = config;
    st.dir = out_dir;

    auto started = std::chrono::steady_clock::now();
    if (name == "synth")
        cmd_synth(st);
    else if (name == "preprocess")
        cmd_preprocess(st);
    else if (name == "train")
        cmd_train(st);
    else if (name == "encode")
        cmd_encode(st);
    else if (name == "cluster")
        cmd_cluster(st);
    else if (name == "evaluate")
        cmd_evaluate(st);
    else if (name == "project")
        cmd_project(st);
    else if (name == "deg")
        cmd_deg(st);
    else if (name == "enrich")
        cmd_enrich(st);
    else if (name == "survival")
        cmd_survival(st);
    else if (name == "pipeline")
        cmd_pipeline(st);
    else
        throw std::invalid_argument("unknown subcommand '" + name + "'");

    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(st, name, wall);
}

}  // namespace vqclust
