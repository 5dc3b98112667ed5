#include "vqclust/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vqclust/adam.hpp"
#include "vqclust/checkpoint.hpp"

namespace vqclust {

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::ae: return "ae";
        case ModelKind::vae: return "vae";
        case ModelKind::vqvae: return "vqvae";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "ae") return ModelKind::ae;
    if (name == "vae") return ModelKind::vae;
    if (name == "vqvae") return ModelKind::vqvae;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

Mlp Mlp::create(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        std::size_t fan_in = dims[i], fan_out = dims[i + 1];
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w({fan_in, fan_out});
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(std::vector<std::size_t>{fan_out}, 0.0);
    }
    return mlp;
}

NodeId Mlp::forward(Graph& g, NodeId x, std::vector<NodeId>* param_nodes) const {
    NodeId h = x;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        NodeId w = g.param(weights[i]);
        NodeId b = g.param(biases[i]);
        if (param_nodes) {
            param_nodes->push_back(w);
            param_nodes->push_back(b);
        }
        h = g.add(g.matmul(h, w), b);
        if (i + 1 < weights.size()) h = g.relu(h);
    }
    return h;
}

namespace {

Tensor batch_tensor(const Matrix& x, const std::vector<std::size_t>& rows) {
    Tensor t({rows.size(), x.cols});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < x.cols; ++j) t.at(r, j) = x.at(rows[r], j);
    return t;
}

Tensor full_tensor(const Matrix& x) {
    Tensor t;
    t.shape = {x.rows, x.cols};
    t.data = x.data;
    return t;
}

// mean over batch rows of the per-row sum of squares of (a - b)
NodeId mean_row_sumsq(Graph& g, NodeId a, NodeId b, std::size_t batch) {
    NodeId d = g.sub(a, b);
    return g.scale(g.sum(g.mul(d, d)), 1.0 / static_cast<double>(batch));
}

struct VqGraph {
    NodeId total, recon, cb_term, commit;
    std::vector<std::vector<std::size_t>> indices;  // per batch row
};

VqGraph build_vq_loss(Graph& g, const Tensor& x, const GenerativeModel& model,
                      NodeId codebook_node, std::vector<NodeId>* params) {
    const std::size_t batch = x.shape[0];
    NodeId xin = g.input(x);
    NodeId ze = model.encoder.forward(g, xin, params);

    const std::size_t groups = model.config.groups;
    std::vector<std::size_t> flat;
    VqGraph out;
    for (std::size_t r = 0; r < batch; ++r) {
        const Tensor& zev = g.value(ze);
        std::vector<double> row(zev.data.begin() + r * zev.shape[1],
                                zev.data.begin() + (r + 1) * zev.shape[1]);
        auto q = quantize(row, model.codebook, groups);
        flat.insert(flat.end(), q.indices.begin(), q.indices.end());
        out.indices.push_back(std::move(q.indices));
    }
    NodeId zq = g.gather_rows(codebook_node, flat, batch);
    NodeId dec_in = g.straight_through(ze, zq);
    NodeId xt = model.decoder.forward(g, dec_in, params);

    out.recon = mean_row_sumsq(g, xt, xin, batch);
    out.cb_term = mean_row_sumsq(g, g.stop_gradient(ze), zq, batch);
    NodeId commit_raw = mean_row_sumsq(g, ze, g.stop_gradient(zq), batch);
    out.commit = g.scale(commit_raw, model.config.beta);
    out.total = g.add(g.add(out.recon, out.cb_term), out.commit);
    return out;
}

struct VaeGraph {
    NodeId total, recon, kl;
};

VaeGraph build_vae_loss(Graph& g, const Tensor& x, const GenerativeModel& model, Rng& rng,
                        std::vector<NodeId>* params) {
    const std::size_t batch = x.shape[0];
    const std::size_t l = model.config.latent_dim;
    NodeId xin = g.input(x);
    NodeId enc_out = model.encoder.forward(g, xin, params);
    NodeId mu = g.slice_cols(enc_out, 0, l);
    NodeId log_var = g.slice_cols(enc_out, l, l);

    Tensor eps({batch, l});
    for (auto& v : eps.data) v = rng.normal();
    NodeId sigma = g.exp(g.scale(log_var, 0.5));
    NodeId z = g.add(mu, g.mul(sigma, g.input(eps)));
    NodeId xt = model.decoder.forward(g, z, params);

    VaeGraph out;
    out.recon = mean_row_sumsq(g, xt, xin, batch);
    out.kl = g.scale(g.kl_diag_gaussian(mu, log_var), 1.0 / static_cast<double>(batch));
    out.total = g.add(out.recon, out.kl);
    return out;
}

Matrix encoder_outputs(const GenerativeModel& model, const Matrix& x) {
    Graph g;
    NodeId xin = g.input(full_tensor(x));
    NodeId ze = model.encoder.forward(g, xin);
    const Tensor& v = g.value(ze);
    Matrix out(v.shape[0], v.shape[1]);
    out.data = v.data;
    return out;
}

void init_codebook(GenerativeModel& model, const Matrix& data, Rng& rng) {
    const std::size_t groups = model.config.groups;
    const std::size_t dc = model.config.latent_dim / groups;
    const std::size_t m = model.config.codebook_size;

    Matrix ze = encoder_outputs(model, data);
    const std::size_t total_slots = ze.rows * groups;

    model.codebook.vectors = Matrix(m, dc);
    std::vector<std::size_t> pool(total_slots);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t pick;
        if (c < total_slots) {
            std::size_t swap_at = c + rng.index(total_slots - c);
            std::swap(pool[c], pool[swap_at]);
            pick = pool[c];
        } else {
            pick = rng.index(total_slots);
        }
        std::size_t row = pick / groups, slot = pick % groups;
        for (std::size_t j = 0; j < dc; ++j)
            model.codebook.vectors.at(c, j) = ze.at(row, slot * dc + j);
    }
    // codes must be pairwise distinct after initialization
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < a; ++b) {
            if (squared_distance(model.codebook.vectors.row(a), model.codebook.vectors.row(b),
                                 dc) == 0.0) {
                for (std::size_t j = 0; j < dc; ++j)
                    model.codebook.vectors.at(a, j) += 1e-6 * rng.normal();
                b = static_cast<std::size_t>(-1);  // recheck row a from scratch
            }
        }
}

}  // namespace

VqLossParts vq_loss(const Matrix& x, const GenerativeModel& model) {
    Graph g;
    NodeId cb = g.input(Tensor::matrix(model.codebook.size(), model.codebook.code_dim(),
                                       model.codebook.vectors.data));
    VqGraph built = build_vq_loss(g, full_tensor(x), model, cb, nullptr);
    VqLossParts parts;
    parts.total = g.value(built.total).data[0];
    parts.reconstruction = g.value(built.recon).data[0];
    parts.codebook_term = g.value(built.cb_term).data[0];
    parts.commitment_term = g.value(built.commit).data[0];
    return parts;
}

VaeLossParts vae_loss(const Matrix& x, const GenerativeModel& model, Rng& rng) {
    Graph g;
    VaeGraph built = build_vae_loss(g, full_tensor(x), model, rng, nullptr);
    VaeLossParts parts;
    parts.total = g.value(built.total).data[0];
    parts.reconstruction = g.value(built.recon).data[0];
    parts.kl = g.value(built.kl).data[0];
    return parts;
}

TrainResult train(ModelKind kind, const ExpressionMatrix& data, const TrainConfig& config) {
    for (double v : data.values.data)
        if (std::isnan(v)) throw std::invalid_argument("train: data has missing values");
    if (config.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (config.latent_dim == 0) throw std::invalid_argument("train: latent_dim must be positive");
    if (kind == ModelKind::vqvae) {
        if (config.groups == 0 || config.latent_dim % config.groups != 0)
            throw std::invalid_argument("train: latent_dim must be a multiple of groups");
        if (config.codebook_size < 2)
            throw std::invalid_argument("train: codebook needs at least 2 vectors");
    }

    const std::size_t n = data.n_samples();
    const std::size_t d = data.n_features();
    const std::size_t l = config.latent_dim;

    TrainResult res;
    GenerativeModel& model = res.model;
    model.kind = kind;
    model.config = config;
    model.input_dim = d;

    Rng init_rng(derive_seed(config.seed, 0));
    std::vector<std::size_t> enc_dims = {d};
    for (std::size_t h : config.hidden) enc_dims.push_back(h);
    enc_dims.push_back(kind == ModelKind::vae ? 2 * l : l);
    std::vector<std::size_t> dec_dims = {l};
    for (auto it = config.hidden.rbegin(); it != config.hidden.rend(); ++it)
        dec_dims.push_back(*it);
    dec_dims.push_back(d);
    model.encoder = Mlp::create(enc_dims, init_rng);
    model.decoder = Mlp::create(dec_dims, init_rng);

    const bool codebook_by_gradient = kind == ModelKind::vqvae && !config.ema_codebook;
    if (kind == ModelKind::vqvae) init_codebook(model, data.values, init_rng);

    // flat parameter list: encoder, decoder, then codebook when gradient-trained
    auto flat_params = [&]() {
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < model.encoder.weights.size(); ++i) {
            out.push_back(model.encoder.weights[i]);
            out.push_back(model.encoder.biases[i]);
        }
        for (std::size_t i = 0; i < model.decoder.weights.size(); ++i) {
            out.push_back(model.decoder.weights[i]);
            out.push_back(model.decoder.biases[i]);
        }
        if (codebook_by_gradient)
            out.push_back(Tensor::matrix(model.codebook.size(), model.codebook.code_dim(),
                                         model.codebook.vectors.data));
        return out;
    };
    auto write_back = [&](const std::vector<Tensor>& flat) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < model.encoder.weights.size(); ++i) {
            model.encoder.weights[i] = flat[k++];
            model.encoder.biases[i] = flat[k++];
        }
        for (std::size_t i = 0; i < model.decoder.weights.size(); ++i) {
            model.decoder.weights[i] = flat[k++];
            model.decoder.biases[i] = flat[k++];
        }
        if (codebook_by_gradient) model.codebook.vectors.data = flat[k++].data;
    };

    std::vector<Tensor> params = flat_params();
    AdamState adam;
    adam.cfg.lr = config.learning_rate;
    adam.init(params);

    Rng train_rng(derive_seed(config.seed, 1));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    // EMA accumulators (vqvae with ema_codebook)
    const std::size_t m = kind == ModelKind::vqvae ? config.codebook_size : 0;
    std::vector<double> ema_count(m, 0.0);
    Matrix ema_sum;
    if (kind == ModelKind::vqvae && config.ema_codebook) {
        ema_sum = Matrix(m, model.codebook.code_dim());
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t j = 0; j < model.codebook.code_dim(); ++j)
                ema_sum.at(c, j) = model.codebook.vectors.at(c, j);
        ema_count.assign(m, 1.0);
    }

    std::vector<std::size_t> unused_epochs(m, 0);
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        train_rng.shuffle(order);
        double loss_sum = 0.0;
        std::vector<bool> used(m, false);

        for (std::size_t start = 0, batch_no = 0; start < n; start += config.batch_size, ++batch_no) {
            std::size_t stop = std::min(n, start + config.batch_size);
            std::vector<std::size_t> rows(order.begin() + start, order.begin() + stop);
            Tensor xb = batch_tensor(data.values, rows);
            const std::size_t batch = rows.size();

            Graph g;
            std::vector<NodeId> param_nodes;
            NodeId total;
            std::vector<std::vector<std::size_t>> batch_indices;

            if (kind == ModelKind::vqvae) {
                NodeId cb_node;
                Tensor cb_tensor = Tensor::matrix(model.codebook.size(), model.codebook.code_dim(),
                                                  model.codebook.vectors.data);
                std::vector<NodeId> enc_dec_nodes;
                if (codebook_by_gradient) {
                    cb_node = g.param(cb_tensor);
                    VqGraph built = build_vq_loss(g, xb, model, cb_node, &enc_dec_nodes);
                    total = built.total;
                    batch_indices = std::move(built.indices);
                    // flat parameter order keeps the codebook last
                    param_nodes = enc_dec_nodes;
                    param_nodes.push_back(cb_node);
                } else {
                    cb_node = g.input(cb_tensor);
                    VqGraph built = build_vq_loss(g, xb, model, cb_node, &param_nodes);
                    total = built.total;
                    batch_indices = std::move(built.indices);
                }
            } else if (kind == ModelKind::vae) {
                VaeGraph built = build_vae_loss(g, xb, model, train_rng, &param_nodes);
                total = built.total;
            } else {
                NodeId xin = g.input(xb);
                NodeId ze = model.encoder.forward(g, xin, &param_nodes);
                NodeId xt = model.decoder.forward(g, ze, &param_nodes);
                total = mean_row_sumsq(g, xt, xin, batch);
            }

            double loss_value = g.value(total).data[0];
            if (std::isnan(loss_value))
                throw std::runtime_error("train: loss is NaN at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(batch_no));
            loss_sum += loss_value * static_cast<double>(batch);

            g.backward(total);
            std::vector<Tensor> grads;
            grads.reserve(param_nodes.size());
            for (NodeId id : param_nodes) grads.push_back(g.grad(id));
            adam_step(params, grads, adam);
            write_back(params);

            if (kind == ModelKind::vqvae) {
                for (const auto& row : batch_indices)
                    for (std::size_t idx : row) used[idx] = true;
                if (config.ema_codebook) {
                    const std::size_t dc = model.codebook.code_dim();
                    std::vector<double> cnt(m, 0.0);
                    Matrix sum(m, dc);
                    for (std::size_t r = 0; r < batch_indices.size(); ++r)
                        for (std::size_t s = 0; s < config.groups; ++s)
                            cnt[batch_indices[r][s]] += 1.0;
                    Matrix xbm(batch, d);
                    xbm.data = xb.data;
                    Matrix ze_now = encoder_outputs(model, xbm);
                    for (std::size_t r = 0; r < batch; ++r)
                        for (std::size_t s = 0; s < config.groups; ++s) {
                            std::size_t code = batch_indices[r][s];
                            for (std::size_t j = 0; j < dc; ++j)
                                sum.at(code, j) += ze_now.at(r, s * dc + j);
                        }
                    const double decay = config.ema_decay;
                    for (std::size_t c = 0; c < m; ++c) {
                        ema_count[c] = decay * ema_count[c] + (1.0 - decay) * cnt[c];
                        for (std::size_t j = 0; j < dc; ++j) {
                            ema_sum.at(c, j) = decay * ema_sum.at(c, j) + (1.0 - decay) * sum.at(c, j);
                            if (ema_count[c] > 1e-8)
                                model.codebook.vectors.at(c, j) = ema_sum.at(c, j) / ema_count[c];
                        }
                    }
                }
            }
        }

        double epoch_loss = loss_sum / static_cast<double>(n);
        res.loss_history.push_back(epoch_loss);

        if (kind == ModelKind::vqvae) {
            const std::size_t dc = model.codebook.code_dim();
            for (std::size_t c = 0; c < m; ++c) {
                unused_epochs[c] = used[c] ? 0 : unused_epochs[c] + 1;
                if (unused_epochs[c] >= config.dead_code_epochs) {
                    // reseed a dead code to a random encoder output slot
                    std::size_t row = train_rng.index(n);
                    std::size_t slot = train_rng.index(config.groups);
                    Matrix one(1, d);
                    for (std::size_t j = 0; j < d; ++j) one.at(0, j) = data.values.at(row, j);
                    Matrix ze_row = encoder_outputs(model, one);
                    for (std::size_t j = 0; j < dc; ++j)
                        model.codebook.vectors.at(c, j) = ze_row.at(0, slot * dc + j);
                    unused_epochs[c] = 0;
                    if (codebook_by_gradient) {
                        // keep the flat parameter copy in sync
                        params.back().data = model.codebook.vectors.data;
                    }
                }
            }
        }

        if (epoch_loss < best_loss - config.early_stop_tol) {
            best_loss = epoch_loss;
            since_best = 0;
        } else if (++since_best >= config.early_stop_patience) {
            break;
        }
    }

    return res;
}

LatentTable encode_all(const GenerativeModel& model, const ExpressionMatrix& data) {
    const std::size_t n = data.n_samples();
    const std::size_t l = model.config.latent_dim;

    Matrix enc = encoder_outputs(model, data.values);
    LatentTable table;
    table.z = Matrix(n, l);

    if (model.kind == ModelKind::vqvae) {
        table.code_indices.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(enc.row(i), enc.row(i) + l);
            auto q = quantize(row, model.codebook, model.config.groups);
            for (std::size_t j = 0; j < l; ++j) table.z.at(i, j) = q.z_q[j];
            table.code_indices[i] = std::move(q.indices);
        }
    } else if (model.kind == ModelKind::vae) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < l; ++j) table.z.at(i, j) = enc.at(i, j);  // posterior mean
    } else {
        table.z = std::move(enc);
    }
    return table;
}

void save_model(const GenerativeModel& model, const std::string& path) {
    Checkpoint ck;
    ck.seed = model.config.seed;
    ck.add_meta("kind", model_kind_name(model.kind));
    ck.add_meta("input_dim", std::to_string(model.input_dim));
    ck.add_meta("latent_dim", std::to_string(model.config.latent_dim));
    ck.add_meta("groups", std::to_string(model.config.groups));
    ck.add_meta("codebook_size", std::to_string(model.config.codebook_size));
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", model.config.beta);
    ck.add_meta("beta", buf);
    std::string hidden;
    for (std::size_t h : model.config.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
    ck.add_meta("hidden", hidden.empty() ? "-" : hidden);
    ck.add_meta("epochs", std::to_string(model.config.epochs));
    ck.add_meta("batch_size", std::to_string(model.config.batch_size));
    std::snprintf(buf, sizeof(buf), "%.17g", model.config.learning_rate);
    ck.add_meta("learning_rate", buf);
    ck.add_meta("ema_codebook", model.config.ema_codebook ? "1" : "0");

    for (std::size_t i = 0; i < model.encoder.weights.size(); ++i) {
        ck.add_tensor("enc_w" + std::to_string(i), model.encoder.weights[i]);
        ck.add_tensor("enc_b" + std::to_string(i), model.encoder.biases[i]);
    }
    for (std::size_t i = 0; i < model.decoder.weights.size(); ++i) {
        ck.add_tensor("dec_w" + std::to_string(i), model.decoder.weights[i]);
        ck.add_tensor("dec_b" + std::to_string(i), model.decoder.biases[i]);
    }
    if (model.kind == ModelKind::vqvae)
        ck.add_tensor("codebook", Tensor::matrix(model.codebook.size(), model.codebook.code_dim(),
                                                 model.codebook.vectors.data));
    ck.save(path);
}

GenerativeModel load_model(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    GenerativeModel model;
    model.kind = model_kind_from_name(ck.meta_value("kind"));
    model.input_dim = std::stoul(ck.meta_value("input_dim"));
    model.config.latent_dim = std::stoul(ck.meta_value("latent_dim"));
    model.config.groups = std::stoul(ck.meta_value("groups"));
    model.config.codebook_size = std::stoul(ck.meta_value("codebook_size"));
    model.config.beta = std::stod(ck.meta_value("beta"));
    model.config.hidden.clear();
    std::string hidden = ck.meta_value("hidden");
    if (hidden != "-") {
        std::size_t pos = 0;
        while (pos < hidden.size()) {
            std::size_t comma = hidden.find(',', pos);
            if (comma == std::string::npos) comma = hidden.size();
            model.config.hidden.push_back(std::stoul(hidden.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    model.config.epochs = std::stoul(ck.meta_value("epochs"));
    model.config.batch_size = std::stoul(ck.meta_value("batch_size"));
    model.config.learning_rate = std::stod(ck.meta_value("learning_rate"));
    model.config.ema_codebook = ck.meta_value("ema_codebook") == "1";
    model.config.seed = ck.seed;

    auto load_mlp = [&](const std::string& prefix) {
        Mlp mlp;
        for (std::size_t i = 0;; ++i) {
            bool found = false;
            for (const auto& [name, t] : ck.tensors)
                if (name == prefix + "_w" + std::to_string(i)) found = true;
            if (!found) break;
            mlp.weights.push_back(ck.tensor(prefix + "_w" + std::to_string(i)));
            mlp.biases.push_back(ck.tensor(prefix + "_b" + std::to_string(i)));
        }
        return mlp;
    };
    model.encoder = load_mlp("enc");
    model.decoder = load_mlp("dec");
    if (model.kind == ModelKind::vqvae) {
        const Tensor& cb = ck.tensor("codebook");
        model.codebook.vectors = Matrix(cb.shape[0], cb.shape[1]);
        model.codebook.vectors.data = cb.data;
    }
    return model;
}

}  // namespace vqclust
