#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqclust/codebook.hpp"
#include "vqclust/expression.hpp"
#include "vqclust/graph.hpp"
#include "vqclust/rng.hpp"
#include "vqclust/tensor.hpp"

namespace vqclust {

enum class ModelKind { ae, vae, vqvae };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct TrainConfig {
    std::size_t latent_dim = 64;              // l
    std::size_t groups = 8;                   // G quantized slots (l = G * Dc)
    std::size_t codebook_size = 64;           // M
    double beta = 0.25;                       // commitment weight
    std::vector<std::size_t> hidden = {512, 128};
    std::size_t epochs = 500;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    bool ema_codebook = false;                // EMA codebook update instead of gradients
    double ema_decay = 0.99;
    double early_stop_tol = 1e-6;
    std::size_t early_stop_patience = 25;
    std::size_t dead_code_epochs = 50;        // reseed codes unused this many epochs
};

// Plain MLP: linear layers with ReLU between them, linear output.
struct Mlp {
    std::vector<Tensor> weights;  // layer i: (in_i, out_i)
    std::vector<Tensor> biases;   // (out_i)

    static Mlp create(const std::vector<std::size_t>& dims, Rng& rng);

    // Registers this MLP's parameters on the graph and returns the output
    // node; param node ids are appended to param_nodes when given.
    NodeId forward(Graph& g, NodeId x, std::vector<NodeId>* param_nodes = nullptr) const;

    std::size_t input_dim() const { return weights.front().shape[0]; }
    std::size_t output_dim() const { return weights.back().shape[1]; }
};

struct GenerativeModel {
    ModelKind kind = ModelKind::vqvae;
    TrainConfig config;
    std::size_t input_dim = 0;
    Mlp encoder;        // d -> hidden -> l   (2l for the VAE's mu/log-variance)
    Mlp decoder;        // l -> hidden -> d
    Codebook codebook;  // vqvae only
};

struct LatentTable {
    Matrix z;                                             // n x l
    std::vector<std::vector<std::size_t>> code_indices;   // n x G, vqvae only
};

struct VqLossParts {
    double total = 0;
    double reconstruction = 0;   // mean over batch of ||x - x_hat||^2
    double codebook_term = 0;    // mean over batch of ||sg[z_e] - C_k||^2
    double commitment_term = 0;  // beta * mean over batch of ||z_e - sg[C_k]||^2
};

struct VaeLossParts {
    double total = 0;
    double reconstruction = 0;
    double kl = 0;  // closed-form diagonal-Gaussian KL against the unit prior
};

VqLossParts vq_loss(const Matrix& x, const GenerativeModel& model);
VaeLossParts vae_loss(const Matrix& x, const GenerativeModel& model, Rng& rng);

struct TrainResult {
    GenerativeModel model;
    std::vector<double> loss_history;  // mean per-sample total loss per epoch
};

// Mini-batch Adam over the z-scored matrix; deterministic per config seed.
// Throws on NaN loss with the offending epoch and batch in the message.
TrainResult train(ModelKind kind, const ExpressionMatrix& data, const TrainConfig& config);

// One latent row per sample: quantized latents (vqvae), posterior means
// (vae), or bottleneck activations (ae).
LatentTable encode_all(const GenerativeModel& model, const ExpressionMatrix& data);

void save_model(const GenerativeModel& model, const std::string& path);
GenerativeModel load_model(const std::string& path);

}  // namespace vqclust
