#pragma once

#include "rlad/common.hpp"
#include "rlad/nn.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rlad::vae {

struct VaeConfig {
    std::size_t input_dim = 25;
    std::vector<std::size_t> hidden{64, 32};  // encoder widths; decoder mirrors them
    std::size_t latent = 8;
};

/// Dense Gaussian VAE over flattened windows. Hidden layers use tanh, the
/// latent heads and the reconstruction layer are linear.
///
/// Batches are laid out one window per column (input_dim x B).
class VaeModel {
public:
    VaeModel(VaeConfig config, std::uint64_t seed);

    const VaeConfig& config() const { return config_; }
    nn::ParamRefs params();
    nn::ConstParamRefs params() const;

    struct Encoding {
        Eigen::MatrixXd mu;      // latent x B
        Eigen::MatrixXd logvar;  // latent x B
    };
    Encoding encode(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;

    nlohmann::json meta() const;
    void save(const std::filesystem::path& path) const;
    static VaeModel load(const std::filesystem::path& path);

private:
    friend double elbo_loss_and_grad(VaeModel&, const Matrix&, const Matrix&);

    std::size_t enc_layer(std::size_t l) const { return 2 * l; }
    std::size_t mu_head() const { return 2 * config_.hidden.size(); }
    std::size_t logvar_head() const { return mu_head() + 2; }
    std::size_t dec_layer(std::size_t l) const { return logvar_head() + 2 + 2 * l; }
    std::size_t out_layer() const { return dec_layer(config_.hidden.size()); }

    VaeConfig config_;
    std::vector<nn::Param> params_;  // (W, b) pairs in forward order
};

/// Negative ELBO split into its parts, averaged over the batch:
/// reconstruction = mean over elements of (x - x_hat)^2,
/// kl = 0.5 * sum(mu^2 + exp(logvar) - logvar - 1).
/// All arguments hold one item per row.
struct ElboTerms {
    double reconstruction = 0.0;
    double kl = 0.0;
    double total() const { return reconstruction + kl; }
};
ElboTerms elbo_terms(const Matrix& x, const Matrix& x_hat, const Matrix& mu, const Matrix& logvar);

/// -ELBO for a batch (B x input_dim) with externally supplied
/// reparameterisation noise (B x latent): z = mu + exp(logvar / 2) * noise.
/// Throws NonFiniteLoss if inputs, parameters or the loss are not finite.
double elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise);

/// Same as elbo_loss and overwrites every parameter's gradient.
double elbo_loss_and_grad(VaeModel& model, const Matrix& batch, const Matrix& noise);

struct VaeTrainOptions {
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

/// Adam on shuffled mini-batches. Returns the mean loss of each epoch.
std::vector<double> train_vae(VaeModel& model, const Matrix& windows, const VaeTrainOptions& options);

/// Mean squared error between a window and its reconstruction through the
/// posterior mean (no sampling).
double recon_error(const VaeModel& model, const Matrix& window);

/// Scores many flattened windows (one per row) at once.
Vector recon_errors(const VaeModel& model, const Matrix& windows);

Vector latent_mean(const VaeModel& model, const Matrix& window);

/// Proportional controller for the weight on the reconstruction term.
struct LambdaController {
    double lambda = 0.1;
    double alpha = 0.001;
    double r_target = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 2.0;
};

/// clip(lambda + alpha * (r_target - r_episode), lambda_min, lambda_max)
LambdaController update_lambda(LambdaController ctrl, double r_episode);

/// r1 + lambda * r2
double total_reward(double r1, double r2, double lambda);

}  // namespace rlad::vae
