#include "rlad/vae.hpp"

#include "rlad/checkpoint.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace rlad::vae {

namespace {

Eigen::MatrixXd affine(const nn::Param& W, const nn::Param& b, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd a = W.value * x;
    a.colwise() += b.value.col(0);
    return a;
}

void check_finite_inputs(const VaeModel& model, const Matrix& batch, const Matrix& noise) {
    if (!batch.allFinite() || !noise.allFinite() || !nn::all_finite(model.params())) {
        throw NonFiniteLoss("non-finite input, noise or parameter in ELBO evaluation");
    }
}

void check_batch_shape(const VaeModel& model, const Matrix& batch, const Matrix& noise) {
    const auto& cfg = model.config();
    if (static_cast<std::size_t>(batch.cols()) != cfg.input_dim) {
        throw ShapeError("batch width " + std::to_string(batch.cols()) + " != model input " +
                         std::to_string(cfg.input_dim));
    }
    if (noise.rows() != batch.rows() || static_cast<std::size_t>(noise.cols()) != cfg.latent) {
        throw ShapeError("noise must be batch x latent");
    }
}

}  // namespace

VaeModel::VaeModel(VaeConfig config, std::uint64_t seed) : config_(std::move(config)) {
    if (config_.input_dim == 0 || config_.latent == 0) throw InvalidArgs("VAE needs positive input and latent sizes");
    std::mt19937_64 rng(seed);
    auto add_dense = [&](const std::string& name, std::size_t in, std::size_t out) {
        params_.emplace_back(name + ".W", static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        nn::init_glorot(params_.back(), rng);
        params_.emplace_back(name + ".b", static_cast<Eigen::Index>(out), 1);
    };
    std::size_t width = config_.input_dim;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        add_dense("enc" + std::to_string(l), width, config_.hidden[l]);
        width = config_.hidden[l];
    }
    add_dense("mu", width, config_.latent);
    add_dense("logvar", width, config_.latent);
    width = config_.latent;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        const auto out = config_.hidden[config_.hidden.size() - 1 - l];
        add_dense("dec" + std::to_string(l), width, out);
        width = out;
    }
    add_dense("out", width, config_.input_dim);
}

nn::ParamRefs VaeModel::params() {
    nn::ParamRefs out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

nn::ConstParamRefs VaeModel::params() const {
    nn::ConstParamRefs out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

VaeModel::Encoding VaeModel::encode(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        h = affine(params_[enc_layer(l)], params_[enc_layer(l) + 1], h).array().tanh();
    }
    return {affine(params_[mu_head()], params_[mu_head() + 1], h),
            affine(params_[logvar_head()], params_[logvar_head() + 1], h)};
}

Eigen::MatrixXd VaeModel::decode(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd g = z;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
        g = affine(params_[dec_layer(l)], params_[dec_layer(l) + 1], g).array().tanh();
    }
    return affine(params_[out_layer()], params_[out_layer() + 1], g);
}

nlohmann::json VaeModel::meta() const {
    return {{"input_dim", config_.input_dim}, {"hidden", config_.hidden}, {"latent", config_.latent}};
}

void VaeModel::save(const std::filesystem::path& path) const { checkpoint::save(path, "vae", meta(), params()); }

VaeModel VaeModel::load(const std::filesystem::path& path) {
    const auto ckpt = checkpoint::load(path);
    VaeConfig cfg;
    try {
        cfg.input_dim = ckpt.meta.at("input_dim").get<std::size_t>();
        cfg.hidden = ckpt.meta.at("hidden").get<std::vector<std::size_t>>();
        cfg.latent = ckpt.meta.at("latent").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ShapeMismatch(std::string("VAE checkpoint metadata: ") + e.what());
    }
    VaeModel model(cfg, 0);
    checkpoint::restore(ckpt, "vae", model.params());
    return model;
}

ElboTerms elbo_terms(const Matrix& x, const Matrix& x_hat, const Matrix& mu, const Matrix& logvar) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols() || mu.rows() != logvar.rows() ||
        mu.cols() != logvar.cols() || mu.rows() != x.rows()) {
        throw ShapeError("ELBO term shapes disagree");
    }
    const double batch = static_cast<double>(x.rows());
    ElboTerms t;
    t.reconstruction = (x - x_hat).array().square().rowwise().mean().sum() / batch;
    t.kl = 0.5 * (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum() / batch;
    return t;
}

double elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise) {
    check_batch_shape(model, batch, noise);
    check_finite_inputs(model, batch, noise);
    const Eigen::MatrixXd x = batch.transpose();
    const auto enc = model.encode(x);
    const Eigen::MatrixXd z = enc.mu + ((0.5 * enc.logvar).array().exp() * noise.transpose().array()).matrix();
    const Eigen::MatrixXd x_hat = model.decode(z);
    const double loss = elbo_terms(batch, x_hat.transpose(), enc.mu.transpose(), enc.logvar.transpose()).total();
    if (!std::isfinite(loss)) throw NonFiniteLoss("ELBO evaluated to a non-finite value");
    return loss;
}

double elbo_loss_and_grad(VaeModel& model, const Matrix& batch, const Matrix& noise) {
    check_batch_shape(model, batch, noise);
    check_finite_inputs(model, batch, noise);
    const auto& cfg = model.config_;
    auto& P = model.params_;
    const std::size_t depth = cfg.hidden.size();
    const double B = static_cast<double>(batch.rows());
    const double n = static_cast<double>(cfg.input_dim);

    // Forward with activations kept for the backward pass.
    const Eigen::MatrixXd x = batch.transpose();
    const Eigen::MatrixXd eps = noise.transpose();
    std::vector<Eigen::MatrixXd> enc_h{x};
    for (std::size_t l = 0; l < depth; ++l) {
        enc_h.push_back(affine(P[model.enc_layer(l)], P[model.enc_layer(l) + 1], enc_h.back()).array().tanh());
    }
    const Eigen::MatrixXd mu = affine(P[model.mu_head()], P[model.mu_head() + 1], enc_h.back());
    const Eigen::MatrixXd logvar = affine(P[model.logvar_head()], P[model.logvar_head() + 1], enc_h.back());
    const Eigen::ArrayXXd sigma = (0.5 * logvar).array().exp();
    const Eigen::MatrixXd z = mu + (sigma * eps.array()).matrix();
    std::vector<Eigen::MatrixXd> dec_h{z};
    for (std::size_t l = 0; l < depth; ++l) {
        dec_h.push_back(affine(P[model.dec_layer(l)], P[model.dec_layer(l) + 1], dec_h.back()).array().tanh());
    }
    const Eigen::MatrixXd x_hat = affine(P[model.out_layer()], P[model.out_layer() + 1], dec_h.back());

    const Eigen::MatrixXd diff = x_hat - x;
    const double recon = diff.array().square().sum() / (n * B);
    const double kl = 0.5 * (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum() / B;
    const double loss = recon + kl;
    if (!std::isfinite(loss)) throw NonFiniteLoss("ELBO evaluated to a non-finite value");

    nn::zero_grads(model.params());
    auto dense_back = [&](std::size_t idx, const Eigen::MatrixXd& input, const Eigen::MatrixXd& delta) {
        P[idx].grad += delta * input.transpose();
        P[idx + 1].grad += delta.rowwise().sum();
        return Eigen::MatrixXd(P[idx].value.transpose() * delta);
    };

    Eigen::MatrixXd grad = (2.0 / (n * B)) * diff;
    grad = dense_back(model.out_layer(), dec_h.back(), grad);
    for (std::size_t l = depth; l-- > 0;) {
        const Eigen::MatrixXd delta = (grad.array() * (1.0 - dec_h[l + 1].array().square())).matrix();
        grad = dense_back(model.dec_layer(l), dec_h[l], delta);
    }
    const Eigen::MatrixXd d_mu = grad + mu / B;
    const Eigen::MatrixXd d_logvar =
        (grad.array() * eps.array() * sigma * 0.5 + 0.5 * (logvar.array().exp() - 1.0) / B).matrix();
    Eigen::MatrixXd d_h = dense_back(model.mu_head(), enc_h.back(), d_mu);
    d_h += dense_back(model.logvar_head(), enc_h.back(), d_logvar);
    for (std::size_t l = depth; l-- > 0;) {
        const Eigen::MatrixXd delta = (d_h.array() * (1.0 - enc_h[l + 1].array().square())).matrix();
        d_h = dense_back(model.enc_layer(l), enc_h[l], delta);
    }
    return loss;
}

std::vector<double> train_vae(VaeModel& model, const Matrix& windows, const VaeTrainOptions& options) {
    std::vector<double> curve;
    if (options.epochs == 0) return curve;
    if (windows.rows() == 0) throw InvalidArgs("VAE training needs at least one window");
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    nn::Adam opt(options.lr);
    const auto latent = static_cast<Eigen::Index>(model.config().latent);
    const std::size_t N = static_cast<std::size_t>(windows.rows());
    const std::size_t bs = std::max<std::size_t>(1, std::min(options.batch_size, N));
    std::vector<Eigen::Index> order(N);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < N; start += bs) {
            const std::size_t stop = std::min(N, start + bs);
            const auto rows = static_cast<Eigen::Index>(stop - start);
            Matrix batch(rows, windows.cols());
            Matrix noise(rows, latent);
            for (Eigen::Index i = 0; i < rows; ++i) {
                batch.row(i) = windows.row(order[start + static_cast<std::size_t>(i)]);
                for (Eigen::Index j = 0; j < latent; ++j) noise(i, j) = normal(rng);
            }
            double loss = 0.0;
            try {
                loss = elbo_loss_and_grad(model, batch, noise);
            } catch (const NonFiniteLoss& e) {
                throw NonFiniteLoss(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches) + ")");
            }
            opt.step(model.params());
            sum += loss;
            ++batches;
        }
        curve.push_back(sum / static_cast<double>(batches));
    }
    return curve;
}

double recon_error(const VaeModel& model, const Matrix& window) {
    if (static_cast<std::size_t>(window.size()) != model.config().input_dim) {
        throw ShapeError("window has " + std::to_string(window.size()) + " values, model expects " +
                         std::to_string(model.config().input_dim));
    }
    const Eigen::MatrixXd x = Eigen::Map<const Vector>(window.data(), window.size());
    const Eigen::MatrixXd x_hat = model.decode(model.encode(x).mu);
    return (x - x_hat).array().square().mean();
}

Vector recon_errors(const VaeModel& model, const Matrix& windows) {
    if (static_cast<std::size_t>(windows.cols()) != model.config().input_dim) {
        throw ShapeError("windows width does not match the model input");
    }
    const Eigen::MatrixXd x = windows.transpose();
    const Eigen::MatrixXd x_hat = model.decode(model.encode(x).mu);
    return (x - x_hat).array().square().colwise().mean().transpose();
}

Vector latent_mean(const VaeModel& model, const Matrix& window) {
    if (static_cast<std::size_t>(window.size()) != model.config().input_dim) {
        throw ShapeError("window size does not match the model input");
    }
    const Eigen::MatrixXd x = Eigen::Map<const Vector>(window.data(), window.size());
    return model.encode(x).mu.col(0);
}

LambdaController update_lambda(LambdaController ctrl, double r_episode) {
    const double next = ctrl.lambda + ctrl.alpha * (ctrl.r_target - r_episode);
    ctrl.lambda = std::clamp(next, ctrl.lambda_min, ctrl.lambda_max);
    return ctrl;
}

double total_reward(double r1, double r2, double lambda) { return r1 + lambda * r2; }

}  // namespace rlad::vae
