#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfjm/archive.hpp"
#include "pfjm/augmented.hpp"
#include "pfjm/nn.hpp"
#include "pfjm/phantom.hpp"
#include "pfjm/rng.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm {

/// Variance-aware preconditioning constants for the x0-prediction
/// parameterization, all functions of the noise level and the data scale.
struct Precond {
    double c_skip, c_out, c_in, c_noise;
    static Precond at(double sigma, double sigma_data) {
        if (!(sigma > 0)) throw std::invalid_argument("Precond: sigma must be > 0");
        double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
        return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2),
                1.0 / std::sqrt(s2 + d2), 0.25 * std::log(sigma)};
    }
};

/// Loss weight lambda(sigma) = (sigma^2 + sigma_d^2) / (sigma * sigma_d)^2
/// = 1 / c_out(sigma)^2.
inline double loss_weight(double sigma, double sigma_data) {
    double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return (s2 + d2) / (s2 * d2);
}

/// Conditional denoiser f(x_hat, sigma, c) =
///   c_skip * x_hat + c_out * net(c_in * x_hat (+) c, c_noise),
/// where (+) is channel concatenation inside the network.
class DenoiserModel {
public:
    DenoiserModel(AugmentationParams aug, std::unique_ptr<nn::Network> net)
        : aug_(aug), net_(std::move(net)) {
        aug_.validate();
    }

    const AugmentationParams& aug() const { return aug_; }
    nn::Network& net() { return *net_; }
    const nn::Network& net() const { return *net_; }
    std::vector<double>& params() { return net_->store.params; }
    std::vector<double>& grads() { return net_->store.grads; }

    Tensor forward(const Tensor& x_hat, double sigma, const Tensor& cond) {
        if (!x_hat.same_shape(cond))
            throw std::invalid_argument("DenoiserModel::forward: shape mismatch");
        for (double p : net_->store.params)
            if (!std::isfinite(p))
                throw std::runtime_error("DenoiserModel::forward: non-finite parameters");
        Precond pc = Precond::at(sigma, aug_.sigma_data);
        Tensor scaled = x_hat;
        scaled *= pc.c_in;
        Tensor raw = net_->forward(scaled, cond, pc.c_noise);
        Tensor out = x_hat;
        out *= pc.c_skip;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += pc.c_out * raw[i];
        return out;
    }

    /// Loss lambda(sigma) * |f(perturb(y), sigma, c) - y|^2. When accumulate
    /// is true, also backpropagates scale * dLoss into the parameter grads.
    double joint_loss(const JointVolume& y, const NoiseDraw& noise, const JointVolume& c,
                      bool accumulate = false, double scale = 1.0) {
        Tensor x_hat = perturb(y.pixels, noise.R, noise.v);
        return loss_on_perturbed(x_hat, y.pixels, noise.sigma, c.pixels, accumulate, scale);
    }

    double loss_on_perturbed(const Tensor& x_hat, const Tensor& y, double sigma,
                             const Tensor& cond, bool accumulate = false, double scale = 1.0) {
        Precond pc = Precond::at(sigma, aug_.sigma_data);
        double lambda = loss_weight(sigma, aug_.sigma_data);
        Tensor f = forward(x_hat, sigma, cond);
        double loss = 0.0;
        Tensor grad_raw(f.shape());
        for (std::size_t i = 0; i < f.size(); ++i) {
            double resid = f[i] - y[i];
            loss += resid * resid;
            grad_raw[i] = scale * lambda * 2.0 * resid * pc.c_out;
        }
        loss *= lambda;
        if (accumulate) net_->backward(grad_raw);
        return loss;
    }

    nlohmann::json descriptor() const { return net_->descriptor(); }

private:
    AugmentationParams aug_;
    std::unique_ptr<nn::Network> net_;
};

/// Field-matching objective: |output - (x - y) / (r / sqrt(D))|^2. The
/// direction-prediction form used for cross-checking the x0 parameterization.
inline double field_matching_loss(const std::vector<double>& model_raw_output,
                                  const std::vector<double>& x, const std::vector<double>& y,
                                  double r, std::size_t D) {
    if (!(r > 0)) throw std::invalid_argument("field_matching_loss: r must be > 0");
    if (model_raw_output.size() != x.size() || x.size() != y.size())
        throw std::invalid_argument("field_matching_loss: size mismatch");
    double scale = std::sqrt(static_cast<double>(D)) / r;
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = model_raw_output[i] - (x[i] - y[i]) * scale;
        loss += d * d;
    }
    return loss;
}

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t t = 0;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads, double lr, double beta1, double beta2,
                      double eps) {
    if (params.size() != grads.size() || state.m.size() != params.size())
        throw std::invalid_argument("adam_step: size mismatch");
    ++state.t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient at index " +
                                     std::to_string(i));
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

struct TrainConfig {
    std::size_t batch = 32;
    std::size_t iters = 1000;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0: only final
    AugmentationParams aug;

    void validate() const {
        if (batch < 1 || iters < 1) throw std::invalid_argument("TrainConfig: batch/iters");
        if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
        if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
            throw std::invalid_argument("TrainConfig: betas must be in (0,1)");
        if (!(eps > 0)) throw std::invalid_argument("TrainConfig: eps must be > 0");
        aug.validate();
    }
};

/// 64-bit FNV-1a over a string; used for config fingerprints.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Checkpoint {
    Tensor params;
    Tensor adam_m, adam_v;
    std::uint64_t adam_t = 0;
    std::uint64_t iteration = 0;
    std::string fingerprint;
    nlohmann::json arch;
    std::vector<double> loss_history;

    /// Snapshot a model + optimizer. Values are snapped to f32 so the
    /// checkpoint round-trips bit-exactly through the archive format.
    static Checkpoint capture(const DenoiserModel& model, const AdamState& adam,
                              std::uint64_t iteration, const std::string& fingerprint,
                              std::vector<double> loss_history) {
        Checkpoint ck;
        ck.params = Tensor({model.net().store.params.size()}, model.net().store.params);
        ck.adam_m = Tensor({adam.m.size()}, adam.m);
        ck.adam_v = Tensor({adam.v.size()}, adam.v);
        snap_to_f32(ck.params);
        snap_to_f32(ck.adam_m);
        snap_to_f32(ck.adam_v);
        ck.adam_t = adam.t;
        ck.iteration = iteration;
        ck.fingerprint = fingerprint;
        ck.arch = model.descriptor();
        ck.loss_history = std::move(loss_history);
        return ck;
    }

    void apply(DenoiserModel& model, AdamState* adam = nullptr) const {
        if (model.params().size() != params.size())
            throw std::invalid_argument("Checkpoint::apply: parameter count mismatch");
        model.params() = params.raw();
        if (adam) {
            adam->m = adam_m.raw();
            adam->v = adam_v.raw();
            adam->t = adam_t;
        }
    }

    void save(const std::string& path) const {
        Archive ar;
        ar.add("params", params);
        ar.add("adam_m", adam_m);
        ar.add("adam_v", adam_v);
        ar.metadata = {{"kind", "checkpoint"},
                       {"iteration", iteration},
                       {"adam_t", adam_t},
                       {"config_fingerprint", fingerprint},
                       {"arch", arch},
                       {"loss_history", loss_history}};
        write_archive(path, ar);
    }

    static Checkpoint load(const std::string& path) {
        Archive ar = read_archive(path);
        Checkpoint ck;
        ck.params = ar.get("params");
        ck.adam_m = ar.get("adam_m");
        ck.adam_v = ar.get("adam_v");
        ck.adam_t = ar.metadata.at("adam_t").get<std::uint64_t>();
        ck.iteration = ar.metadata.at("iteration").get<std::uint64_t>();
        ck.fingerprint = ar.metadata.at("config_fingerprint").get<std::string>();
        ck.arch = ar.metadata.at("arch");
        ck.loss_history = ar.metadata.at("loss_history").get<std::vector<double>>();
        return ck;
    }
};

struct TrainResult {
    Checkpoint final_checkpoint;
    std::vector<double> loss_trace;
    std::vector<Checkpoint> intermediate;
};

/// Full training loop: per batch element sample y, sigma, r = sigma*sqrt(D),
/// R, v; perturb; pair with the low-dose joint condition; accumulate the
/// weighted loss gradient; Adam step. Deterministic given the seed.
inline TrainResult train(const std::vector<std::pair<JointVolume, JointVolume>>& dataset,
                         DenoiserModel& model, const TrainConfig& config,
                         const std::string& fingerprint = "") {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& [y, c] : dataset)
        if (!y.pixels.same_shape(c.pixels))
            throw std::invalid_argument("train: unpaired volume shapes");
    if (model.aug().N != dataset.front().first.pixels.size())
        throw std::invalid_argument("train: AugmentationParams.N != flattened volume size");

    Rng rng(config.seed);
    AdamState adam;
    adam.init(model.params().size());
    TrainResult result;
    result.loss_trace.reserve(config.iters);

    for (std::size_t it = 0; it < config.iters; ++it) {
        model.net().store.zero_grads();
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            std::size_t idx = static_cast<std::size_t>(rng.uniform() * dataset.size());
            if (idx >= dataset.size()) idx = dataset.size() - 1;
            const auto& [y, c] = dataset[idx];
            NoiseDraw noise = sample_noise(rng, config.aug);
            batch_loss += model.joint_loss(y, noise, c, /*accumulate=*/true,
                                           1.0 / static_cast<double>(config.batch));
        }
        batch_loss /= static_cast<double>(config.batch);
        if (!std::isfinite(batch_loss))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
        result.loss_trace.push_back(batch_loss);
        adam_step(adam, model.params(), model.grads(), config.lr, config.beta1, config.beta2,
                  config.eps);
        if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 &&
            it + 1 < config.iters)
            result.intermediate.push_back(
                Checkpoint::capture(model, adam, it + 1, fingerprint, result.loss_trace));
    }
    result.final_checkpoint =
        Checkpoint::capture(model, adam, config.iters, fingerprint, result.loss_trace);
    return result;
}

}  // namespace pfjm
