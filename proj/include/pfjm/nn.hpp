#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pfjm/rng.hpp"
#include "pfjm/tensor.hpp"

namespace pfjm::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

/// Flat parameter/gradient storage shared by all layers of one network.
struct ParamStore {
    std::vector<double> params;
    std::vector<double> grads;

    std::size_t alloc(std::size_t n) {
        std::size_t off = params.size();
        params.resize(off + n, 0.0);
        grads.resize(off + n, 0.0);
        return off;
    }
    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

/// Fully connected layer, y = W x + b.
class Dense {
public:
    Dense(ParamStore& store, std::size_t in_dim, std::size_t out_dim, Rng& rng,
          bool zero_init = false)
        : store_(&store), in_(in_dim), out_(out_dim) {
        w_off_ = store.alloc(in_dim * out_dim);
        b_off_ = store.alloc(out_dim);
        if (!zero_init) {
            double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
            for (std::size_t i = 0; i < in_dim * out_dim; ++i)
                store.params[w_off_ + i] = scale * rng.normal();
        }
    }

    Tensor forward(const Tensor& x) {
        if (x.size() != in_) throw std::invalid_argument("Dense: input size mismatch");
        input_ = x;
        Tensor y({out_});
        CMapRM W(store_->params.data() + w_off_, static_cast<long>(out_), static_cast<long>(in_));
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<long>(in_));
        Eigen::Map<Eigen::VectorXd> yv(y.data(), static_cast<long>(out_));
        Eigen::Map<const Eigen::VectorXd> b(store_->params.data() + b_off_,
                                            static_cast<long>(out_));
        yv = W * xv + b;
        return y;
    }

    Tensor backward(const Tensor& grad_out) {
        CMapRM W(store_->params.data() + w_off_, static_cast<long>(out_), static_cast<long>(in_));
        MapRM dW(store_->grads.data() + w_off_, static_cast<long>(out_), static_cast<long>(in_));
        Eigen::Map<const Eigen::VectorXd> g(grad_out.data(), static_cast<long>(out_));
        Eigen::Map<const Eigen::VectorXd> xv(input_.data(), static_cast<long>(in_));
        Eigen::Map<Eigen::VectorXd> db(store_->grads.data() + b_off_, static_cast<long>(out_));
        dW.noalias() += g * xv.transpose();
        db += g;
        Tensor gx({in_});
        Eigen::Map<Eigen::VectorXd> gxv(gx.data(), static_cast<long>(in_));
        gxv.noalias() = W.transpose() * g;
        return gx;
    }

private:
    ParamStore* store_;
    std::size_t in_, out_, w_off_, b_off_;
    Tensor input_;
};

/// 3x3 convolution, pad 1, stride 1 or 2, im2col + GEMM.
class Conv2d {
public:
    Conv2d(ParamStore& store, std::size_t in_ch, std::size_t out_ch, std::size_t stride,
           Rng& rng, bool zero_init = false)
        : store_(&store), in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
        w_off_ = store.alloc(out_ch * in_ch * 9);
        b_off_ = store.alloc(out_ch);
        if (!zero_init) {
            double scale = std::sqrt(2.0 / static_cast<double>(in_ch * 9));
            for (std::size_t i = 0; i < out_ch * in_ch * 9; ++i)
                store.params[w_off_ + i] = scale * rng.normal();
        }
    }

    Tensor forward(const Tensor& x) {
        const auto& s = x.shape();
        if (s.size() != 3 || s[0] != in_ch_) throw std::invalid_argument("Conv2d: bad input");
        h_ = s[1];
        w_ = s[2];
        oh_ = (h_ + 2 - 3) / stride_ + 1;
        ow_ = (w_ + 2 - 3) / stride_ + 1;
        const std::size_t cols = oh_ * ow_, rows = in_ch_ * 9;
        cols_.resize(static_cast<long>(rows), static_cast<long>(cols));
        // im2col with zero padding 1
        for (std::size_t c = 0; c < in_ch_; ++c) {
            const double* plane = x.data() + c * h_ * w_;
            for (std::size_t ki = 0; ki < 3; ++ki) {
                for (std::size_t kj = 0; kj < 3; ++kj) {
                    const long row = static_cast<long>((c * 3 + ki) * 3 + kj);
                    long col = 0;
                    for (std::size_t oi = 0; oi < oh_; ++oi) {
                        const long ii = static_cast<long>(oi * stride_ + ki) - 1;
                        for (std::size_t oj = 0; oj < ow_; ++oj, ++col) {
                            const long jj = static_cast<long>(oj * stride_ + kj) - 1;
                            cols_(row, col) =
                                (ii >= 0 && ii < static_cast<long>(h_) && jj >= 0 &&
                                 jj < static_cast<long>(w_))
                                    ? plane[ii * static_cast<long>(w_) + jj]
                                    : 0.0;
                        }
                    }
                }
            }
        }
        Tensor y({out_ch_, oh_, ow_});
        CMapRM W(store_->params.data() + w_off_, static_cast<long>(out_ch_),
                 static_cast<long>(rows));
        MapRM Y(y.data(), static_cast<long>(out_ch_), static_cast<long>(cols));
        Y.noalias() = W * cols_;
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            Y.row(static_cast<long>(oc)).array() += store_->params[b_off_ + oc];
        return y;
    }

    Tensor backward(const Tensor& grad_out) {
        const std::size_t cols = oh_ * ow_, rows = in_ch_ * 9;
        CMapRM G(grad_out.data(), static_cast<long>(out_ch_), static_cast<long>(cols));
        CMapRM W(store_->params.data() + w_off_, static_cast<long>(out_ch_),
                 static_cast<long>(rows));
        MapRM dW(store_->grads.data() + w_off_, static_cast<long>(out_ch_),
                 static_cast<long>(rows));
        dW.noalias() += G * cols_.transpose();
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            store_->grads[b_off_ + oc] += G.row(static_cast<long>(oc)).sum();

        MatRM gcols = W.transpose() * G;  // rows x cols
        Tensor gx({in_ch_, h_, w_});
        for (std::size_t c = 0; c < in_ch_; ++c) {
            double* plane = gx.data() + c * h_ * w_;
            for (std::size_t ki = 0; ki < 3; ++ki) {
                for (std::size_t kj = 0; kj < 3; ++kj) {
                    const long row = static_cast<long>((c * 3 + ki) * 3 + kj);
                    long col = 0;
                    for (std::size_t oi = 0; oi < oh_; ++oi) {
                        const long ii = static_cast<long>(oi * stride_ + ki) - 1;
                        for (std::size_t oj = 0; oj < ow_; ++oj, ++col) {
                            const long jj = static_cast<long>(oj * stride_ + kj) - 1;
                            if (ii >= 0 && ii < static_cast<long>(h_) && jj >= 0 &&
                                jj < static_cast<long>(w_))
                                plane[ii * static_cast<long>(w_) + jj] += gcols(row, col);
                        }
                    }
                }
            }
        }
        return gx;
    }

private:
    ParamStore* store_;
    std::size_t in_ch_, out_ch_, stride_, w_off_, b_off_;
    std::size_t h_ = 0, w_ = 0, oh_ = 0, ow_ = 0;
    MatRM cols_;
};

class Silu {
public:
    Tensor forward(const Tensor& x) {
        input_ = x;
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = silu(y[i]);
        return y;
    }
    Tensor backward(const Tensor& grad_out) {
        Tensor gx = grad_out;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= silu_grad(input_[i]);
        return gx;
    }

private:
    Tensor input_;
};

inline Tensor upsample2x(const Tensor& x) {
    const auto& s = x.shape();
    Tensor y({s[0], 2 * s[1], 2 * s[2]});
    for (std::size_t c = 0; c < s[0]; ++c)
        for (std::size_t i = 0; i < s[1]; ++i)
            for (std::size_t j = 0; j < s[2]; ++j) {
                double v = x[(c * s[1] + i) * s[2] + j];
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj)
                        y[(c * 2 * s[1] + 2 * i + di) * 2 * s[2] + 2 * j + dj] = v;
            }
    return y;
}

inline Tensor upsample2x_backward(const Tensor& grad, std::size_t c, std::size_t h,
                                  std::size_t w) {
    Tensor gx({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double s = 0;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj)
                        s += grad[(ch * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj];
                gx[(ch * h + i) * w + j] = s;
            }
    return gx;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa[1] != sb[1] || sa[2] != sb[2])
        throw std::invalid_argument("concat_channels: spatial mismatch");
    Tensor y({sa[0] + sb[0], sa[1], sa[2]});
    std::copy(a.data(), a.data() + a.size(), y.data());
    std::copy(b.data(), b.data() + b.size(), y.data() + a.size());
    return y;
}

/// Raw network interface behind the denoiser: takes the preconditioned
/// noisy volume, the joint condition (injected by channel concatenation),
/// and the scalar noise embedding; returns the raw prediction.
class Network {
public:
    virtual ~Network() = default;
    virtual Tensor forward(const Tensor& scaled_input, const Tensor& cond, double c_noise) = 0;
    /// Backward from grad wrt the network output; accumulates parameter
    /// gradients and returns the gradient wrt scaled_input.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual nlohmann::json descriptor() const = 0;

    ParamStore store;
};

/// MLP denoiser for vector toys: input [x, c, c_noise] -> hidden stack -> x0.
class MlpNetwork : public Network {
public:
    MlpNetwork(std::size_t n, std::vector<std::size_t> hidden, Rng& rng)
        : n_(n), hidden_(std::move(hidden)) {
        std::size_t in = 2 * n + 1;
        for (std::size_t h : hidden_) {
            dense_.emplace_back(store, in, h, rng);
            acts_.emplace_back();
            in = h;
        }
        dense_.emplace_back(store, in, n, rng, /*zero_init=*/true);
    }

    Tensor forward(const Tensor& scaled_input, const Tensor& cond, double c_noise) override {
        if (scaled_input.size() != n_ || cond.size() != n_)
            throw std::invalid_argument("MlpNetwork: input size mismatch");
        Tensor z({2 * n_ + 1});
        std::copy(scaled_input.data(), scaled_input.data() + n_, z.data());
        std::copy(cond.data(), cond.data() + n_, z.data() + n_);
        z[2 * n_] = c_noise;
        for (std::size_t l = 0; l < hidden_.size(); ++l) z = acts_[l].forward(dense_[l].forward(z));
        Tensor out = dense_.back().forward(z);
        // keep the raw vector shape of the caller
        return Tensor(scaled_input.shape(), out.raw());
    }

    Tensor backward(const Tensor& grad_out) override {
        Tensor g({n_}, grad_out.raw());
        g = dense_.back().backward(g);
        for (std::size_t l = hidden_.size(); l-- > 0;)
            g = dense_[l].backward(acts_[l].backward(g));
        Tensor gx({n_});
        std::copy(g.data(), g.data() + n_, gx.data());
        return gx;
    }

    nlohmann::json descriptor() const override {
        return {{"type", "mlp"}, {"n", n_}, {"hidden", hidden_}};
    }

private:
    std::size_t n_;
    std::vector<std::size_t> hidden_;
    std::vector<Dense> dense_;
    std::vector<Silu> acts_;
};

/// Small encoder-decoder with one skip connection for {3, H, W} volumes.
/// Input channels: 3 noisy + 3 condition + 1 constant noise-embedding map.
class ConvNetwork : public Network {
public:
    ConvNetwork(std::size_t features, Rng& rng)
        : f_(features),
          c1_(store, 7, f_, 1, rng),
          c2_(store, f_, f_, 1, rng),
          c3_(store, f_, 2 * f_, 2, rng),
          c4_(store, 2 * f_, 2 * f_, 1, rng),
          c5_(store, 2 * f_, f_, 1, rng),
          c6_(store, 2 * f_, f_, 1, rng),
          c7_(store, f_, 3, 1, rng, /*zero_init=*/true) {}

    Tensor forward(const Tensor& scaled_input, const Tensor& cond, double c_noise) override {
        const auto& s = scaled_input.shape();
        if (s.size() != 3 || s[0] != 3 || !scaled_input.same_shape(cond))
            throw std::invalid_argument("ConvNetwork: expected matching {3,H,W} volumes");
        if (s[1] % 2 != 0 || s[2] % 2 != 0)
            throw std::invalid_argument("ConvNetwork: H and W must be even");
        h_ = s[1];
        w_ = s[2];
        Tensor noise_map({1, h_, w_}, c_noise);
        Tensor in = concat_channels(concat_channels(scaled_input, cond), noise_map);

        Tensor e1 = a1_.forward(c1_.forward(in));
        skip_ = a2_.forward(c2_.forward(e1));
        Tensor m = a3_.forward(c3_.forward(skip_));
        m = a4_.forward(c4_.forward(m));
        Tensor u = a5_.forward(c5_.forward(upsample2x(m)));
        Tensor cat = concat_channels(skip_, u);
        Tensor d = a6_.forward(c6_.forward(cat));
        return c7_.forward(d);
    }

    Tensor backward(const Tensor& grad_out) override {
        Tensor g = a6_.backward(c7_.backward(grad_out));
        g = c6_.backward(g);
        // split concat gradient
        Tensor g_skip({f_, h_, w_});
        Tensor g_u({f_, h_, w_});
        std::copy(g.data(), g.data() + g_skip.size(), g_skip.data());
        std::copy(g.data() + g_skip.size(), g.data() + g.size(), g_u.data());
        Tensor gm = c5_.backward(a5_.backward(g_u));
        gm = upsample2x_backward(gm, 2 * f_, h_ / 2, w_ / 2);
        gm = c4_.backward(a4_.backward(gm));
        gm = c3_.backward(a3_.backward(gm));
        g_skip += gm;
        Tensor ge = c2_.backward(a2_.backward(g_skip));
        Tensor gin = c1_.backward(a1_.backward(ge));
        Tensor gx({3, h_, w_});
        std::copy(gin.data(), gin.data() + gx.size(), gx.data());
        return gx;
    }

    nlohmann::json descriptor() const override {
        return {{"type", "conv"}, {"features", f_}};
    }

private:
    std::size_t f_, h_ = 0, w_ = 0;
    Conv2d c1_, c2_, c3_, c4_, c5_, c6_, c7_;
    Silu a1_, a2_, a3_, a4_, a5_, a6_;
    Tensor skip_;
};

inline std::unique_ptr<Network> make_network(const nlohmann::json& desc, std::uint64_t init_seed) {
    Rng rng(init_seed);
    const std::string type = desc.at("type");
    if (type == "mlp")
        return std::make_unique<MlpNetwork>(desc.at("n").get<std::size_t>(),
                                            desc.at("hidden").get<std::vector<std::size_t>>(),
                                            rng);
    if (type == "conv")
        return std::make_unique<ConvNetwork>(desc.at("features").get<std::size_t>(), rng);
    throw std::invalid_argument("make_network: unknown type " + type);
}

}  // namespace pfjm::nn
