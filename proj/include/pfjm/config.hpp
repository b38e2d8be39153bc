#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfjm/augmented.hpp"
#include "pfjm/model.hpp"
#include "pfjm/phantom.hpp"
#include "pfjm/sampler.hpp"

namespace pfjm {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& section,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + section + "." + it.key() + "'");
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: bad value for key '" + key + "'");
    }
}

}  // namespace detail

struct DataConfig {
    std::size_t L = 64, W = 64;
    std::size_t ellipses_min = 3, ellipses_max = 6;
    std::size_t vessels_min = 4, vessels_max = 8;
    double amplitudes[3] = {0.10, 0.55, 0.30};
    double tissue_noise = 0.03;
    std::size_t train_volumes = 16, test_volumes = 16;
    double dose_fraction = 0.1;
    double base_sigma = 0.04;

    PhantomSpec phantom_spec(std::uint64_t seed) const {
        PhantomSpec s;
        s.L = L;
        s.W = W;
        s.ellipses_min = ellipses_min;
        s.ellipses_max = ellipses_max;
        s.vessels_min = vessels_min;
        s.vessels_max = vessels_max;
        s.amplitude[0] = amplitudes[0];
        s.amplitude[1] = amplitudes[1];
        s.amplitude[2] = amplitudes[2];
        s.tissue_noise = tissue_noise;
        s.seed = seed;
        return s;
    }
};

struct ModelConfig {
    std::string arch = "conv";  // "conv" | "mlp"
    std::size_t features = 12;
    std::vector<std::size_t> hidden = {64, 64, 64};
    double sigma_data = 0.5;
    double p_mean = -1.2, p_std = 1.2;
    std::size_t D = 128;
};

struct TrainingConfig {
    std::size_t batch = 4;
    std::size_t iters = 400;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t checkpoint_every = 0;
};

struct SamplerConfig {
    std::size_t T = 10;
    double sigma_min = 0.002, sigma_max = 80.0, rho = 7.0;
    double w = 0.1;
    std::vector<double> w_sweep = {0.0, 0.05, 0.1, 0.2, 0.5};
    std::string init_mode = "condition";  // | "condition_plus_noise"
};

struct EvalConfig {
    std::size_t fid_pool = 2;
    bool ssim_windowed = false;
    std::size_t ssim_window = 8;
};

struct OracleConfig {
    std::size_t charges = 200;
    std::size_t D = 128;
    double r_max_factor = 80.0;  // r_max = factor * sigma_data-like data scale
    std::size_t steps = 200;
    std::size_t trajectories = 16;
};

/// One fully seeded run description. Parses from a strict JSON file:
/// unknown keys anywhere are errors.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    DataConfig data;
    ModelConfig model;
    TrainingConfig training;
    SamplerConfig sampler;
    EvalConfig eval;
    OracleConfig oracle;
    std::vector<std::size_t> d_sweep = {2, 8, 32, 64, 128, 256, 512, 2048};

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);

    nlohmann::json to_json() const;
    std::string fingerprint() const {
        std::ostringstream os;
        os << std::hex << fnv1a64(to_json().dump());
        return os.str();
    }

    AugmentationParams aug_params(std::size_t flattened_n) const {
        AugmentationParams a;
        a.N = flattened_n;
        a.D = model.D;
        a.sigma_data = model.sigma_data;
        a.p_mean = model.p_mean;
        a.p_std = model.p_std;
        return a;
    }

    TrainConfig train_config(std::size_t flattened_n) const {
        TrainConfig t;
        t.batch = training.batch;
        t.iters = training.iters;
        t.lr = training.lr;
        t.beta1 = training.beta1;
        t.beta2 = training.beta2;
        t.eps = training.eps;
        t.seed = seed;
        t.checkpoint_every = training.checkpoint_every;
        t.aug = aug_params(flattened_n);
        return t;
    }

    SamplerSchedule schedule(double w_override = -1.0) const {
        SamplerSchedule s = build_schedule(sampler.T, sampler.sigma_min, sampler.sigma_max,
                                           sampler.rho);
        s.w = w_override >= 0 ? w_override : sampler.w;
        if (sampler.init_mode == "condition")
            s.init_mode = InitMode::condition;
        else if (sampler.init_mode == "condition_plus_noise")
            s.init_mode = InitMode::condition_plus_noise;
        else
            throw ConfigError("config: sampler.init_mode must be 'condition' or "
                              "'condition_plus_noise'");
        return s;
    }
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::get_or;
    check_keys(j, "",
               {"seed", "data", "model", "training", "sampler", "eval", "oracle", "d_sweep"});
    ExperimentConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.d_sweep = get_or<std::vector<std::size_t>>(j, "d_sweep", c.d_sweep);

    if (j.contains("data")) {
        const auto& d = j["data"];
        check_keys(d, "data",
                   {"L", "W", "ellipses_min", "ellipses_max", "vessels_min", "vessels_max",
                    "amplitudes", "tissue_noise", "train_volumes", "test_volumes",
                    "dose_fraction", "base_sigma"});
        c.data.L = get_or<std::size_t>(d, "L", c.data.L);
        c.data.W = get_or<std::size_t>(d, "W", c.data.W);
        c.data.ellipses_min = get_or<std::size_t>(d, "ellipses_min", c.data.ellipses_min);
        c.data.ellipses_max = get_or<std::size_t>(d, "ellipses_max", c.data.ellipses_max);
        c.data.vessels_min = get_or<std::size_t>(d, "vessels_min", c.data.vessels_min);
        c.data.vessels_max = get_or<std::size_t>(d, "vessels_max", c.data.vessels_max);
        if (d.contains("amplitudes")) {
            auto a = d["amplitudes"].get<std::vector<double>>();
            if (a.size() != 3) throw ConfigError("config: data.amplitudes must have 3 entries");
            for (int i = 0; i < 3; ++i) c.data.amplitudes[i] = a[i];
        }
        c.data.tissue_noise = get_or<double>(d, "tissue_noise", c.data.tissue_noise);
        c.data.train_volumes = get_or<std::size_t>(d, "train_volumes", c.data.train_volumes);
        c.data.test_volumes = get_or<std::size_t>(d, "test_volumes", c.data.test_volumes);
        c.data.dose_fraction = get_or<double>(d, "dose_fraction", c.data.dose_fraction);
        c.data.base_sigma = get_or<double>(d, "base_sigma", c.data.base_sigma);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        check_keys(m, "model",
                   {"arch", "features", "hidden", "sigma_data", "p_mean", "p_std", "D"});
        c.model.arch = get_or<std::string>(m, "arch", c.model.arch);
        if (c.model.arch != "conv" && c.model.arch != "mlp")
            throw ConfigError("config: model.arch must be 'conv' or 'mlp'");
        c.model.features = get_or<std::size_t>(m, "features", c.model.features);
        c.model.hidden = get_or<std::vector<std::size_t>>(m, "hidden", c.model.hidden);
        c.model.sigma_data = get_or<double>(m, "sigma_data", c.model.sigma_data);
        c.model.p_mean = get_or<double>(m, "p_mean", c.model.p_mean);
        c.model.p_std = get_or<double>(m, "p_std", c.model.p_std);
        c.model.D = get_or<std::size_t>(m, "D", c.model.D);
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        check_keys(t, "training",
                   {"batch", "iters", "lr", "beta1", "beta2", "eps", "checkpoint_every"});
        c.training.batch = get_or<std::size_t>(t, "batch", c.training.batch);
        c.training.iters = get_or<std::size_t>(t, "iters", c.training.iters);
        c.training.lr = get_or<double>(t, "lr", c.training.lr);
        c.training.beta1 = get_or<double>(t, "beta1", c.training.beta1);
        c.training.beta2 = get_or<double>(t, "beta2", c.training.beta2);
        c.training.eps = get_or<double>(t, "eps", c.training.eps);
        c.training.checkpoint_every =
            get_or<std::size_t>(t, "checkpoint_every", c.training.checkpoint_every);
    }
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        check_keys(s, "sampler",
                   {"T", "sigma_min", "sigma_max", "rho", "w", "w_sweep", "init_mode"});
        c.sampler.T = get_or<std::size_t>(s, "T", c.sampler.T);
        c.sampler.sigma_min = get_or<double>(s, "sigma_min", c.sampler.sigma_min);
        c.sampler.sigma_max = get_or<double>(s, "sigma_max", c.sampler.sigma_max);
        c.sampler.rho = get_or<double>(s, "rho", c.sampler.rho);
        c.sampler.w = get_or<double>(s, "w", c.sampler.w);
        c.sampler.w_sweep = get_or<std::vector<double>>(s, "w_sweep", c.sampler.w_sweep);
        c.sampler.init_mode = get_or<std::string>(s, "init_mode", c.sampler.init_mode);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        check_keys(e, "eval", {"fid_pool", "ssim_windowed", "ssim_window"});
        c.eval.fid_pool = get_or<std::size_t>(e, "fid_pool", c.eval.fid_pool);
        c.eval.ssim_windowed = get_or<bool>(e, "ssim_windowed", c.eval.ssim_windowed);
        c.eval.ssim_window = get_or<std::size_t>(e, "ssim_window", c.eval.ssim_window);
    }
    if (j.contains("oracle")) {
        const auto& o = j["oracle"];
        check_keys(o, "oracle", {"charges", "D", "r_max_factor", "steps", "trajectories"});
        c.oracle.charges = get_or<std::size_t>(o, "charges", c.oracle.charges);
        c.oracle.D = get_or<std::size_t>(o, "D", c.oracle.D);
        c.oracle.r_max_factor = get_or<double>(o, "r_max_factor", c.oracle.r_max_factor);
        c.oracle.steps = get_or<std::size_t>(o, "steps", c.oracle.steps);
        c.oracle.trajectories = get_or<std::size_t>(o, "trajectories", c.oracle.trajectories);
    }
    return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: JSON parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

inline nlohmann::json ExperimentConfig::to_json() const {
    return {
        {"seed", seed},
        {"d_sweep", d_sweep},
        {"data",
         {{"L", data.L},
          {"W", data.W},
          {"ellipses_min", data.ellipses_min},
          {"ellipses_max", data.ellipses_max},
          {"vessels_min", data.vessels_min},
          {"vessels_max", data.vessels_max},
          {"amplitudes", {data.amplitudes[0], data.amplitudes[1], data.amplitudes[2]}},
          {"tissue_noise", data.tissue_noise},
          {"train_volumes", data.train_volumes},
          {"test_volumes", data.test_volumes},
          {"dose_fraction", data.dose_fraction},
          {"base_sigma", data.base_sigma}}},
        {"model",
         {{"arch", model.arch},
          {"features", model.features},
          {"hidden", model.hidden},
          {"sigma_data", model.sigma_data},
          {"p_mean", model.p_mean},
          {"p_std", model.p_std},
          {"D", model.D}}},
        {"training",
         {{"batch", training.batch},
          {"iters", training.iters},
          {"lr", training.lr},
          {"beta1", training.beta1},
          {"beta2", training.beta2},
          {"eps", training.eps},
          {"checkpoint_every", training.checkpoint_every}}},
        {"sampler",
         {{"T", sampler.T},
          {"sigma_min", sampler.sigma_min},
          {"sigma_max", sampler.sigma_max},
          {"rho", sampler.rho},
          {"w", sampler.w},
          {"w_sweep", sampler.w_sweep},
          {"init_mode", sampler.init_mode}}},
        {"eval",
         {{"fid_pool", eval.fid_pool},
          {"ssim_windowed", eval.ssim_windowed},
          {"ssim_window", eval.ssim_window}}},
        {"oracle",
         {{"charges", oracle.charges},
          {"D", oracle.D},
          {"r_max_factor", oracle.r_max_factor},
          {"steps", oracle.steps},
          {"trajectories", oracle.trajectories}}},
    };
}

/// Apply a repeatable `--set key.path=value` override onto raw config JSON.
/// The value is parsed as JSON when possible, else taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key.path=value: " + assignment);
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;
    }
    nlohmann::json* node = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("override has empty key path");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
    (*node)[parts.back()] = parsed;
}

}  // namespace pfjm
