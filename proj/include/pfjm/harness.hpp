#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <limits>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfjm/archive.hpp"
#include "pfjm/config.hpp"
#include "pfjm/metrics.hpp"
#include "pfjm/model.hpp"
#include "pfjm/oracle.hpp"
#include "pfjm/phantom.hpp"
#include "pfjm/png.hpp"
#include "pfjm/sampler.hpp"
#include "pfjm/stats.hpp"

namespace pfjm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, const std::string& label,
                                 std::uint64_t index = 0) {
    return splitmix64(base ^ fnv1a64(label) ^ splitmix64(index));
}

using PairedDataset = std::vector<std::pair<JointVolume, JointVolume>>;

/// Paired routine/low-dose volumes for one split, fully determined by the
/// config seed and the split label.
inline PairedDataset make_paired_dataset(const ExperimentConfig& cfg, const std::string& split) {
    std::size_t count = split == "train" ? cfg.data.train_volumes : cfg.data.test_volumes;
    PairedDataset out;
    out.reserve(count);
    Rng noise_rng(derive_seed(cfg.seed, split + "/lowdose"));
    for (std::size_t i = 0; i < count; ++i) {
        PhantomSpec spec = cfg.data.phantom_spec(derive_seed(cfg.seed, split + "/phantom", i));
        JointVolume y = generate_phantom(spec);
        JointVolume c = simulate_low_dose(y, cfg.data.dose_fraction, cfg.data.base_sigma,
                                          noise_rng);
        out.emplace_back(std::move(y), std::move(c));
    }
    return out;
}

/// Fingerprint of a dataset's contents (used to pair eval arms).
inline std::string dataset_fingerprint(const PairedDataset& ds) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [y, c] : ds)
        for (const Tensor* t : {&y.pixels, &c.pixels})
            for (std::size_t i = 0; i < t->size(); ++i) {
                float f = static_cast<float>((*t)[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                h = (h ^ bits) * 1099511628211ull;
            }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

inline void save_volume_archive(const std::string& path, const std::vector<JointVolume>& vols,
                                const std::string& prefix, nlohmann::json metadata) {
    Archive ar;
    metadata["pseudo_hu_scale"] = kPseudoHuScale;
    metadata["count"] = vols.size();
    for (std::size_t i = 0; i < vols.size(); ++i) {
        std::ostringstream name;
        name << prefix << "_" << std::setw(3) << std::setfill('0') << i;
        ar.add(name.str(), vols[i].pixels);
    }
    ar.metadata = std::move(metadata);
    write_archive(path, ar);
}

inline std::vector<JointVolume> load_volume_archive(const std::string& path,
                                                    const std::string& prefix, VolumeRole role,
                                                    nlohmann::json* metadata_out = nullptr) {
    Archive ar = read_archive(path);
    if (metadata_out) *metadata_out = ar.metadata;
    std::vector<JointVolume> out;
    for (std::size_t i = 0;; ++i) {
        std::ostringstream name;
        name << prefix << "_" << std::setw(3) << std::setfill('0') << i;
        if (!ar.has(name.str())) break;
        out.emplace_back(ar.get(name.str()), role);
    }
    if (out.empty()) throw std::runtime_error("load_volume_archive: no '" + prefix +
                                              "_*' tensors in " + path);
    return out;
}

/// Fresh run directory named by config fingerprint + wall-clock timestamp.
/// Append-only: an existing directory is never reused or overwritten.
inline std::string make_run_dir(const std::string& out_root, const std::string& name,
                                const std::string& fingerprint) {
    namespace fs = std::filesystem;
    auto now = std::chrono::system_clock::now().time_since_epoch();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    std::string base = out_root + "/" + name + "_" + fingerprint + "_" + std::to_string(ms);
    std::string dir = base;
    for (int n = 1; fs::exists(dir); ++n) dir = base + "_" + std::to_string(n);
    fs::create_directories(dir);
    return dir;
}

inline DenoiserModel build_model(const ExperimentConfig& cfg) {
    std::size_t n = cfg.data.L * cfg.data.W * 3;
    nlohmann::json desc;
    if (cfg.model.arch == "conv")
        desc = {{"type", "conv"}, {"features", cfg.model.features}};
    else
        desc = {{"type", "mlp"}, {"n", n}, {"hidden", cfg.model.hidden}};
    auto net = nn::make_network(desc, derive_seed(cfg.seed, "init"));
    return DenoiserModel(cfg.aug_params(n), std::move(net));
}

inline DenoiserModel load_model(const ExperimentConfig& cfg, const Checkpoint& ck) {
    std::size_t n = cfg.data.L * cfg.data.W * 3;
    auto net = nn::make_network(ck.arch, derive_seed(cfg.seed, "init"));
    DenoiserModel model(cfg.aug_params(n), std::move(net));
    ck.apply(model);
    return model;
}

// ---------------------------------------------------------------------------
// Evaluation reporting
// ---------------------------------------------------------------------------

struct EvalRow {
    std::size_t volume;
    std::size_t phase;  // 1..3
    double mae_hu;
    double ssim;
    double psnr_db;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double frechet = 0.0;
    std::size_t volume_count = 0;
    std::string config_fingerprint;
    std::string test_fingerprint;

    double phase_mean_mae(std::size_t phase) const { return phase_mean(phase, &EvalRow::mae_hu); }
    double phase_mean_ssim(std::size_t phase) const { return phase_mean(phase, &EvalRow::ssim); }
    double phase_mean_psnr(std::size_t phase) const {
        return phase_mean(phase, &EvalRow::psnr_db);
    }
    double mean_mae() const {
        return (phase_mean_mae(1) + phase_mean_mae(2) + phase_mean_mae(3)) / 3.0;
    }

    nlohmann::json summary_json() const {
        nlohmann::json phases = nlohmann::json::object();
        const char* names[3] = {"I", "II", "III"};
        for (std::size_t p = 1; p <= 3; ++p)
            phases[names[p - 1]] = {{"mae_hu", phase_mean_mae(p)},
                                    {"ssim_pct", 100.0 * phase_mean_ssim(p)},
                                    {"psnr_db", phase_mean_psnr(p)}};
        return {{"phases", phases},
                {"frechet", frechet},
                {"volumes", volume_count},
                {"config_fingerprint", config_fingerprint},
                {"test_fingerprint", test_fingerprint}};
    }

private:
    double phase_mean(std::size_t phase, double EvalRow::*field) const {
        double s = 0;
        std::size_t n = 0;
        for (const auto& r : rows)
            if (r.phase == phase) {
                s += r.*field;
                ++n;
            }
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

inline EvalReport evaluate(const ExperimentConfig& cfg, const std::vector<JointVolume>& refs,
                           const std::vector<JointVolume>& recons) {
    if (refs.size() != recons.size() || refs.empty())
        throw std::invalid_argument("evaluate: mismatched or empty volume sets");
    const double max_value = 2.0;  // dynamic range of the [-1,1] intensity domain
    const double c1 = default_c1(max_value), c2 = default_c2(max_value);
    EvalReport rep;
    rep.volume_count = refs.size();
    rep.config_fingerprint = cfg.fingerprint();
    for (std::size_t v = 0; v < refs.size(); ++v) {
        for (std::size_t p = 0; p < 3; ++p) {
            Tensor a = refs[v].channel(p), b = recons[v].channel(p);
            double ssim_val = cfg.eval.ssim_windowed
                                  ? ssim_windowed(a, b, refs[v].height(), refs[v].width(),
                                                  cfg.eval.ssim_window, c1, c2)
                                  : ssim_global(a, b, c1, c2);
            rep.rows.push_back({v, p + 1, mae_hu(a, b), ssim_val, psnr(a, b, max_value)});
        }
    }
    std::vector<std::vector<double>> fa, fb;
    for (std::size_t v = 0; v < refs.size(); ++v) {
        fa.push_back(pooled_features(refs[v], cfg.eval.fid_pool));
        fb.push_back(pooled_features(recons[v], cfg.eval.fid_pool));
    }
    rep.frechet = frechet_distance(fa, fb);
    return rep;
}

inline void write_eval_csv(const std::string& path, const EvalReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "volume,phase,mae_hu,ssim,psnr_db\n";
    f << std::setprecision(17);
    for (const auto& r : rep.rows)
        f << r.volume << "," << r.phase << "," << r.mae_hu << "," << r.ssim << "," << r.psnr_db
          << "\n";
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

inline void run_data_gen(const ExperimentConfig& cfg, const std::string& dir) {
    for (const std::string split : {"train", "test"}) {
        PairedDataset ds = make_paired_dataset(cfg, split);
        std::vector<JointVolume> ys, cs;
        for (auto& [y, c] : ds) {
            ys.push_back(y);
            cs.push_back(c);
        }
        nlohmann::json meta = {{"kind", "dataset"},
                               {"split", split},
                               {"config_fingerprint", cfg.fingerprint()},
                               {"dataset_fingerprint", dataset_fingerprint(ds)}};
        save_volume_archive(dir + "/" + split + "_routine.pfjm", ys, "y", meta);
        save_volume_archive(dir + "/" + split + "_lowdose.pfjm", cs, "c", meta);
        std::vector<JointVolume> preview(ys.begin(),
                                         ys.begin() + std::min<std::size_t>(4, ys.size()));
        write_volume_grid_png(dir + "/" + split + "_routine.png", preview);
    }
    std::cout << "data gen: wrote train/test archives to " << dir << "\n";
}

inline std::string run_train(const ExperimentConfig& cfg, const std::string& dir) {
    PairedDataset ds = make_paired_dataset(cfg, "train");
    DenoiserModel model = build_model(cfg);
    TrainConfig tc = cfg.train_config(ds.front().first.pixels.size());
    TrainResult res = train(ds, model, tc, cfg.fingerprint());

    std::ofstream trace(dir + "/loss_trace.csv");
    trace << "iteration,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i)
        trace << i << "," << res.loss_trace[i] << "\n";

    for (const auto& ck : res.intermediate) {
        std::ostringstream name;
        name << dir << "/checkpoint_" << std::setw(6) << std::setfill('0') << ck.iteration
             << ".pfjm";
        ck.save(name.str());
    }
    std::string final_path = dir + "/checkpoint.pfjm";
    res.final_checkpoint.save(final_path);
    std::cout << "train: " << res.loss_trace.size() << " iterations, final loss "
              << res.loss_trace.back() << ", checkpoint " << final_path << "\n";
    return final_path;
}

inline std::vector<JointVolume> sample_testset(const ExperimentConfig& cfg, DenoiserModel& model,
                                               const PairedDataset& testset, double w) {
    SamplerSchedule sched = cfg.schedule(w);
    std::vector<JointVolume> recons;
    recons.reserve(testset.size());
    Rng rng(derive_seed(cfg.seed, "sample"));
    for (const auto& [y, c] : testset) recons.push_back(sample(model, c, sched, &rng));
    return recons;
}

inline void run_sample(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                       const std::string& dir, bool with_png = true) {
    Checkpoint ck = Checkpoint::load(checkpoint_path);
    DenoiserModel model = load_model(cfg, ck);
    PairedDataset testset = make_paired_dataset(cfg, "test");
    std::vector<JointVolume> recons = sample_testset(cfg, model, testset, cfg.sampler.w);
    nlohmann::json meta = {{"kind", "reconstruction"},
                           {"config_fingerprint", cfg.fingerprint()},
                           {"test_fingerprint", dataset_fingerprint(testset)},
                           {"w", cfg.sampler.w}};
    save_volume_archive(dir + "/recon.pfjm", recons, "x", meta);
    if (with_png) {
        std::size_t n = std::min<std::size_t>(4, recons.size());
        write_volume_grid_png(dir + "/recon.png",
                              std::vector<JointVolume>(recons.begin(), recons.begin() + n));
    }
    std::cout << "sample: wrote " << recons.size() << " reconstructions to " << dir << "\n";
}

inline EvalReport run_eval(const ExperimentConfig& cfg, const std::string& recon_path,
                           const std::string& reference_path, const std::string& dir,
                           bool force = false) {
    nlohmann::json meta_r, meta_y;
    std::vector<JointVolume> recons =
        load_volume_archive(recon_path, "x", VolumeRole::reconstruction, &meta_r);
    std::vector<JointVolume> refs =
        load_volume_archive(reference_path, "y", VolumeRole::routine, &meta_y);
    std::string fp_r = meta_r.value("config_fingerprint", "");
    std::string fp_y = meta_y.value("config_fingerprint", "");
    if (!force && fp_r != fp_y)
        throw std::runtime_error("eval: mixed config fingerprints (" + fp_r + " vs " + fp_y +
                                 "); pass --force to override");
    EvalReport rep = evaluate(cfg, refs, recons);
    rep.test_fingerprint = meta_y.value("dataset_fingerprint", "");
    write_eval_csv(dir + "/eval.csv", rep);
    std::ofstream(dir + "/summary.json") << rep.summary_json().dump(2) << "\n";
    std::cout << "eval: mean MAE " << rep.mean_mae() << " HU, Frechet " << rep.frechet << "\n";
    return rep;
}

inline ChargeSet make_two_gaussian_charges(Rng& rng, std::size_t count) {
    std::vector<std::vector<double>> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        bool first = rng.uniform() < 0.5;
        double cx = first ? -1.5 : 1.5;
        double cy = first ? -0.5 : 0.8;
        pts.push_back({cx + 0.3 * rng.normal(), cy + 0.3 * rng.normal()});
    }
    return ChargeSet::uniform(std::move(pts));
}

inline void run_oracle_trace(const ExperimentConfig& cfg, const std::string& dir) {
    Rng rng(derive_seed(cfg.seed, "oracle"));
    ChargeSet charges = make_two_gaussian_charges(rng, cfg.oracle.charges);
    const double data_scale = 2.0;  // rough extent of the mixture
    const double r_max = cfg.oracle.r_max_factor * data_scale;
    for (std::size_t traj = 0; traj < cfg.oracle.trajectories; ++traj) {
        std::vector<double> x = sample_prior(rng, r_max, 2, cfg.oracle.D);
        std::ostringstream name;
        name << dir << "/trace_" << std::setw(3) << std::setfill('0') << traj << ".csv";
        std::ofstream f(name.str());
        f << "step,r,x_0,x_1\n" << std::setprecision(17);
        double log_ratio = std::log(kOracleRMin / r_max) / static_cast<double>(cfg.oracle.steps);
        double r = r_max;
        f << 0 << "," << r << "," << x[0] << "," << x[1] << "\n";
        for (std::size_t s = 0; s < cfg.oracle.steps; ++s) {
            double r_next = r_max * std::exp(log_ratio * static_cast<double>(s + 1));
            x = integrate_field_line(charges, x, r, r_next, 1, cfg.oracle.D);
            r = r_next;
            f << s + 1 << "," << r << "," << x[0] << "," << x[1] << "\n";
        }
    }
    std::cout << "oracle trace: wrote " << cfg.oracle.trajectories << " trajectories to " << dir
              << "\n";
}

struct SweepRow {
    std::size_t D;
    std::size_t phase;
    double mae_hu, ssim, psnr_db;
};

/// Train + evaluate one model per augmented dimension D; emit a CSV plus
/// per-metric trend charts over D.
inline std::vector<SweepRow> run_sweep_d(const ExperimentConfig& cfg,
                                         const std::vector<std::size_t>& d_values,
                                         const std::string& dir) {
    std::vector<SweepRow> rows;
    for (std::size_t d : d_values) {
        ExperimentConfig arm = cfg;
        arm.model.D = d;
        PairedDataset trainset = make_paired_dataset(arm, "train");
        PairedDataset testset = make_paired_dataset(arm, "test");
        DenoiserModel model = build_model(arm);
        TrainConfig tc = arm.train_config(trainset.front().first.pixels.size());
        train(trainset, model, tc, arm.fingerprint());
        std::vector<JointVolume> recons = sample_testset(arm, model, testset, arm.sampler.w);
        std::vector<JointVolume> refs;
        for (auto& [y, c] : testset) refs.push_back(y);
        EvalReport rep = evaluate(arm, refs, recons);
        for (std::size_t p = 1; p <= 3; ++p)
            rows.push_back({d, p, rep.phase_mean_mae(p), rep.phase_mean_ssim(p),
                            rep.phase_mean_psnr(p)});
        std::cout << "sweep-d: D=" << d << " mean MAE " << rep.mean_mae() << " HU\n";
    }

    std::ofstream f(dir + "/sweep_d.csv");
    f << "D,phase,mae_hu,ssim,psnr_db\n" << std::setprecision(17);
    for (const auto& r : rows)
        f << r.D << "," << r.phase << "," << r.mae_hu << "," << r.ssim << "," << r.psnr_db
          << "\n";

    const std::uint8_t colors[3][3] = {{200, 40, 40}, {40, 140, 40}, {40, 60, 200}};
    auto chart = [&](const std::string& name, double SweepRow::*field) {
        std::vector<ChartSeries> series(3);
        for (std::size_t p = 0; p < 3; ++p) {
            series[p].label = "phase " + std::to_string(p + 1);
            for (int c = 0; c < 3; ++c) series[p].rgb[c] = colors[p][c];
            for (const auto& r : rows)
                if (r.phase == p + 1) {
                    series[p].x.push_back(static_cast<double>(r.D));
                    series[p].y.push_back(r.*field);
                }
        }
        write_line_chart_png(dir + "/" + name, series, /*log_x=*/true);
    };
    chart("sweep_d_mae.png", &SweepRow::mae_hu);
    chart("sweep_d_ssim.png", &SweepRow::ssim);
    chart("sweep_d_psnr.png", &SweepRow::psnr_db);
    return rows;
}

struct AblationResult {
    std::vector<std::pair<double, EvalReport>> arms;  // (w, report), arms[0] is w=0
    double best_w = 0.0;
    double best_mae = 0.0;
    double w0_mae = 0.0;
    bool conditional_benefit = false;
};

/// Evaluate the sampler at w = 0 (unconditional-refinement arm) and at every
/// configured w > 0 on the same test set and seed; flag whether the best
/// w > 0 beats w = 0 on mean MAE.
inline AblationResult run_ablate(const ExperimentConfig& cfg, DenoiserModel& model,
                                 const std::string& dir) {
    PairedDataset testset = make_paired_dataset(cfg, "test");
    std::string test_fp = dataset_fingerprint(testset);
    std::vector<JointVolume> refs;
    for (auto& [y, c] : testset) refs.push_back(y);

    std::vector<double> ws = {0.0};
    for (double w : cfg.sampler.w_sweep)
        if (w > 0) ws.push_back(w);

    AblationResult res;
    for (double w : ws) {
        std::vector<JointVolume> recons = sample_testset(cfg, model, testset, w);
        EvalReport rep = evaluate(cfg, refs, recons);
        rep.test_fingerprint = test_fp;
        res.arms.emplace_back(w, std::move(rep));
        std::cout << "ablate: w=" << w << " mean MAE " << res.arms.back().second.mean_mae()
                  << " HU\n";
    }
    res.w0_mae = res.arms.front().second.mean_mae();
    res.best_mae = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < res.arms.size(); ++i) {
        double m = res.arms[i].second.mean_mae();
        if (m < res.best_mae) {
            res.best_mae = m;
            res.best_w = res.arms[i].first;
        }
    }
    res.conditional_benefit = res.best_mae <= res.w0_mae;

    std::ofstream f(dir + "/ablation.csv");
    f << "w,phase,mae_hu,ssim,psnr_db\n" << std::setprecision(17);
    for (const auto& [w, rep] : res.arms)
        for (std::size_t p = 1; p <= 3; ++p)
            f << w << "," << p << "," << rep.phase_mean_mae(p) << "," << rep.phase_mean_ssim(p)
              << "," << rep.phase_mean_psnr(p) << "\n";
    nlohmann::json paired = {{"test_fingerprint", test_fp},
                             {"config_fingerprint", cfg.fingerprint()},
                             {"w0_mean_mae_hu", res.w0_mae},
                             {"best_w", res.best_w},
                             {"best_w_mean_mae_hu", res.best_mae},
                             {"conditional_benefit", res.conditional_benefit}};
    std::ofstream(dir + "/ablation_summary.json") << paired.dump(2) << "\n";
    return res;
}

}  // namespace pfjm
