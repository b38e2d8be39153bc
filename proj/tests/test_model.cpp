#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <vector>

#include "pfjm/model.hpp"

using namespace pfjm;

namespace {

DenoiserModel make_mlp_model(std::size_t n, std::vector<std::size_t> hidden, std::uint64_t seed,
                             double sigma_data = 0.5) {
    AugmentationParams aug;
    aug.N = n;
    aug.D = 128;
    aug.sigma_data = sigma_data;
    Rng rng(seed);
    return DenoiserModel(aug, std::make_unique<nn::MlpNetwork>(n, std::move(hidden), rng));
}

void randomize_params(DenoiserModel& m, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (auto& p : m.params()) p = scale * rng.normal();
}

}  // namespace

TEST_CASE("preconditioning constants") {
    Precond pc = Precond::at(0.5, 0.5);
    CHECK(pc.c_skip == Catch::Approx(0.5).margin(1e-15));
    CHECK(pc.c_out == Catch::Approx(0.25 / std::sqrt(0.5)).margin(1e-15));
    CHECK(pc.c_in == Catch::Approx(1.0 / std::sqrt(0.5)).margin(1e-15));
    CHECK(pc.c_noise == Catch::Approx(0.25 * std::log(0.5)).margin(1e-15));
    CHECK_THROWS_AS(Precond::at(0.0, 0.5), std::invalid_argument);

    SECTION("limits") {
        Precond lo = Precond::at(1e-6, 0.5);
        CHECK(lo.c_skip == Catch::Approx(1.0).margin(1e-9));
        Precond hi = Precond::at(1e6, 0.5);
        CHECK(hi.c_skip == Catch::Approx(0.0).margin(1e-9));
        CHECK(hi.c_out == Catch::Approx(0.5).epsilon(1e-9));  // c_out -> sigma_data
    }
}

TEST_CASE("loss weight equals 1 / c_out^2") {
    for (double sigma : {0.01, 0.3, 2.0, 50.0}) {
        Precond pc = Precond::at(sigma, 0.5);
        CHECK(loss_weight(sigma, 0.5) ==
              Catch::Approx(1.0 / (pc.c_out * pc.c_out)).epsilon(1e-12));
    }
    // sigma = sigma_data = sqrt(2) makes lambda exactly 1
    CHECK(loss_weight(std::sqrt(2.0), std::sqrt(2.0)) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("fresh model output is the skip path (zero-init final layer)") {
    auto m = make_mlp_model(6, {16}, 42);
    Tensor x({6}), c({6});
    Rng rng(1);
    for (std::size_t i = 0; i < 6; ++i) {
        x[i] = rng.normal();
        c[i] = rng.normal();
    }
    double sigma = 0.7;
    Precond pc = Precond::at(sigma, 0.5);
    Tensor f = m.forward(x, sigma, c);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(f[i] == Catch::Approx(pc.c_skip * x[i]).margin(1e-14));
}

TEST_CASE("unit residual with unit weight gives loss = element count") {
    // sigma = sigma_data = sqrt(2): lambda = 1 and c_skip = 1/2. A fresh
    // model outputs c_skip * x_hat, so x_hat = 4, y = 1 leaves residual 1.
    auto m = make_mlp_model(8, {8}, 3, std::sqrt(2.0));
    Tensor x_hat({8}, 4.0), y({8}, 1.0), c({8}, 0.0);
    double loss = m.loss_on_perturbed(x_hat, y, std::sqrt(2.0), c);
    CHECK(loss == Catch::Approx(8.0).margin(1e-10));
}

TEST_CASE("forward rejects shape mismatch and non-finite parameters") {
    auto m = make_mlp_model(4, {8}, 5);
    Tensor x({4}), bad({5});
    CHECK_THROWS_AS(m.forward(x, 1.0, bad), std::invalid_argument);
    m.params()[0] = std::nan("");
    CHECK_THROWS_AS(m.forward(x, 1.0, Tensor({4})), std::runtime_error);
}

TEST_CASE("analytic gradients match finite differences (MLP)") {
    auto m = make_mlp_model(5, {12, 12}, 7);
    randomize_params(m, 11);

    Tensor x_hat({5}), y({5}), c({5});
    Rng rng(13);
    for (std::size_t i = 0; i < 5; ++i) {
        x_hat[i] = rng.normal();
        y[i] = 0.5 * rng.normal();
        c[i] = rng.normal();
    }
    const double sigma = 0.8;

    m.net().store.zero_grads();
    m.loss_on_perturbed(x_hat, y, sigma, c, /*accumulate=*/true);
    std::vector<double> analytic = m.grads();

    const double h = 1e-5;
    std::size_t ok = 0, total = m.params().size();
    for (std::size_t i = 0; i < total; ++i) {
        double orig = m.params()[i];
        m.params()[i] = orig + h;
        double lp = m.loss_on_perturbed(x_hat, y, sigma, c);
        m.params()[i] = orig - h;
        double lm = m.loss_on_perturbed(x_hat, y, sigma, c);
        m.params()[i] = orig;
        double fd = (lp - lm) / (2 * h);
        double rel = std::abs(fd - analytic[i]) /
                     std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        if (rel < 1e-4) ++ok;
    }
    INFO(ok << " / " << total << " coordinates within 1e-4 relative");
    CHECK(ok >= total * 95 / 100);
}

TEST_CASE("analytic gradients match finite differences (conv)") {
    AugmentationParams aug;
    aug.N = 3 * 4 * 4;
    aug.D = 64;
    Rng init(19);
    DenoiserModel m(aug, std::make_unique<nn::ConvNetwork>(3, init));
    randomize_params(m, 23, 0.2);

    Tensor x_hat({3, 4, 4}), y({3, 4, 4}), c({3, 4, 4});
    Rng rng(29);
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
        x_hat[i] = rng.normal();
        y[i] = 0.5 * rng.normal();
        c[i] = rng.normal();
    }
    const double sigma = 1.2;

    m.net().store.zero_grads();
    m.loss_on_perturbed(x_hat, y, sigma, c, true);
    std::vector<double> analytic = m.grads();

    // spot-check a stride through the parameter vector
    const double h = 1e-5;
    std::size_t ok = 0, checked = 0;
    for (std::size_t i = 0; i < m.params().size(); i += 7, ++checked) {
        double orig = m.params()[i];
        m.params()[i] = orig + h;
        double lp = m.loss_on_perturbed(x_hat, y, sigma, c);
        m.params()[i] = orig - h;
        double lm = m.loss_on_perturbed(x_hat, y, sigma, c);
        m.params()[i] = orig;
        double fd = (lp - lm) / (2 * h);
        double rel = std::abs(fd - analytic[i]) /
                     std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        if (rel < 1e-4) ++ok;
    }
    INFO(ok << " / " << checked);
    CHECK(ok >= checked * 95 / 100);
}

TEST_CASE("field-matching loss hand example and equivalence") {
    SECTION("hand example") {
        // target = (x - y) * sqrt(D) / r = (2-1)*3/3 = 1; output 2 -> loss 1
        CHECK(field_matching_loss({2.0}, {2.0}, {1.0}, 3.0, 9) == Catch::Approx(1.0));
        // exact prediction has zero loss
        CHECK(field_matching_loss({1.0}, {2.0}, {1.0}, 3.0, 9) == Catch::Approx(0.0));
        CHECK_THROWS_AS(field_matching_loss({1.0}, {2.0}, {1.0}, 0.0, 9),
                        std::invalid_argument);
        CHECK_THROWS_AS(field_matching_loss({1.0, 2.0}, {2.0}, {1.0}, 1.0, 9),
                        std::invalid_argument);
    }

    SECTION("x0 and direction parameterizations agree up to the known factor") {
        // With r = sigma*sqrt(D): direction loss on (x-f)*sqrt(D)/r equals
        // |f - y|^2 / sigma^2, so x0 loss / direction loss = lambda * sigma^2.
        const std::size_t n = 4, D = 16;
        const double sigma = 0.9, sigma_data = 0.5;
        double r = sigma_to_r(sigma, D);
        Rng rng(37);
        std::vector<double> x(n), y(n), f(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
            f[i] = rng.normal();
        }
        std::vector<double> dir(n);
        double x0_loss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] = (x[i] - f[i]) * std::sqrt(static_cast<double>(D)) / r;
            x0_loss += (f[i] - y[i]) * (f[i] - y[i]);
        }
        x0_loss *= loss_weight(sigma, sigma_data);
        double dir_loss = field_matching_loss(dir, x, y, r, D);
        double factor = loss_weight(sigma, sigma_data) * sigma * sigma;
        CHECK(x0_loss == Catch::Approx(dir_loss * factor).epsilon(1e-10));
    }
}

TEST_CASE("adam step hand behavior") {
    SECTION("first step moves by ~lr against the gradient sign") {
        AdamState st;
        st.init(3);
        std::vector<double> p = {1.0, -2.0, 0.5};
        std::vector<double> g = {10.0, -0.3, 1e-3};
        adam_step(st, p, g, 0.1, 0.9, 0.999, 1e-8);
        // bias correction makes mhat/sqrt(vhat) = sign(g) at t=1
        CHECK(p[0] == Catch::Approx(1.0 - 0.1).epsilon(1e-6));
        CHECK(p[1] == Catch::Approx(-2.0 + 0.1).epsilon(1e-6));
        CHECK(p[2] == Catch::Approx(0.5 - 0.1).epsilon(1e-4));
        CHECK(st.t == 1);
    }
    SECTION("constant gradient keeps moving monotonically") {
        AdamState st;
        st.init(1);
        std::vector<double> p = {0.0};
        std::vector<double> g = {1.0};
        double prev = 0.0;
        for (int i = 0; i < 50; ++i) {
            adam_step(st, p, g, 0.01, 0.9, 0.999, 1e-8);
            CHECK(p[0] < prev);
            prev = p[0];
        }
    }
    SECTION("non-finite gradient is rejected with its index") {
        AdamState st;
        st.init(2);
        std::vector<double> p = {0.0, 0.0};
        std::vector<double> g = {0.0, std::nan("")};
        CHECK_THROWS_WITH(adam_step(st, p, g, 0.01, 0.9, 0.999, 1e-8),
                          Catch::Matchers::ContainsSubstring("index 1"));
    }
}

TEST_CASE("checkpoint round trip preserves behavior exactly") {
    auto m = make_mlp_model(6, {10}, 101);
    randomize_params(m, 55);
    // snap so capture (f32) is lossless on these params
    for (auto& p : m.params()) p = static_cast<double>(static_cast<float>(p));

    AdamState adam;
    adam.init(m.params().size());
    adam.t = 17;
    Rng rng(66);
    for (auto& v : adam.m) v = static_cast<double>(static_cast<float>(rng.normal()));
    for (auto& v : adam.v) v = static_cast<double>(static_cast<float>(rng.uniform()));

    Checkpoint ck = Checkpoint::capture(m, adam, 123, "deadbeef", {1.0, 0.5, 0.25});

    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "pfjm_ck_test.pfjm";
    ck.save(p.string());
    Checkpoint back = Checkpoint::load(p.string());
    fs::remove(p);

    CHECK(back.iteration == 123);
    CHECK(back.adam_t == 17);
    CHECK(back.fingerprint == "deadbeef");
    CHECK(back.arch == m.descriptor());
    CHECK(back.loss_history == std::vector<double>{1.0, 0.5, 0.25});

    Tensor x({6}), c({6});
    for (std::size_t i = 0; i < 6; ++i) {
        x[i] = 0.1 * static_cast<double>(i);
        c[i] = -0.2 * static_cast<double>(i);
    }
    Tensor before = m.forward(x, 0.5, c);

    auto m2 = make_mlp_model(6, {10}, 999);  // different init
    AdamState adam2;
    adam2.init(m2.params().size());
    back.apply(m2, &adam2);
    Tensor after = m2.forward(x, 0.5, c);
    for (std::size_t i = 0; i < 6; ++i) CHECK(after[i] == before[i]);
    CHECK(adam2.t == 17);
    CHECK(adam2.m == adam.m);
    CHECK(adam2.v == adam.v);

    auto wrong = make_mlp_model(7, {10}, 1);
    CHECK_THROWS_AS(back.apply(wrong), std::invalid_argument);
}

TEST_CASE("training overfits a tiny dataset and is seed-deterministic") {
    const std::size_t L = 4, W = 4, N = 3 * L * W;
    Rng data_rng(7);
    JointVolume y(L, W), c(L, W, VolumeRole::lowdose);
    for (std::size_t i = 0; i < y.pixels.size(); ++i) {
        y.pixels[i] = 0.5 * data_rng.normal();
        c.pixels[i] = y.pixels[i] + 0.1 * data_rng.normal();
    }
    std::vector<std::pair<JointVolume, JointVolume>> ds = {{y, c}};

    TrainConfig tc;
    tc.batch = 8;
    tc.iters = 1000;
    tc.lr = 3e-3;
    tc.seed = 2023;
    tc.aug.N = N;
    tc.aug.D = 128;

    auto run = [&]() {
        auto m = make_mlp_model(N, {48, 48}, 12345);
        return train(ds, m, tc, "fp");
    };
    TrainResult r1 = run();
    TrainResult r2 = run();

    REQUIRE(r1.loss_trace.size() == 1000);
    CHECK(r1.loss_trace == r2.loss_trace);  // bit-identical reruns

    // medians are robust to the heavy-tailed per-batch loss weighting
    auto median_of = [&](std::size_t lo, std::size_t hi) {
        std::vector<double> w(r1.loss_trace.begin() + lo, r1.loss_trace.begin() + hi);
        std::sort(w.begin(), w.end());
        return w[w.size() / 2];
    };
    double head = median_of(0, 100), tail = median_of(900, 1000);
    INFO("head " << head << " tail " << tail);
    CHECK(tail < 0.7 * head);

    CHECK(r1.final_checkpoint.iteration == 1000);
    CHECK(r1.final_checkpoint.fingerprint == "fp");
}

TEST_CASE("training validates inputs") {
    auto m = make_mlp_model(12, {8}, 1);
    TrainConfig tc;
    tc.aug.N = 12;
    std::vector<std::pair<JointVolume, JointVolume>> empty;
    CHECK_THROWS_AS(train(empty, m, tc), std::invalid_argument);

    JointVolume y(2, 2), c(2, 2);
    std::vector<std::pair<JointVolume, JointVolume>> ds = {{y, c}};
    tc.aug.N = 5;  // mismatch with 3*2*2
    auto m2 = make_mlp_model(5, {8}, 1);
    CHECK_THROWS_AS(train(ds, m2, tc), std::invalid_argument);

    tc.aug.N = 12;
    tc.lr = 0.0;
    CHECK_THROWS_AS(train(ds, m, tc), std::invalid_argument);
}

TEST_CASE("intermediate checkpoints follow the cadence") {
    const std::size_t L = 2, W = 2, N = 12;
    JointVolume y(L, W), c(L, W);
    std::vector<std::pair<JointVolume, JointVolume>> ds = {{y, c}};
    TrainConfig tc;
    tc.batch = 2;
    tc.iters = 10;
    tc.checkpoint_every = 3;
    tc.aug.N = N;
    auto m = make_mlp_model(N, {8}, 4);
    TrainResult r = train(ds, m, tc);
    REQUIRE(r.intermediate.size() == 3);  // after 3, 6, 9 (10 is the final)
    CHECK(r.intermediate[0].iteration == 3);
    CHECK(r.intermediate[2].iteration == 9);
    CHECK(r.intermediate[1].loss_history.size() == 6);
}

TEST_CASE("make_network reconstructs from descriptors") {
    auto m = make_mlp_model(4, {6, 6}, 77);
    auto net = nn::make_network(m.descriptor(), 77);
    CHECK(net->descriptor() == m.descriptor());
    CHECK(net->store.params.size() == m.params().size());

    nlohmann::json bad = {{"type", "transformer"}};
    CHECK_THROWS_AS(nn::make_network(bad, 0), std::invalid_argument);
}

TEST_CASE("fnv1a64 known vectors") {
    // standard FNV-1a reference values
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}
