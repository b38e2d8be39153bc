#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pfjm/oracle.hpp"
#include "pfjm/stats.hpp"

using namespace pfjm;

namespace {

// Independent reference: plain double-precision summation of the inverse
// power law, no log-domain tricks. Returns the unnormalized (e_x, e_r).
struct BruteField {
    std::vector<double> e_x;
    double e_r;
};

BruteField brute_field(const ChargeSet& cs, const std::vector<double>& x, double r,
                       std::size_t D) {
    const std::size_t n = x.size();
    BruteField out{std::vector<double>(n, 0.0), 0.0};
    for (std::size_t i = 0; i < cs.count(); ++i) {
        double d2 = r * r;
        for (std::size_t k = 0; k < n; ++k) {
            double diff = x[k] - cs.charges[i][k];
            d2 += diff * diff;
        }
        double mag = cs.weights[i] / std::pow(d2, 0.5 * static_cast<double>(n + D));
        for (std::size_t k = 0; k < n; ++k) out.e_x[k] += mag * (x[k] - cs.charges[i][k]);
        out.e_r += mag * r;
    }
    return out;
}

ChargeSet grid_charges(std::size_t side, double span) {
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
            pts.push_back({-span + 2.0 * span * i / (side - 1),
                           -span + 2.0 * span * j / (side - 1)});
    return ChargeSet::uniform(std::move(pts));
}

}  // namespace

TEST_CASE("ChargeSet validation") {
    ChargeSet cs = ChargeSet::uniform({{0.0, 0.0}, {1.0, 1.0}});
    CHECK_NOTHROW(cs.validate());
    CHECK(cs.count() == 2);
    CHECK(cs.dim() == 2);

    SECTION("weights must sum to one") {
        cs.weights = {0.5, 0.6};
        CHECK_THROWS_AS(cs.validate(), std::invalid_argument);
    }
    SECTION("no negative weights") {
        cs.weights = {1.5, -0.5};
        CHECK_THROWS_AS(cs.validate(), std::invalid_argument);
    }
    SECTION("consistent dimensions") {
        cs.charges[1] = {1.0};
        CHECK_THROWS_AS(cs.validate(), std::invalid_argument);
    }
    SECTION("empty set rejected") {
        ChargeSet empty;
        CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
    }
}

TEST_CASE("field matches brute-force summation") {
    Rng rng(99);
    for (std::size_t trial = 0; trial < 20; ++trial) {
        std::size_t n = 1 + trial % 4;
        std::size_t M = 2 + trial % 7;
        std::vector<std::vector<double>> pts(M, std::vector<double>(n));
        for (auto& p : pts)
            for (auto& v : p) v = 2.0 * rng.normal();
        ChargeSet cs = ChargeSet::uniform(std::move(pts));

        std::vector<double> x(n);
        for (auto& v : x) v = 2.0 * rng.normal();
        double r = 0.05 + 3.0 * rng.uniform();
        std::size_t D = 1 + static_cast<std::size_t>(30 * rng.uniform());

        FieldValue f = field(cs, x, r, D);
        BruteField b = brute_field(cs, x, r, D);

        // Compare scale-free ratios, which is all the ODE consumes.
        REQUIRE(b.e_r > 0);
        REQUIRE(f.e_r > 0);
        for (std::size_t k = 0; k < n; ++k) {
            INFO("trial " << trial << " coord " << k);
            CHECK(f.e_x[k] / f.e_r == Catch::Approx(b.e_x[k] / b.e_r).margin(1e-10));
        }
    }
}

TEST_CASE("single charge at origin: field is radial") {
    ChargeSet cs = ChargeSet::uniform({{0.0, 0.0}});
    std::vector<double> x = {3.0, 4.0};
    double r = 2.0;
    FieldValue f = field(cs, x, r, 8);
    // e_x is parallel to x and e_x/e_r = x/r exactly
    CHECK(f.e_x[0] / f.e_r == Catch::Approx(3.0 / 2.0).margin(1e-12));
    CHECK(f.e_x[1] / f.e_r == Catch::Approx(4.0 / 2.0).margin(1e-12));
}

TEST_CASE("symmetric pair: midpoint axis field has no transverse part") {
    ChargeSet cs = ChargeSet::uniform({{-1.0, 0.0}, {1.0, 0.0}});
    std::vector<double> x = {0.0, 0.7};
    FieldValue f = field(cs, x, 1.3, 16);
    CHECK(std::abs(f.e_x[0]) < 1e-14);
    CHECK(f.e_x[1] > 0);
}

TEST_CASE("field weight-scale cancellation") {
    ChargeSet cs = ChargeSet::uniform({{-0.4, 0.2}, {0.9, -0.1}, {0.3, 0.8}});
    std::vector<double> x = {0.25, -0.6};
    double r = 0.8;
    FieldValue base = field(cs, x, r, 12);

    ChargeSet scaled = cs;
    for (auto& w : scaled.weights) w *= 7.5;
    FieldValue f2 = field(scaled, x, r, 12);

    for (std::size_t k = 0; k < 2; ++k)
        CHECK(f2.e_x[k] / f2.e_r == Catch::Approx(base.e_x[k] / base.e_r).margin(1e-12));
}

TEST_CASE("field stays finite at extreme distances") {
    // log-domain accumulation must not overflow/underflow where naive
    // pow(d2, -(N+D)/2) would.
    ChargeSet cs = ChargeSet::uniform({{0.0}, {1.0}});
    std::size_t D = 3000;

    SECTION("very far") {
        FieldValue f = field(cs, {1e8}, 1e6, D);
        CHECK(std::isfinite(f.e_x[0]));
        CHECK(std::isfinite(f.e_r));
        CHECK(f.e_r > 0);
        CHECK(f.e_x[0] / f.e_r == Catch::Approx(1e8 / 1e6).epsilon(1e-6));
    }
    SECTION("very close") {
        FieldValue f = field(cs, {1e-9}, 1e-9, D);
        CHECK(std::isfinite(f.e_x[0]));
        CHECK(f.e_r > 0);
    }
}

TEST_CASE("ode_rhs equals e_x / e_r") {
    ChargeSet cs = ChargeSet::uniform({{0.5, -0.5}, {-0.5, 0.5}});
    std::vector<double> x = {0.3, 0.1};
    double r = 1.1;
    FieldValue f = field(cs, x, r, 10);
    auto g = ode_rhs(cs, x, r, 10);
    CHECK(g[0] == Catch::Approx(f.e_x[0] / f.e_r).margin(1e-15));
    CHECK(g[1] == Catch::Approx(f.e_x[1] / f.e_r).margin(1e-15));
}

TEST_CASE("field-line integration: single charge has closed form") {
    // One charge at the origin: dx/dr = x/r, so x(r) = x0 * r/r0.
    ChargeSet cs = ChargeSet::uniform({{0.0, 0.0}});
    std::vector<double> x0 = {2.0, -1.0};
    double r0 = 10.0, r1 = 0.5;
    auto x = integrate_field_line(cs, x0, r0, r1, 64, 8);
    CHECK(x[0] == Catch::Approx(2.0 * r1 / r0).epsilon(1e-6));
    CHECK(x[1] == Catch::Approx(-1.0 * r1 / r0).epsilon(1e-6));
}

TEST_CASE("integration error shrinks at fourth order") {
    ChargeSet cs = ChargeSet::uniform({{-1.0, 0.3}, {0.8, -0.6}, {0.1, 1.0}});
    std::vector<double> x0 = {2.5, 1.5};
    double r0 = 20.0, r1 = 0.05;
    auto ref = integrate_field_line(cs, x0, r0, r1, 4096, 16);
    auto coarse = integrate_field_line(cs, x0, r0, r1, 32, 16);
    auto fine = integrate_field_line(cs, x0, r0, r1, 64, 16);
    auto err = [&](const std::vector<double>& x) {
        double s = 0;
        for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - ref[k]) * (x[k] - ref[k]);
        return std::sqrt(s);
    };
    double e_coarse = err(coarse), e_fine = err(fine);
    INFO("coarse " << e_coarse << " fine " << e_fine);
    CHECK(e_fine * 8.0 < e_coarse);  // >= 8x reduction per halving
}

TEST_CASE("integration is attracted toward the charge cloud") {
    ChargeSet cs = grid_charges(5, 1.0);
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        double r0 = 50.0;
        auto x0 = sample_prior(rng, r0, 2, 64);
        auto x = integrate_field_line(cs, x0, r0, 0.0, 256, 64);
        auto dist_to_cloud = [&](const std::vector<double>& p) {
            double best = 1e300;
            for (const auto& c : cs.charges) {
                double d = std::hypot(p[0] - c[0], p[1] - c[1]);
                best = std::min(best, d);
            }
            return best;
        };
        INFO("trial " << trial);
        CHECK(dist_to_cloud(x) <= dist_to_cloud(x0) + 1e-9);
        CHECK(dist_to_cloud(x) < 1.5);  // lands near the cloud
    }
}

TEST_CASE("integrate_field_line argument validation") {
    ChargeSet cs = ChargeSet::uniform({{0.0}});
    CHECK_THROWS_AS(integrate_field_line(cs, {1.0}, 0.0, 0.0, 10, 4), std::invalid_argument);
    CHECK_THROWS_AS(integrate_field_line(cs, {1.0}, 1.0, 2.0, 10, 4), std::invalid_argument);
    CHECK_THROWS_AS(integrate_field_line(cs, {1.0}, 1.0, 0.5, 0, 4), std::invalid_argument);
}

TEST_CASE("r_end below the floor integrates to the floor") {
    ChargeSet cs = ChargeSet::uniform({{0.0}});
    // closed form: x(r) = x0 * r / r0, stopping at kOracleRMin
    auto x = integrate_field_line(cs, {1.0}, 1.0, 0.0, 128, 4);
    CHECK(x[0] == Catch::Approx(kOracleRMin).epsilon(1e-6));
}

TEST_CASE("prior samples have the advertised scale") {
    Rng rng(123);
    const std::size_t N = 4, D = 64, n = 20000;
    double r_max = 40.0;
    double sum_sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto x = sample_prior(rng, r_max, N, D);
        for (double v : x) sum_sq += v * v;
    }
    double per_coord = sum_sq / (n * N);
    double expected = r_max * r_max / static_cast<double>(D);
    CHECK(per_coord == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("oracle transport reproduces a two-charge mixture") {
    // Small-scale preview of the distribution-bijection property: push prior
    // samples down the field lines and compare against the charges by the
    // sliced 1-Wasserstein distance.
    ChargeSet cs = ChargeSet::uniform({{-1.0, 0.0}, {1.0, 0.0}});
    const std::size_t D = 64, n_samples = 400;
    double r_max = 80.0;
    Rng rng(5150);
    std::vector<std::vector<double>> pushed;
    pushed.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        auto x0 = sample_prior(rng, r_max, 2, D);
        pushed.push_back(integrate_field_line(cs, x0, r_max, 0.0, 128, D));
    }
    std::vector<std::vector<double>> target;
    for (std::size_t i = 0; i < n_samples; ++i)
        target.push_back(cs.charges[i % 2]);

    Rng dir_rng(17);
    double w1 = sliced_wasserstein(pushed, target, dir_rng, 32);
    INFO("sliced W1 = " << w1);
    CHECK(w1 < 0.25);

    // both modes are populated
    std::size_t left = 0;
    for (const auto& p : pushed)
        if (p[0] < 0) ++left;
    CHECK(left > n_samples / 5);
    CHECK(left < 4 * n_samples / 5);
}
