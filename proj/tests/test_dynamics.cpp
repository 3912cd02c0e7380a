#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mpctune/dynamics.hpp"
#include "mpctune/stats.hpp"

using namespace mpctune;

namespace {

// Continuous-time companion form of the plant (delay excluded).
void companion(const PlantParams& p, Eigen::Matrix2d& Ac, Eigen::Vector2d& bc) {
    Ac << 0.0, 1.0, -p.omega0 * p.omega0, -2.0 * p.damping * p.omega0;
    bc << 0.0, p.gain * p.omega0 * p.omega0;
}

// Closed-form step response of K*w0^2 / (s^2 + 2 D w0 s + w0^2), x(0)=0.
double analytic_step(const PlantParams& p, double t) {
    const double D = p.damping, w0 = p.omega0;
    if (D < 1.0) {
        const double wd = w0 * std::sqrt(1.0 - D * D);
        return p.gain * (1.0 - std::exp(-D * w0 * t) *
                                   (std::cos(wd * t) + D / std::sqrt(1.0 - D * D) * std::sin(wd * t)));
    }
    if (D == 1.0) return p.gain * (1.0 - std::exp(-w0 * t) * (1.0 + w0 * t));
    const double a = w0 * (D - std::sqrt(D * D - 1.0));
    const double b = w0 * (D + std::sqrt(D * D - 1.0));
    return p.gain * (1.0 - (b * std::exp(-a * t) - a * std::exp(-b * t)) / (b - a));
}

double truncnorm_cdf(double x, double mu, double sigma, double lo, double hi) {
    auto Phi = [](double z) { return normal_cdf(z); };
    const double zl = Phi((lo - mu) / sigma), zh = Phi((hi - mu) / sigma);
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    return (Phi((x - mu) / sigma) - zl) / (zh - zl);
}

}  // namespace

TEST_CASE("perturb scales stiffness and damping multiplicatively") {
    PlantParams p;
    p.omega0 = 10.0;
    p.damping = 0.5;
    Context ctx{1.2, 0.8};
    PlantParams q = perturb(p, ctx);
    CHECK(q.omega0 == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(q.damping == doctest::Approx(0.4).epsilon(1e-12));

    PlantParams back = perturb(q, Context{1.0 / 1.2, 1.0 / 0.8});
    CHECK(back.omega0 == doctest::Approx(p.omega0).epsilon(1e-12));
    CHECK(back.damping == doctest::Approx(p.damping).epsilon(1e-12));
    CHECK(back.gain == p.gain);
}

TEST_CASE("discretize approaches identity as Ts -> 0") {
    PlantParams p;
    p.omega0 = 1.0;  // unit scale so the O(Ts) drift is directly visible
    DiscretePlant m = discretize(p, 1e-8);
    CHECK((m.A - Eigen::Matrix2d::Identity()).norm() < 1e-6);
    CHECK(m.b.norm() < 1e-5);
}

TEST_CASE("discretize rejects a delay that is not a sample multiple") {
    PlantParams p;
    p.input_delay = 0.003;
    CHECK_THROWS_AS(discretize(p, 0.002), std::invalid_argument);
}

TEST_CASE("step response matches the analytic second-order solution") {
    PlantParams p;
    p.gain = 1.0;
    p.damping = 0.5;
    p.omega0 = 10.0;
    const double Ts = 0.002;
    DiscretePlant m = discretize(p, Ts);
    PlantSim sim(m);
    double worst = 0.0;
    for (int k = 1; k <= 500; ++k) {
        const double v = sim.step(1.0);
        worst = std::max(worst, std::abs(v - analytic_step(p, k * Ts)));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("step response oracle holds over random stable parametrizations") {
    std::mt19937_64 eng(42);
    std::uniform_real_distribution<double> uD(0.05, 2.0), uw(1.0, 60.0), uK(0.2, 5.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        PlantParams p;
        p.damping = uD(eng);
        p.omega0 = uw(eng);
        p.gain = uK(eng);
        if (trial == 0) p.damping = 1.0;  // pin the critically damped branch
        const double Ts = 0.002;
        PlantSim sim(discretize(p, Ts));
        for (int k = 1; k <= 200; ++k)
            worst = std::max(worst, std::abs(sim.step(1.0) - analytic_step(p, k * Ts)));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("closed-form discretization equals the matrix exponential") {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> uD(0.05, 2.5), uw(0.5, 80.0), uK(0.1, 4.0);
    for (int trial = 0; trial < 100; ++trial) {
        PlantParams p;
        p.damping = uD(eng);
        p.omega0 = uw(eng);
        p.gain = uK(eng);
        const double Ts = 0.002;
        DiscretePlant m = discretize(p, Ts);

        Eigen::Matrix2d Ac;
        Eigen::Vector2d bc;
        companion(p, Ac, bc);
        Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
        M.topLeftCorner<2, 2>() = Ac;
        M.topRightCorner<2, 1>() = bc;
        Eigen::Matrix3d E = (M * Ts).exp();
        CHECK((m.A - E.topLeftCorner<2, 2>()).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK((m.b - E.topRightCorner<2, 1>()).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("DC gain equals the static gain K") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> uD(0.1, 1.5), uw(2.0, 50.0), uK(0.5, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        PlantParams p;
        p.damping = uD(eng);
        p.omega0 = uw(eng);
        p.gain = uK(eng);
        CHECK(discretize(p, 0.002).dc_gain() == doctest::Approx(p.gain).epsilon(1e-9));
    }
}

TEST_CASE("zero input keeps the plant at equilibrium") {
    PlantParams p;
    PlantSim sim(discretize(p, 0.002));
    for (int k = 0; k < 50; ++k) CHECK(sim.step(0.0) == 0.0);
}

TEST_CASE("a d-sample delay blocks the input for d steps") {
    PlantParams p;
    p.input_delay = 2 * 0.002;
    PlantSim sim(discretize(p, 0.002));
    CHECK(sim.step(1.0) == 0.0);
    CHECK(sim.step(1.0) == 0.0);
    CHECK(sim.step(1.0) != 0.0);
}

TEST_CASE("constant input settles at the DC gain") {
    PlantParams p;  // defaults: K=1, D=0.28, w0=25.13
    PlantSim sim(discretize(p, 0.002));
    double v = 0.0;
    for (int k = 0; k < 1000; ++k) v = sim.step(1.0);
    CHECK(v == doctest::Approx(p.gain).epsilon(1e-6));
}

TEST_CASE("degenerate truncation bounds return the mean") {
    TruncatedNormalSpec spec;
    spec.lower = Eigen::Vector2d(1.0 - 1e-10, 1.0 - 1e-10);
    spec.upper = Eigen::Vector2d(1.0 + 1e-10, 1.0 + 1e-10);
    Context c = sample_context(spec, 123u);
    CHECK(c.stiffness_scale == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(c.damping_scale == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("truncated normal draws stay in bounds and match the oracle mean") {
    TruncatedNormalSpec spec;  // mu=1, sigma=0.25, [0.5, 1.5]
    auto eng = make_engine(99);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Context c = sample_context(spec, eng);
        REQUIRE(c.stiffness_scale >= 0.5);
        REQUIRE(c.stiffness_scale <= 1.5);
        REQUIRE(c.damping_scale >= 0.5);
        REQUIRE(c.damping_scale <= 1.5);
        sum += c.stiffness_scale;
    }
    // Symmetric truncation: the oracle mean is exactly mu.
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("truncated normal sampler passes a KS check against the oracle CDF") {
    TruncatedNormalSpec spec;
    auto eng = make_engine(4242);
    const int n = 100000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = sample_context(spec, eng).stiffness_scale;
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double F = truncnorm_cdf(xs[static_cast<std::size_t>(i)], 1.0, 0.25, 0.5, 1.5);
        ks = std::max(ks, std::abs(F - (i + 1.0) / n));
        ks = std::max(ks, std::abs(F - static_cast<double>(i) / n));
    }
    CHECK(ks < 0.01);
}

TEST_CASE("latin hypercube basics") {
    Eigen::VectorXd lo(1), hi(1);
    lo << 0.0;
    hi << 10.0;

    Eigen::MatrixXd one = latin_hypercube(1, lo, hi, {}, 5);
    REQUIRE(one.rows() == 1);
    CHECK(one(0, 0) >= 0.0);
    CHECK(one(0, 0) <= 10.0);

    Eigen::MatrixXd ten = latin_hypercube(10, lo, hi, {}, 6);
    std::vector<double> xs(10);
    for (int i = 0; i < 10; ++i) xs[static_cast<std::size_t>(i)] = ten(i, 0);
    std::sort(xs.begin(), xs.end());
    for (int k = 0; k < 10; ++k) {
        CHECK(xs[static_cast<std::size_t>(k)] >= k);
        CHECK(xs[static_cast<std::size_t>(k)] < k + 1);
    }
}

TEST_CASE("latin hypercube stratifies every continuous dimension exactly") {
    Eigen::VectorXd lo(3), hi(3);
    lo << -2.0, 0.0, 5.0;
    hi << 2.0, 1.0, 9.0;
    const int n = 23;
    Eigen::MatrixXd pts = latin_hypercube(n, lo, hi, {}, 77);
    for (int j = 0; j < 3; ++j) {
        std::vector<double> xs(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = pts(i, j);
        std::sort(xs.begin(), xs.end());
        for (int k = 0; k < n; ++k) {
            const double a = lo[j] + (hi[j] - lo[j]) * k / n;
            const double b = lo[j] + (hi[j] - lo[j]) * (k + 1) / n;
            CHECK(xs[static_cast<std::size_t>(k)] >= a);
            CHECK(xs[static_cast<std::size_t>(k)] < b);
        }
    }
}

TEST_CASE("latin hypercube rounds integer dimensions within bounds") {
    Eigen::VectorXd lo(4), hi(4);
    lo << 1, 1, -6, -4;
    hi << 30, 30, 1, 3;
    Eigen::MatrixXd pts = latin_hypercube(50, lo, hi, {true, true, false, false}, 8);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 2; ++j) {
            CHECK(pts(i, j) == std::round(pts(i, j)));
            CHECK(pts(i, j) >= lo[j]);
            CHECK(pts(i, j) <= hi[j]);
        }
}

TEST_CASE("sampling is deterministic given the seed") {
    TruncatedNormalSpec spec;
    Context a = sample_context(spec, 31u);
    Context b = sample_context(spec, 31u);
    CHECK(a.stiffness_scale == b.stiffness_scale);
    CHECK(a.damping_scale == b.damping_scale);
}
