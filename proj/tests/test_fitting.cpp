#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "homsim/fitting.hpp"
#include "homsim/montecarlo.hpp"
#include "homsim/rng.hpp"

namespace {

using namespace homsim;

const BeamSplitter kBalanced{0.5, 0.5};

std::vector<double> tau_grid(double t1, int n) {
    // log-ish spread covering dip and baseline
    std::vector<double> taus;
    for (int i = 0; i < n; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n - 1);
        taus.push_back(6.0 * t1 * f * f);
    }
    return taus;
}

CurveDataset synth_dataset(const EmitterParams& e, const std::vector<double>& taus,
                           double noise_frac, std::uint64_t seed) {
    CurveDataset d;
    RngStream rng(seed, 0, rng_tag::kNoise);
    for (const double tau : taus) {
        const double p = coincidence_probability(tau, e, kBalanced);
        const double sigma = std::max(noise_frac * 0.5, 1e-6);
        d.tau_ps.push_back(tau);
        d.p.push_back(noise_frac > 0.0 ? p + sigma * rng.gaussian() : p);
        d.sigma.push_back(sigma);
    }
    return d;
}

DipDataset synth_dip(const EmitterParams& e, const DetectorIRF& irf, DipMode mode, double amp,
                     double step, double span, double noise_sd, std::uint64_t seed) {
    // sampled two-sided decay, convolved when the irf is wide enough to matter
    DipDataset d;
    RngStream rng(seed, 0, rng_tag::kNoise);
    const double w = mode == DipMode::Parallel ? indistinguishability(e) : 0.0;
    SampledCurve c;
    c.x0_ps = -span;
    c.step_ps = step;
    const int n = static_cast<int>(2.0 * span / step) + 1;
    for (int i = 0; i < n; ++i) {
        const double dt = c.x0_ps + i * step;
        const double x = std::fabs(dt);
        c.y.push_back(amp * (std::exp(-x / e.t1_ps) - w * std::exp(-2.0 * x / e.t2_ps)));
    }
    const auto smeared = irf.fwhm_ps > step ? convolve_with_irf(c, make_irf(irf.fwhm_ps)) : c;
    for (int i = 0; i < n; i += 4) {
        const double dt = c.x0_ps + i * step;
        d.dt_ps.push_back(dt);
        const double mean = smeared.y[static_cast<std::size_t>(i)];
        d.counts.push_back(mean + (noise_sd > 0.0 ? noise_sd * rng.gaussian() : 0.0));
        d.sigma.push_back(std::max(noise_sd, 1.0));
    }
    return d;
}

}  // namespace

TEST_CASE("noise-free curve fit recovers the generating parameters") {
    const auto e = make_emitter(800.0, 450.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(800.0, 24), 0.0, 0)};
    prob.bs = kBalanced;
    const auto fit = fit_coincidence_curve(prob);
    CHECK(fit.converged);
    CHECK(fit.t1_ps[0] == doctest::Approx(800.0).epsilon(1e-3));
    CHECK(fit.t2_ps[0] == doctest::Approx(450.0).epsilon(1e-3));
    CHECK(fit.ratio[0] == doctest::Approx(0.28125).epsilon(1e-3));
    CHECK(fit.chi2_reduced < 1e-6);
}

TEST_CASE("noisy curve fit stays within a few standard errors") {
    const auto e = make_emitter(375.0, 270.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(375.0, 30), 0.03, 7)};
    prob.bs = kBalanced;
    const auto fit = fit_coincidence_curve(prob);
    CHECK(fit.converged);
    CHECK(std::fabs(fit.t1_ps[0] - 375.0) < 4.0 * fit.t1_err_ps[0]);
    CHECK(std::fabs(fit.t2_ps[0] - 270.0) < 4.0 * fit.t2_err_ps[0]);
    CHECK(fit.t1_err_ps[0] > 0.0);
    CHECK(fit.chi2_reduced < 3.0);
}

TEST_CASE("joint fit shares t2 across datasets") {
    const auto fast = make_emitter(375.0, 270.0);
    const auto shaped = make_emitter(220.0, 270.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(fast, tau_grid(375.0, 26), 0.01, 3),
                     synth_dataset(shaped, tau_grid(220.0, 26), 0.01, 4)};
    prob.bs = kBalanced;
    prob.share_t2 = true;
    const auto fit = fit_coincidence_curve(prob);
    CHECK(fit.converged);
    REQUIRE(fit.t1_ps.size() == 2);
    REQUIRE(fit.t2_ps.size() == 1);
    CHECK(std::fabs(fit.t1_ps[0] - 375.0) < 4.0 * fit.t1_err_ps[0]);
    CHECK(std::fabs(fit.t1_ps[1] - 220.0) < 4.0 * fit.t1_err_ps[1]);
    CHECK(std::fabs(fit.t2_ps[0] - 270.0) < 4.0 * fit.t2_err_ps[0]);
    REQUIRE(fit.ratio.size() == 2);
    CHECK(fit.ratio[1] > fit.ratio[0]);
    CHECK(fit_parameter_count(prob) == 3);
    prob.share_t2 = false;
    CHECK(fit_parameter_count(prob) == 4);
}

TEST_CASE("fit is deterministic") {
    const auto e = make_emitter(375.0, 270.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(375.0, 22), 0.02, 11)};
    prob.bs = kBalanced;
    const auto a = fit_coincidence_curve(prob);
    const auto b = fit_coincidence_curve(prob);
    CHECK(a.t1_ps[0] == b.t1_ps[0]);
    CHECK(a.t2_ps[0] == b.t2_ps[0]);
    CHECK(a.chi2_reduced == b.chi2_reduced);
    CHECK(a.n_iterations == b.n_iterations);
}

TEST_CASE("bound parameterization holds at the coherence ceiling") {
    // data generated at t2 = 2 t1 exactly; the fit must not wander above it
    const auto e = make_emitter(400.0, 800.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(400.0, 24), 0.01, 5)};
    prob.bs = kBalanced;
    const auto fit = fit_coincidence_curve(prob);
    CHECK(fit.converged);
    CHECK(fit.t2_ps[0] <= 2.0 * fit.t1_ps[0] + 1e-9);
    CHECK(fit.ratio[0] <= 1.0 + 1e-12);
    CHECK(fit.ratio[0] > 0.97);
}

TEST_CASE("analytic gradient matches finite differences") {
    const auto e = make_emitter(800.0, 450.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(800.0, 20), 0.02, 9)};
    prob.bs = kBalanced;
    Eigen::VectorXd theta(2);
    for (int trial = 0; trial < 10; ++trial) {
        theta(0) = std::log(500.0 + 90.0 * trial);
        theta(1) = -1.0 + 0.2 * trial;
        const auto g = fit_objective_gradient(prob, theta);
        const auto g_fd = fit_objective_gradient_fd(prob, theta, 1e-6);
        for (int j = 0; j < 2; ++j) {
            CHECK(g(j) == doctest::Approx(g_fd(j)).epsilon(1e-6));
        }
    }
}

TEST_CASE("convolved model matches the analytic one for a narrow irf") {
    const auto e = make_emitter(375.0, 270.0);
    FitProblem base;
    base.datasets = {synth_dataset(e, tau_grid(375.0, 24), 0.01, 13)};
    base.bs = kBalanced;
    const auto plain = fit_coincidence_curve(base);

    FitProblem conv = base;
    conv.model = CoincidenceModel::AnalyticWithIrf;
    conv.irf = make_irf(0.1);
    const auto smeared = fit_coincidence_curve(conv);
    CHECK(smeared.converged);
    CHECK(smeared.t1_ps[0] == doctest::Approx(plain.t1_ps[0]).epsilon(0.005));
    CHECK(smeared.t2_ps[0] == doctest::Approx(plain.t2_ps[0]).epsilon(0.005));
}

TEST_CASE("fit problem validation") {
    const auto e = make_emitter(375.0, 270.0);
    FitProblem prob;
    prob.bs = kBalanced;
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);  // no datasets

    prob.datasets = {synth_dataset(e, {0.0, 100.0, 300.0}, 0.0, 0)};
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);  // under 4 points

    prob.datasets = {synth_dataset(e, tau_grid(375.0, 12), 0.0, 0)};
    prob.datasets[0].sigma[2] = 0.0;
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);  // nonpositive sigma

    prob.datasets = {synth_dataset(e, tau_grid(375.0, 12), 0.0, 0)};
    prob.model = CoincidenceModel::AnalyticWithIrf;
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);  // missing irf

    prob.model = CoincidenceModel::Analytic;
    prob.bs = make_beamsplitter(0.2, 0.8);
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);  // splitter outside [0.3, 0.7]

    prob.bs = kBalanced;
    prob.datasets = {synth_dataset(e, {2000.0, 2500.0, 3000.0, 3500.0}, 0.0, 0)};
    prob.t1_upper_ps = 100.0;  // every |tau| above 5 x upper: unidentifiable
    CHECK_THROWS_AS(validate_fit_problem(prob), ConfigError);
}

TEST_CASE("bootstrap spreads are positive and comparable to fit errors") {
    const auto e = make_emitter(375.0, 270.0);
    FitProblem prob;
    prob.datasets = {synth_dataset(e, tau_grid(375.0, 24), 0.02, 21)};
    prob.bs = kBalanced;
    const auto fit = fit_coincidence_curve(prob);
    const auto boot = bootstrap_coincidence_fit(prob, 40, 99);
    CHECK(boot.n_resamples == 40);
    REQUIRE(boot.t1_sd_ps.size() == 1);
    CHECK(boot.t1_sd_ps[0] > 0.0);
    // same order of magnitude as the covariance-based error
    CHECK(boot.t1_sd_ps[0] < 10.0 * fit.t1_err_ps[0]);
    CHECK(boot.t1_sd_ps[0] > 0.1 * fit.t1_err_ps[0]);
}

TEST_CASE("parallel dip fit recovers both timescales through the irf") {
    const auto e = make_emitter(375.0, 270.0);
    const auto irf = make_irf(35.0);
    const auto data = synth_dip(e, irf, DipMode::Parallel, 4000.0, 5.0, 2000.0, 8.0, 17);
    const auto fit = fit_dip_shape(data, irf, DipMode::Parallel);
    CHECK(fit.converged);
    CHECK(fit.t1_ps == doctest::Approx(375.0).epsilon(0.05));
    CHECK(fit.t2_ps == doctest::Approx(270.0).epsilon(0.10));
    CHECK(fit.weight == doctest::Approx(0.36).epsilon(0.15));
}

TEST_CASE("orthogonal dip fit pins the interference weight at zero") {
    const auto e = make_emitter(375.0, 270.0);
    const auto irf = make_irf(35.0);
    const auto data = synth_dip(e, irf, DipMode::Orthogonal, 4000.0, 5.0, 2000.0, 8.0, 19);
    const auto fit = fit_dip_shape(data, irf, DipMode::Orthogonal);
    CHECK(fit.converged);
    CHECK(fit.t1_ps == doctest::Approx(375.0).epsilon(0.05));
    CHECK(fit.weight == 0.0);
    CHECK(std::isnan(fit.t2_ps));
}

TEST_CASE("a negligible irf reproduces the unconvolved dip shape") {
    const auto e = make_emitter(375.0, 270.0);
    const auto tiny = make_irf(0.1);
    const auto data = synth_dip(e, tiny, DipMode::Parallel, 4000.0, 5.0, 2000.0, 0.0, 23);
    const auto fit = fit_dip_shape(data, tiny, DipMode::Parallel);
    CHECK(fit.converged);
    CHECK(fit.t1_ps == doctest::Approx(375.0).epsilon(0.005));
    CHECK(fit.t2_ps == doctest::Approx(270.0).epsilon(0.01));
}

TEST_CASE("dip fit rejects a window narrower than the decay") {
    const auto e = make_emitter(375.0, 270.0);
    const auto irf = make_irf(35.0);
    const auto data = synth_dip(e, irf, DipMode::Parallel, 4000.0, 5.0, 300.0, 0.0, 29);
    CHECK_THROWS_AS(fit_dip_shape(data, irf, DipMode::Parallel), ConfigError);
}

TEST_CASE("lifetime estimator on clean exponentials") {
    for (const double t1 : {820.0, 370.0}) {
        RngStream rng(static_cast<std::uint64_t>(t1), 0, 0);
        std::vector<double> arrivals;
        const int n = 1000000;
        arrivals.reserve(n);
        for (int i = 0; i < n; ++i) arrivals.push_back(rng.exponential(t1));
        const auto fit = fit_exponential_lifetime(std::move(arrivals));
        CHECK(fit.t1_ps == doctest::Approx(t1).epsilon(0.01));
        CHECK(fit.shape_ok);
        CHECK(fit.t1_err_ps > 0.0);
        CHECK(std::fabs(fit.t1_ps - t1) < 4.0 * fit.t1_err_ps);
        CHECK(fit.window_lo_ps < fit.window_hi_ps);
    }
}

TEST_CASE("lifetime estimator flags degenerate input") {
    CHECK_THROWS_AS(fit_exponential_lifetime(std::vector<double>(50, 1.0)), ConfigError);
    const auto flat = fit_exponential_lifetime(std::vector<double>(500, 3.0));
    CHECK_FALSE(flat.shape_ok);
}

TEST_CASE("lifetime estimator sees through a gaussian jitter floor") {
    // jittered decay: jitter sigma well under t1 barely moves the estimate
    RngStream rng(5150, 0, 0);
    std::vector<double> arrivals;
    for (int i = 0; i < 200000; ++i) {
        arrivals.push_back(std::max(0.0, rng.exponential(800.0) + 20.0 * rng.gaussian()));
    }
    const auto fit = fit_exponential_lifetime(std::move(arrivals));
    CHECK(fit.t1_ps == doctest::Approx(800.0).epsilon(0.03));
}
