#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "homsim/model.hpp"

namespace {

using namespace homsim;

// closed-form anchors, computed by hand from the two-exponential overlap law
constexpr double kP0Exciton = 23.0 / 64.0;     // T1 = 800, T2 = 450, balanced splitter
constexpr double kP0Biexciton = 0.32;          // T1 = 375, T2 = 270
constexpr double kV0Exciton = 0.28125;         // 450 / 1600
constexpr double kV0Biexciton = 0.36;          // 270 / 750
constexpr double kRatioShaped = 270.0 / 440.0; // T2 = 270, effective T1 = 220

const BeamSplitter kBalanced = make_beamsplitter(0.5, 0.5);

// the printed form of the model, written out independently of the library
double printed_form(double tau, double t1, double t2, double r, double t) {
    const double x = std::fabs(tau);
    const double v = t2 / (2.0 * t1 - t2) *
                     (std::exp(-2.0 * x / t1) - t2 / (2.0 * t1) * std::exp(-4.0 * x / t2));
    const double kappa = 2.0 * r * t / (1.0 - 2.0 * r * t);
    return 0.5 - 0.5 * kappa * v;
}

}  // namespace

TEST_CASE("zero-delay coincidence anchors") {
    const auto exciton = make_emitter(800.0, 450.0);
    const auto biexciton = make_emitter(375.0, 270.0);
    CHECK(coincidence_probability(0.0, exciton, kBalanced) == doctest::Approx(kP0Exciton).epsilon(1e-12));
    CHECK(coincidence_probability(0.0, biexciton, kBalanced) == doctest::Approx(kP0Biexciton).epsilon(1e-12));
    CHECK(mean_squared_overlap(0.0, exciton) == doctest::Approx(kV0Exciton).epsilon(1e-12));
    CHECK(mean_squared_overlap(0.0, biexciton) == doctest::Approx(kV0Biexciton).epsilon(1e-12));
    CHECK(indistinguishability(exciton) == doctest::Approx(kV0Exciton).epsilon(1e-12));
    CHECK(indistinguishability(make_emitter(220.0, 270.0)) ==
          doctest::Approx(kRatioShaped).epsilon(1e-12));
}

TEST_CASE("stable evaluation agrees with the printed form away from the t2 = 2 t1 pole") {
    for (const auto& [t1, t2] : std::vector<std::pair<double, double>>{
             {800.0, 450.0}, {375.0, 270.0}, {500.0, 900.0}, {1000.0, 100.0}, {820.0, 95.0}}) {
        const auto e = make_emitter(t1, t2);
        for (const double tau : {0.0, 10.0, 55.0, 200.0, 750.0, 2000.0, 5000.0}) {
            const double lib = coincidence_probability(tau, e, kBalanced);
            const double ref = printed_form(tau, t1, t2, 0.5, 0.5);
            CHECK(lib == doctest::Approx(ref).epsilon(1e-9));
        }
    }
}

TEST_CASE("t2 = 2 t1 limit is exact and continuous") {
    const auto ideal = make_emitter(400.0, 800.0);
    CHECK(mean_squared_overlap(0.0, ideal) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(coincidence_probability(0.0, ideal, kBalanced) == doctest::Approx(0.0).epsilon(1e-12));
    // limit form V = exp(-2x/T1) (1 + 2x/T1)
    for (const double x : {50.0, 300.0, 1200.0}) {
        const double limit = std::exp(-2.0 * x / 400.0) * (1.0 + 2.0 * x / 400.0);
        CHECK(mean_squared_overlap(x, ideal) == doctest::Approx(limit).epsilon(1e-12));
        const auto near = make_emitter(400.0, 800.0 * (1.0 - 1e-9));
        CHECK(mean_squared_overlap(x, near) == doctest::Approx(limit).epsilon(1e-6));
    }
}

TEST_CASE("large-delay baseline") {
    const auto e = make_emitter(800.0, 450.0);
    CHECK(coincidence_probability(1e6, e, kBalanced) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(mean_squared_overlap(1e6, e) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("symmetry, monotonicity and bounds of the coincidence curve") {
    for (const auto& [t1, t2] : std::vector<std::pair<double, double>>{
             {800.0, 450.0}, {375.0, 270.0}, {400.0, 800.0}, {400.0, 799.0}, {1000.0, 50.0}}) {
        const auto e = make_emitter(t1, t2);
        double prev = -1.0;
        for (int i = 0; i <= 60; ++i) {
            const double tau = static_cast<double>(i) * t1 / 8.0;
            const double p = coincidence_probability(tau, e, kBalanced);
            CHECK(coincidence_probability(-tau, e, kBalanced) == p);  // uses |tau| exactly
            CHECK(p >= prev);  // baseline recovers monotonically
            CHECK(p >= 0.0);
            CHECK(p <= 0.5);
            prev = p;
        }
    }
}

TEST_CASE("splitter decomposition identity across reflectances") {
    const auto e = make_emitter(800.0, 450.0);
    for (double r = 0.05; r < 0.96; r += 0.05) {
        const auto bs = make_beamsplitter(r, 1.0 - r);
        for (const double tau : {0.0, 120.0, 900.0}) {
            const double kappa = 2.0 * r * (1.0 - r) / (1.0 - 2.0 * r * (1.0 - r));
            const double expect = 0.5 - 0.5 * kappa * mean_squared_overlap(tau, e);
            CHECK(coincidence_probability(tau, e, bs) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    // a fully transmitting splitter never produces the interference term
    CHECK(coincidence_probability(0.0, e, make_beamsplitter(0.0, 1.0)) == doctest::Approx(0.5));
}

TEST_CASE("beamsplitter transform matches the single-photon examples") {
    const FieldAmplitudePair in{{1.0, 0.0}, {0.0, 0.0}};
    const auto balanced = beamsplitter_transform(in, kBalanced);
    CHECK(balanced.a1.real() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(balanced.a2.imag() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    const auto mirror = beamsplitter_transform(in, make_beamsplitter(1.0, 0.0));
    CHECK(std::abs(mirror.a1) == doctest::Approx(0.0));
    CHECK(mirror.a2.imag() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("beamsplitter transform is unitary") {
    double state = 0.123;
    auto next = [&state] {
        state = std::fmod(state * 997.0 + 0.171, 1.0);
        return 2.0 * state - 1.0;
    };
    for (double r = 0.0; r <= 1.0; r += 0.125) {
        const auto bs = make_beamsplitter(r, 1.0 - r);
        for (int rep = 0; rep < 8; ++rep) {
            const FieldAmplitudePair in{{next(), next()}, {next(), next()}};
            const auto out = beamsplitter_transform(in, bs);
            const double before = std::norm(in.a1) + std::norm(in.a2);
            const double after = std::norm(out.a1) + std::norm(out.a2);
            CHECK(after == doctest::Approx(before).epsilon(1e-12));
        }
    }
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(make_emitter(800.0, 1601.0), ConfigError);       // t2 > 2 t1
    CHECK_THROWS_AS(make_emitter(-1.0, 450.0), ConfigError);
    CHECK_THROWS_AS(make_emitter(800.0, 0.0), ConfigError);
    CHECK_THROWS_AS(make_emitter(800.0, 450.0, {}, 1.5), ConfigError);
    CHECK_THROWS_AS(make_beamsplitter(0.6, 0.5), ConfigError);
    CHECK_THROWS_AS(make_beamsplitter(-0.1, 1.1), ConfigError);
    CHECK_THROWS_AS(make_jitter(JitterKind::Gaussian, -1.0), ConfigError);
    CHECK_NOTHROW(make_geometry(3000.0, 3000.0, 1e6 / 81.0, 1000.0));
    CHECK_THROWS_AS(make_geometry(3000.0, 3000.0, 1e6 / 81.0, 1500.1), ConfigError);
    CHECK_THROWS_AS(make_geometry(13000.0, 3000.0, 1e6 / 81.0, 1000.0), ConfigError);
    CHECK_THROWS_AS(make_geometry(3000.0, 6300.0, 1e6 / 81.0, 100.0), ConfigError);
}

TEST_CASE("excitation scheme presets") {
    ExcitationScheme s;
    s.kind = SchemeKind::QuasiResonant;
    auto j = scheme_default_jitter(s);
    CHECK(j.kind == JitterKind::Gaussian);
    CHECK(j.scale_ps == doctest::Approx(3.0));

    s.kind = SchemeKind::TwoPhotonResonant;
    s.transition = Transition::Exciton;
    j = scheme_default_jitter(s);
    CHECK(j.kind == JitterKind::Exponential);
    CHECK(j.scale_ps == doctest::Approx(370.0));

    s.transition = Transition::Biexciton;
    s.pulse_duration_ps = 8.0;
    j = scheme_default_jitter(s);
    CHECK(j.kind == JitterKind::Gaussian);
    CHECK(j.scale_ps == doctest::Approx(8.0));

    s.kind = SchemeKind::AboveBand;
    j = scheme_default_jitter(s);
    CHECK(j.kind == JitterKind::Gaussian);
    CHECK(j.scale_ps == doctest::Approx(800.0));
    s.above_band_sigma_ps = 50.0;
    CHECK(scheme_default_jitter(s).scale_ps == doctest::Approx(50.0));
}

TEST_CASE("dephasing rate identity") {
    const auto e = make_emitter(800.0, 450.0);
    CHECK(dephasing_rate(e) == doctest::Approx(1.0 / 450.0 - 1.0 / 1600.0).epsilon(1e-15));
    CHECK(dephasing_rate(make_emitter(400.0, 800.0)) == doctest::Approx(0.0));
}
