#include "homsim/model.hpp"

#include <string>

namespace homsim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

JitterModel make_jitter(JitterKind kind, double scale_ps) {
    if (kind == JitterKind::None) return {};
    require(scale_ps >= 0.0 && std::isfinite(scale_ps),
            "jitter scale must be finite and non-negative");
    return {kind, scale_ps};
}

void validate_emitter(const EmitterParams& e) {
    require(std::isfinite(e.t1_ps) && e.t1_ps > 0.0, "emitter t1 must be positive");
    require(std::isfinite(e.t2_ps) && e.t2_ps > 0.0, "emitter t2 must be positive");
    require(e.t2_ps <= 2.0 * e.t1_ps, "emitter t2 must not exceed 2*t1");
    require(e.efficiency >= 0.0 && e.efficiency <= 1.0,
            "emitter efficiency must lie in [0, 1]");
    require(e.jitter.scale_ps >= 0.0, "jitter scale must be non-negative");
}

EmitterParams make_emitter(double t1_ps, double t2_ps, JitterModel jitter, double efficiency) {
    EmitterParams e{t1_ps, t2_ps, jitter, efficiency};
    validate_emitter(e);
    return e;
}

double dephasing_rate(const EmitterParams& e) {
    return 1.0 / e.t2_ps - 0.5 / e.t1_ps;
}

JitterModel scheme_default_jitter(const ExcitationScheme& s) {
    switch (s.kind) {
        case SchemeKind::QuasiResonant:
            return {JitterKind::Gaussian, 3.0};
        case SchemeKind::TwoPhotonResonant:
            if (s.transition == Transition::Exciton)
                return {JitterKind::Exponential, 370.0};
            return {JitterKind::Gaussian, s.pulse_duration_ps};
        case SchemeKind::AboveBand:
            return {JitterKind::Gaussian, s.above_band_sigma_ps};
    }
    throw ConfigError("unknown excitation scheme");
}

BeamSplitter make_beamsplitter(double r, double t) {
    require(r >= 0.0 && t >= 0.0, "beamsplitter coefficients must be non-negative");
    require(std::fabs(r + t - 1.0) <= 1e-12, "beamsplitter must satisfy R + T = 1");
    return {r, t};
}

void validate_geometry(const InterferometerGeometry& g) {
    require(g.pump_delay_ps > 0.0, "pump delay must be positive");
    require(g.hom_delay_ps > 0.0, "interferometer delay must be positive");
    require(g.rep_period_ps > 0.0, "repetition period must be positive");
    require(g.integration_halfwidth_ps > 0.0, "integration halfwidth must be positive");
    require(g.pump_delay_ps < g.rep_period_ps,
            "pump_delay must be smaller than rep_period: pulse pairs would collide");
    const double cap =
        0.5 * std::min({g.pump_delay_ps, g.hom_delay_ps, g.rep_period_ps - 2.0 * g.hom_delay_ps});
    require(g.integration_halfwidth_ps < cap,
            "integration halfwidth must be below min(pump, hom, rep - 2*hom)/2");
}

InterferometerGeometry make_geometry(double pump_ps, double hom_ps, double rep_ps,
                                     double halfwidth_ps) {
    InterferometerGeometry g{pump_ps, hom_ps, rep_ps, halfwidth_ps};
    validate_geometry(g);
    return g;
}

FieldAmplitudePair beamsplitter_transform(const FieldAmplitudePair& in, const BeamSplitter& bs) {
    const double st = std::sqrt(bs.t);
    const double sr = std::sqrt(bs.r);
    const std::complex<double> i_sr{0.0, sr};
    return {st * in.a1 + i_sr * in.a2, st * in.a2 + i_sr * in.a1};
}

double mean_squared_overlap(double tau_ps, const EmitterParams& emitter) {
    return kernels::v_overlap_kernel(std::fabs(tau_ps), emitter.t1_ps, emitter.t2_ps);
}

double coincidence_probability(double tau_ps, const EmitterParams& emitter,
                               const BeamSplitter& bs) {
    return kernels::coincidence_kernel(tau_ps, emitter.t1_ps, emitter.t2_ps, bs.r, bs.t);
}

double indistinguishability(const EmitterParams& emitter) {
    return emitter.t2_ps / (2.0 * emitter.t1_ps);
}

}  // namespace homsim
