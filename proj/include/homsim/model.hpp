#pragma once

#include <cmath>
#include <complex>

#include "homsim/errors.hpp"

namespace homsim {

// All times are picoseconds unless the name says otherwise.

enum class JitterKind { None, Gaussian, Exponential };

// Emission-time jitter relative to the pulse sync: Gaussian uses sigma_ps,
// Exponential uses tau_ps (slow relaxation into the emitting state).
struct JitterModel {
    JitterKind kind = JitterKind::None;
    double scale_ps = 0.0;  // sigma for Gaussian, tau for Exponential
};

JitterModel make_jitter(JitterKind kind, double scale_ps);

struct EmitterParams {
    double t1_ps = 0.0;  // radiative lifetime
    double t2_ps = 0.0;  // first-order coherence time, t2 <= 2*t1
    JitterModel jitter;
    double efficiency = 1.0;  // probability a pulse yields a detected photon
};

EmitterParams make_emitter(double t1_ps, double t2_ps, JitterModel jitter = {},
                           double efficiency = 1.0);
void validate_emitter(const EmitterParams& e);

// Pure-dephasing rate 1/T2 - 1/(2 T1), >= 0 for any valid emitter.
double dephasing_rate(const EmitterParams& e);

enum class SchemeKind { AboveBand, QuasiResonant, TwoPhotonResonant };
enum class Transition { Exciton, Biexciton };

struct ExcitationScheme {
    SchemeKind kind = SchemeKind::QuasiResonant;
    Transition transition = Transition::Exciton;
    double pulse_duration_ps = 3.0;      // pump pulse length
    double above_band_sigma_ps = 800.0;  // relaxation-cascade timing spread
};

// Each scheme resolves to one timing-jitter preset:
//   QuasiResonant         -> Gaussian(pump pulse scale, 3 ps)
//   TwoPhotonResonant, X  -> Exponential(370 ps), feeding decay of the upper level
//   TwoPhotonResonant, XX -> Gaussian(pulse duration), direct preparation
//   AboveBand             -> Gaussian(above_band_sigma_ps), carrier relaxation
JitterModel scheme_default_jitter(const ExcitationScheme& s);

struct BeamSplitter {
    double r = 0.5;
    double t = 0.5;
};

BeamSplitter make_beamsplitter(double r, double t);  // requires r,t >= 0, r+t = 1

struct InterferometerGeometry {
    double pump_delay_ps = 3000.0;  // separation of the two excitation pulses
    double hom_delay_ps = 3000.0;   // long-short path imbalance of the interferometer
    double rep_period_ps = 1.0e6 / 81.0;
    double integration_halfwidth_ps = 1000.0;
};

// Invariant: halfwidth < min(pump, hom, rep - 2*hom) / 2, all delays positive,
// pump < rep.
InterferometerGeometry make_geometry(double pump_ps, double hom_ps, double rep_ps,
                                     double halfwidth_ps);
void validate_geometry(const InterferometerGeometry& g);

struct FieldAmplitudePair {
    std::complex<double> a1{0.0, 0.0};
    std::complex<double> a2{0.0, 0.0};
};

// Lossless splitter: out1 = sqrt(T) a1 + i sqrt(R) a2, out2 = sqrt(T) a2 + i sqrt(R) a1.
FieldAmplitudePair beamsplitter_transform(const FieldAmplitudePair& in,
                                          const BeamSplitter& bs);

namespace kernels {

inline double expm1_s(double x) { return std::expm1(x); }

// expm1 for complex arguments, accurate near zero where exp(z)-1 cancels.
inline std::complex<double> expm1_s(const std::complex<double>& z) {
    const double a = z.real();
    const double b = z.imag();
    const double sh = std::sin(0.5 * b);
    return {std::expm1(a) * std::cos(b) - 2.0 * sh * sh, std::exp(a) * std::sin(b)};
}

inline double real_of(double x) { return x; }
inline double real_of(const std::complex<double>& x) { return x.real(); }

// expm1(z)/z, continuous through z = 0.
template <class S>
S phi(const S& z) {
    if (std::abs(real_of(z)) < 1e-8) return S(1.0) + z * 0.5 + z * z * (1.0 / 6.0);
    return expm1_s(z) / z;
}

// Mean squared wavepacket overlap V(x) for x = |tau| >= 0:
//
//   V = T2/(2 T1 - T2) * (exp(-2x/T1) - T2/(2 T1) * exp(-4x/T2))
//
// regrouped as exp(-4x/T2) * (T2/(2 T1) + (2x/T1) * phi(s x)) with
// s = 2 (2 T1 - T2)/(T1 T2), which is finite and exact through T2 = 2 T1.
// The printed two-exponential form is used once s*x is large, where expm1
// would overflow and the first exponential dominates anyway.
template <class S>
S v_overlap_kernel(double x, const S& t1, const S& t2) {
    const S s = 2.0 * (2.0 * t1 - t2) / (t1 * t2);
    const S sx = s * x;
    if (real_of(sx) > 50.0) {
        const S pre = t2 / (2.0 * t1 - t2);
        return pre * (std::exp(S(-2.0 * x) / t1) -
                      t2 / (2.0 * t1) * std::exp(S(-4.0 * x) / t2));
    }
    return std::exp(S(-4.0 * x) / t2) * (t2 / (2.0 * t1) + (2.0 * x / t1) * phi(sx));
}

// Opposite-output coincidence probability at pulse mismatch tau:
//   P = 1/2 - RT/(1 - 2RT) * V(|tau|)
template <class S>
S coincidence_kernel(double tau_ps, const S& t1, const S& t2, double r, double t) {
    const double rt2 = 2.0 * r * t;
    const double kappa = rt2 / (1.0 - rt2);
    return 0.5 - 0.5 * kappa * v_overlap_kernel(std::fabs(tau_ps), t1, t2);
}

}  // namespace kernels

// Ensemble-mean squared overlap of two single-photon wavepackets whose pulses
// are offset by tau. Equals T2/(2 T1) at tau = 0 and decays to 0.
double mean_squared_overlap(double tau_ps, const EmitterParams& emitter);

double coincidence_probability(double tau_ps, const EmitterParams& emitter,
                               const BeamSplitter& bs);

// T2/(2 T1), equal to 1 - 2 P(0) at a balanced splitter.
double indistinguishability(const EmitterParams& emitter);

}  // namespace homsim
