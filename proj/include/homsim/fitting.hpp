#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "homsim/model.hpp"
#include "homsim/shaping.hpp"

namespace homsim {

struct CurveDataset {
    std::vector<double> tau_ps;
    std::vector<double> p;
    std::vector<double> sigma;
};

enum class CoincidenceModel { Analytic, AnalyticWithIrf };

// Weighted least squares for the coincidence curve P(tau). T2 can be shared
// across datasets (joint fit); R and T are fixed inputs, restricted to
// [0.3, 0.7] at this surface. Bounds T1 in (0, t1_upper], T2 in (0, 2*T1] are
// built into the fit parameterization:
//   per-dataset T2:  (log T1_i, logit(T2_i / 2 T1_i))
//   shared T2:       (log T2, log(T1_i - T2/2))
struct FitProblem {
    std::vector<CurveDataset> datasets;
    CoincidenceModel model = CoincidenceModel::Analytic;
    std::optional<DetectorIRF> irf;  // required for AnalyticWithIrf
    BeamSplitter bs;
    bool share_t2 = true;  // applies when datasets.size() > 1
    double t1_upper_ps = 1.0e5;
};

void validate_fit_problem(const FitProblem& p);

struct FitResult {
    std::vector<double> t1_ps, t1_err_ps;
    std::vector<double> t2_ps, t2_err_ps;  // one entry when shared
    std::vector<double> ratio, ratio_err;  // T2 / (2 T1) per dataset
    double chi2_reduced = 0.0;
    bool converged = false;
    int n_iterations = 0;
};

// Levenberg-Marquardt in the transformed coordinates with complex-step
// Jacobians; deterministic (no internal randomness).
FitResult fit_coincidence_curve(const FitProblem& problem);

// 1-sigma spreads of refit parameters under residual resampling; kept separate
// so the fit itself stays deterministic.
struct BootstrapResult {
    std::vector<double> t1_sd_ps;
    std::vector<double> t2_sd_ps;
    int n_resamples = 0;
};

BootstrapResult bootstrap_coincidence_fit(const FitProblem& problem, int n_resamples,
                                          std::uint64_t seed);

// Transformed-coordinate surface exposed for verification: packed parameter
// count, the weighted-least-squares objective gradient via the complex-step
// Jacobian, and a central finite-difference reference.
int fit_parameter_count(const FitProblem& problem);
Eigen::VectorXd fit_objective_gradient(const FitProblem& problem, const Eigen::VectorXd& theta);
Eigen::VectorXd fit_objective_gradient_fd(const FitProblem& problem, const Eigen::VectorXd& theta,
                                          double rel_step);

enum class DipMode { Parallel, Orthogonal };

// Time-resolved counts around the interference peak versus detection-time
// difference dt.
struct DipDataset {
    std::vector<double> dt_ps;
    std::vector<double> counts;
    std::vector<double> sigma;  // empty -> sqrt(max(count, 1))
};

struct DipFitResult {
    double t1_ps = 0.0, t1_err_ps = 0.0;
    double t2_ps = 0.0, t2_err_ps = 0.0;  // NaN in Orthogonal mode
    double amplitude = 0.0, amplitude_err = 0.0;
    double weight = 0.0, weight_err = 0.0;  // interference weight, fixed 0 when Orthogonal
    double floor_counts = 0.0, floor_err = 0.0;
    double chi2_reduced = 0.0;
    bool converged = false;
    int n_iterations = 0;
};

// Fits amp * (exp(-|dt|/T1) - w * exp(-2|dt|/T2)) + floor convolved with the
// detector IRF. Parallel mode frees the interference weight w (w = 1 gives an
// exact zero at dt = 0, w = 0 the flat-top Laplace shape); Orthogonal mode
// pins w = 0. Data must cover at least +-3 T1 around zero, else ConfigError.
DipFitResult fit_dip_shape(const DipDataset& data, const DetectorIRF& irf, DipMode mode,
                           bool fit_floor = false);

struct LifetimeFit {
    double t1_ps = 0.0;
    double t1_err_ps = 0.0;
    double window_lo_ps = 0.0, window_hi_ps = 0.0;  // central-90%-mass window used
    double chi2_reduced = 0.0;                      // exponential-shape GOF over ~20 bins
    bool shape_ok = false;  // false when the single-exponential hypothesis is rejected
};

// Maximum-likelihood single-exponential lifetime from raw arrival times: the
// truncated-exponential mean equation on the central 90% mass window is solved
// by bisection. Requires >= 100 samples. Degenerate (constant) input or a
// boundary solution is reported with shape_ok = false.
LifetimeFit fit_exponential_lifetime(std::vector<double> arrival_ps);

}  // namespace homsim
