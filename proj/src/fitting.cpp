#include "homsim/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>

#include "homsim/rng.hpp"

namespace homsim {

namespace {

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
S logistic(const S& b) {
    return 1.0 / (1.0 + std::exp(-b));
}

double logit(double v) { return std::log(v / (1.0 - v)); }

// ---- Levenberg-Marquardt on weighted residuals, complex-step Jacobian ----

struct LmOutcome {
    Eigen::VectorXd x;
    Eigen::MatrixXd cov;
    double chi2 = 0.0;
    int iters = 0;
    bool converged = false;
};

template <class Fn>
Eigen::MatrixXd cs_jacobian(const Fn& fn, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& r0) {
    constexpr double h = 1e-200;
    VecX<std::complex<double>> xc = x.cast<std::complex<double>>();
    Eigen::MatrixXd jac(r0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        xc(j) = std::complex<double>(x(j), h);
        const VecX<std::complex<double>> rc = fn(xc);
        jac.col(j) = rc.imag() / h;
        xc(j) = std::complex<double>(x(j), 0.0);
    }
    return jac;
}

template <class Fn>
LmOutcome lm_minimize(const Fn& fn, Eigen::VectorXd x,
                      const std::function<void(Eigen::VectorXd&)>& project,
                      int max_iter = 500) {
    if (project) project(x);
    Eigen::VectorXd r = fn(x);
    double chi2 = r.squaredNorm();
    Eigen::MatrixXd jac = cs_jacobian(fn, x, r);
    double lambda = 1e-3;

    LmOutcome out;
    for (; out.iters < max_iter && !out.converged; ++out.iters) {
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        if (grad.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, chi2)) {
            out.converged = true;
            break;
        }
        // absolute floor on the damping diagonal: a near-flat direction must
        // not invite an unbounded step
        const double max_diag = std::max(jtj.diagonal().maxCoeff(), 1e-300);
        Eigen::MatrixXd damped = jtj;
        for (Eigen::Index d = 0; d < damped.rows(); ++d)
            damped(d, d) += lambda * std::max(jtj(d, d), 1e-8 * max_diag);
        Eigen::VectorXd step = damped.ldlt().solve(-grad);
        // parameters live in log/logit coordinates, so cap any single move
        const double step_max = step.cwiseAbs().maxCoeff();
        if (step_max > 2.0) step *= 2.0 / step_max;
        Eigen::VectorXd x_try = x + step;
        if (project) project(x_try);
        const Eigen::VectorXd r_try = fn(x_try);
        const double chi2_try = r_try.squaredNorm();
        if (chi2_try < chi2) {
            const double rel =
                ((x_try - x).cwiseAbs().array() / (x.cwiseAbs().array() + 1e-12)).maxCoeff();
            x = x_try;
            r = r_try;
            chi2 = chi2_try;
            jac = cs_jacobian(fn, x, r);
            lambda = std::max(lambda / 3.0, 1e-12);
            // a micro step under heavy damping is stagnation, not convergence
            if (rel < 1e-8 && lambda <= 1e-2) out.converged = true;
        } else {
            lambda *= 2.0;
            if (lambda > 1e12) break;
        }
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    out.cov = jtj.ldlt().solve(Eigen::MatrixXd::Identity(jtj.rows(), jtj.cols()));
    out.x = std::move(x);
    out.chi2 = chi2;
    return out;
}

// Delta-method propagation of the transformed-parameter covariance to a
// vector of physical quantities phi(theta).
template <class Phi>
Eigen::VectorXd propagate_errors(const Phi& phi, const Eigen::VectorXd& theta,
                                 const Eigen::MatrixXd& cov) {
    constexpr double h = 1e-200;
    VecX<std::complex<double>> tc = theta.cast<std::complex<double>>();
    const Eigen::VectorXd base = phi(theta);
    Eigen::MatrixXd grad(base.size(), theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        tc(j) = std::complex<double>(theta(j), h);
        const VecX<std::complex<double>> pc = phi(tc);
        grad.col(j) = pc.imag() / h;
        tc(j) = std::complex<double>(theta(j), 0.0);
    }
    const Eigen::MatrixXd cp = grad * cov * grad.transpose();
    Eigen::VectorXd err(base.size());
    for (Eigen::Index i = 0; i < base.size(); ++i)
        err(i) = cp(i, i) > 0.0 ? std::sqrt(cp(i, i)) : 0.0;
    return err;
}

// ---- coincidence-curve fit ----

bool shared_layout(const FitProblem& p) { return p.share_t2 && p.datasets.size() > 1; }

template <class S>
struct Scales {
    S t1;
    S t2;
};

template <class S>
std::vector<Scales<S>> unpack_scales(const FitProblem& prob, const VecX<S>& theta) {
    const std::size_t d = prob.datasets.size();
    std::vector<Scales<S>> out(d);
    if (shared_layout(prob)) {
        const S t2 = std::exp(theta(0));
        for (std::size_t i = 0; i < d; ++i) {
            const S t1 = std::exp(theta(static_cast<Eigen::Index>(1 + i))) + 0.5 * t2;
            out[i] = {t1, t2};
        }
    } else {
        for (std::size_t i = 0; i < d; ++i) {
            const S t1 = std::exp(theta(static_cast<Eigen::Index>(2 * i)));
            const S t2 = 2.0 * t1 * logistic(theta(static_cast<Eigen::Index>(2 * i + 1)));
            out[i] = {t1, t2};
        }
    }
    return out;
}

// Uniform evaluation grid and precomputed interpolation targets for the
// response-convolved model; fixed per fit so Jacobians stay smooth.
struct ConvGrid {
    double x0 = 0.0;
    double step = 0.0;
    int n = 0;
    std::vector<double> kernel;
    std::vector<std::pair<int, double>> at;  // (lower index, fraction) per data point
};

ConvGrid make_conv_grid(const std::vector<double>& x, double sigma, double step) {
    ConvGrid g;
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    g.step = step;
    g.x0 = *mn - 6.0 * sigma - 2.0 * g.step;
    const double x1 = *mx + 6.0 * sigma + 2.0 * g.step;
    g.n = static_cast<int>(std::ceil((x1 - g.x0) / g.step)) + 1;

    const int half = static_cast<int>(std::ceil(6.0 * sigma / g.step));
    g.kernel.resize(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int k = -half; k <= half; ++k) {
        const double u = static_cast<double>(k) * g.step / sigma;
        const double w = std::exp(-0.5 * u * u);
        g.kernel[static_cast<std::size_t>(k + half)] = w;
        sum += w;
    }
    for (auto& w : g.kernel) w /= sum;

    g.at.reserve(x.size());
    for (const double v : x) {
        double pos = (v - g.x0) / g.step;
        int lo = static_cast<int>(std::floor(pos));
        lo = std::clamp(lo, 0, g.n - 2);
        g.at.emplace_back(lo, pos - static_cast<double>(lo));
    }
    return g;
}

template <class S>
void convolve_clamped(const std::vector<double>& kernel, const VecX<S>& y, VecX<S>& out) {
    const int n = static_cast<int>(y.size());
    const int half = (static_cast<int>(kernel.size()) - 1) / 2;
    out.resize(n);
    for (int i = 0; i < n; ++i) {
        S acc(0.0);
        for (int k = -half; k <= half; ++k) {
            const int j = std::clamp(i + k, 0, n - 1);
            acc += kernel[static_cast<std::size_t>(k + half)] * y(j);
        }
        out(i) = acc;
    }
}

struct CurveEval {
    const FitProblem* prob;
    std::vector<ConvGrid> grids;  // one per dataset when the model is convolved
    Eigen::Index n_residuals = 0;

    explicit CurveEval(const FitProblem& p) : prob(&p) {
        for (const auto& ds : p.datasets) n_residuals += static_cast<Eigen::Index>(ds.p.size());
        if (p.model == CoincidenceModel::AnalyticWithIrf) {
            const double sigma = p.irf->fwhm_ps * kFwhmToSigma;
            for (const auto& ds : p.datasets)
                grids.push_back(make_conv_grid(ds.tau_ps, sigma, sigma / 5.0));
        }
    }

    template <class S>
    VecX<S> operator()(const VecX<S>& theta) const {
        const auto scales = unpack_scales(*prob, theta);
        VecX<S> r(n_residuals);
        Eigen::Index idx = 0;
        for (std::size_t i = 0; i < prob->datasets.size(); ++i) {
            const auto& ds = prob->datasets[i];
            const S t1 = scales[i].t1;
            const S t2 = scales[i].t2;
            if (prob->model == CoincidenceModel::Analytic) {
                for (std::size_t j = 0; j < ds.p.size(); ++j) {
                    const S m = kernels::coincidence_kernel(ds.tau_ps[j], t1, t2, prob->bs.r,
                                                            prob->bs.t);
                    r(idx++) = (m - ds.p[j]) / ds.sigma[j];
                }
            } else {
                const auto& g = grids[i];
                VecX<S> y(g.n);
                for (int k = 0; k < g.n; ++k) {
                    const double tau = g.x0 + static_cast<double>(k) * g.step;
                    y(k) = kernels::coincidence_kernel(tau, t1, t2, prob->bs.r, prob->bs.t);
                }
                VecX<S> z;
                convolve_clamped(g.kernel, y, z);
                for (std::size_t j = 0; j < ds.p.size(); ++j) {
                    const auto [lo, frac] = g.at[j];
                    const S m = z(lo) + frac * (z(lo + 1) - z(lo));
                    r(idx++) = (m - ds.p[j]) / ds.sigma[j];
                }
            }
        }
        return r;
    }
};

struct ScaleGuess {
    double t1;
    double t2;
};

ScaleGuess initial_scales(const CurveDataset& ds, const BeamSplitter& bs, double t1_upper) {
    const double rt2 = 2.0 * bs.r * bs.t;
    const double kappa = rt2 / (1.0 - rt2);

    std::size_t i0 = 0;
    for (std::size_t j = 1; j < ds.tau_ps.size(); ++j)
        if (std::fabs(ds.tau_ps[j]) < std::fabs(ds.tau_ps[i0])) i0 = j;
    const double v0 = std::clamp((1.0 - 2.0 * ds.p[i0]) / kappa, 1e-3, 0.999);

    // scale where P first reaches 0.45, i.e. kappa V drops to 0.1
    double t1 = 0.0;
    std::vector<std::size_t> order(ds.tau_ps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(ds.tau_ps[a]) < std::fabs(ds.tau_ps[b]);
    });
    for (const auto j : order) {
        const double x = std::fabs(ds.tau_ps[j]);
        if (x > 0.0 && ds.p[j] >= 0.45 && kappa * v0 > 0.1) {
            const double l = std::log(kappa * v0 / 0.1);
            if (l > 0.0) t1 = 2.0 * x / l;
            break;
        }
    }
    if (!(t1 > 0.0)) {
        double mx = 0.0;
        for (const double x : ds.tau_ps) mx = std::max(mx, std::fabs(x));
        t1 = mx > 0.0 ? mx / 2.0 : 100.0;
    }
    t1 = std::clamp(t1, 1.0, t1_upper);
    const double t2 = std::clamp(2.0 * t1 * v0, 0.02 * t1, 1.98 * t1);
    return {t1, t2};
}

Eigen::VectorXd initial_theta(const FitProblem& prob) {
    const std::size_t d = prob.datasets.size();
    std::vector<ScaleGuess> guesses(d);
    for (std::size_t i = 0; i < d; ++i)
        guesses[i] = initial_scales(prob.datasets[i], prob.bs, prob.t1_upper_ps);

    if (shared_layout(prob)) {
        double t2 = 0.0;
        for (const auto& s : guesses) t2 += s.t2;
        t2 /= static_cast<double>(d);
        Eigen::VectorXd theta(static_cast<Eigen::Index>(1 + d));
        theta(0) = std::log(t2);
        for (std::size_t i = 0; i < d; ++i)
            theta(static_cast<Eigen::Index>(1 + i)) =
                std::log(std::max(guesses[i].t1 - 0.5 * t2, 0.05 * guesses[i].t1));
        return theta;
    }
    Eigen::VectorXd theta(static_cast<Eigen::Index>(2 * d));
    for (std::size_t i = 0; i < d; ++i) {
        theta(static_cast<Eigen::Index>(2 * i)) = std::log(guesses[i].t1);
        theta(static_cast<Eigen::Index>(2 * i + 1)) =
            logit(std::clamp(guesses[i].t2 / (2.0 * guesses[i].t1), 1e-3, 1.0 - 1e-3));
    }
    return theta;
}

std::function<void(Eigen::VectorXd&)> bound_projection(const FitProblem& prob) {
    const double upper = prob.t1_upper_ps;
    if (shared_layout(prob)) {
        return [upper](Eigen::VectorXd& x) {
            x(0) = std::min(x(0), std::log(2.0 * upper));
            const double t2 = std::exp(x(0));
            const double cap = std::max(upper - 0.5 * t2, 1e-9 * upper);
            for (Eigen::Index i = 1; i < x.size(); ++i) x(i) = std::min(x(i), std::log(cap));
        };
    }
    return [upper](Eigen::VectorXd& x) {
        for (Eigen::Index i = 0; i < x.size(); i += 2) x(i) = std::min(x(i), std::log(upper));
    };
}

}  // namespace

void validate_fit_problem(const FitProblem& p) {
    if (p.datasets.empty()) throw ConfigError("fit needs at least one dataset");
    double min_abs_tau = std::numeric_limits<double>::infinity();
    for (const auto& ds : p.datasets) {
        if (ds.p.size() < 4) throw ConfigError("each dataset needs at least 4 points");
        if (ds.tau_ps.size() != ds.p.size() || ds.sigma.size() != ds.p.size())
            throw ConfigError("dataset columns must have equal length");
        for (std::size_t j = 0; j < ds.p.size(); ++j) {
            if (!std::isfinite(ds.tau_ps[j]) || !std::isfinite(ds.p[j]))
                throw ConfigError("dataset contains non-finite values");
            if (!(ds.sigma[j] > 0.0)) throw ConfigError("dataset uncertainties must be positive");
            min_abs_tau = std::min(min_abs_tau, std::fabs(ds.tau_ps[j]));
        }
    }
    if (p.model == CoincidenceModel::AnalyticWithIrf && !p.irf)
        throw ConfigError("convolved model requires a detector response");
    if (p.irf && !(p.irf->fwhm_ps > 0.0))
        throw ConfigError("detector response fwhm must be positive");
    if (!(p.bs.r >= 0.3 && p.bs.r <= 0.7 && p.bs.t >= 0.3 && p.bs.t <= 0.7 &&
          std::fabs(p.bs.r + p.bs.t - 1.0) <= 1e-12))
        throw ConfigError("fit supports beamsplitters with R, T in [0.3, 0.7] only");
    if (!(p.t1_upper_ps > 0.0)) throw ConfigError("t1 upper bound must be positive");
    if (min_abs_tau > 5.0 * p.t1_upper_ps)
        throw ConfigError("degenerate data: every |tau| exceeds 5 x the T1 bound, "
                          "the curve shape is unidentifiable");
}

int fit_parameter_count(const FitProblem& problem) {
    const auto d = static_cast<int>(problem.datasets.size());
    return shared_layout(problem) ? d + 1 : 2 * d;
}

FitResult fit_coincidence_curve(const FitProblem& problem) {
    validate_fit_problem(problem);
    const CurveEval eval(problem);
    const LmOutcome lm = lm_minimize(eval, initial_theta(problem), bound_projection(problem));

    const std::size_t d = problem.datasets.size();
    const bool shared = shared_layout(problem);
    const std::size_t n_t2 = shared ? 1 : d;

    // physical quantities: t1 per dataset, t2 (one per dataset or shared), ratios
    auto phi = [&](const auto& theta) {
        using S = std::decay_t<decltype(theta(0))>;
        const auto scales = unpack_scales(problem, VecX<S>(theta));
        VecX<S> out(static_cast<Eigen::Index>(d + n_t2 + d));
        for (std::size_t i = 0; i < d; ++i) out(static_cast<Eigen::Index>(i)) = scales[i].t1;
        for (std::size_t i = 0; i < n_t2; ++i)
            out(static_cast<Eigen::Index>(d + i)) = scales[i].t2;
        for (std::size_t i = 0; i < d; ++i)
            out(static_cast<Eigen::Index>(d + n_t2 + i)) =
                scales[i].t2 / (2.0 * scales[i].t1);
        return out;
    };
    const Eigen::VectorXd values = phi(lm.x);
    const Eigen::VectorXd errors = propagate_errors(phi, lm.x, lm.cov);

    FitResult res;
    for (std::size_t i = 0; i < d; ++i) {
        res.t1_ps.push_back(values(static_cast<Eigen::Index>(i)));
        res.t1_err_ps.push_back(errors(static_cast<Eigen::Index>(i)));
    }
    for (std::size_t i = 0; i < n_t2; ++i) {
        res.t2_ps.push_back(values(static_cast<Eigen::Index>(d + i)));
        res.t2_err_ps.push_back(errors(static_cast<Eigen::Index>(d + i)));
    }
    for (std::size_t i = 0; i < d; ++i) {
        res.ratio.push_back(values(static_cast<Eigen::Index>(d + n_t2 + i)));
        res.ratio_err.push_back(errors(static_cast<Eigen::Index>(d + n_t2 + i)));
    }
    Eigen::Index n_points = 0;
    for (const auto& ds : problem.datasets) n_points += static_cast<Eigen::Index>(ds.p.size());
    const auto dof = std::max<Eigen::Index>(1, n_points - lm.x.size());
    res.chi2_reduced = lm.chi2 / static_cast<double>(dof);
    res.converged = lm.converged;
    res.n_iterations = lm.iters;
    return res;
}

Eigen::VectorXd fit_objective_gradient(const FitProblem& problem, const Eigen::VectorXd& theta) {
    validate_fit_problem(problem);
    const CurveEval eval(problem);
    const Eigen::VectorXd r = eval(theta);
    const Eigen::MatrixXd jac = cs_jacobian(eval, theta, r);
    return 2.0 * jac.transpose() * r;
}

Eigen::VectorXd fit_objective_gradient_fd(const FitProblem& problem, const Eigen::VectorXd& theta,
                                          double rel_step) {
    validate_fit_problem(problem);
    const CurveEval eval(problem);
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double h = rel_step * std::max(std::fabs(theta(j)), 1.0);
        Eigen::VectorXd tp = theta;
        Eigen::VectorXd tm = theta;
        tp(j) += h;
        tm(j) -= h;
        g(j) = (eval(tp).squaredNorm() - eval(tm).squaredNorm()) / (2.0 * h);
    }
    return g;
}

BootstrapResult bootstrap_coincidence_fit(const FitProblem& problem, int n_resamples,
                                          std::uint64_t seed) {
    if (n_resamples < 2) throw ConfigError("bootstrap needs at least 2 resamples");
    validate_fit_problem(problem);

    const FitResult base = fit_coincidence_curve(problem);
    const std::size_t d = problem.datasets.size();

    // rebuild the transformed solution, then model values and standardized
    // residual pools from the same evaluator the fit used
    Eigen::VectorXd theta(fit_parameter_count(problem));
    if (shared_layout(problem)) {
        theta(0) = std::log(base.t2_ps[0]);
        for (std::size_t i = 0; i < d; ++i)
            theta(static_cast<Eigen::Index>(1 + i)) =
                std::log(std::max(base.t1_ps[i] - 0.5 * base.t2_ps[0], 1e-9 * base.t1_ps[i]));
    } else {
        for (std::size_t i = 0; i < d; ++i) {
            theta(static_cast<Eigen::Index>(2 * i)) = std::log(base.t1_ps[i]);
            theta(static_cast<Eigen::Index>(2 * i + 1)) =
                logit(std::clamp(base.t2_ps[i] / (2.0 * base.t1_ps[i]), 1e-9, 1.0 - 1e-9));
        }
    }
    const CurveEval eval(problem);
    const Eigen::VectorXd resid = eval(theta);
    std::vector<std::vector<double>> pools(d);
    std::vector<std::vector<double>> model(d);
    {
        Eigen::Index idx = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const auto& ds = problem.datasets[i];
            model[i].resize(ds.p.size());
            pools[i].resize(ds.p.size());
            for (std::size_t j = 0; j < ds.p.size(); ++j, ++idx) {
                model[i][j] = ds.p[j] + ds.sigma[j] * resid(idx);
                pools[i][j] = -resid(idx);
            }
        }
    }

    std::vector<std::vector<double>> t1_draws(d);
    const std::size_t n_t2 = base.t2_ps.size();
    std::vector<std::vector<double>> t2_draws(n_t2);
    for (int rep = 0; rep < n_resamples; ++rep) {
        RngStream rng(seed, static_cast<std::uint64_t>(rep), rng_tag::kNoise);
        FitProblem pb = problem;
        for (std::size_t i = 0; i < d; ++i) {
            auto& ds = pb.datasets[i];
            const auto n = ds.p.size();
            for (std::size_t j = 0; j < n; ++j) {
                const auto pick = static_cast<std::size_t>(rng.uniform01() *
                                                           static_cast<double>(n));
                ds.p[j] = model[i][j] + ds.sigma[j] * pools[i][std::min(pick, n - 1)];
            }
        }
        const FitResult r = fit_coincidence_curve(pb);
        for (std::size_t i = 0; i < d; ++i) t1_draws[i].push_back(r.t1_ps[i]);
        for (std::size_t i = 0; i < n_t2; ++i) t2_draws[i].push_back(r.t2_ps[i]);
    }

    auto sd = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                            static_cast<double>(v.size());
        double acc = 0.0;
        for (const double x : v) acc += (x - mean) * (x - mean);
        return std::sqrt(acc / static_cast<double>(v.size() - 1));
    };
    BootstrapResult out;
    out.n_resamples = n_resamples;
    for (const auto& v : t1_draws) out.t1_sd_ps.push_back(sd(v));
    for (const auto& v : t2_draws) out.t2_sd_ps.push_back(sd(v));
    return out;
}

// ---- dip-shape fit ----

namespace {

struct DipEval {
    const DipDataset* data;
    std::vector<double> sigma;
    DipMode mode;
    bool fit_floor;
    bool convolve;
    ConvGrid grid;

    template <class S>
    VecX<S> operator()(const VecX<S>& theta) const {
        const S t1 = std::exp(theta(0));
        S t2(0.0);
        S w(0.0);
        Eigen::Index k = 1;
        if (mode == DipMode::Parallel) {
            t2 = 2.0 * t1 * logistic(theta(1));
            w = logistic(theta(2));  // interference weight is physical in [0, 1]
            k = 3;
        }
        const S amp = std::exp(theta(k));
        const S floor_c = fit_floor ? theta(k + 1) : S(0.0);

        auto shape = [&](double dt) {
            const double x = std::fabs(dt);
            S v = std::exp(S(-x) / t1);
            if (mode == DipMode::Parallel) v -= w * std::exp(S(-2.0 * x) / t2);
            return v;
        };

        const auto n = static_cast<Eigen::Index>(data->dt_ps.size());
        VecX<S> r(n);
        if (!convolve) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const S m = amp * shape(data->dt_ps[static_cast<std::size_t>(j)]) + floor_c;
                r(j) = (m - data->counts[static_cast<std::size_t>(j)]) /
                       sigma[static_cast<std::size_t>(j)];
            }
            return r;
        }
        VecX<S> y(grid.n);
        for (int i = 0; i < grid.n; ++i)
            y(i) = shape(grid.x0 + static_cast<double>(i) * grid.step);
        VecX<S> z;
        convolve_clamped(grid.kernel, y, z);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto [lo, frac] = grid.at[static_cast<std::size_t>(j)];
            const S m = amp * (z(lo) + frac * (z(lo + 1) - z(lo))) + floor_c;
            r(j) = (m - data->counts[static_cast<std::size_t>(j)]) /
                   sigma[static_cast<std::size_t>(j)];
        }
        return r;
    }
};

}  // namespace

DipFitResult fit_dip_shape(const DipDataset& data, const DetectorIRF& irf, DipMode mode,
                           bool fit_floor) {
    const std::size_t n = data.dt_ps.size();
    if (n < 8) throw ConfigError("dip fit needs at least 8 points");
    if (data.counts.size() != n || (!data.sigma.empty() && data.sigma.size() != n))
        throw ConfigError("dip dataset columns must have equal length");
    if (!(irf.fwhm_ps > 0.0)) throw ConfigError("detector response fwhm must be positive");

    DipEval eval;
    eval.data = &data;
    eval.mode = mode;
    eval.fit_floor = fit_floor;
    eval.sigma = data.sigma;
    if (eval.sigma.empty()) {
        eval.sigma.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            eval.sigma[j] = std::sqrt(std::max(data.counts[j], 1.0));
    }

    // starting scales from the data
    double cmax = data.counts[0];
    double cmin = data.counts[0];
    double xmax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        cmax = std::max(cmax, data.counts[j]);
        cmin = std::min(cmin, data.counts[j]);
        xmax = std::max(xmax, std::fabs(data.dt_ps[j]));
    }
    const double floor0 = fit_floor ? cmin : 0.0;
    const double amp0 = std::max(cmax - floor0, 1e-6);

    // 1/e crossing nearest zero, excluding any central dip: walk outward in
    // |dt| starting from the count maximum
    double x_peak = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (data.counts[j] == cmax) x_peak = std::fabs(data.dt_ps[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(data.dt_ps[a]) < std::fabs(data.dt_ps[b]);
    });
    double t1_0 = xmax / 3.0;
    for (const std::size_t j : order) {
        const double x = std::fabs(data.dt_ps[j]);
        if (x <= x_peak) continue;
        if (data.counts[j] - floor0 < amp0 / std::exp(1.0)) {
            t1_0 = x;
            break;
        }
    }
    t1_0 = std::clamp(t1_0, 1.0, 1e6);

    // kernels narrower than half a data spacing act as a delta
    std::vector<double> xs = data.dt_ps;
    std::sort(xs.begin(), xs.end());
    double spacing = xmax;
    for (std::size_t j = 1; j < xs.size(); ++j)
        if (xs[j] > xs[j - 1]) spacing = std::min(spacing, xs[j] - xs[j - 1]);
    const double sigma_irf = irf.fwhm_ps * kFwhmToSigma;
    eval.convolve = 6.0 * sigma_irf >= 0.5 * spacing;
    if (eval.convolve) {
        // the grid must resolve both the kernel and the cusp at zero
        const double step = std::min(sigma_irf / 5.0, std::max(t1_0 / 50.0, 1e-3));
        eval.grid = make_conv_grid(data.dt_ps, sigma_irf, step);
    }

    const int np = (mode == DipMode::Parallel ? 4 : 2) + (fit_floor ? 1 : 0);
    Eigen::VectorXd theta(np);
    theta(0) = std::log(t1_0);
    Eigen::Index k = 1;
    if (mode == DipMode::Parallel) {
        theta(1) = logit(0.35);
        // crude interference weight from the center-to-peak contrast
        double c0 = cmax;
        for (std::size_t j = 0; j < n; ++j)
            if (std::fabs(data.dt_ps[j]) <= spacing) c0 = std::min(c0, data.counts[j]);
        theta(2) = logit(std::clamp(1.0 - (c0 - floor0) / amp0, 0.05, 0.95));
        k = 3;
    }
    theta(k) = std::log(amp0);
    if (fit_floor) theta(k + 1) = floor0;

    // the t2 coordinate has a spurious collapse basin (t2 -> 0 turns the
    // second decay into a point notch), so in Parallel mode run from several
    // ratio starts and keep the lowest chi2
    LmOutcome lm = lm_minimize(eval, theta, {});
    if (mode == DipMode::Parallel) {
        for (const double ratio0 : {0.15, 0.6, 0.9}) {
            Eigen::VectorXd alt = theta;
            alt(1) = logit(ratio0);
            const LmOutcome trial = lm_minimize(eval, alt, {});
            if (trial.chi2 < lm.chi2) lm = trial;
        }
    }

    auto phi = [&](const auto& th) {
        using S = std::decay_t<decltype(th(0))>;
        const S t1 = std::exp(th(0));
        VecX<S> out(5);
        out(0) = t1;
        if (mode == DipMode::Parallel) {
            out(1) = 2.0 * t1 * logistic(th(1));
            out(2) = std::exp(th(3));
            out(3) = logistic(th(2));
            out(4) = fit_floor ? th(4) : S(0.0);
        } else {
            out(1) = S(0.0);
            out(2) = std::exp(th(1));
            out(3) = S(0.0);
            out(4) = fit_floor ? th(2) : S(0.0);
        }
        return out;
    };
    const Eigen::VectorXd values = phi(lm.x);
    const Eigen::VectorXd errors = propagate_errors(phi, lm.x, lm.cov);

    DipFitResult res;
    res.t1_ps = values(0);
    res.t1_err_ps = errors(0);
    if (mode == DipMode::Parallel) {
        res.t2_ps = values(1);
        res.t2_err_ps = errors(1);
        res.weight = values(3);
        res.weight_err = errors(3);
    } else {
        res.t2_ps = std::numeric_limits<double>::quiet_NaN();
        res.t2_err_ps = std::numeric_limits<double>::quiet_NaN();
        res.weight = 0.0;
        res.weight_err = 0.0;
    }
    res.amplitude = values(2);
    res.amplitude_err = errors(2);
    res.floor_counts = values(4);
    res.floor_err = fit_floor ? errors(4) : 0.0;
    const auto dof = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(n) - np);
    res.chi2_reduced = lm.chi2 / static_cast<double>(dof);
    res.converged = lm.converged;
    res.n_iterations = lm.iters;

    if (xmax < 3.0 * res.t1_ps)
        throw ConfigError("dip data window narrower than 3 x the fitted T1");
    return res;
}

// ---- exponential lifetime ----

LifetimeFit fit_exponential_lifetime(std::vector<double> arrival_ps) {
    if (arrival_ps.size() < 100)
        throw ConfigError("lifetime fit needs at least 100 arrival times");
    for (const double v : arrival_ps)
        if (!std::isfinite(v)) throw ConfigError("arrival times must be finite");
    std::sort(arrival_ps.begin(), arrival_ps.end());

    const std::size_t n = arrival_ps.size();
    const double lo = arrival_ps[(n - 1) * 5 / 100];
    const double hi = arrival_ps[(n - 1) * 95 / 100];

    LifetimeFit out;
    out.window_lo_ps = lo;
    out.window_hi_ps = hi;
    const double len = hi - lo;
    if (!(len > 0.0)) {
        out.shape_ok = false;  // constant input, no decay scale
        return out;
    }

    std::vector<double> win;
    win.reserve(n);
    for (const double v : arrival_ps)
        if (v >= lo && v <= hi) win.push_back(v - lo);
    const double mean = std::accumulate(win.begin(), win.end(), 0.0) /
                        static_cast<double>(win.size());

    // truncated-exponential MLE: solve h(y) = 1/y - 1/expm1(y) = mean/len, y = lambda*len
    const double target = mean / len;
    auto h = [](double y) { return 1.0 / y - 1.0 / std::expm1(y); };
    double y_lo = 1e-9;
    double y_hi = 700.0;
    bool boundary = false;
    if (target >= h(y_lo)) {
        boundary = true;  // flat or rising distribution, no exponential decay
        out.t1_ps = std::numeric_limits<double>::infinity();
    } else if (target <= h(y_hi)) {
        boundary = true;
        out.t1_ps = len / y_hi;
    } else {
        for (int it = 0; it < 200; ++it) {
            const double y = 0.5 * (y_lo + y_hi);
            (h(y) > target ? y_lo : y_hi) = y;
        }
        const double y = 0.5 * (y_lo + y_hi);
        const double lambda = y / len;
        out.t1_ps = 1.0 / lambda;
        // per-sample Fisher information of the truncated exponential
        const double e = std::expm1(y);
        const double info = 1.0 / (lambda * lambda) - len * len * (e + 1.0) / (e * e);
        if (info > 0.0)
            out.t1_err_ps = 1.0 / (lambda * lambda *
                                   std::sqrt(static_cast<double>(win.size()) * info));
    }

    // shape test: chi-squared of ~20 equal-width bins against the fitted law
    const int n_bins = static_cast<int>(std::min<std::size_t>(20, win.size() / 10));
    if (!boundary && n_bins >= 5) {
        const double lambda = 1.0 / out.t1_ps;
        const double norm = -std::expm1(-lambda * len);
        std::vector<double> observed(static_cast<std::size_t>(n_bins), 0.0);
        const double bw = len / n_bins;
        for (const double v : win) {
            auto b = static_cast<std::size_t>(v / bw);
            if (b >= observed.size()) b = observed.size() - 1;
            observed[b] += 1.0;
        }
        double chi2 = 0.0;
        for (int b = 0; b < n_bins; ++b) {
            const double x0 = b * bw;
            const double x1 = x0 + bw;
            const double expd = static_cast<double>(win.size()) *
                                (std::exp(-lambda * x0) - std::exp(-lambda * x1)) / norm;
            const double diff = observed[static_cast<std::size_t>(b)] - expd;
            chi2 += diff * diff / std::max(expd, 1e-9);
        }
        out.chi2_reduced = chi2 / static_cast<double>(n_bins - 2);
        out.shape_ok = out.chi2_reduced < 3.0;
    } else {
        out.chi2_reduced = std::numeric_limits<double>::infinity();
        out.shape_ok = false;
    }
    return out;
}

}  // namespace homsim
