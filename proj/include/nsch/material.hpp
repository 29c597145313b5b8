#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsch {

// Invalid model parameters or a violated structural hypothesis.
class ModelError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// A singular function evaluated at or beyond its physical endpoints.
class SingularArgument : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// phi lives on (-1, 1) with anchor 0, psi on (0, 1) with anchor 1/2.
enum class Phase { phi, psi };

double phase_lower(Phase p);
double phase_upper(Phase p);
double phase_anchor(Phase p);
const char* phase_name(Phase p);

struct Derivs {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

// Piecewise cubic Hermite table of a convex primitive: given g, stores H with H'' = g,
// H(anchor) = H'(anchor) = 0. H' comes from cumulative adaptive quadrature of g; H is the
// exact antiderivative of the Hermite interpolant of H'; H'' is g itself. Outside [lo, hi]
// the table is continued by its second-order Taylor polynomial at the nearest end.
class ConvexTable {
  public:
    ConvexTable(const std::function<double(double)>& g, double lo, double hi, double anchor,
                std::vector<double> breakpoints, int nodes_per_piece = 160, double tol = 1e-12);

    Derivs eval(double s) const;
    double lo() const { return x_.front(); }
    double hi() const { return x_.back(); }
    const std::vector<double>& nodes() const { return x_; }

  private:
    std::function<double(double)> g_;
    std::vector<double> x_, v_, d1_, d2_;
};

class Mobility;

class Potential {
  public:
    virtual ~Potential() = default;
    virtual Phase phase() const = 0;
    // Value and derivatives on the open interval; SingularArgument otherwise.
    virtual Derivs eval(double s) const = 0;
    // Value on the closed interval (0 ln 0 = 0); SingularArgument outside it.
    virtual double value_closed(double s) const = 0;
    // Lower bound for F'' on the open interval.
    virtual double convexity_bound() const = 0;
    // F''(s) m(s), continuous up to the endpoints when the pair is compatible.
    virtual double second_times_mobility(const Mobility& m, double s) const;
};

// (theta/2)[(1+s)ln(1+s) + (1-s)ln(1-s)] for phi, (theta/2)[s ln s + (1-s)ln(1-s) + ln 2] for psi.
class LogPotential final : public Potential {
  public:
    LogPotential(Phase p, double theta);
    Phase phase() const override { return phase_; }
    Derivs eval(double s) const override;
    double value_closed(double s) const override;
    double convexity_bound() const override;
    double second_times_mobility(const Mobility& m, double s) const override;
    double theta() const { return theta_; }

  private:
    Phase phase_;
    double theta_;
};

// F^eps = tilde F^eps (tabulated) + c_eps * F_ln.
class RegularizedPotential final : public Potential {
  public:
    RegularizedPotential(std::shared_ptr<const ConvexTable> tilde, double c_eps,
                         std::shared_ptr<const LogPotential> ln);
    Phase phase() const override { return ln_->phase(); }
    Derivs eval(double s) const override;
    double value_closed(double s) const override;
    double convexity_bound() const override;
    double c_eps() const { return c_eps_; }
    const ConvexTable& tilde() const { return *tilde_; }
    const LogPotential& ln() const { return *ln_; }

  private:
    std::shared_ptr<const ConvexTable> tilde_;
    double c_eps_;
    std::shared_ptr<const LogPotential> ln_;
    double bound_;
};

class Mobility {
  public:
    virtual ~Mobility() = default;
    virtual Phase phase() const = 0;
    virtual double operator()(double s) const = 0;
    virtual double derivative(double s) const = 0;
    virtual bool degenerate() const = 0;
    virtual double floor() const = 0;
    virtual double ceiling() const = 0;
};

class ConstantMobility final : public Mobility {
  public:
    ConstantMobility(Phase p, double value);
    Phase phase() const override { return phase_; }
    double operator()(double) const override { return value_; }
    double derivative(double) const override { return 0.0; }
    bool degenerate() const override { return false; }
    double floor() const override { return value_; }
    double ceiling() const override { return value_; }

  private:
    Phase phase_;
    double value_;
};

// (1-s^2)^k for phi, (s(1-s))^k for psi; zero outside the physical interval.
class PolynomialMobility final : public Mobility {
  public:
    PolynomialMobility(Phase p, int k);
    Phase phase() const override { return phase_; }
    double operator()(double s) const override;
    double derivative(double s) const override;
    bool degenerate() const override { return true; }
    double floor() const override { return 0.0; }
    double ceiling() const override;
    int k() const { return k_; }
    // Base polynomial q with m = q^k.
    double base(double s) const;

  private:
    Phase phase_;
    int k_;
};

// 2 eps outside [lo + delta1, hi - delta2], eps + m inside.
class RegularizedMobility final : public Mobility {
  public:
    RegularizedMobility(std::shared_ptr<const Mobility> base, double eps, double delta1,
                        double delta2);
    Phase phase() const override { return base_->phase(); }
    double operator()(double s) const override;
    double derivative(double s) const override;
    bool degenerate() const override { return false; }
    double floor() const override { return eps_; }
    double ceiling() const override;
    double epsilon() const { return eps_; }
    double delta1() const { return delta1_; }
    double delta2() const { return delta2_; }
    const Mobility& base() const { return *base_; }

  private:
    std::shared_ptr<const Mobility> base_;
    double eps_, delta1_, delta2_;
};

// W'' = 1/m with W(anchor) = W'(anchor) = 0.
class EntropyFunction {
  public:
    explicit EntropyFunction(std::shared_ptr<const Mobility> m);

    // (W, W') on the open interval; constant and regularized mobilities accept any s.
    Derivs eval(double s) const;
    // W on the closed interval; +inf where it diverges at an endpoint.
    double value_closed(double s) const;
    const Mobility& mobility() const { return *m_; }

  private:
    enum class Kind { constant, closed_form, quadrature, table };
    std::shared_ptr<const Mobility> m_;
    Kind kind_;
    std::shared_ptr<const ConvexTable> table_;
};

// sigma1(s) = sigma * (1 - s^2)^power, power = 0 meaning a constant.
struct Sigma1 {
    double sigma = 0.0;
    double power = 0.0;
    double operator()(double s) const;
    double sup() const { return sigma; }
};

struct CouplingEval {
    double value = 0.0, dphi = 0.0, dpsi = 0.0, dphiphi = 0.0, dphipsi = 0.0, dpsipsi = 0.0;
};

// G = (g1/2) psi phi^2 - (g2/4) psi (1-phi^2)^2 + (tt1/2)(1-phi^2) + (tt2/2) psi (1-psi),
// arguments clamped to [-1,1] x [0,1].
struct CouplingModel {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double tilde_theta1 = 0.0;
    double tilde_theta2 = 0.0;

    CouplingEval eval(double phi, double psi) const;
    double value(double phi, double psi) const;
    // (G(a,cc) - G(b,cc)) / (a - b) in division-free form, so a = b gives dG/dphi(a,cc).
    double secant_phi(double a, double b, double cc) const;
    // d/da of secant_phi.
    double secant_phi_da(double a, double b, double cc) const;
    // (G(cc,a) - G(cc,b)) / (a - b), division-free as above.
    double secant_psi(double cc, double a, double b) const;
    double secant_psi_da(double cc, double a, double b) const;
};

enum class MobilityKind { constant, degenerate };

struct MobilityParams {
    MobilityKind kind = MobilityKind::constant;
    double value = 1.0;  // constant kind
    int k = 1;           // degenerate kind
    bool operator==(const MobilityParams&) const = default;
};

// Plain parameter set, as read from configuration.
struct ModelParameters {
    double rho1 = 1.0, rho2 = 1.0;
    double nu1 = 1.0, nu2 = 1.0;
    double theta1 = 1.0, theta2 = 0.5;
    double tilde_theta1 = 3.0, tilde_theta2 = 0.5;
    double gamma1 = 0.5, gamma2 = 1.0;
    double beta = 1.0;
    double sigma2 = 0.0;
    double c = 0.0;
    double sigma1 = 0.0;
    double sigma1_power = 0.0;
    MobilityParams mobility_phi;
    MobilityParams mobility_psi;
    bool operator==(const ModelParameters&) const = default;
};

struct ModelSpec {
    double rho1 = 1.0, rho2 = 1.0, nu1 = 1.0, nu2 = 1.0;
    double beta = 1.0, sigma2 = 0.0, c = 0.0;
    CouplingModel coupling;
    Sigma1 sigma1;
    std::shared_ptr<const Potential> potential_phi, potential_psi;
    std::shared_ptr<const Mobility> mobility_phi, mobility_psi;
    std::shared_ptr<const EntropyFunction> entropy_phi, entropy_psi;
    // Compatibility constant: sampled sup of F''m with 5% headroom (degenerate mobilities only).
    double alpha = 0.0;

    double rho(double s) const;
    double nu(double s) const;
    double gamma() const { return 0.5 * (rho1 - rho2); }
    double theta_phi() const { return potential_phi->convexity_bound(); }
    double theta_psi() const { return potential_psi->convexity_bound(); }
    bool degenerate() const;
};

// Builds and validates a model; throws ModelError naming the violated hypothesis.
ModelSpec build_model(const ModelParameters& p);
void validate_model(const ModelSpec& spec);

// Samples on the open interval that accumulate at both endpoints.
std::vector<double> boundary_refined_samples(Phase p, int interior = 400, int levels = 12);

// sup of F''m over samples, times 1.05.
double compatibility_alpha(const Potential& f, const Mobility& m);

// Constants C with m(s) <= C (1-s^2) (phi) and m(s) <= C s(1-s) (psi); C_phi = sup|m'|,
// C_psi = 2 sup|m'| on the physical interval.
double degeneracy_constant(const Mobility& m);

struct RegularizedModel {
    double epsilon = 0.0;
    double delta_phi1 = 0.0, delta_phi2 = 0.0, delta_psi1 = 0.0, delta_psi2 = 0.0;
    double c_eps = 0.0;
    double alpha = 0.0;
    std::shared_ptr<const RegularizedMobility> m_eps_phi, m_eps_psi;
    std::shared_ptr<const ConvexTable> f_tilde_phi, f_tilde_psi;
    std::shared_ptr<const LogPotential> f_ln_phi, f_ln_psi;
    std::shared_ptr<const RegularizedPotential> f_eps_phi, f_eps_psi;
    std::shared_ptr<const EntropyFunction> w_eps_phi, w_eps_psi;
};

// Upper end of I_M = (0, min(m_phi(0), m_psi(1/2)) / 2].
double regularization_limit(const ModelSpec& spec);

// delta = inf{ s : m(endpoint +/- s) >= eps } by bisection.
double regularization_offset(const Mobility& m, double eps, bool lower_end);

RegularizedModel build_regularization(const ModelSpec& spec, double epsilon);

}  // namespace nsch
