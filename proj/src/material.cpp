#include "nsch/material.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nsch/quadrature.hpp"

namespace nsch {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void require_open(Phase p, double s, const char* what) {
    if (!(s > phase_lower(p) && s < phase_upper(p))) {
        throw SingularArgument(std::string(what) + ": argument " + fmt(s) + " outside open " +
                               phase_name(p) + " interval");
    }
}

void require_closed(Phase p, double s, const char* what) {
    if (!(s >= phase_lower(p) && s <= phase_upper(p))) {
        throw SingularArgument(std::string(what) + ": argument " + fmt(s) + " outside closed " +
                               phase_name(p) + " interval");
    }
}

// x ln x with the continuous extension at 0.
double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double clamp_phi(double s) { return std::clamp(s, -1.0, 1.0); }
double clamp_psi(double s) { return std::clamp(s, 0.0, 1.0); }

}  // namespace

double phase_lower(Phase p) { return p == Phase::phi ? -1.0 : 0.0; }
double phase_upper(Phase) { return 1.0; }
double phase_anchor(Phase p) { return p == Phase::phi ? 0.0 : 0.5; }
const char* phase_name(Phase p) { return p == Phase::phi ? "phi" : "psi"; }

// ---------------------------------------------------------------------------------------------
// ConvexTable

ConvexTable::ConvexTable(const std::function<double(double)>& g, double lo, double hi,
                         double anchor, std::vector<double> breakpoints, int nodes_per_piece,
                         double tol)
    : g_(g) {
    if (!(lo < hi) || anchor < lo || anchor > hi) {
        throw std::invalid_argument("ConvexTable: bad interval");
    }
    breakpoints.push_back(lo);
    breakpoints.push_back(hi);
    breakpoints.push_back(anchor);
    std::vector<double> cuts;
    for (double b : breakpoints) {
        if (b >= lo && b <= hi) cuts.push_back(b);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-15; }),
               cuts.end());

    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        auto pts = chebyshev_lobatto(cuts[p], cuts[p + 1], nodes_per_piece);
        std::size_t start = x_.empty() ? 0 : 1;
        x_.insert(x_.end(), pts.begin() + static_cast<long>(start), pts.end());
    }
    const std::size_t n = x_.size();
    v_.assign(n, 0.0);
    d1_.assign(n, 0.0);
    d2_.resize(n);
    for (std::size_t i = 0; i < n; ++i) d2_[i] = g(x_[i]);

    std::size_t ia = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(x_[i] - anchor) < std::abs(x_[ia] - anchor)) ia = i;
    }
    x_[ia] = anchor;

    auto integrate = [&](std::size_t i0, std::size_t i1) {
        double h = x_[i1] - x_[i0];
        double local_tol = tol * std::abs(h) / (hi - lo);
        d1_[i1] = d1_[i0] + adaptive_simpson(g, x_[i0], x_[i1], local_tol, 40);
        v_[i1] = v_[i0] + 0.5 * h * (d1_[i0] + d1_[i1]) + h * h / 12.0 * (d2_[i0] - d2_[i1]);
    };
    for (std::size_t i = ia; i + 1 < n; ++i) integrate(i, i + 1);
    for (std::size_t i = ia; i > 0; --i) integrate(i, i - 1);
}

Derivs ConvexTable::eval(double s) const {
    if (s <= x_.front() || s >= x_.back()) {
        std::size_t e = s <= x_.front() ? 0 : x_.size() - 1;
        double d = s - x_[e];
        return {v_[e] + d1_[e] * d + 0.5 * d2_[e] * d * d, d1_[e] + d2_[e] * d, d2_[e]};
    }
    auto it = std::upper_bound(x_.begin(), x_.end(), s);
    std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    double h = x_[i + 1] - x_[i];
    double t = (s - x_[i]) / h;
    double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    double f0 = d1_[i], f1 = d1_[i + 1], m0 = d2_[i] * h, m1 = d2_[i + 1] * h;

    double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2,
           h11 = t3 - t2;
    double ih00 = t - t3 + 0.5 * t4, ih10 = 0.5 * t2 - 2.0 / 3.0 * t3 + 0.25 * t4,
           ih01 = t3 - 0.5 * t4, ih11 = -t3 / 3.0 + 0.25 * t4;

    Derivs r;
    r.d1 = h00 * f0 + h10 * m0 + h01 * f1 + h11 * m1;
    r.d2 = g_(s);
    r.value = v_[i] + h * (ih00 * f0 + ih10 * m0 + ih01 * f1 + ih11 * m1);
    return r;
}

// ---------------------------------------------------------------------------------------------
// Potentials

double Potential::second_times_mobility(const Mobility& m, double s) const {
    return eval(s).d2 * m(s);
}

LogPotential::LogPotential(Phase p, double theta) : phase_(p), theta_(theta) {
    if (!(theta > 0.0) || !std::isfinite(theta)) {
        throw ModelError("(H1) potential temperature must be positive, got " + fmt(theta));
    }
}

Derivs LogPotential::eval(double s) const {
    require_open(phase_, s, "log potential");
    Derivs r;
    if (phase_ == Phase::phi) {
        double lp = std::log1p(s), lm = std::log1p(-s);
        r.value = 0.5 * theta_ * ((1.0 + s) * lp + (1.0 - s) * lm);
        r.d1 = 0.5 * theta_ * (lp - lm);
        r.d2 = theta_ / ((1.0 - s) * (1.0 + s));
    } else {
        double ls = std::log(s), lm = std::log1p(-s);
        r.value = 0.5 * theta_ * (s * ls + (1.0 - s) * lm + kLn2);
        r.d1 = 0.5 * theta_ * (ls - lm);
        r.d2 = 0.5 * theta_ / (s * (1.0 - s));
    }
    return r;
}

double LogPotential::value_closed(double s) const {
    require_closed(phase_, s, "log potential");
    if (phase_ == Phase::phi) return 0.5 * theta_ * (xlogx(1.0 + s) + xlogx(1.0 - s));
    return 0.5 * theta_ * (xlogx(s) + xlogx(1.0 - s) + kLn2);
}

double LogPotential::convexity_bound() const {
    return phase_ == Phase::phi ? theta_ : 2.0 * theta_;
}

double LogPotential::second_times_mobility(const Mobility& m, double s) const {
    if (const auto* poly = dynamic_cast<const PolynomialMobility*>(&m);
        poly && poly->phase() == phase_) {
        require_closed(phase_, s, "log potential");
        double q = poly->base(s);
        double scale = phase_ == Phase::phi ? theta_ : 0.5 * theta_;
        return scale * std::pow(q, poly->k() - 1);
    }
    return Potential::second_times_mobility(m, s);
}

RegularizedPotential::RegularizedPotential(std::shared_ptr<const ConvexTable> tilde,
                                           double c_eps, std::shared_ptr<const LogPotential> ln)
    : tilde_(std::move(tilde)), c_eps_(c_eps), ln_(std::move(ln)) {
    double gmin = kInf;
    for (double x : tilde_->nodes()) gmin = std::min(gmin, tilde_->eval(x).d2);
    bound_ = std::max(0.0, gmin) + c_eps_ * ln_->convexity_bound();
}

Derivs RegularizedPotential::eval(double s) const {
    Derivs a = tilde_->eval(s);
    Derivs b = ln_->eval(s);
    return {a.value + c_eps_ * b.value, a.d1 + c_eps_ * b.d1, a.d2 + c_eps_ * b.d2};
}

double RegularizedPotential::value_closed(double s) const {
    return tilde_->eval(s).value + c_eps_ * ln_->value_closed(s);
}

double RegularizedPotential::convexity_bound() const { return bound_; }

// ---------------------------------------------------------------------------------------------
// Mobilities

ConstantMobility::ConstantMobility(Phase p, double value) : phase_(p), value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ModelError("(H3) constant mobility must be positive and finite, got " + fmt(value));
    }
}

PolynomialMobility::PolynomialMobility(Phase p, int k) : phase_(p), k_(k) {
    if (k < 1) throw ModelError("(H3*) degeneracy exponent must be >= 1, got " + std::to_string(k));
}

double PolynomialMobility::base(double s) const {
    if (phase_ == Phase::phi) {
        s = clamp_phi(s);
        return (1.0 - s) * (1.0 + s);
    }
    s = clamp_psi(s);
    return s * (1.0 - s);
}

double PolynomialMobility::operator()(double s) const { return std::pow(base(s), k_); }

double PolynomialMobility::derivative(double s) const {
    if (s < phase_lower(phase_) || s > phase_upper(phase_)) return 0.0;
    double q = base(s);
    double dq = phase_ == Phase::phi ? -2.0 * s : 1.0 - 2.0 * s;
    return k_ * std::pow(q, k_ - 1) * dq;
}

double PolynomialMobility::ceiling() const {
    return phase_ == Phase::phi ? 1.0 : std::pow(0.25, k_);
}

RegularizedMobility::RegularizedMobility(std::shared_ptr<const Mobility> base, double eps,
                                         double delta1, double delta2)
    : base_(std::move(base)), eps_(eps), delta1_(delta1), delta2_(delta2) {}

double RegularizedMobility::operator()(double s) const {
    Phase p = base_->phase();
    if (s < phase_lower(p) + delta1_ || s > phase_upper(p) - delta2_) return 2.0 * eps_;
    return eps_ + (*base_)(s);
}

double RegularizedMobility::derivative(double s) const {
    Phase p = base_->phase();
    if (s < phase_lower(p) + delta1_ || s > phase_upper(p) - delta2_) return 0.0;
    return base_->derivative(s);
}

double RegularizedMobility::ceiling() const { return eps_ + base_->ceiling(); }

// ---------------------------------------------------------------------------------------------
// Entropy

EntropyFunction::EntropyFunction(std::shared_ptr<const Mobility> m) : m_(std::move(m)) {
    if (dynamic_cast<const ConstantMobility*>(m_.get())) {
        kind_ = Kind::constant;
    } else if (const auto* poly = dynamic_cast<const PolynomialMobility*>(m_.get())) {
        kind_ = poly->k() <= 2 ? Kind::closed_form : Kind::quadrature;
    } else if (const auto* reg = dynamic_cast<const RegularizedMobility*>(m_.get())) {
        kind_ = Kind::table;
        Phase p = reg->phase();
        double lo = phase_lower(p), hi = phase_upper(p), a = phase_anchor(p);
        std::vector<double> cuts{lo + reg->delta1(), hi - reg->delta2()};
        for (double d = reg->delta1() * 2; lo + d < a; d *= 2) cuts.push_back(lo + d);
        for (double d = reg->delta2() * 2; hi - d > a; d *= 2) cuts.push_back(hi - d);
        auto mob = m_;
        table_ = std::make_shared<ConvexTable>([mob](double s) { return 1.0 / (*mob)(s); }, lo,
                                               hi, a, cuts, 96);
    } else {
        kind_ = Kind::quadrature;
    }
}

Derivs EntropyFunction::eval(double s) const {
    Phase p = m_->phase();
    double a = phase_anchor(p);
    switch (kind_) {
        case Kind::constant: {
            double mv = (*m_)(s);
            return {(s - a) * (s - a) / (2.0 * mv), (s - a) / mv, 1.0 / mv};
        }
        case Kind::table:
            return table_->eval(s);
        case Kind::closed_form: {
            require_open(p, s, "entropy");
            int k = static_cast<const PolynomialMobility&>(*m_).k();
            Derivs r;
            if (p == Phase::phi) {
                double at = std::atanh(s);
                double q = (1.0 - s) * (1.0 + s);
                if (k == 1) {
                    r.value = 0.5 * ((1.0 + s) * std::log1p(s) + (1.0 - s) * std::log1p(-s));
                    r.d1 = at;
                } else {
                    r.value = 0.5 * s * at;
                    r.d1 = 0.5 * at + 0.5 * s / q;
                }
                r.d2 = 1.0 / std::pow(q, k);
            } else {
                double lr = std::log(s) - std::log1p(-s);
                double q = s * (1.0 - s);
                if (k == 1) {
                    r.value = s * std::log(s) + (1.0 - s) * std::log1p(-s) + kLn2;
                    r.d1 = lr;
                } else {
                    r.value = (2.0 * s - 1.0) * lr;
                    r.d1 = 2.0 * lr + (2.0 * s - 1.0) / q;
                }
                r.d2 = 1.0 / std::pow(q, k);
            }
            return r;
        }
        case Kind::quadrature: {
            require_open(p, s, "entropy");
            const Mobility& m = *m_;
            double scale = std::max(1.0, 1.0 / m(s));
            Derivs r;
            r.d1 = adaptive_simpson([&](double t) { return 1.0 / m(t); }, a, s, 1e-12 * scale);
            r.value = adaptive_simpson([&](double t) { return (s - t) / m(t); }, a, s,
                                       1e-12 * scale);
            r.d2 = 1.0 / m(s);
            return r;
        }
    }
    return {};
}

double EntropyFunction::value_closed(double s) const {
    Phase p = m_->phase();
    if (kind_ == Kind::constant || kind_ == Kind::table) return eval(s).value;
    require_closed(p, s, "entropy");
    if (s > phase_lower(p) && s < phase_upper(p)) return eval(s).value;
    if (kind_ == Kind::closed_form && static_cast<const PolynomialMobility&>(*m_).k() == 1) {
        return kLn2;
    }
    return kInf;
}

// ---------------------------------------------------------------------------------------------
// Oono coefficient and coupling

double Sigma1::operator()(double s) const {
    if (power == 0.0) return sigma;
    double q = std::max(0.0, (1.0 - s) * (1.0 + s));
    return sigma * std::pow(q, power);
}

CouplingEval CouplingModel::eval(double phi, double psi) const {
    double f = clamp_phi(phi), p = clamp_psi(psi);
    double q = 1.0 - f * f;
    CouplingEval r;
    r.value = 0.5 * gamma1 * p * f * f - 0.25 * gamma2 * p * q * q + 0.5 * tilde_theta1 * q +
              0.5 * tilde_theta2 * p * (1.0 - p);
    r.dphi = gamma1 * p * f + gamma2 * p * f * q - tilde_theta1 * f;
    r.dpsi = 0.5 * gamma1 * f * f - 0.25 * gamma2 * q * q + 0.5 * tilde_theta2 * (1.0 - 2.0 * p);
    r.dphiphi = gamma1 * p + gamma2 * p * (1.0 - 3.0 * f * f) - tilde_theta1;
    r.dphipsi = gamma1 * f + gamma2 * f * q;
    r.dpsipsi = -tilde_theta2;
    return r;
}

double CouplingModel::value(double phi, double psi) const { return eval(phi, psi).value; }

double CouplingModel::secant_phi(double a, double b, double cc) const {
    a = clamp_phi(a);
    b = clamp_phi(b);
    cc = clamp_psi(cc);
    double s = a + b;
    return 0.5 * gamma1 * cc * s + 0.25 * gamma2 * cc * s * (2.0 - a * a - b * b) -
           0.5 * tilde_theta1 * s;
}

double CouplingModel::secant_phi_da(double a, double b, double cc) const {
    if (a < -1.0 || a > 1.0) return 0.0;
    b = clamp_phi(b);
    cc = clamp_psi(cc);
    return 0.5 * gamma1 * cc + 0.25 * gamma2 * cc * ((2.0 - a * a - b * b) - 2.0 * a * (a + b)) -
           0.5 * tilde_theta1;
}

double CouplingModel::secant_psi(double cc, double a, double b) const {
    a = clamp_psi(a);
    b = clamp_psi(b);
    cc = clamp_phi(cc);
    double q = 1.0 - cc * cc;
    return 0.5 * gamma1 * cc * cc - 0.25 * gamma2 * q * q + 0.5 * tilde_theta2 * (1.0 - a - b);
}

double CouplingModel::secant_psi_da(double, double a, double) const {
    if (a < 0.0 || a > 1.0) return 0.0;
    return -0.5 * tilde_theta2;
}

// ---------------------------------------------------------------------------------------------
// ModelSpec

double ModelSpec::rho(double s) const {
    s = clamp_phi(s);
    return 0.5 * (rho1 - rho2) * s + 0.5 * (rho1 + rho2);
}

double ModelSpec::nu(double s) const {
    s = clamp_phi(s);
    return 0.5 * (nu1 - nu2) * s + 0.5 * (nu1 + nu2);
}

bool ModelSpec::degenerate() const {
    return mobility_phi->degenerate() || mobility_psi->degenerate();
}

std::vector<double> boundary_refined_samples(Phase p, int interior, int levels) {
    double lo = phase_lower(p), hi = phase_upper(p);
    std::vector<double> s;
    for (int i = 0; i < interior; ++i) s.push_back(lo + (hi - lo) * (i + 0.5) / interior);
    for (int j = 1; j <= levels; ++j) {
        double d = std::pow(10.0, -j) * (hi - lo) / 2;
        s.push_back(lo + d);
        s.push_back(hi - d);
    }
    std::sort(s.begin(), s.end());
    return s;
}

double compatibility_alpha(const Potential& f, const Mobility& m) {
    Phase p = f.phase();
    double sup = 0.0;
    for (double s : boundary_refined_samples(p)) sup = std::max(sup, f.second_times_mobility(m, s));
    if (dynamic_cast<const LogPotential*>(&f) && dynamic_cast<const PolynomialMobility*>(&m)) {
        sup = std::max({sup, f.second_times_mobility(m, phase_lower(p)),
                        f.second_times_mobility(m, phase_upper(p))});
    }
    return 1.05 * sup;
}

double degeneracy_constant(const Mobility& m) {
    Phase p = m.phase();
    double lo = phase_lower(p), hi = phase_upper(p);
    double sup = 0.0;
    const int n = 4000;
    for (int i = 0; i <= n; ++i) sup = std::max(sup, std::abs(m.derivative(lo + (hi - lo) * i / n)));
    return p == Phase::phi ? sup : 2.0 * sup;
}

void validate_model(const ModelSpec& s) {
    auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!finite_pos(s.rho1) || !finite_pos(s.rho2)) {
        throw ModelError("(H0) densities rho1, rho2 must be positive: rho1=" + fmt(s.rho1) +
                         " rho2=" + fmt(s.rho2));
    }
    if (!finite_pos(s.nu1) || !finite_pos(s.nu2)) {
        throw ModelError("(H2) viscosities nu1, nu2 must be positive: nu1=" + fmt(s.nu1) +
                         " nu2=" + fmt(s.nu2));
    }
    if (!finite_pos(s.beta)) throw ModelError("beta must be positive (standing assumption of (H0)-(H3*)), got " + fmt(s.beta));
    if (!(s.sigma2 >= 0.0) || !std::isfinite(s.sigma2)) {
        throw ModelError("sigma2 must be >= 0 (standing assumption of (H0)-(H3*)), got " +
                         fmt(s.sigma2));
    }
    if (!(s.c > -1.0 && s.c < 1.0)) {
        throw ModelError("c must lie in (-1,1) (standing assumption of (H0)-(H3*)), got " +
                         fmt(s.c));
    }
    const CouplingModel& g = s.coupling;
    if (!(g.gamma1 >= 0.0) || !(g.gamma2 >= 0.0) || !std::isfinite(g.gamma1) ||
        !std::isfinite(g.gamma2)) {
        throw ModelError("(H1) coupling constants gamma1, gamma2 must be >= 0");
    }
    if (!std::isfinite(g.tilde_theta1) || !std::isfinite(g.tilde_theta2)) {
        throw ModelError("(H1) coupling G must be bounded: tilde_theta1, tilde_theta2 finite");
    }
    if (!s.potential_phi || !s.potential_psi || s.potential_phi->phase() != Phase::phi ||
        s.potential_psi->phase() != Phase::psi) {
        throw ModelError("(H1) potentials missing or attached to the wrong phase");
    }
    if (!s.mobility_phi || !s.mobility_psi || s.mobility_phi->phase() != Phase::phi ||
        s.mobility_psi->phase() != Phase::psi) {
        throw ModelError("(H3) mobilities missing or attached to the wrong phase");
    }
    if (!(s.sigma1.sigma >= 0.0) || !(s.sigma1.power >= 0.0) || !std::isfinite(s.sigma1.sigma)) {
        throw ModelError("(H3) sigma1 must be nonnegative and bounded, got sigma1=" +
                         fmt(s.sigma1.sigma) + " power=" + fmt(s.sigma1.power));
    }
    bool dphi = s.mobility_phi->degenerate(), dpsi = s.mobility_psi->degenerate();
    if (dphi != dpsi) {
        throw ModelError("(H3)/(H3*) mobilities must be both non-degenerate or both degenerate");
    }
    if (!dphi) {
        if (!(s.mobility_phi->floor() > 0.0) || !(s.mobility_psi->floor() > 0.0)) {
            throw ModelError("(H3) mobilities must be bounded below by a positive constant");
        }
        return;
    }
    if (!std::isfinite(s.alpha) || !(s.alpha > 0.0)) {
        throw ModelError("(H3*) F''m must be bounded by a finite alpha, got " + fmt(s.alpha));
    }
    for (double x : boundary_refined_samples(Phase::phi)) {
        double v = s.sigma1(x) * std::abs(s.entropy_phi->eval(x).d1);
        if (v > s.alpha) {
            throw ModelError("(H3*) sigma1(s)|W_phi'(s)| <= alpha violated at s=" + fmt(x) +
                             ": " + fmt(v) + " > alpha=" + fmt(s.alpha));
        }
    }
}

namespace {

std::shared_ptr<const Mobility> make_mobility(Phase p, const MobilityParams& mp) {
    if (mp.kind == MobilityKind::constant) return std::make_shared<ConstantMobility>(p, mp.value);
    return std::make_shared<PolynomialMobility>(p, mp.k);
}

}  // namespace

ModelSpec build_model(const ModelParameters& p) {
    ModelSpec s;
    s.rho1 = p.rho1;
    s.rho2 = p.rho2;
    s.nu1 = p.nu1;
    s.nu2 = p.nu2;
    s.beta = p.beta;
    s.sigma2 = p.sigma2;
    s.c = p.c;
    s.coupling = {p.gamma1, p.gamma2, p.tilde_theta1, p.tilde_theta2};
    s.sigma1 = {p.sigma1, p.sigma1_power};
    s.potential_phi = std::make_shared<LogPotential>(Phase::phi, p.theta1);
    s.potential_psi = std::make_shared<LogPotential>(Phase::psi, p.theta2);
    s.mobility_phi = make_mobility(Phase::phi, p.mobility_phi);
    s.mobility_psi = make_mobility(Phase::psi, p.mobility_psi);
    s.entropy_phi = std::make_shared<EntropyFunction>(s.mobility_phi);
    s.entropy_psi = std::make_shared<EntropyFunction>(s.mobility_psi);
    if (s.mobility_phi->degenerate() && s.mobility_psi->degenerate()) {
        s.alpha = std::max(compatibility_alpha(*s.potential_phi, *s.mobility_phi),
                           compatibility_alpha(*s.potential_psi, *s.mobility_psi));
    }
    validate_model(s);
    return s;
}

// ---------------------------------------------------------------------------------------------
// Regularization

double regularization_limit(const ModelSpec& spec) {
    return 0.5 * std::min((*spec.mobility_phi)(0.0), (*spec.mobility_psi)(0.5));
}

double regularization_offset(const Mobility& m, double eps, bool lower_end) {
    Phase p = m.phase();
    double lo = phase_lower(p), hi = phase_upper(p);
    double half = 0.5 * (hi - lo);
    auto f = [&](double d) { return m(lower_end ? lo + d : hi - d) - eps; };
    return bisect(f, 0.0, half, 1e-14);
}

namespace {

std::vector<double> graded_cuts(Phase p, double d1, double d2) {
    double lo = phase_lower(p), hi = phase_upper(p), a = phase_anchor(p);
    std::vector<double> cuts{lo + d1, hi - d2};
    for (double d = d1 * 2; lo + d < a; d *= 2) cuts.push_back(lo + d);
    for (double d = d2 * 2; hi - d > a; d *= 2) cuts.push_back(hi - d);
    return cuts;
}

}  // namespace

RegularizedModel build_regularization(const ModelSpec& spec, double epsilon) {
    if (!spec.mobility_phi->degenerate() || !spec.mobility_psi->degenerate()) {
        throw ModelError("regularization requires degenerate mobilities (H3*)");
    }
    double lim = regularization_limit(spec);
    if (!(epsilon > 0.0) || epsilon > lim) {
        throw ModelError("epsilon " + fmt(epsilon) + " outside I_M = (0, " + fmt(lim) + "]");
    }
    RegularizedModel r;
    r.epsilon = epsilon;
    r.alpha = spec.alpha;
    r.delta_phi1 = regularization_offset(*spec.mobility_phi, epsilon, true);
    r.delta_phi2 = regularization_offset(*spec.mobility_phi, epsilon, false);
    r.delta_psi1 = regularization_offset(*spec.mobility_psi, epsilon, true);
    r.delta_psi2 = regularization_offset(*spec.mobility_psi, epsilon, false);
    r.m_eps_phi = std::make_shared<RegularizedMobility>(spec.mobility_phi, epsilon, r.delta_phi1,
                                                        r.delta_phi2);
    r.m_eps_psi = std::make_shared<RegularizedMobility>(spec.mobility_psi, epsilon, r.delta_psi1,
                                                        r.delta_psi2);

    auto fphi = spec.potential_phi;
    auto fpsi = spec.potential_psi;
    auto mphi = spec.mobility_phi;
    auto mpsi = spec.mobility_psi;
    auto mephi = r.m_eps_phi;
    auto mepsi = r.m_eps_psi;
    r.f_tilde_phi = std::make_shared<ConvexTable>(
        [=](double s) { return fphi->second_times_mobility(*mphi, s) / (*mephi)(s); }, -1.0, 1.0,
        0.0, graded_cuts(Phase::phi, r.delta_phi1, r.delta_phi2), 96);
    r.f_tilde_psi = std::make_shared<ConvexTable>(
        [=](double s) { return fpsi->second_times_mobility(*mpsi, s) / (*mepsi)(s); }, 0.0, 1.0,
        0.5, graded_cuts(Phase::psi, r.delta_psi1, r.delta_psi2), 96);

    r.f_ln_phi = std::make_shared<LogPotential>(Phase::phi, 2.0);
    r.f_ln_psi = std::make_shared<LogPotential>(Phase::psi, 2.0);

    double c = 1.0;
    auto take = [&](double num, double den) {
        if (den != 0.0 && num / den > 0.0) c = std::min(c, num / den);
    };
    take(-r.delta_phi1, r.f_ln_phi->eval(-1.0 + r.delta_phi1).d1);
    take(r.delta_phi2, r.f_ln_phi->eval(1.0 - r.delta_phi2).d1);
    take(-r.delta_psi1, r.f_ln_psi->eval(r.delta_psi1).d1);
    take(r.delta_psi2, r.f_ln_psi->eval(1.0 - r.delta_psi2).d1);
    r.c_eps = c;

    r.f_eps_phi = std::make_shared<RegularizedPotential>(r.f_tilde_phi, c, r.f_ln_phi);
    r.f_eps_psi = std::make_shared<RegularizedPotential>(r.f_tilde_psi, c, r.f_ln_psi);
    r.w_eps_phi = std::make_shared<EntropyFunction>(r.m_eps_phi);
    r.w_eps_psi = std::make_shared<EntropyFunction>(r.m_eps_psi);
    return r;
}

}  // namespace nsch
