#include <doctest.h>

#include <cmath>
#include <random>

#include "nsch/material.hpp"
#include "nsch/quadrature.hpp"

using namespace nsch;

namespace {

ModelParameters degenerate_params(int k) {
    ModelParameters p;
    p.theta1 = 1.0;
    p.theta2 = 1.0;
    p.mobility_phi = {MobilityKind::degenerate, 1.0, k};
    p.mobility_psi = {MobilityKind::degenerate, 1.0, k};
    return p;
}

}  // namespace

TEST_CASE("log potential anchors and values") {
    LogPotential fphi(Phase::phi, 1.7);
    auto d0 = fphi.eval(0.0);
    CHECK(d0.value == 0.0);
    CHECK(d0.d1 == 0.0);
    CHECK(d0.d2 == doctest::Approx(1.7).epsilon(1e-15));

    LogPotential f1(Phase::phi, 1.0);
    CHECK(f1.eval(0.5).value == doctest::Approx(0.13081203594113696).epsilon(1e-14));

    LogPotential fpsi(Phase::psi, 1.0);
    auto dh = fpsi.eval(0.5);
    CHECK(std::abs(dh.value) < 1e-16);
    CHECK(dh.d1 == 0.0);
    CHECK(dh.d2 == doctest::Approx(2.0).epsilon(1e-15));

    CHECK_THROWS_AS(fphi.eval(1.0), SingularArgument);
    CHECK_THROWS_AS(fphi.eval(-1.5), SingularArgument);
    CHECK_THROWS_AS(fpsi.eval(0.0), SingularArgument);
    CHECK(fpsi.value_closed(1.0) == doctest::Approx(0.5 * std::log(2.0)));
    CHECK(fphi.value_closed(1.0) == doctest::Approx(1.7 * std::log(2.0)));
}

TEST_CASE("log potential convexity and monotone derivative on samples") {
    for (Phase p : {Phase::phi, Phase::psi}) {
        LogPotential f(p, 0.8);
        auto s = boundary_refined_samples(p);
        double prev = -INFINITY;
        for (double x : s) {
            auto d = f.eval(x);
            CHECK(d.d2 >= f.convexity_bound() * (1 - 1e-14));
            CHECK(d.d1 > prev);
            prev = d.d1;
        }
        CHECK(f.eval(phase_lower(p) + 1e-12).d1 < -10.0);
        CHECK(f.eval(phase_upper(p) - 1e-12).d1 > 10.0);
    }
}

TEST_CASE("coupling values and partials") {
    CouplingModel g{2.0, 0.0, 0.0, 0.0};
    CHECK(g.eval(1.0, 0.37).dphi == doctest::Approx(0.74));
    CouplingModel g2{2.0, 4.0, 0.0, 0.0};
    CHECK(g2.value(0.0, 1.0) == doctest::Approx(-1.0));
    CHECK(g2.value(0.3, 0.0) == 0.0);

    CouplingModel g3{0.7, 1.3, 2.1, 0.9};
    const double h = 1e-5;
    for (double f : {-0.8, -0.1, 0.4, 0.95}) {
        for (double p : {0.1, 0.5, 0.85}) {
            auto e = g3.eval(f, p);
            CHECK(e.dphi == doctest::Approx((g3.value(f + h, p) - g3.value(f - h, p)) / (2 * h)).epsilon(1e-8));
            CHECK(e.dpsi == doctest::Approx((g3.value(f, p + h) - g3.value(f, p - h)) / (2 * h)).epsilon(1e-8));
            double cross1 = (g3.eval(f, p + h).dphi - g3.eval(f, p - h).dphi) / (2 * h);
            double cross2 = (g3.eval(f + h, p).dpsi - g3.eval(f - h, p).dpsi) / (2 * h);
            CHECK(e.dphipsi == doctest::Approx(cross1).epsilon(1e-8));
            CHECK(e.dphipsi == doctest::Approx(cross2).epsilon(1e-8));
            CHECK(e.dphiphi == doctest::Approx((g3.eval(f + h, p).dphi - g3.eval(f - h, p).dphi) / (2 * h)).epsilon(1e-7));
        }
    }
    // clamping to the box
    CHECK(g3.value(1.5, 2.0) == g3.value(1.0, 1.0));
}

TEST_CASE("secant quotients") {
    CouplingModel g{0.7, 1.3, 2.1, 0.9};
    CHECK(g.secant_phi(0.3, 0.3, 0.5) == doctest::Approx(g.eval(0.3, 0.5).dphi).epsilon(1e-15));
    CHECK(g.secant_psi(0.3, 0.4, 0.4) == doctest::Approx(g.eval(0.3, 0.4).dpsi).epsilon(1e-15));

    CouplingModel g1{2.0, 0.0, 0.0, 0.0};
    CHECK(g1.secant_phi(1.0, 0.0, 0.6) == doctest::Approx(0.6));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uphi(-1.0, 1.0), upsi(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double f = uphi(rng), fk = uphi(rng), p = upsi(rng), pk = upsi(rng);
        if (i % 10 == 0) fk = f + 1e-10;
        double lhs = g.secant_phi(f, fk, p) * (f - fk) + g.secant_psi(fk, p, pk) * (p - pk);
        double rhs = g.value(f, p) - g.value(fk, pk);
        double scale = std::abs(g.value(f, p)) + std::abs(g.value(fk, pk)) + 1e-300;
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    CHECK(worst <= 1e-12);

    // derivative of the quotient in its first slot
    const double h = 1e-6;
    for (double a : {-0.7, 0.2, 0.9}) {
        double b = 0.1, c = 0.45;
        double fd = (g.secant_phi(a + h, b, c) - g.secant_phi(a - h, b, c)) / (2 * h);
        CHECK(g.secant_phi_da(a, b, c) == doctest::Approx(fd).epsilon(1e-7));
    }
    CHECK(g.secant_phi_da(0.3, 0.3, 0.5) == doctest::Approx(0.5 * g.eval(0.3, 0.5).dphiphi));
}

TEST_CASE("entropy closed forms and oracles") {
    auto m1 = std::make_shared<PolynomialMobility>(Phase::phi, 1);
    EntropyFunction w1(m1);
    auto z = w1.eval(0.0);
    CHECK(z.value == 0.0);
    CHECK(z.d1 == 0.0);
    CHECK(w1.eval(0.5).value == doctest::Approx(0.13081203594113696).epsilon(1e-14));

    auto q1 = std::make_shared<PolynomialMobility>(Phase::psi, 1);
    EntropyFunction wq(q1);
    CHECK(wq.eval(0.25).d1 == doctest::Approx(-1.0986122886681097).epsilon(1e-14));

    EntropyFunction w2(std::make_shared<PolynomialMobility>(Phase::phi, 2));
    CHECK(w2.eval(0.7).value == doctest::Approx(0.30355518469291862).epsilon(1e-13));
    CHECK(w2.eval(0.7).d1 == doctest::Approx(1.1199247736509482).epsilon(1e-13));
    EntropyFunction wq2(std::make_shared<PolynomialMobility>(Phase::psi, 2));
    CHECK(wq2.eval(0.2).value == doctest::Approx(0.83177661667193437).epsilon(1e-13));
    CHECK(wq2.eval(0.2).d1 == doctest::Approx(-6.5225887222397812).epsilon(1e-13));
    EntropyFunction w3(std::make_shared<PolynomialMobility>(Phase::phi, 3));
    CHECK(w3.eval(0.6).value == doctest::Approx(0.22627061562598769).epsilon(1e-10));
    CHECK(w3.eval(0.6).d1 == doctest::Approx(0.97770363020997949).epsilon(1e-10));

    CHECK(w1.value_closed(1.0) == doctest::Approx(std::log(2.0)));
    CHECK(std::isinf(w2.value_closed(-1.0)));
    CHECK_THROWS_AS(w2.eval(1.0), SingularArgument);

    for (double s : boundary_refined_samples(Phase::phi, 50, 6)) CHECK(w2.eval(s).value >= 0.0);
}

TEST_CASE("degeneracy constants bound the mobility") {
    for (int k : {1, 2, 3}) {
        PolynomialMobility mp(Phase::phi, k), mq(Phase::psi, k);
        double cp = degeneracy_constant(mp), cq = degeneracy_constant(mq);
        EntropyFunction wp(std::make_shared<PolynomialMobility>(Phase::phi, k));
        EntropyFunction wq(std::make_shared<PolynomialMobility>(Phase::psi, k));
        for (double s : boundary_refined_samples(Phase::phi, 200, 8)) {
            CHECK(mp(s) <= cp * (1 - s * s) * (1 + 1e-12));
            double lr = std::abs(std::log1p(s) - std::log1p(-s));
            CHECK(lr <= 2 * cp * std::abs(wp.eval(s).d1) * (1 + 1e-10) + 1e-14);
        }
        for (double s : boundary_refined_samples(Phase::psi, 200, 8)) {
            CHECK(mq(s) <= cq * s * (1 - s) * (1 + 1e-12));
            double lr = std::abs(std::log(s) - std::log1p(-s));
            CHECK(lr <= cq * std::abs(wq.eval(s).d1) * (1 + 1e-10) + 1e-14);
        }
    }
}

TEST_CASE("model validation cites hypotheses") {
    ModelParameters p;
    p.c = 1.5;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("c must lie in (-1,1)"), ModelError);
    p = {};
    p.sigma2 = -0.1;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("sigma2"), ModelError);
    p = {};
    p.rho2 = 0.0;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("(H0)"), ModelError);
    p = {};
    p.nu1 = -1.0;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("(H2)"), ModelError);
    p = {};
    p.theta1 = 0.0;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("(H1)"), ModelError);
    p = {};
    p.mobility_phi.value = 0.0;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("(H3)"), ModelError);

    // constant sigma1 with a degenerate mobility makes sigma1 |W'| unbounded
    p = degenerate_params(1);
    p.sigma1 = 1.0;
    CHECK_THROWS_WITH_AS(build_model(p), doctest::Contains("(H3*)"), ModelError);
    p.sigma1_power = 1.0;
    p.sigma1 = 0.5;
    ModelSpec ok = build_model(p);
    for (double s : boundary_refined_samples(Phase::phi))
        CHECK(ok.sigma1(s) * std::abs(ok.entropy_phi->eval(s).d1) <= ok.alpha);
}

TEST_CASE("density and viscosity laws") {
    ModelParameters p;
    p.rho1 = 3.0;
    p.rho2 = 1.0;
    p.nu1 = 2.0;
    p.nu2 = 0.5;
    ModelSpec s = build_model(p);
    CHECK(s.rho(1.0) == 3.0);
    CHECK(s.rho(-1.0) == 1.0);
    CHECK(s.rho(0.0) == 2.0);
    CHECK(s.gamma() == 1.0);
    CHECK(s.nu(2.0) == 2.0);
    CHECK(s.nu(-3.0) == 0.5);
}

TEST_CASE("regularization offsets and thresholds") {
    ModelSpec s = build_model(degenerate_params(1));
    CHECK(regularization_limit(s) == doctest::Approx(0.125));
    RegularizedModel r = build_regularization(s, 0.01);
    CHECK(r.delta_phi1 == doctest::Approx(0.0050125628933800453).epsilon(1e-12));
    CHECK(r.delta_phi2 == doctest::Approx(0.0050125628933800453).epsilon(1e-12));
    CHECK(r.delta_psi1 == doctest::Approx(0.010102051443364380).epsilon(1e-12));
    CHECK(r.c_eps == doctest::Approx(0.00083731869477525749).epsilon(1e-10));
    CHECK((*r.m_eps_phi)(-1.0) == doctest::Approx(0.02));
    CHECK((*r.m_eps_phi)(1.0) == doctest::Approx(0.02));
    CHECK((*r.m_eps_psi)(0.0) == doctest::Approx(0.02));
    CHECK_THROWS_AS(build_regularization(s, 0.2), ModelError);
    CHECK_THROWS_AS(build_regularization(s, 0.0), ModelError);
    CHECK_THROWS_AS(build_regularization(build_model(ModelParameters{}), 0.01), ModelError);

    // middle region: (tilde F)'' m^eps = F'' m = theta1
    for (double x : {-0.9, -0.3, 0.0, 0.55, 0.99})
        CHECK(r.f_tilde_phi->eval(x).d2 * (*r.m_eps_phi)(x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tabulated tilde F matches direct double quadrature") {
    ModelSpec s = build_model(degenerate_params(1));
    RegularizedModel r = build_regularization(s, 0.01);
    auto t = [&](double x) { return r.f_tilde_phi->eval(x); };
    CHECK(t(0.0).value == 0.0);
    CHECK(t(0.0).d1 == 0.0);
    CHECK(t(0.5).value == doctest::Approx(0.12945308538521062).epsilon(1e-9));
    CHECK(t(0.5).d1 == doctest::Approx(0.54329334732534962).epsilon(1e-9));
    CHECK(t(0.999).value == doctest::Approx(0.67277882360352867).epsilon(1e-9));
    CHECK(t(0.999).d1 == doctest::Approx(2.8366271188630488).epsilon(1e-9));
    CHECK(t(1.0).value == doctest::Approx(0.67564045072239172).epsilon(1e-9));
    CHECK(t(-1.0).value == doctest::Approx(0.67564045072239172).epsilon(1e-9));
    CHECK(t(-1.0).d1 == doctest::Approx(-2.8866271188630488).epsilon(1e-9));

    // k = 2 against an in-test nested Simpson oracle
    ModelSpec s2 = build_model(degenerate_params(2));
    RegularizedModel r2 = build_regularization(s2, 1e-3);
    const auto& me = *r2.m_eps_phi;
    auto g = [&](double x) { return (1 - x * x) / me(x); };
    for (double x : {-0.97, 0.3, 0.8, 0.995}) {
        double d1 = adaptive_simpson(g, 0.0, x, 1e-13);
        double v = adaptive_simpson([&](double t) { return (x - t) * g(t); }, 0.0, x, 1e-13);
        CHECK(r2.f_tilde_phi->eval(x).d1 == doctest::Approx(d1).epsilon(1e-9));
        CHECK(r2.f_tilde_phi->eval(x).value == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("regularization ladder properties") {
    for (int k : {1, 2}) {
        ModelSpec s = build_model(degenerate_params(k));
        double lim = regularization_limit(s);
        std::vector<double> eps;
        for (double e : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) eps.push_back(std::min(e, lim));
        double prev_sup = INFINITY, prev_c = INFINITY, prev_d = INFINITY;
        auto samples = boundary_refined_samples(Phase::phi, 300, 8);
        auto qsamples = boundary_refined_samples(Phase::psi, 300, 8);
        const double cphi = degeneracy_constant(*s.mobility_phi);
        const double cpsi = degeneracy_constant(*s.mobility_psi);
        for (double e : eps) {
            RegularizedModel r = build_regularization(s, e);
            double sup = 0.0;
            for (double x : samples) {
                auto ft = r.f_tilde_phi->eval(x);
                auto f = s.potential_phi->eval(x);
                CHECK(ft.d2 <= f.d2 * (1 + 1e-12));
                CHECK(r.w_eps_phi->eval(x).value <= s.entropy_phi->eval(x).value * (1 + 1e-10) + 1e-14);
                double prod = ft.d2 * (*r.m_eps_phi)(x);
                CHECK(prod > 0.0);
                CHECK(prod <= r.alpha);
                sup = std::max(sup, std::abs(ft.value - f.value));
                // |(F^eps)'| <= (alpha + 2 C_phi) |W_phi'|
                CHECK(std::abs(r.f_eps_phi->eval(x).d1) <=
                      (r.alpha + 2 * cphi) * std::abs(s.entropy_phi->eval(x).d1) * (1 + 1e-9) + 1e-13);
            }
            for (double x : qsamples) {
                CHECK(r.f_tilde_psi->eval(x).d2 <= s.potential_psi->eval(x).d2 * (1 + 1e-12));
                CHECK(r.w_eps_psi->eval(x).value <= s.entropy_psi->eval(x).value * (1 + 1e-10) + 1e-14);
                CHECK(std::abs(r.f_eps_psi->eval(x).d1) <=
                      (r.alpha + cpsi) * std::abs(s.entropy_psi->eval(x).d1) * (1 + 1e-9) + 1e-13);
            }
            CHECK(r.c_eps > 0.0);
            CHECK(r.c_eps <= 1.0);
            CHECK(r.c_eps <= prev_c);
            CHECK(sup <= prev_sup * (1 + 1e-12));
            CHECK(r.delta_phi1 <= prev_d);
            prev_c = r.c_eps;
            prev_sup = sup;
            prev_d = r.delta_phi1;
        }
        CHECK(prev_c < 0.01);
        CHECK(prev_sup < 0.05);
    }
}

TEST_CASE("secant-potential lower bound with a fitted constant") {
    ModelSpec s = build_model(degenerate_params(2));
    RegularizedModel r = build_regularization(s, 1e-3);
    auto samples = boundary_refined_samples(Phase::phi, 400, 10);
    for (double m1 : {-0.6, 0.0, 0.45}) {
        double cm = std::min((1 + m1) / 2, (1 - m1) / 2);
        double cprime = 0.0;
        for (double x : samples) {
            double d1 = r.f_tilde_phi->eval(x).d1;
            cprime = std::max(cprime, cm * std::abs(d1) - d1 * (x - m1));
        }
        // the fitted constant is finite and moderate: the bound is uniform over the samples
        CHECK(std::isfinite(cprime));
        CHECK(cprime < 10.0);
        for (double x : samples) {
            double d1 = r.f_tilde_phi->eval(x).d1;
            CHECK(cm * std::abs(d1) - cprime <= d1 * (x - m1) + 1e-12);
        }
    }
}
