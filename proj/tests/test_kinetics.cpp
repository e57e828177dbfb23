#include <gtest/gtest.h>

#include <algorithm>
#include <complex>

#include "test_support.hpp"
#include "tumorcsp/kinetics.hpp"

namespace {

using namespace tumorcsp;
using tumorcsp::testing::random_states;

const ParameterSet kP9{};

State make(double T, double N, double L, double C) { return State{0.0, T, N, L, C}; }

TEST(Parameters, DefaultsArePatientNine) {
    const ParameterSet p;
    EXPECT_EQ(p.a, 4.31e-1);
    EXPECT_EQ(p.b, 1.02e-9);
    EXPECT_EQ(p.e, 2.08e-7);
    EXPECT_EQ(p.alpha, 7.50e8);
    EXPECT_EQ(p.f, 4.12e-2);
    EXPECT_EQ(p.m, 2.04e-1);
    EXPECT_EQ(p.beta, 1.20e-2);
    EXPECT_EQ(p.c, 6.41e-11);
    EXPECT_EQ(p.d, 2.34);
    EXPECT_EQ(p.l, 2.09);
    EXPECT_EQ(p.s, 8.39e-2);
    EXPECT_EQ(p.g, 1.25e-2);
    EXPECT_EQ(p.h, 2.02e7);
    EXPECT_EQ(p.j, 2.49e-2);
    EXPECT_EQ(p.k, 3.66e7);
    EXPECT_EQ(p.r1, 1.10e-7);
    EXPECT_EQ(p.r2, 6.50e-11);
    EXPECT_EQ(p.p, 3.42e-6);
    EXPECT_EQ(p.q, 1.42e-6);
    EXPECT_EQ(p.u, 3.00e-10);
    EXPECT_NO_THROW(p.validate());
}

TEST(Parameters, NamedAccess) {
    ParameterSet p;
    EXPECT_EQ(p["alpha"], p.alpha);
    p["r2"] = 1.0;
    EXPECT_EQ(p.r2, 1.0);
    EXPECT_THROW((void)p["zeta"], ConfigError);
}

TEST(Parameters, JsonMissingKeysDefault) {
    const auto p = parameters_from_json(nlohmann::json{{"d", 1.5}});
    EXPECT_EQ(p.d, 1.5);
    EXPECT_EQ(p.a, ParameterSet{}.a);
}

TEST(Parameters, JsonRejectsUnknownAndNonPositive) {
    EXPECT_THROW((void)parameters_from_json(nlohmann::json{{"D", 1.0}}), ConfigError);
    EXPECT_THROW((void)parameters_from_json(nlohmann::json{{"a", -1.0}}), ConfigError);
    EXPECT_THROW((void)parameters_from_json(nlohmann::json{{"a", "fast"}}), ConfigError);
    EXPECT_THROW((void)parameters_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Parameters, JsonRoundTrip) {
    ParameterSet p;
    p.q = 2.5e-6;
    EXPECT_EQ(parameters_from_json(to_json(p)), p);
}

TEST(Stoichiometry, RowsMatchModel) {
    const auto& S = stoichiometry();
    // T: +R1 - R7 - R8
    EXPECT_EQ(S(kT, 0), 1);
    EXPECT_EQ(S(kT, 6), -1);
    EXPECT_EQ(S(kT, 7), -1);
    EXPECT_EQ(S.row(kT).cwiseAbs().sum(), 3);
    // N: +R2 - R4 + R9 - R13
    EXPECT_EQ(S(kN, 1), 1);
    EXPECT_EQ(S(kN, 3), -1);
    EXPECT_EQ(S(kN, 8), 1);
    EXPECT_EQ(S(kN, 12), -1);
    EXPECT_EQ(S.row(kN).cwiseAbs().sum(), 4);
    // L: -R5 + R10 + R11 + R12 - R14 - R15
    EXPECT_EQ(S(kL, 4), -1);
    EXPECT_EQ(S(kL, 9), 1);
    EXPECT_EQ(S(kL, 10), 1);
    EXPECT_EQ(S(kL, 11), 1);
    EXPECT_EQ(S(kL, 13), -1);
    EXPECT_EQ(S(kL, 14), -1);
    EXPECT_EQ(S.row(kL).cwiseAbs().sum(), 6);
    // C: +R3 - R6
    EXPECT_EQ(S(kC, 2), 1);
    EXPECT_EQ(S(kC, 5), -1);
    EXPECT_EQ(S.row(kC).cwiseAbs().sum(), 2);

    EXPECT_THROW((void)stoichiometric_vector(0), IndexError);
    EXPECT_THROW((void)stoichiometric_vector(16), IndexError);
}

TEST(Saturation, ZeroWithoutCd8) {
    EXPECT_EQ(d_saturation(make(1e6, 1e3, 0.0, 6e8), kP9), 0.0);
    EXPECT_EQ(d_saturation(make(1e-3, 1e3, 0.0, 6e8), kP9), 0.0);
}

TEST(Saturation, HandEvaluatedValues) {
    // x = (L/T)^l = 1 -> d / (s + 1)
    EXPECT_NEAR(d_saturation(make(1e6, 0, 1e6, 0), kP9), 2.1588707445336284, 1e-14);
    // x = 10^(-5 l)
    EXPECT_NEAR(d_saturation(make(1e6, 0, 10.0, 0), kP9), 9.895868062639444e-10, 1e-22);
}

TEST(Saturation, DomainErrors) {
    EXPECT_THROW((void)d_saturation(make(0.0, 1, 1, 1), kP9), DomainError);
    EXPECT_THROW((void)d_saturation(make(-1.0, 1, 1, 1), kP9), DomainError);
    EXPECT_THROW((void)d_saturation(make(1.0, 1, -1, 1), kP9), DomainError);
}

TEST(Saturation, BoundedBelowD) {
    for (const auto& s : random_states(200)) {
        const double D = d_saturation(s, kP9);
        EXPECT_GE(D, 0.0);
        // d/(1+z) rounds to d once z < eps; the strict bound is checked where L < T.
        EXPECT_LE(D, kP9.d);
        if (s.L < s.T) {
            EXPECT_LT(D, kP9.d);
        }
    }
}

TEST(ProcessRates, ArithmeticAtPersistenceStart) {
    const auto pr = process_rates(make(1e6, 1e3, 10.0, 6e8), kP9);
    EXPECT_NEAR(pr.rate(1), 430560.38, 1e-6);
    EXPECT_NEAR(pr.rate(2), 124.8, 1e-9);
    EXPECT_NEAR(pr.rate(13), 3420.0, 1e-8);
    EXPECT_NEAR(pr.rate(7), 0.0641, 1e-12);
    EXPECT_THROW((void)pr.rate(0), IndexError);
    EXPECT_THROW((void)pr.rate(16), IndexError);
}

TEST(ProcessRates, LinearInNVanishAtZeroN) {
    const auto pr = process_rates(make(3e7, 0.0, 4e4, 2e9), kP9);
    for (int k : {4, 7, 9, 11, 13, 15}) {
        EXPECT_EQ(pr.rate(k), 0.0) << "process " << k;
    }
}

TEST(ProcessRates, TumorFreeLimitCancellation) {
    const double N0 = kP9.alpha * kP9.e / (kP9.beta * kP9.f);
    const double C0 = kP9.alpha / kP9.beta;
    const auto pr = process_rates(Vec4(0.0, N0, 0.0, C0), kP9, Domain::limit);
    EXPECT_NEAR(pr.rate(2), pr.rate(4), 1e-9 * pr.rate(2));
    EXPECT_NEAR(pr.rate(2), kP9.alpha * kP9.e / kP9.beta, 1e-9 * pr.rate(2));
    for (int k : {1, 7, 8, 9, 10, 11, 12, 13, 14}) {
        EXPECT_EQ(pr.rate(k), 0.0) << "process " << k;
    }
    EXPECT_THROW((void)process_rates(Vec4(0.0, N0, 0.0, C0), kP9, Domain::strict), DomainError);
}

TEST(ProcessRates, NonNegativeOnFeasibleStates) {
    // R^1 is logistic and turns negative above the carrying capacity 1/b.
    for (auto s : random_states(200, 7)) {
        s.T = std::min(s.T, 1.0 / kP9.b);
        const auto pr = process_rates(s, kP9);
        for (int k = 1; k <= kProcesses; ++k) {
            EXPECT_GE(pr.rate(k), 0.0);
        }
    }
}

TEST(Rhs, CirculatingEquilibrium) {
    const auto g = rhs(make(5e7, 1e4, 1e5, kP9.alpha / kP9.beta), kP9);
    EXPECT_NEAR(g[kC], 0.0, 1e-6);
}

TEST(Rhs, TumorEquationAtPersistenceStart) {
    const auto g = rhs(make(1e6, 1e3, 10.0, 6e8), kP9);
    EXPECT_NEAR(g[kT], 430560.3149104132, 1e-6);
}

TEST(Rhs, MatchesBruteForceSum) {
    for (const auto& s : random_states(100, 11)) {
        const Vec4 fast = rhs(s, kP9);
        const Vec4 brute = tumorcsp::testing::brute_force_rhs(s, kP9);
        for (int i = 0; i < kVariables; ++i) {
            EXPECT_NEAR(fast[i], brute[i], 1e-12 * std::max(1.0, std::abs(brute[i])));
        }
    }
}

TEST(Jacobian, LinearCirculatingRow) {
    for (const auto& s : random_states(20, 3)) {
        const Mat4 J = jacobian(s, kP9);
        EXPECT_DOUBLE_EQ(J(kC, kC), -kP9.beta);
        EXPECT_EQ(J(kC, kT), 0.0);
        EXPECT_EQ(J(kC, kN), 0.0);
        EXPECT_EQ(J(kC, kL), 0.0);
    }
}

TEST(Jacobian, MatchesCentralDifferences) {
    for (const auto& s : random_states(100, 5)) {
        const Mat4 J = jacobian(s, kP9);
        const auto fd = tumorcsp::testing::fd_jacobian(s, kP9, 1e-6);
        EXPECT_LT(tumorcsp::testing::fd_relative_error(J, fd), 1e-6)
            << "T=" << s.T << " N=" << s.N << " L=" << s.L << " C=" << s.C;
    }
}

TEST(Jacobian, MatchesCentralDifferencesOtherParameters) {
    ParameterSet p;
    p.l = 1.4;
    p.d = 0.9;
    p.u = 1e-8;
    for (const auto& s : random_states(50, 9)) {
        const Mat4 J = jacobian(s, p);
        const auto fd = tumorcsp::testing::fd_jacobian(s, p, 1e-6);
        EXPECT_LT(tumorcsp::testing::fd_relative_error(J, fd), 1e-6);
    }
}

TEST(Jacobian, TumorFreeEigenvalues) {
    // Evaluated with L >> T so the kill term sits at its T -> 0 limit D -> d.
    const double N0 = kP9.alpha * kP9.e / (kP9.beta * kP9.f);
    const double C0 = kP9.alpha / kP9.beta;
    const Mat4 J = jacobian(make(1e-6, N0, 1e-2, C0), kP9);
    Eigen::EigenSolver<Mat4> es(J);
    std::vector<double> got;
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(es.eigenvalues()[i].imag(), 0.0, 1e-12);
        got.push_back(es.eigenvalues()[i].real());
    }
    std::vector<double> want{kP9.a - kP9.d - kP9.alpha * kP9.c * kP9.e / (kP9.beta * kP9.f), -kP9.f, -kP9.m,
                             -kP9.beta};
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(got[i], want[i], 1e-4 * std::abs(want[i]));
    }
}

TEST(Jacobian, DomainError) {
    EXPECT_THROW((void)jacobian(make(0.0, 1, 1, 1), kP9), DomainError);
}

TEST(RateJacobianTerm, ConstantSourceIsZero) {
    const auto s = make(1e6, 1e3, 10.0, 6e8);
    EXPECT_TRUE(rate_jacobian_term(3, s, kP9).isZero(0.0));
}

TEST(RateJacobianTerm, CirculatingDeathSingleEntry) {
    const Mat4 term = rate_jacobian_term(6, make(1e6, 1e3, 10.0, 6e8), kP9);
    EXPECT_DOUBLE_EQ(term(kC, kC), -kP9.beta);
    EXPECT_EQ(term.cwiseAbs().sum(), kP9.beta);
}

TEST(RateJacobianTerm, TermsSumToJacobian) {
    for (const auto& s : random_states(100, 13)) {
        Mat4 sum = Mat4::Zero();
        for (int k = 1; k <= kProcesses; ++k) {
            sum += rate_jacobian_term(k, s, kP9);
        }
        const Mat4 J = jacobian(s, kP9);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                EXPECT_NEAR(sum(i, j), J(i, j), 1e-12 * std::max(1.0, std::abs(J(i, j))));
            }
        }
    }
}

TEST(RateJacobianTerm, IndexErrors) {
    const auto s = make(1e6, 1e3, 10.0, 6e8);
    EXPECT_THROW((void)rate_jacobian_term(0, s, kP9), IndexError);
    EXPECT_THROW((void)rate_jacobian_term(16, s, kP9), IndexError);
}

TEST(LimitDomain, MatchesStrictInsideDomain) {
    for (const auto& s : random_states(20, 17)) {
        EXPECT_EQ(rhs(s.vec(), kP9, Domain::limit), rhs(s, kP9));
    }
}

TEST(LimitDomain, FiniteAtZeroTumor) {
    const Vec4 g = rhs(Vec4(0.0, 1e5, 1e3, 6e10), kP9, Domain::limit);
    EXPECT_TRUE(g.allFinite());
    EXPECT_EQ(g[kT], 0.0);
    const Mat4 J = jacobian(Vec4(0.0, 1e5, 1e3, 6e10), kP9, Domain::limit);
    EXPECT_TRUE(J.allFinite());
    EXPECT_NEAR(J(kT, kT), kP9.a - kP9.c * 1e5 - kP9.d, 1e-12);
}

} // namespace
