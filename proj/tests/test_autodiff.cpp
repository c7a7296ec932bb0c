#include "rtrl/autodiff.hpp"
#include "rtrl/gradcheck.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace rtrl;

namespace {

// FD-check a scalar graph built from a flat parameter vector.
template <class Build>
GradCheckReport check(const VectorXd& theta, Build build) {
    ad::Tape tape(&theta);
    tape.backward(build(tape));
    VectorXd analytic = tape.grad;
    auto loss = [&](const VectorXd& p) {
        ad::Tape t(&p);
        return t.scalar(build(t));
    };
    return finite_difference_check(loss, theta, analytic);
}

VectorXd random_theta(int n, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

}  // namespace

TEST_CASE("quadratic loss gradient is the parameter vector") {
    VectorXd theta = random_theta(7, 1);
    ad::Tape tape(&theta);
    ad::Tape::Var p = tape.param(0, 7, 1);
    tape.backward(tape.scale(tape.sum(tape.square(p)), 0.5));
    REQUIRE((tape.grad - theta).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gradient of a constant expression is zero") {
    VectorXd theta = random_theta(4, 2);
    ad::Tape tape(&theta);
    ad::Tape::Var c = tape.constant(MatrixXd::Constant(2, 2, 3.0));
    tape.backward(tape.sum(c));
    REQUIRE(tape.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("elementwise and shape ops pass finite differences") {
    VectorXd theta = random_theta(12, 3);
    auto r = check(theta, [](ad::Tape& t) {
        ad::Tape::Var a = t.param(0, 3, 2);
        ad::Tape::Var b = t.param(6, 3, 2);
        ad::Tape::Var mix = t.add(t.mul(t.tanh(a), t.exp(t.scale(b, 0.3))),
                                  t.sub(t.relu(a), t.softplus(b)));
        return t.mean(t.square(mix));
    });
    INFO("worst coord " << r.worst_coordinate << ": " << r.analytic_at_worst << " vs "
                        << r.numeric_at_worst);
    REQUIRE(r.pass);
}

TEST_CASE("matmul, broadcasts and reductions pass finite differences") {
    VectorXd theta = random_theta(23, 4);
    auto r = check(theta, [](ad::Tape& t) {
        ad::Tape::Var w = t.param(0, 3, 4);
        ad::Tape::Var x = t.param(12, 4, 2);
        ad::Tape::Var bias = t.param(20, 3, 1);
        ad::Tape::Var h = t.add_col(t.matmul(w, x), bias);  // 3 x 2
        ad::Tape::Var row = t.colsum(h);                    // 1 x 2
        ad::Tape::Var shifted = t.sub_row(h, row);
        return t.add(t.sum(shifted), t.mean(t.log(t.add_scalar(t.square(h), 1.0))));
    });
    REQUIRE(r.pass);
}

TEST_CASE("min and clamp route gradients to the active branch") {
    VectorXd theta = random_theta(8, 5);
    auto r = check(theta, [](ad::Tape& t) {
        ad::Tape::Var a = t.param(0, 2, 2);
        ad::Tape::Var b = t.param(4, 2, 2);
        return t.sum(t.add(t.cwise_min(a, b), t.clamp(t.scale(a, 2.0), -1.0, 1.0)));
    });
    REQUIRE(r.pass);

    // vcat and rows round trip
    auto r2 = check(theta, [](ad::Tape& t) {
        ad::Tape::Var a = t.param(0, 2, 2);
        ad::Tape::Var b = t.param(4, 2, 2);
        ad::Tape::Var cat = t.vcat(a, b);
        return t.sum(t.mul(t.rows(cat, 1, 2), t.rows(cat, 2, 2)));
    });
    REQUIRE(r2.pass);
}

TEST_CASE("non-finite intermediates are reported with the node named") {
    VectorXd theta = random_theta(2, 6);
    theta[0] = -1.0;
    ad::Tape tape(&theta);
    ad::Tape::Var p = tape.param(0, 2, 1);
    ad::Tape::Var bad = tape.log(p);  // log of a negative entry
    REQUIRE_THROWS_WITH(tape.backward(tape.sum(bad)),
                        Catch::Matchers::ContainsSubstring("log"));
}

TEST_CASE("backward requires a scalar loss") {
    VectorXd theta = random_theta(4, 7);
    ad::Tape tape(&theta);
    ad::Tape::Var p = tape.param(0, 2, 2);
    REQUIRE_THROWS_AS(tape.backward(p), SpecError);
}

TEST_CASE("finite difference harness flags corrupted gradients") {
    VectorXd theta = random_theta(5, 8);
    ad::Tape tape(&theta);
    ad::Tape::Var p = tape.param(0, 5, 1);
    tape.backward(tape.scale(tape.sum(tape.square(p)), 0.5));
    VectorXd corrupted = tape.grad;
    corrupted[3] += 1.0;
    auto loss = [&](const VectorXd& v) { return 0.5 * v.squaredNorm(); };
    GradCheckReport r = finite_difference_check(loss, theta, corrupted);
    REQUIRE_FALSE(r.pass);
    REQUIRE(r.worst_coordinate == 3);

    GradCheckReport ok = finite_difference_check(loss, theta, tape.grad);
    REQUIRE(ok.pass);
    REQUIRE(ok.max_relative_error <= 1e-8);  // quadratic: machine-precision agreement
}
