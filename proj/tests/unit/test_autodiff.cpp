#include <doctest.h>

#include "gradcheck.hpp"
#include "seqee/autodiff.hpp"

using namespace seqee;
using ad::Tape;
using ad::Var;
using test::gradcheck_max_rel_err;
using test::random_matrix;

namespace {

// Scalarizes an op through a random weighting so the whole Jacobian is hit.
ad::Var weighted_sum(Tape& t, Var x, std::uint64_t seed) {
    Var r = t.leaf(random_matrix(t.value(x).rows(), t.value(x).cols(), seed));
    return t.sum(t.mul(x, r));
}

}  // namespace

TEST_CASE("backward: sum gives all-ones; scalar regression matches closed form") {
    Tape t;
    Var w = t.leaf(random_matrix(3, 4, 5));
    Var loss = t.sum(w);
    t.backward(loss);
    CHECK((t.grad(w) - Matrix::Ones(3, 4)).cwiseAbs().maxCoeff() == 0.0);

    // (w*x - y)^2 with scalars: dw = 2(wx - y)x
    Tape t2;
    Matrix wv(1, 1), xv(1, 1), yv(1, 1);
    wv << 1.7;
    xv << -0.4;
    yv << 0.9;
    Var w2 = t2.leaf(wv), x2 = t2.leaf(xv), y2 = t2.leaf(yv);
    Var l2 = t2.square(t2.sub(t2.matmul(w2, x2), y2));
    t2.backward(l2);
    const Real want = 2 * (1.7 * -0.4 - 0.9) * -0.4;
    CHECK(t2.grad(w2)(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape t;
    Var w = t.leaf(random_matrix(2, 2, 1));
    CHECK_THROWS_AS(t.backward(w), UsageError);
}

TEST_CASE("every op's analytic gradient matches central differences") {
    const Real tol = 1e-4;

    SUBCASE("matmul") {
        std::vector<Matrix> ps{random_matrix(3, 4, 1), random_matrix(4, 2, 2)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.matmul(v[0], v[1]), 9);
              }) < tol);
    }
    SUBCASE("matmul_nt") {
        std::vector<Matrix> ps{random_matrix(3, 4, 3), random_matrix(5, 4, 4)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.matmul_nt(v[0], v[1]), 10);
              }) < tol);
    }
    SUBCASE("add sub mul") {
        std::vector<Matrix> ps{random_matrix(3, 3, 5), random_matrix(3, 3, 6)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.mul(t.sub(t.add(v[0], v[1]), v[1]), v[0]), 11);
              }) < tol);
    }
    SUBCASE("add_row and scale") {
        std::vector<Matrix> ps{random_matrix(4, 3, 7), random_matrix(1, 3, 8)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.scale(t.add_row(v[0], v[1]), 1.3), 12);
              }) < tol);
    }
    SUBCASE("gelu") {
        std::vector<Matrix> ps{random_matrix(4, 4, 9, 2.0)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.gelu(v[0]), 13);
              }) < tol);
    }
    SUBCASE("square") {
        std::vector<Matrix> ps{random_matrix(2, 5, 30)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.square(v[0]), 31);
              }) < tol);
    }
    SUBCASE("softmax_rows") {
        std::vector<Matrix> ps{random_matrix(4, 5, 10, 2.0)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.softmax_rows(v[0]), 14);
              }) < tol);
    }
    SUBCASE("layer_norm") {
        std::vector<Matrix> ps{random_matrix(4, 6, 11, 2.0), random_matrix(1, 6, 12),
                               random_matrix(1, 6, 13)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, t.layer_norm(v[0], v[1], v[2], 1e-12), 15);
              }) < tol);
    }
    SUBCASE("gather, scatter, slice, hstack") {
        std::vector<Matrix> ps{random_matrix(5, 4, 14), random_matrix(2, 4, 15)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  Var scattered = t.scatter_rows(v[0], v[1], {1, 3});
                  Var gathered = t.gather_rows(scattered, {0, 1, 3});
                  Var stacked =
                      t.hstack({t.slice_cols(gathered, 0, 2), t.slice_cols(gathered, 2, 2)});
                  return weighted_sum(t, stacked, 16);
              }) < tol);
    }
    SUBCASE("cross_entropy_rows") {
        std::vector<Matrix> ps{random_matrix(4, 3, 17, 2.0)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return t.cross_entropy_rows(v[0], {0, 2, 1, 2}, ad::Reduction::mean);
              }) < tol);
    }
    SUBCASE("flood away from the kink") {
        std::vector<Matrix> ps{random_matrix(1, 1, 18)};
        CHECK(gradcheck_max_rel_err(ps, [](Tape& t, const std::vector<Var>& v) {
                  return t.flood(t.square(v[0]), 0.25);
              }) < tol);
    }
}

TEST_CASE("scatter_rows passes gradients through untouched rows unchanged") {
    Tape t;
    Var base = t.leaf(random_matrix(4, 3, 20));
    Var rows = t.leaf(random_matrix(2, 3, 21));
    Var out = t.scatter_rows(base, rows, {0, 2});
    t.backward(t.sum(out));
    Matrix gb = t.grad(base);
    CHECK(gb.row(0).cwiseAbs().maxCoeff() == 0.0);  // replaced rows get nothing
    CHECK(gb.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((gb.row(1) - RowVector::Ones(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.grad(rows) - Matrix::Ones(2, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flood forward values and kink subgradient") {
    Tape t;
    Matrix x(1, 1);

    x << 0.25;
    Var a = t.leaf(x);
    CHECK(t.value(t.flood(a, 0.25))(0, 0) == doctest::Approx(0.25));  // raw == b -> b
    Var fa = t.flood(a, 0.25);
    t.backward(fa);
    CHECK(t.grad(a)(0, 0) == 0.0);  // subgradient 0 at the kink

    Tape t2;
    x << 0.5;
    Var b = t2.leaf(x);
    CHECK(t2.value(t2.flood(b, 0.25))(0, 0) == doctest::Approx(0.5));  // raw = 2b -> 2b

    Tape t3;
    x << 0.125;
    Var c = t3.leaf(x);
    Var fc = t3.flood(c, 0.25);
    CHECK(t3.value(fc)(0, 0) == doctest::Approx(0.375));  // raw = b/2 -> 3b/2
    t3.backward(fc);
    CHECK(t3.grad(c)(0, 0) == -1.0);  // gradient sign flipped below the flood
}

TEST_CASE("off-path leaves read back zero gradients") {
    Tape t;
    Var used = t.leaf(random_matrix(2, 2, 22));
    Var unused = t.leaf(random_matrix(2, 2, 23));
    t.backward(t.sum(used));
    CHECK_FALSE(t.has_grad(unused));
    CHECK(t.grad(unused).cwiseAbs().maxCoeff() == 0.0);
}
