#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "seqee/linalg.hpp"

using namespace seqee;

namespace {

// Naive triple-loop reference, kept independent of the Eigen-backed path.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix out = Matrix::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k)
            for (Index j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
    return out;
}

}  // namespace

TEST_CASE("matmul: identity, hand case, shape errors") {
    Matrix m = test::random_matrix(3, 5, 7);
    CHECK(matmul(Matrix::Identity(3, 3), m) == m);

    Matrix a(2, 2), b(2, 1);
    a << 1, 2, 3, 4;
    b << 5, 6;
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 17);
    CHECK(c(1, 0) == 39);

    CHECK_THROWS_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("matmul agrees with the triple-loop oracle and counts MACs") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Matrix a = test::random_matrix(4, 5, seed, 10.0);
        Matrix b = test::random_matrix(5, 3, seed + 100, 10.0);
        std::uint64_t macs = 0;
        Matrix got = matmul(a, b, &macs);
        Matrix want = matmul_oracle(a, b);
        CHECK(macs == 4 * 5 * 3);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("softmax_rows: symmetry, overflow safety, frozen values") {
    Matrix zeros(1, 3);
    zeros << 0, 0, 0;
    Matrix u = softmax_rows(zeros);
    for (Index j = 0; j < 3; ++j) CHECK(u(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Matrix big(1, 2);
    big << 1000, 0;
    Matrix s = softmax_rows(big);
    CHECK(s(0, 0) == doctest::Approx(1.0));
    CHECK(s(0, 1) < 1e-300);

    Matrix row(1, 3);
    row << 1, 2, 3;
    Matrix p = softmax_rows(row);
    CHECK(p(0, 0) == doctest::Approx(0.09003).epsilon(1e-4));
    CHECK(p(0, 1) == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(p(0, 2) == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax_rows rows are probability distributions") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<Real> ud(-50, 50);
    Matrix m(20, 7);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = ud(rng);
    Matrix p = softmax_rows(m);
    for (Index i = 0; i < p.rows(); ++i) {
        CHECK(p.row(i).minCoeff() >= 0.0);
        CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("layer_norm: constant row, two-point row, definitional oracle") {
    RowVector gain = RowVector::Ones(4), bias = RowVector::Zero(4);
    Matrix constant = Matrix::Constant(1, 4, 3.5);
    CHECK(layer_norm(constant, gain, bias, 1e-12).cwiseAbs().maxCoeff() < 1e-6);

    RowVector g2 = RowVector::Ones(2), b2 = RowVector::Zero(2);
    Matrix two(1, 2);
    two << 1, 3;
    Matrix n2 = layer_norm(two, g2, b2, 1e-300);
    CHECK(n2(0, 0) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(n2(0, 1) == doctest::Approx(1.0).epsilon(1e-10));

    // random row vs the definition, and the mean-0/var-1 contract pre gain/bias
    Matrix r = test::random_matrix(3, 9, 21, 2.0);
    Matrix out = layer_norm(r, RowVector::Ones(9), RowVector::Zero(9), 1e-12);
    for (Index i = 0; i < r.rows(); ++i) {
        const Real mean = r.row(i).mean();
        const Real var = (r.row(i).array() - mean).square().sum() / 9.0;
        for (Index j = 0; j < 9; ++j) {
            const Real want = (r(i, j) - mean) / std::sqrt(var + 1e-12);
            CHECK(out(i, j) == doctest::Approx(want).epsilon(1e-12));
        }
        CHECK(std::abs(out.row(i).mean()) < 1e-10);
        CHECK(std::abs((out.row(i).array() - out.row(i).mean()).square().sum() / 9.0 - 1.0) <
              1e-10);
    }

    CHECK_THROWS_AS(layer_norm(r, RowVector::Ones(3), RowVector::Zero(9), 1e-12), ShapeError);
}

TEST_CASE("non-finite results are rejected") {
    Matrix bad(1, 2);
    bad << 1e308, 1e308;
    CHECK_THROWS_AS(matmul(bad, Matrix::Constant(2, 1, 1e308)), NumericError);
}
