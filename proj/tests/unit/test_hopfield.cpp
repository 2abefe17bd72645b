#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "m2slt/error.hpp"
#include "m2slt/hopfield.hpp"

using namespace m2slt;

namespace {

// Unit rows with max pairwise cosine below 0.1: Gram-Schmidt, a little noise, renormalise.
Matrix separated_patterns(Rng& rng, std::size_t c, std::size_t d) {
  Matrix p = testing::random_matrix(rng, c, d);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += p(i, k) * p(j, k);
      for (std::size_t k = 0; k < d; ++k) p(i, k) -= dot * p(j, k);
    }
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) n += p(i, k) * p(i, k);
    for (std::size_t k = 0; k < d; ++k) p(i, k) /= std::sqrt(n);
  }
  for (double& v : p.data()) v += rng.uniform(-0.01, 0.01);
  for (std::size_t i = 0; i < c; ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) n += p(i, k) * p(i, k);
    for (std::size_t k = 0; k < d; ++k) p(i, k) /= std::sqrt(n);
  }
  const Matrix cos = cosine_similarity(p, p);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (i != j) REQUIRE(std::abs(cos(i, j)) < 0.1);
  return p;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Least squares for w in Xᵀ w = y via normal equations.
std::vector<double> solve_weights(const Matrix& x, std::span<const double> y) {
  const std::size_t c = x.rows();
  Matrix g = matmul_nt(x, x);
  std::vector<double> rhs(c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t k = 0; k < x.cols(); ++k) rhs[i] += x(i, k) * y[k];
  for (std::size_t col = 0; col < c; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < c; ++r)
      if (std::abs(g(r, col)) > std::abs(g(piv, col))) piv = r;
    for (std::size_t k = 0; k < c; ++k) std::swap(g(col, k), g(piv, k));
    std::swap(rhs[col], rhs[piv]);
    for (std::size_t r = 0; r < c; ++r) {
      if (r == col) continue;
      const double f = g(r, col) / g(col, col);
      for (std::size_t k = 0; k < c; ++k) g(r, k) -= f * g(col, k);
      rhs[r] -= f * rhs[col];
    }
  }
  for (std::size_t i = 0; i < c; ++i) rhs[i] /= g(i, i);
  return rhs;
}

PrototypeSet as_set(Matrix m) {
  PrototypeSet s;
  s.sizes.assign(m.rows(), 1);
  s.prototypes = std::move(m);
  return s;
}

}  // namespace

TEST_CASE("single prototype is retrieved by every query") {
  Rng rng(1);
  const Matrix p = testing::random_matrix(rng, 1, 5);
  const Matrix out = hopfield_retrieve(testing::random_matrix(rng, 6, 5, -3.0, 3.0), p, 8.0, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 5; ++k) CHECK(out(i, k) == doctest::Approx(p(0, k)).epsilon(1e-12));
}

TEST_CASE("stored pattern is recalled after one step") {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix p = separated_patterns(rng, 5, 16);
    const Matrix out = hopfield_retrieve(p, p, 8.0, 1);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(cosine(out.row(i), p.row(i)) >= 0.99);
      double moved = 0.0;
      for (std::size_t k = 0; k < 16; ++k) moved += (out(i, k) - p(i, k)) * (out(i, k) - p(i, k));
      CHECK(std::sqrt(moved) < 1e-2);
    }
  }
}

TEST_CASE("vanishing inverse temperature gives the pattern mean") {
  Rng rng(3);
  const Matrix p = testing::random_matrix(rng, 4, 6);
  const Matrix mean = mean_rows(p);
  const Matrix out = hopfield_retrieve(testing::random_matrix(rng, 3, 6), p, 1e-6, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(out(i, k) - mean(0, k)) <= 1e-4);
}

TEST_CASE("retrieved rows are convex combinations of the patterns") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix p = testing::random_matrix(rng, 3, 7);
    const std::size_t iters = 1 + rng.below(3);
    const Matrix out =
        hopfield_retrieve(testing::random_matrix(rng, 4, 7), p, rng.uniform(0.5, 10.0), iters);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto w = solve_weights(p, out.row(i));
      double sum = 0.0;
      for (double v : w) {
        CHECK(v >= -1e-9);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("retrieval errors") {
  CHECK_THROWS_AS(hopfield_retrieve(Matrix(2, 3), Matrix(0, 3), 8.0, 1), RetrievalError);
  CHECK_THROWS_AS(hopfield_retrieve(Matrix(2, 3), Matrix(2, 4), 8.0, 1), ArgumentError);
  CHECK_THROWS_AS(hopfield_retrieve(Matrix(2, 3), Matrix(2, 3), 8.0, 0), ArgumentError);
  Rng rng(5);
  MarConfig bad;
  bad.beta_h = 0.0;
  CHECK_THROWS_AS(MarParams(4, 3, bad, rng), ConfigError);
  bad.beta_h = 8.0;
  bad.iterations = 0;
  CHECK_THROWS_AS(MarParams(4, 3, bad, rng), ConfigError);
}

TEST_CASE("zero residual scale is an identity") {
  Rng rng(6);
  MarParams params(6, 4, MarConfig{9, 8.0, 1}, rng);
  CHECK(params.beta_value() == 0.0);
  const Matrix f = testing::random_matrix(rng, 5, 6);
  CHECK(mar_enhance(f, as_set(testing::random_matrix(rng, 3, 4)), params) == f);
}

TEST_CASE("single prototype adds one constant row") {
  Rng rng(7);
  MarParams params(6, 4, MarConfig{9, 8.0, 1}, rng);
  params.beta.value(0, 0) = 0.3;
  const PrototypeSet set = as_set(testing::random_matrix(rng, 1, 4));
  const Matrix f = testing::random_matrix(rng, 5, 6);
  const Matrix out = mar_enhance(f, set, params);
  const Matrix residual = mlp_forward(params.dec, set.prototypes);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 6; ++k)
      CHECK(std::abs(out(t, k) - f(t, k) - 0.3 * residual(0, k)) <= 1e-12);
}

TEST_CASE("enhancement equals its manual composition") {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    MarConfig cfg{7, rng.uniform(1.0, 10.0), 1 + rng.below(3)};
    MarParams params(6, 4, cfg, rng);
    params.beta.value(0, 0) = rng.uniform(-1.0, 1.0);
    const PrototypeSet set = as_set(testing::random_matrix(rng, 3, 4));
    const Matrix f = testing::random_matrix(rng, 5, 6);
    const Matrix q = mlp_forward(params.enc, f);
    const Matrix r = hopfield_retrieve(q, set, cfg.beta_h, cfg.iterations);
    const Matrix manual = add(f, scale(mlp_forward(params.dec, r), params.beta_value()));
    const Matrix out = mar_enhance(f, set, params);
    CHECK(out.same_shape(f));
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(std::abs(out.data()[i] - manual.data()[i]) <= 1e-10);
    CHECK(mar_enhance(f, set, params) == out);
  }
  MarParams params(6, 4, MarConfig{}, rng);
  CHECK_THROWS_AS(mar_enhance(Matrix(2, 5), as_set(Matrix(1, 4)), params), ArgumentError);
}

TEST_CASE("MaR gradients match finite differences") {
  Rng rng(9);
  for (int rep = 0; rep < 4; ++rep) {
    MarParams params(6, 4, MarConfig{7, 3.0, 1 + static_cast<std::size_t>(rep % 2)}, rng);
    params.beta.value(0, 0) = 0.6;
    for (auto* net : {&params.enc, &params.dec})
      for (auto& l : net->layers())
        for (double& b : l.bias.value.data()) b = rng.uniform(-0.2, 0.2);
    const PrototypeSet set = as_set(testing::random_matrix(rng, 3, 4));
    Param input(testing::random_matrix(rng, 4, 6));
    const Matrix w = testing::random_matrix(rng, 4, 6);
    ParamList list;
    params.register_params(list);
    list.emplace_back("input", &input);
    auto loss = [&] {
      const Matrix y = mar_enhance(input.value, set, params);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
      return s;
    };
    zero_grads(list);
    MarTrace trace;
    mar_enhance(input.value, set, params, &trace);
    add_in_place(input.grad, mar_enhance_backward(params, set, trace, w));
    const GradCheckResult r = check_gradients(list, loss);
    INFO("worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic
                  << " numeric " << r.numeric);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("parameter names") {
  Rng rng(10);
  MarParams params(6, 4, MarConfig{}, rng);
  ParamList list;
  params.register_params(list);
  REQUIRE_FALSE(list.empty());
  for (const auto& [name, p] : list) CHECK(name.rfind("mar.", 0) == 0);
  CHECK(list.back().first == "mar.beta");
}
