#include <catch_amalgamated.hpp>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/nn.hpp"
#include "gradcheck.hpp"

using namespace gfn4rec;
using ag::Matrix;
using ag::Tensor;
using testing::check_gradients;

namespace {

Tensor param(int r, int c, Rng& rng, double scale = 1.0) {
  return Tensor::parameter(nn::random_normal(r, c, scale, rng));
}

// Fixed random projection turning any tensor into a scalar.
Tensor project(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(t, Tensor::constant(nn::random_normal(t.rows(), t.cols(), 1.0, rng))));
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences", "[autograd]") {
  Rng rng(1);
  Tensor a = param(3, 4, rng);
  Tensor b = param(4, 2, rng);
  Tensor c = param(3, 4, rng);
  Tensor row = param(1, 4, rng);

  auto loss = [&] {
    Tensor x = ag::add_row(ag::add(ag::mul(a, c), ag::sub(a, ag::scale(c, 0.3))), row);
    Tensor y = ag::matmul(ag::tanh(x), b);
    Tensor z = ag::matmul_nt(ag::sigmoid(y), ag::gelu(y));
    Tensor w = ag::concat_cols(ag::softplus(z), ag::square(ag::add_scalar(z, 0.5)));
    return project(ag::exp(ag::scale(w, 0.1)), 7);
  };
  const auto r = check_gradients({{"a", a}, {"b", b}, {"c", c}, {"row", row}}, loss);
  INFO(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("indexing ops match finite differences", "[autograd]") {
  Rng rng(2);
  Tensor table = param(5, 3, rng);
  auto loss = [&] {
    Tensor g = ag::gather_rows(table, {4, 0, 4, 2});
    Tensor c = ag::combine_rows(table, 2, {{0, 1, 0.5}, {0, 3, 0.5}, {1, 4, -2.0}});
    Tensor s = ag::scale_rows(g, Eigen::Vector4d(1.0, 0.0, 2.0, -1.0));
    Tensor rs = ag::row_sum(s);
    Tensor p = ag::pick(ag::concat_cols(g, g), {0, 5, 3, 1});
    return ag::add(ag::add(project(c, 3), project(rs, 4)), project(p, 5));
  };
  const auto r = check_gradients({{"table", table}}, loss);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("log-space ops match finite differences", "[autograd]") {
  Rng rng(3);
  Tensor x = param(3, 5, rng);
  ag::BoolMatrix mask = ag::BoolMatrix::Constant(3, 5, true);
  mask(0, 1) = false;
  mask(2, 4) = false;
  mask(2, 0) = false;
  auto loss = [&] {
    Tensor lsm = ag::masked_log_softmax(x, mask);
    Tensor picked = ag::pick(lsm, {0, 2, 3});
    Tensor shifted = ag::log_shifted_exp(picked, 0.7);
    Tensor pos = ag::log(ag::add_scalar(ag::square(x), 1.0));
    return ag::add(project(shifted, 9), project(pos, 10));
  };
  const auto r = check_gradients({{"x", x}}, loss);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("layer norm and attention match finite differences", "[autograd]") {
  Rng rng(4);
  const int len = 3, d = 4, heads = 2, n_seq = 2;
  Tensor q = param(n_seq * len, d, rng);
  Tensor k = param(n_seq * len, d, rng);
  Tensor v = param(n_seq * len, d, rng);
  Tensor gain = param(1, d, rng);
  Tensor bias = param(1, d, rng);
  ag::BoolMatrix valid = ag::BoolMatrix::Constant(n_seq, len, true);
  valid(1, 0) = false;
  auto loss = [&] {
    Tensor att = ag::multi_head_attention(q, k, v, len, heads, valid);
    return project(ag::layer_norm(att, gain, bias), 11);
  };
  const auto r = check_gradients({{"q", q}, {"k", k}, {"v", v}, {"gain", gain}, {"bias", bias}}, loss);
  INFO(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("attention with no valid key outputs zeros", "[autograd]") {
  Rng rng(5);
  Tensor q = param(2, 4, rng);
  ag::BoolMatrix valid = ag::BoolMatrix::Constant(1, 2, false);
  Tensor out = ag::multi_head_attention(q, q, q, 2, 2, valid);
  CHECK(out.value().isZero());
}

TEST_CASE("masked log-softmax excludes masked entries exactly", "[autograd]") {
  Tensor x = Tensor::constant((Matrix(1, 3) << 5.0, 1.0, 2.0).finished());
  ag::BoolMatrix mask(1, 3);
  mask << false, true, true;
  Tensor lsm = ag::masked_log_softmax(x, mask);
  CHECK(std::exp(lsm.value()(0, 0)) == 0.0);
  CHECK(std::exp(lsm.value()(0, 1)) + std::exp(lsm.value()(0, 2)) == Catch::Approx(1.0).epsilon(1e-12));
  mask(0, 1) = mask(0, 2) = false;
  CHECK_THROWS_AS(ag::masked_log_softmax(x, mask), PreconditionError);
}

TEST_CASE("no-grad guard builds no graph", "[autograd]") {
  Rng rng(6);
  Tensor a = param(2, 2, rng);
  {
    ag::NoGradGuard g;
    Tensor b = ag::tanh(a);
    CHECK_FALSE(b.requires_grad());
  }
  CHECK(ag::tanh(a).requires_grad());
}

TEST_CASE("shape errors are reported", "[autograd]") {
  Rng rng(7);
  CHECK_THROWS_AS(ag::matmul(param(2, 3, rng), param(2, 3, rng)), ShapeError);
  CHECK_THROWS_AS(ag::add(param(2, 3, rng), param(3, 2, rng)), ShapeError);
  CHECK_THROWS_AS(param(2, 2, rng).backward(), ShapeError);
}

TEST_CASE("adam minimizes a quadratic", "[nn]") {
  nn::ParameterStore store;
  Tensor x = store.add("x", Matrix::Constant(1, 3, 5.0));
  nn::Adam opt({.learning_rate = 0.1});
  for (int i = 0; i < 500; ++i) {
    ag::sum(ag::square(x)).backward();
    opt.step(store);
  }
  CHECK(x.value().norm() < 1e-2);
}
