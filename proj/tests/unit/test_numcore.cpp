#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "helpers.hpp"
#include "m3sot/errors.hpp"
#include "m3sot/gradcheck.hpp"
#include "m3sot/kernels.hpp"
#include "m3sot/ops.hpp"
#include "m3sot/params.hpp"

using namespace m3sot;
using testing::random_tensor;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Var probe(Tape& tape, const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("matmul") {
  Tape tape;
  SUBCASE("identity") {
    std::mt19937_64 rng(1);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye(i, i) = 1;
    const Var y = ops::matmul(tape.constant(eye), tape.constant(x));
    CHECK(y.value().vec() == x.vec());
  }
  SUBCASE("scalar") {
    const Var y = ops::matmul(tape.constant(Tensor::matrix(1, 1, {2})), tape.constant(Tensor::matrix(1, 1, {3})));
    CHECK(y.item() == 6.0);
  }
  SUBCASE("triple loop oracle") {
    std::mt19937_64 rng(2);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const Tensor want = naive_matmul(a, b);
    const Var y = ops::matmul(tape.constant(a), tape.constant(b));
    for (std::size_t i = 0; i < want.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-14));
  }
  SUBCASE("shape mismatch reports both shapes") {
    try {
      ops::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 2})));
      FAIL("no throw");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[4x2]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax_rows") {
  Tape tape;
  const double c = 3.7;
  const Var y = ops::softmax_rows(tape.constant(Tensor::matrix(3, 2, {0, 0, c, c + std::log(3.0), 1000, 1001})));
  const Tensor& v = y.value();
  CHECK(v(0, 0) == 0.5);
  CHECK(v(0, 1) == 0.5);
  CHECK(v(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(v(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  const double e = std::exp(1.0);
  CHECK(v(2, 0) == doctest::Approx(1 / (1 + e)).epsilon(1e-12));
  CHECK(v(2, 1) == doctest::Approx(e / (1 + e)).epsilon(1e-12));

  Tensor bad = Tensor::matrix(1, 2, {0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(ops::softmax_rows(tape.constant(bad)), NumericError);
}

TEST_CASE("softmax rows sum to one and ignore shifts") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tape tape;
    Tensor x = random_tensor({4, 6}, rng, -20, 20);
    Tensor shifted = x;
    std::uniform_real_distribution<double> u(-50, 50);
    for (std::size_t r = 0; r < 4; ++r) {
      const double s = u(rng);
      for (std::size_t c = 0; c < 6; ++c) shifted(r, c) += s;
    }
    const Tensor a = ops::softmax_rows(tape.constant(x)).value();
    const Tensor b = ops::softmax_rows(tape.constant(shifted)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        s += a(r, c);
        CHECK(a(r, c) >= 0.0);
        CHECK(a(r, c) == doctest::Approx(b(r, c)).epsilon(1e-9));
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("layer_norm") {
  Tape tape;
  const Tensor ones({8}, 1.0), zeros({8}, 0.0);
  SUBCASE("constant row") {
    const Var y = ops::layer_norm(tape.constant(Tensor({1, 8}, 4.2)), tape.constant(ones), tape.constant(zeros));
    for (double v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("two pass oracle") {
    std::mt19937_64 rng(4);
    const Tensor x = random_tensor({4, 8}, rng, -3, 3);
    const Tensor g = random_tensor({8}, rng), b = random_tensor({8}, rng);
    const Tensor y = ops::layer_norm(tape.constant(x), tape.constant(g), tape.constant(b)).value();
    const Tensor unit = ops::layer_norm(tape.constant(x), tape.constant(ones), tape.constant(zeros)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double mean = 0, var = 0, um = 0, uv = 0;
      for (std::size_t c = 0; c < 8; ++c) mean += x(r, c) / 8;
      for (std::size_t c = 0; c < 8; ++c) var += (x(r, c) - mean) * (x(r, c) - mean) / 8;
      for (std::size_t c = 0; c < 8; ++c) {
        const double want = (x(r, c) - mean) / std::sqrt(var + 1e-5) * g[c] + b[c];
        CHECK(y(r, c) == doctest::Approx(want).epsilon(1e-12));
        um += unit(r, c) / 8;
      }
      for (std::size_t c = 0; c < 8; ++c) uv += (unit(r, c) - um) * (unit(r, c) - um) / 8;
      CHECK(std::abs(um) < 1e-12);
      CHECK(uv == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("backward") {
  SUBCASE("sum of squares") {
    Tensor x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    Tape tape;
    const Var v = tape.leaf(x);
    tape.backward(ops::sum(ops::mul(v, v)));
    CHECK(x.grad()[0] == 6.0);
  }
  SUBCASE("unused leaf gets zeros") {
    Tensor x = Tensor::scalar(3.0), y({2}, 1.0);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    Tape tape;
    const Var v = tape.leaf(x);
    tape.leaf(y);
    tape.backward(ops::sum(ops::mul(v, v)));
    for (double g : y.ensure_grad()) CHECK(g == 0.0);
  }
  SUBCASE("non-scalar loss") {
    Tensor x({2}, 1.0);
    x.set_requires_grad(true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.leaf(x)), ContractError);
  }
  SUBCASE("repeated calls accumulate") {
    Tensor x = Tensor::scalar(2.0);
    x.set_requires_grad(true);
    for (int i = 0; i < 3; ++i) {
      Tape tape;
      const Var v = tape.leaf(x);
      tape.backward(ops::sum(ops::mul(v, v)));
    }
    CHECK(x.grad()[0] == 12.0);
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("two graph copies double the gradient") {
    std::mt19937_64 rng(5);
    Tensor w = random_tensor({3, 4}, rng);
    const Tensor in = random_tensor({2, 3}, rng);
    w.set_requires_grad(true);
    std::vector<double> single;
    {
      Tape t;
      const Var wv = t.leaf(w);
      t.backward(probe(t, ops::softmax_rows(ops::matmul(t.constant(in), wv)), 1));
      single.assign(w.grad().begin(), w.grad().end());
    }
    w.zero_grad();
    {
      Tape t;
      const Var wv = t.leaf(w);
      const Var a = probe(t, ops::softmax_rows(ops::matmul(t.constant(in), wv)), 1);
      const Var b = probe(t, ops::softmax_rows(ops::matmul(t.constant(in), wv)), 1);
      t.backward(ops::add(a, b));
    }
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(w.grad()[i] == 2.0 * single[i]);
  }
}

TEST_CASE("finite difference check") {
  std::mt19937_64 rng(6);
  SUBCASE("affine is exact") {
    const Tensor w = random_tensor({5, 1}, rng);
    const Tensor x = random_tensor({1, 5}, rng);
    const double err = finite_difference_check(
        [&](Tape& t, const Var& v) { return ops::add_scalar(ops::sum(ops::matmul(v, t.constant(w))), 0.7); }, x);
    CHECK(err < 1e-9);
  }
  SUBCASE("relu away from the kink") {
    Tensor x = random_tensor({3, 3}, rng, 0.1, 2.0);
    for (std::size_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    CHECK(finite_difference_check([](Tape& t, const Var& v) { return probe(t, ops::relu(ops::scale(v, 1.5)), 2); },
                                  x) < 1e-6);
  }
  SUBCASE("matmul softmax sum composite") {
    const Tensor b = random_tensor({4, 3}, rng);
    const Tensor x = random_tensor({2, 4}, rng);
    const double err = finite_difference_check(
        [&](Tape& t, const Var& v) { return probe(t, ops::softmax_rows(ops::matmul(v, t.constant(b))), 3); }, x);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("every primitive op matches finite differences on random instances") {
  constexpr double kTol = 1e-6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(100 + seed);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({2, 4}, rng);
    const Tensor g = random_tensor({4}, rng, 0.5, 1.5), be = random_tensor({4}, rng);
    const Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor away = a;
    for (double& v : away.data()) v += v >= 0 ? 0.1 : -0.1;
    const std::uint64_t s = seed;
    auto check = [&](const ScalarFn& f, const Tensor& x) { CHECK(finite_difference_check(f, x) < kTol); };
    check([&](Tape& t, const Var& x) { return probe(t, ops::matmul(x, t.constant(b)), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::matmul_nt(x, t.constant(c)), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::add(x, ops::mul(x, x)), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::sub(ops::scale(x, -2.0), ops::add_scalar(x, 1.0)), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::add_bias(t.constant(a), x), s); }, be);
    check([&](Tape& t, const Var& x) { return probe(t, ops::relu(x), s); }, away);
    check([&](Tape& t, const Var& x) { return probe(t, ops::sigmoid(x), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::log(x), s); }, pos);
    check([&](Tape& t, const Var& x) { return probe(t, ops::softmax_rows(x), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::layer_norm(x, t.constant(g), t.constant(be)), s); }, a);
    check([&](Tape& t, const Var& x) { return probe(t, ops::layer_norm(t.constant(a), t.constant(g), x), s); }, be);
    check([&](Tape& t, const Var& x) { return probe(t, ops::slice_cols(ops::slice_rows(x, 1, 3), 1, 4), s); }, a);
    check([&](Tape& t, const Var& x) { return ops::mean(ops::huber(ops::scale(x, 3.0))); }, away);
  }
}

TEST_CASE("parameter store") {
  std::mt19937_64 rng(7);
  ParameterStore p;
  p.add_uniform("b.w", {3, 2}, 3, rng);
  p.add("a.bias", random_tensor({2}, rng));
  p.add("c", random_tensor({2, 2, 2}, rng));
  CHECK_THROWS_AS(p.add("c", Tensor({1})), ContractError);
  CHECK(p.total_values() == 6 + 2 + 8);

  SUBCASE("uniform init bound") {
    for (double v : p.at("b.w").data()) CHECK(std::abs(v) <= std::sqrt(1.0 / 3.0));
  }
  SUBCASE("name-sorted layout") {
    const auto bytes = p.serialize();
    const std::string head(bytes.begin(), bytes.begin() + 8);
    CHECK(head == "M3CKPT1\n");
    // first record: u32 length 6 then "a.bias"
    CHECK(bytes[8] == 6);
    CHECK(std::string(bytes.begin() + 12, bytes.begin() + 18) == "a.bias");
  }
  SUBCASE("save load save is byte identical") {
    const auto first = p.serialize();
    const ParameterStore q = ParameterStore::deserialize(first);
    CHECK(q.same_values(p));
    CHECK(q.serialize() == first);
    const auto path = std::filesystem::temp_directory_path() / "m3sot_params_test.m3ckpt";
    p.save(path);
    CHECK(ParameterStore::load(path).serialize() == first);
    std::filesystem::remove(path);
  }
  SUBCASE("corrupt input") {
    auto bytes = p.serialize();
    bytes[0] = 'X';
    CHECK_THROWS_AS(ParameterStore::deserialize(bytes), FormatError);
    auto cut = p.serialize();
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(ParameterStore::deserialize(cut), FormatError);
  }
}

TEST_CASE("adam first step moves each coordinate by lr") {
  ParameterStore p;
  Tensor& w = p.add("w", Tensor::matrix(1, 3, {1.0, -2.0, 0.5}));
  w.set_requires_grad(true);
  const std::vector<double> g{0.3, -4.0, 1e-3};
  auto grad = w.ensure_grad();
  std::copy(g.begin(), g.end(), grad.begin());
  Adam opt(0.01);
  opt.step(p);
  const double want[3] = {1.0 - 0.01 * 0.3 / (0.3 + 1e-8), -2.0 + 0.01 * 4.0 / (4.0 + 1e-8),
                          0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)};
  for (int i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(want[i]).epsilon(1e-12));
  CHECK(opt.steps() == 1);
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  std::mt19937_64 rng(8);
  const std::size_t m = 37, k = 19, n = 23;
  const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng), bt = random_tensor({n, k}, rng);
  const Tensor at = random_tensor({k, m}, rng);
  std::vector<double> c1(m * n), c2(m * n);
  kernels::matmul(a.data(), b.data(), c1, m, k, n);
  kernels::serial::matmul(a.data(), b.data(), c2, m, k, n);
  CHECK(c1 == c2);
  kernels::matmul_nt(a.data(), bt.data(), c1, m, k, n);
  kernels::serial::matmul_nt(a.data(), bt.data(), c2, m, k, n);
  CHECK(c1 == c2);
  std::fill(c1.begin(), c1.end(), 0.5);
  std::fill(c2.begin(), c2.end(), 0.5);
  kernels::matmul_tn_acc(at.data(), b.data(), c1, m, k, n);
  kernels::serial::matmul_tn_acc(at.data(), b.data(), c2, m, k, n);
  CHECK(c1 == c2);

  const Tensor xyz = random_tensor({200, 3}, rng);
  std::vector<std::uint32_t> k1(200 * 8), k2(200 * 8);
  kernels::knn(xyz.data(), 200, 8, k1);
  kernels::serial::knn(xyz.data(), 200, 8, k2);
  CHECK(k1 == k2);

  const Tensor ea = random_tensor({200, 5}, rng), eb = random_tensor({200, 5}, rng);
  std::vector<double> o1(1000), o2(1000);
  std::vector<std::uint32_t> a1(1000), a2(1000);
  kernels::edge_max(ea.data(), eb.data(), k1, 200, 5, 8, o1, a1);
  kernels::serial::edge_max(ea.data(), eb.data(), k1, 200, 5, 8, o2, a2);
  CHECK(o1 == o2);
  CHECK(a1 == a2);

  kernels::softmax_rows(a.data(), c1, m, k);
  kernels::serial::softmax_rows(a.data(), c2, m, k);
  CHECK(std::equal(c1.begin(), c1.begin() + m * k, c2.begin()));
}
