#include <doctest.h>

#include "helpers.hpp"
#include "m3sot/gradcheck.hpp"
#include "m3sot/ops.hpp"
#include "m3sot/tracker.hpp"

using namespace m3sot;
using testing::random_tensor;

namespace {

constexpr double kTol = 1e-5;
// Deep stacks have gradient coordinates near 1e-8; the larger step keeps
// rounding noise well under the tolerance.
constexpr double kStackEps = 1e-3;

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Var probe(Tape& tape, const Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("op gradients") {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);

  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::matmul(x, t.constant(b))); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::matmul(t.constant(a), x)); }, b) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::matmul_nt(x, t.constant(c))); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::matmul_nt(t.constant(a), x)); }, c) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::add_bias(t.constant(a), x)); }, bias) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::mul(x, x)); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::sub(ops::scale(x, 3.0), ops::add_scalar(x, 2.0))); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::sigmoid(x)); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::softmax_rows(x)); }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return ops::mean(ops::huber(ops::scale(x, 2.0))); }, a) < kTol);

  Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::log(x)); }, pos) < kTol);

  // keep entries away from the kink
  Tensor away = a;
  for (double& v : away.data()) v += v >= 0 ? 0.1 : -0.1;
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::relu(x)); }, away) < kTol);

  const Tensor g = random_tensor({4}, rng, 0.5, 1.5), be = random_tensor({4}, rng);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) {
          return probe(t, ops::layer_norm(x, t.constant(g), t.constant(be)));
        }, a) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) {
          return probe(t, ops::layer_norm(t.constant(a), x, t.constant(be)));
        }, g) < kTol);

  CHECK(finite_difference_check([&](Tape& t, const Var& x) {
          const Var y = ops::concat_rows({x, ops::slice_rows(x, 1, 3)});
          return probe(t, ops::concat_cols({y, ops::slice_cols(y, 0, 2)}));
        }, a) < kTol);
  const std::vector<std::uint32_t> idx{2, 0, 2, 1};
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::gather_rows(x, idx)); }, a) < kTol);

  std::vector<double> labels{1, 0, 1, 0, 0, 1};
  Tensor p = random_tensor({6, 1}, rng, 0.1, 0.9);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return ops::bce(x, labels); }, p) < kTol);
}

TEST_CASE("edge_max gradient with distinct candidates") {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
  const std::vector<std::uint32_t> nbrs{0, 1, 1, 2, 2, 3, 3, 0};
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::edge_max(t.constant(a), x, nbrs, 2)); }, b) < kTol);
  CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, ops::edge_max(x, t.constant(b), nbrs, 2)); }, a) < kTol);
}

TEST_CASE("block gradients") {
  std::mt19937_64 rng(3);
  const PointCloud cloud = testing::random_cloud(8, rng);
  const TargetnessMask mask{{1, 0, 1, 1, 0, 0, 1, 0.5}};

  SUBCASE("edgeconv") {
    ParameterStore params;
    init_edgeconv(params, "ec", 3, 6, rng);
    const auto nbrs = knn_indices(cloud, 3);
    const Tensor feats(Shape{8, 3}, cloud.flat());
    CHECK(finite_difference_check([&](Tape& t) { return probe(t, edgeconv(t, params, "ec", t.constant(feats), nbrs, 3)); },
                                  params) < kTol);
    CHECK(finite_difference_check([&](Tape& t, const Var& x) { return probe(t, edgeconv(t, params, "ec", x, nbrs, 3)); },
                                  feats) < kTol);
  }
  SUBCASE("positional and mask encodings") {
    ParameterStore params;
    const PointEncoders enc = PointEncoders::create(params, 8, rng);
    CHECK(finite_difference_check([&](Tape& t) {
            return ops::add(probe(t, enc.positional_encoding(t, params, cloud)), probe(t, enc.mask_encoding(t, params, mask), 7));
          }, params) < kTol);
  }
  SUBCASE("space attention layer and heads") {
    ParameterStore params;
    const SpaceFormer sf(SpaceFormerConfig{8, 2, 8, 8});
    sf.init(params, rng);
    const Tensor x = random_tensor({8, 8}, rng), pe = random_tensor({8, 8}, rng), me = random_tensor({8, 8}, rng);
    for (std::size_t heads : {1, 2, 4}) {
      CHECK(finite_difference_check([&](Tape& t) {
              return probe(t, sf.space_attention_layer(t, params, 1, t.constant(x), t.constant(pe), t.constant(me), heads));
            }, params) < kTol);
      CHECK(finite_difference_check([&](Tape& t, const Var& v) {
              return probe(t, sf.space_attention_layer(t, params, 0, v, t.constant(pe), t.constant(me), heads));
            }, x) < kTol);
    }
    CHECK(finite_difference_check([&](Tape& t) {
            const auto [m, c] = sf.predict_layer_heads(t, params, 0, t.constant(x), cloud);
            return ops::add(probe(t, m), probe(t, c, 5));
          }, params) < kTol);
  }
  SUBCASE("locator") {
    ParameterStore params;
    const Locator loc(8, 8);
    loc.init(params, rng);
    const Tensor f = random_tensor({8, 8}, rng), c = random_tensor({8, 3}, rng), m = random_tensor({8, 1}, rng, 0.1, 0.9);
    CHECK(finite_difference_check([&](Tape& t) {
            const auto out = loc.propose(t, params, t.constant(f), t.constant(c), t.constant(m), {1, 2, 1}, 1);
            return ops::add(probe(t, out.yaw_residual), probe(t, out.confidence, 4));
          }, params) < kTol);
    CHECK(finite_difference_check([&](Tape& t, const Var& v) {
            return probe(t, loc.propose(t, params, t.constant(f), v, t.constant(m), {1, 2, 1}, 1).confidence);
          }, c) < kTol);
  }
}

TEST_CASE("full model gradient at toy size") {
  const ModelConfig cfg = testing::toy_model();
  const Network net(cfg);
  ParameterStore params = net.init(5);

  std::mt19937_64 rng(6);
  const Box3D gt{{0.2, -0.1, 0.0}, {1.0, 1.6, 0.8}, 0.1};
  StepInputs in;
  for (std::size_t k = 0; k < cfg.templates; ++k) {
    TemplateView v;
    v.cloud = testing::random_cloud(16, rng, 1.5);
    v.box = Box3D{{0.05 * k, 0, 0}, gt.size, 0.0};
    v.mask = compute_targetness_mask(v.cloud, v.box);
    in.templates.push_back(v);
  }
  in.search = testing::random_cloud(16, rng, 1.5);
  in.target_size = gt.size;

  SUBCASE("training loss") {
    const auto r = finite_difference_report(
        [&](Tape& t) { return compute_losses(net.forward(t, params, in), gt, {}).total; }, params, kStackEps);
    CHECK(r.max_rel_err < kTol);
    CHECK(r.straddled * 2 < r.checked);
  }
  SUBCASE("scalar head, every paradigm") {
    for (const Paradigm p : {Paradigm::kManyToOne, Paradigm::kSelfChain, Paradigm::kCrossChain}) {
      ModelConfig c = cfg;
      c.paradigm = p;
      const Network n(c);
      ParameterStore ps = n.init(5);
      const auto r = finite_difference_report([&](Tape& t) {
        const StepOutputs out = n.forward(t, ps, in);
        const PairOutputs& po = out.pairs.front();
        return ops::add(probe(t, po.layers.back().center_pred), probe(t, po.locator.confidence, 3));
      }, ps, kStackEps);
      INFO("paradigm " << std::string(paradigm_name(p)));
      CHECK(r.max_rel_err < kTol);
      CHECK(r.straddled * 2 < r.checked);
    }
  }
}
