#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xembod/nn.hpp"

using namespace xembod;

namespace {

// scalar loss L = sum(y .* g) with fixed g, so dL/dy = g
double loss_of(const nn::MlpSpec& spec, const Eigen::VectorXd& p,
               const Eigen::MatrixXd& x, const Eigen::MatrixXd& g) {
  return (nn::mlp_forward(spec, p, x).array() * g.array()).sum();
}

nn::MlpSpec random_spec(Rng& rng) {
  nn::MlpSpec spec;
  const int depth = 1 + rng.uniform_int(3);
  spec.layer_sizes.push_back(1 + rng.uniform_int(5));
  for (int l = 0; l < depth; ++l)
    spec.layer_sizes.push_back(1 + rng.uniform_int(6));
  spec.hidden =
      rng.uniform() < 0.5 ? nn::Activation::tanh_act : nn::Activation::relu;
  spec.output = nn::Activation::identity;
  return spec;
}

}  // namespace

TEST_CASE("forward pass computes a known tiny network by hand") {
  // 1-2-1 tanh net with hand-picked weights
  nn::MlpSpec spec;
  spec.layer_sizes = {1, 2, 1};
  Eigen::VectorXd p(spec.param_count());
  REQUIRE(p.size() == 2 + 2 + 2 + 1);
  // layer 0: W = [0.5; -1.0], b = [0.1, 0.2]
  // layer 1: W = [2.0, 3.0], b = [-0.4]
  p << 0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.4;
  Eigen::MatrixXd x(1, 1);
  x << 0.3;
  const double h1 = std::tanh(0.5 * 0.3 + 0.1);
  const double h2 = std::tanh(-1.0 * 0.3 + 0.2);
  const double want = 2.0 * h1 + 3.0 * h2 - 0.4;
  const auto y = nn::mlp_forward(spec, p, x);
  CHECK(y(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences on random nets") {
  Rng rng(123);
  double worst = 0.0;
  for (int net = 0; net < 25; ++net) {
    const nn::MlpSpec spec = random_spec(rng);
    auto store = nn::ParamStore::init(spec, rng);
    const int batch = 1 + rng.uniform_int(4);
    // keep relu pre-activations away from the kink so the finite-difference
    // oracle stays valid; the perturbation is 1e-6, the margin 1e-3
    Eigen::MatrixXd x(spec.input_dim(), batch);
    for (int attempt = 0; attempt < 200; ++attempt) {
      for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
      if (spec.hidden != nn::Activation::relu) break;
      nn::ForwardCache probe;
      nn::mlp_forward(spec, store.p, x, &probe);
      double margin = 1e9;
      for (std::size_t l = 0; l + 1 < probe.pre.size(); ++l)
        margin = std::min(margin, probe.pre[l].cwiseAbs().minCoeff());
      if (margin > 1e-3) break;
    }
    Eigen::MatrixXd g(spec.output_dim(), batch);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();

    nn::ForwardCache cache;
    nn::mlp_forward(spec, store.p, x, &cache);
    Eigen::MatrixXd input_grad;
    const Eigen::VectorXd grad =
        nn::mlp_backward(spec, store.p, cache, g, &input_grad);

    const double h = 1e-6;
    for (int i = 0; i < store.p.size(); ++i) {
      Eigen::VectorXd pp = store.p, pm = store.p;
      pp[i] += h;
      pm[i] -= h;
      const double fd = (loss_of(spec, pp, x, g) - loss_of(spec, pm, x, g)) /
                        (2 * h);
      const double rel = std::abs(grad[i] - fd) /
                         std::max(1.0, std::max(std::abs(grad[i]), std::abs(fd)));
      worst = std::max(worst, rel);
    }
    // input gradients through the same oracle
    for (int c = 0; c < batch; ++c) {
      for (int r = 0; r < spec.input_dim(); ++r) {
        Eigen::MatrixXd xp = x, xm = x;
        xp(r, c) += h;
        xm(r, c) -= h;
        const double fd =
            (loss_of(spec, store.p, xp, g) - loss_of(spec, store.p, xm, g)) /
            (2 * h);
        const double rel = std::abs(input_grad(r, c) - fd) /
                           std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("input gradient penalty gradient matches finite differences") {
  Rng rng(7);
  for (int net = 0; net < 5; ++net) {
    nn::MlpSpec spec;
    spec.layer_sizes = {3, 6, 5, 1};  // scalar output, as used by critics
    spec.hidden = nn::Activation::tanh_act;
    auto store = nn::ParamStore::init(spec, rng);
    Eigen::MatrixXd x(3, 4);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

    double penalty = 0.0;
    const Eigen::VectorXd grad =
        nn::input_grad_penalty_grad(spec, store.p, x, &penalty);

    auto penalty_of = [&](const Eigen::VectorXd& p) {
      // independent evaluation: input grad per sample via mlp_backward
      nn::ForwardCache cache;
      nn::mlp_forward(spec, p, x, &cache);
      Eigen::MatrixXd ig;
      nn::mlp_backward(spec, p, cache, Eigen::MatrixXd::Ones(1, x.cols()), &ig);
      return ig.colwise().squaredNorm().mean();
    };
    CHECK(penalty == doctest::Approx(penalty_of(store.p)).epsilon(1e-9));

    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < store.p.size(); ++i) {
      Eigen::VectorXd pp = store.p, pm = store.p;
      pp[i] += h;
      pm[i] -= h;
      const double fd = (penalty_of(pp) - penalty_of(pm)) / (2 * h);
      worst = std::max(worst, std::abs(grad[i] - fd) /
                                  std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("adam follows the reference update rule") {
  nn::ParamStore store = nn::ParamStore::zeros(2);
  store.p << 1.0, -2.0;
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  Eigen::VectorXd g(2);
  g << 0.5, -1.5;

  // one step by hand
  const double m1 = 0.1 * 0.5, v1 = 0.001 * 0.25;
  const double mhat = m1 / (1 - 0.9), vhat = v1 / (1 - 0.999);
  const double want0 = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  nn::adam_step(store, g, cfg);
  CHECK(store.step == 1);
  CHECK(store.p[0] == doctest::Approx(want0).epsilon(1e-12));

  // second step with a different gradient
  Eigen::VectorXd g2(2);
  g2 << -0.25, 0.75;
  const double m2 = 0.9 * m1 + 0.1 * (-0.25);
  const double v2 = 0.999 * v1 + 0.001 * 0.0625;
  const double mhat2 = m2 / (1 - 0.9 * 0.9);
  const double vhat2 = v2 / (1 - 0.999 * 0.999);
  const double want0b = want0 - 0.1 * mhat2 / (std::sqrt(vhat2) + 1e-8);
  nn::adam_step(store, g2, cfg);
  CHECK(store.step == 2);
  CHECK(store.p[0] == doctest::Approx(want0b).epsilon(1e-12));

  // gradient of zero still decays the first moment, not the parameters' sign
  CHECK(std::isfinite(store.p[1]));
}

TEST_CASE("param init is deterministic and scales the last layer") {
  nn::MlpSpec spec;
  spec.layer_sizes = {4, 8, 3};
  Rng a(5), b(5);
  const auto s1 = nn::ParamStore::init(spec, a);
  const auto s2 = nn::ParamStore::init(spec, b);
  CHECK((s1.p - s2.p).norm() == 0.0);
  CHECK(s1.m.norm() == 0.0);
  CHECK(s1.v.norm() == 0.0);

  Rng c(5);
  const auto s3 = nn::ParamStore::init(spec, c, 0.01);
  const auto views = nn::layer_views(spec);
  const auto& last = views.back();
  // earlier layers identical, final affine block shrunk
  CHECK((s1.p.head(last.w_off) - s3.p.head(last.w_off)).norm() == 0.0);
  CHECK(s3.p.segment(last.w_off, last.in * last.out).norm() ==
        doctest::Approx(0.01 * s1.p.segment(last.w_off, last.in * last.out).norm()));
}

TEST_CASE("hypersphere samples and projections are unit length") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto z = nn::sample_hypersphere(8, rng);
    CHECK(z.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  Eigen::VectorXd v(3);
  v << 3.0, 0.0, 4.0;
  const auto u = nn::project_hypersphere(v);
  CHECK(u.norm() == doctest::Approx(1.0));
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[2] == doctest::Approx(0.8));
  // degenerate input falls back to a fixed axis instead of dividing by zero
  const auto d = nn::project_hypersphere(Eigen::VectorXd::Zero(3));
  CHECK(d.norm() == doctest::Approx(1.0));
}

TEST_CASE("network checkpoints round trip bit-exactly") {
  Rng rng(31);
  nn::MlpSpec spec;
  spec.layer_sizes = {5, 16, 16, 2};
  auto store = nn::ParamStore::init(spec, rng);
  store.m.setRandom();
  store.v = store.v.setRandom().cwiseAbs();
  store.step = 77;

  nn::MlpSpec spec2;
  nn::ParamStore store2;
  nn::net_from_json(nn::net_to_json(spec, store), &spec2, &store2);
  CHECK(spec2.layer_sizes == spec.layer_sizes);
  CHECK(spec2.hidden == spec.hidden);
  CHECK((store2.p - store.p).norm() == 0.0);
  CHECK((store2.m - store.m).norm() == 0.0);
  CHECK((store2.v - store.v).norm() == 0.0);
  CHECK(store2.step == 77);

  Eigen::MatrixXd x(5, 3);
  x.setRandom();
  CHECK((nn::mlp_forward(spec2, store2.p, x) - nn::mlp_forward(spec, store.p, x))
            .norm() == 0.0);
}

TEST_CASE("spec validation rejects bad shapes") {
  nn::MlpSpec spec;
  spec.layer_sizes = {4};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.layer_sizes = {4, 0, 2};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
