#include "exprsim/nn.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_helpers.hpp"

using namespace exprsim;
using exprsim::testing::random_matrix;
using exprsim::testing::rel_err;

namespace {

// Loss L(theta) = sum(C .* forward(x; theta)) for a fixed random C, so the
// analytic gradient is head_backward with upstream C. Dropout masks replay
// exactly because the rng is reseeded for every evaluation.
struct HeadProbe {
  HeadSpec spec;
  Eigen::MatrixXd x;
  Eigen::MatrixXd c;
  std::uint64_t dropout_seed = 424242;

  double loss(HeadParams& params) const {
    Rng rng(dropout_seed);
    auto [y, trace] = head_forward(params, x, Mode::Train, &rng);
    return (y.array() * c.array()).sum();
  }

  Eigen::VectorXd analytic_grad(HeadParams& params) const {
    Rng rng(dropout_seed);
    auto [y, trace] = head_forward(params, x, Mode::Train, &rng);
    HeadParams grads = head_backward(params, trace, c);
    return grads.flatten_trainable();
  }

  double max_grad_error(HeadParams& params, double h = 1e-5) const {
    Eigen::VectorXd analytic = analytic_grad(params);
    Eigen::VectorXd flat = params.flatten_trainable();
    double worst = 0;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      Eigen::VectorXd bumped = flat;
      bumped[i] = flat[i] + h;
      params.unflatten_trainable(bumped);
      const double up = loss(params);
      bumped[i] = flat[i] - h;
      params.unflatten_trainable(bumped);
      const double down = loss(params);
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    params.unflatten_trainable(flat);
    return worst;
  }
};

HeadSpec small_spec(int in_dim, int layers, bool batchnorm, double dropout) {
  HeadSpec spec;
  spec.in_dim = in_dim;
  spec.bottleneck = 8;
  spec.dense_layers = layers;
  spec.growth = 4;
  spec.fc_width = 8;
  spec.emb_dim = 4;
  spec.dropout_rate = dropout;
  spec.use_batchnorm = batchnorm;
  return spec;
}

}  // namespace

TEST_CASE("xavier_init: bound, determinism, first moment") {
  Rng rng(1);
  const int rows = 50, cols = 30;
  const double bound = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd m = xavier_init(rows, cols, rng);
  CHECK(m.maxCoeff() <= bound);
  CHECK(m.minCoeff() >= -bound);

  Rng rng_a(9), rng_b(9);
  CHECK(xavier_init(20, 20, rng_a) == xavier_init(20, 20, rng_b));

  // Mean of 1e6 uniform samples: within 3 standard errors of zero.
  Rng rng_c(123);
  Eigen::MatrixXd big = xavier_init(1000, 1000, rng_c);
  const double big_bound = std::sqrt(6.0 / 2000.0);
  const double se = big_bound / std::sqrt(3.0) / std::sqrt(1e6);
  CHECK(std::abs(big.mean()) < 3 * se);
  CHECK_THROWS_AS(xavier_init(0, 3, rng), std::invalid_argument);
}

TEST_CASE("relu6 forward and subgradient") {
  Eigen::MatrixXd x(1, 5);
  x << 7.0, -1.0, 3.0, 0.0, 6.0;
  Eigen::MatrixXd y = relu6(x);
  CHECK(y(0, 0) == 6.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 3.0);
  CHECK(y(0, 3) == 0.0);
  CHECK(y(0, 4) == 6.0);

  Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, 5);
  Eigen::MatrixXd g = relu6_backward(x, up);
  CHECK(g(0, 0) == 0.0);  // above the cap
  CHECK(g(0, 1) == 0.0);  // below zero
  CHECK(g(0, 2) == 1.0);  // interior
  CHECK(g(0, 3) == 0.0);  // kink: subgradient 0
  CHECK(g(0, 4) == 0.0);  // kink at 6
}

TEST_CASE("batchnorm: train statistics, infer stability, batch-1 rejection") {
  BatchNormParams params{Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(3),
                         Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)};

  SUBCASE("constant batch normalizes to zero before the affine part") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(4, 3, 5.0);
    Eigen::MatrixXd y = batchnorm_forward(x, params, Mode::Train, nullptr);
    CHECK(y.cwiseAbs().maxCoeff() < 1e-9);  // gamma 1, beta 0
  }
  SUBCASE("infer does not update running statistics") {
    Rng x_rng(3);
    Eigen::MatrixXd x = random_matrix(5, 3, x_rng);
    BatchNormParams before = params;
    Eigen::MatrixXd y1 = batchnorm_forward(x, params, Mode::Infer, nullptr);
    Eigen::MatrixXd y2 = batchnorm_forward(x, params, Mode::Infer, nullptr);
    CHECK(y1 == y2);
    CHECK(params.running_mean == before.running_mean);
    CHECK(params.running_var == before.running_var);
  }
  SUBCASE("train updates running statistics with momentum 0.99") {
    Eigen::MatrixXd x(2, 3);
    x << 1, 2, 3, 3, 6, 9;  // column means 2, 4, 6
    batchnorm_forward(x, params, Mode::Train, nullptr);
    CHECK(params.running_mean[0] == doctest::Approx(0.01 * 2.0));
    CHECK(params.running_mean[2] == doctest::Approx(0.01 * 6.0));
  }
  SUBCASE("train requires at least two rows") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 3);
    CHECK_THROWS_AS(batchnorm_forward(x, params, Mode::Train, nullptr),
                    std::invalid_argument);
  }
}

TEST_CASE("batchnorm gradient matches finite differences") {
  Rng rng(31);
  const int n = 6, w = 4;
  Eigen::MatrixXd x = random_matrix(n, w, rng);
  Eigen::MatrixXd c = random_matrix(n, w, rng);
  BatchNormParams params{Eigen::VectorXd::Ones(w), Eigen::VectorXd::Zero(w),
                         Eigen::VectorXd::Zero(w), Eigen::VectorXd::Ones(w)};
  params.gamma = random_matrix(w, 1, rng).col(0).array() + 2.0;
  params.beta = random_matrix(w, 1, rng).col(0);

  auto loss = [&](const Eigen::MatrixXd& input) {
    BatchNormParams scratch = params;
    return (batchnorm_forward(input, scratch, Mode::Train, nullptr).array() *
            c.array())
        .sum();
  };

  BatchNormTrace trace;
  BatchNormParams scratch = params;
  batchnorm_forward(x, scratch, Mode::Train, &trace);
  BatchNormGrads grads;
  Eigen::MatrixXd dx = batchnorm_backward(trace, params, c, grads);

  const double h = 1e-5;
  double worst = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double numeric = (loss(xp) - loss(xm)) / (2 * h);
      worst = std::max(worst, rel_err(dx(i, j), numeric));
    }
  CHECK(worst < 1e-4);

  // gamma and beta via finite differences too.
  for (int j = 0; j < w; ++j) {
    BatchNormParams pp = params, pm = params;
    pp.gamma[j] += h;
    pm.gamma[j] -= h;
    BatchNormParams sp = pp, sm = pm;
    const double up = (batchnorm_forward(x, sp, Mode::Train, nullptr).array() *
                       c.array())
                          .sum();
    const double down = (batchnorm_forward(x, sm, Mode::Train, nullptr).array() *
                         c.array())
                            .sum();
    worst = std::max(worst, rel_err(grads.dgamma[j], (up - down) / (2 * h)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("l2_normalize: values, degenerate input, backward vs FD") {
  Eigen::MatrixXd x(1, 2);
  x << 3, 4;
  Eigen::MatrixXd y = l2_normalize(x);
  CHECK(y(0, 0) == doctest::Approx(0.6));
  CHECK(y(0, 1) == doctest::Approx(0.8));

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(l2_normalize(zero), NumericError);

  Rng rng(8);
  Eigen::MatrixXd input = random_matrix(3, 5, rng);
  Eigen::MatrixXd c = random_matrix(3, 5, rng);
  Eigen::MatrixXd dx = l2_normalize_backward(input, c);
  const double h = 1e-6;
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      Eigen::MatrixXd xp = input, xm = input;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double numeric = ((l2_normalize(xp).array() * c.array()).sum() -
                              (l2_normalize(xm).array() * c.array()).sum()) /
                             (2 * h);
      worst = std::max(worst, rel_err(dx(i, j), numeric));
    }
  CHECK(worst < 1e-4);

  // Every row of a normalized batch is unit length.
  for (int i = 0; i < 3; ++i)
    CHECK(l2_normalize(input).row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("dense block: output width is bottleneck + layers * growth") {
  Rng rng(5);

  HeadSpec defaults;
  defaults.in_dim = 8;
  CHECK(defaults.dense_out_dim() == 512 + 5 * 64);

  for (int layers : {0, 2, 5}) {
    HeadSpec spec = small_spec(6, layers, true, 0.0);
    HeadParams params = init_head(spec, rng);
    Eigen::MatrixXd x = random_matrix(4, 6, rng);
    Eigen::MatrixXd out = dense_block_forward(params.dense, x, Mode::Train, nullptr);
    CHECK(out.cols() == 8 + 4 * layers);
    CHECK(out.rows() == 4);
  }
}

TEST_CASE("head_forward: unit-norm outputs in both modes") {
  Rng rng(77);
  for (bool bn : {true, false}) {
    for (double dropout : {0.0, 0.5}) {
      HeadSpec spec = small_spec(10, 3, bn, dropout);
      HeadParams params = init_head(spec, rng);
      Eigen::MatrixXd x = random_matrix(6, 10, rng);

      Rng dropout_rng(3);
      auto [train_y, trace] = head_forward(params, x, Mode::Train, &dropout_rng);
      Eigen::MatrixXd infer_y = embed(params, x);
      for (int i = 0; i < 6; ++i) {
        CHECK(std::abs(train_y.row(i).norm() - 1.0) < 1e-6);
        CHECK(std::abs(infer_y.row(i).norm() - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("dropout 0 without batchnorm: train equals infer") {
  Rng rng(12);
  HeadSpec spec = small_spec(7, 2, false, 0.0);
  HeadParams params = init_head(spec, rng);
  Eigen::MatrixXd x = random_matrix(5, 7, rng);
  auto [train_y, trace] = head_forward(params, x, Mode::Train, nullptr);
  CHECK((train_y - embed(params, x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("initialization and train forward are deterministic per seed") {
  HeadSpec spec = small_spec(9, 2, true, 0.5);
  Rng rng_a(55), rng_b(55);
  HeadParams a = init_head(spec, rng_a);
  HeadParams b = init_head(spec, rng_b);
  CHECK(a.flatten_trainable() == b.flatten_trainable());

  Rng x_rng(2);
  Eigen::MatrixXd x = random_matrix(4, 9, x_rng);
  Rng da(7), db(7);
  auto [ya, ta] = head_forward(a, x, Mode::Train, &da);
  auto [yb, tb] = head_forward(b, x, Mode::Train, &db);
  CHECK(ya == yb);
}

TEST_CASE("head gradients match finite differences across configurations") {
  Rng rng(2025);
  int seed = 100;
  for (int in_dim : {8, 32}) {
    for (int layers : {0, 2, 5}) {
      HeadSpec spec = small_spec(in_dim, layers, true, 0.0);
      HeadParams params = init_head(spec, rng);
      HeadProbe probe;
      probe.spec = spec;
      probe.x = random_matrix(3, in_dim, rng);
      probe.c = random_matrix(3, spec.emb_dim, rng);
      probe.dropout_seed = static_cast<std::uint64_t>(seed++);
      CHECK(probe.max_grad_error(params) < 1e-4);
    }
  }
}

TEST_CASE("head gradients: dropout masks replay deterministically") {
  Rng rng(404);
  HeadSpec spec = small_spec(8, 2, true, 0.5);
  HeadParams params = init_head(spec, rng);
  HeadProbe probe;
  probe.spec = spec;
  probe.x = random_matrix(4, 8, rng);
  probe.c = random_matrix(4, spec.emb_dim, rng);
  CHECK(probe.max_grad_error(params) < 1e-4);
}

TEST_CASE("head gradients without batchnorm") {
  Rng rng(606);
  HeadSpec spec = small_spec(8, 2, false, 0.0);
  HeadParams params = init_head(spec, rng);
  HeadProbe probe;
  probe.spec = spec;
  probe.x = random_matrix(3, 8, rng);
  probe.c = random_matrix(3, spec.emb_dim, rng);
  CHECK(probe.max_grad_error(params) < 1e-4);
}

TEST_CASE("head_backward contract") {
  Rng rng(3);
  HeadSpec spec = small_spec(6, 1, true, 0.0);
  HeadParams params = init_head(spec, rng);
  Eigen::MatrixXd x = random_matrix(3, 6, rng);

  SUBCASE("zero upstream gives zero gradients") {
    Rng d(1);
    auto [y, trace] = head_forward(params, x, Mode::Train, &d);
    HeadParams grads =
        head_backward(params, trace, Eigen::MatrixXd::Zero(3, spec.emb_dim));
    CHECK(grads.flatten_trainable().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("backward is linear in the upstream") {
    Rng d(1);
    auto [y, trace] = head_forward(params, x, Mode::Train, &d);
    Eigen::MatrixXd up = random_matrix(3, spec.emb_dim, rng);
    Eigen::VectorXd g1 = head_backward(params, trace, up).flatten_trainable();
    Eigen::VectorXd g2 =
        head_backward(params, trace, (2.5 * up).eval()).flatten_trainable();
    CHECK((g2 - 2.5 * g1).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("infer traces are rejected") {
    auto [y, trace] = head_forward(params, x, Mode::Infer, nullptr);
    Eigen::MatrixXd up = Eigen::MatrixXd::Ones(3, spec.emb_dim);
    CHECK_THROWS_AS(head_backward(params, trace, up), std::invalid_argument);
  }
}

TEST_CASE("model file round trip") {
  testing::TempDir dir("model");
  Rng rng(88);
  HeadSpec spec = small_spec(12, 3, true, 0.25);
  HeadParams params = init_head(spec, rng);
  // Touch the running stats so they are not at their init values.
  Eigen::MatrixXd x = random_matrix(5, 12, rng);
  Rng d(4);
  head_forward(params, x, Mode::Train, &d);

  const std::string path = dir.file("head.fech");
  save_model(path, params, 1234, 0xabcdef);
  LoadedModel loaded = load_model(path);
  CHECK(loaded.seed == 1234);
  CHECK(loaded.config_digest == 0xabcdef);
  CHECK(loaded.params.spec == spec);

  // Values survive at f32 precision; a second save is byte-identical.
  Eigen::VectorXd original = params.flatten_trainable();
  Eigen::VectorXd roundtrip = loaded.params.flatten_trainable();
  REQUIRE(original.size() == roundtrip.size());
  for (Eigen::Index i = 0; i < original.size(); ++i)
    CHECK(roundtrip[i] == doctest::Approx(original[i]).epsilon(1e-6));

  const std::string path2 = dir.file("head2.fech");
  save_model(path2, loaded.params, loaded.seed, loaded.config_digest);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // Inference agrees to f32 accuracy.
  Eigen::MatrixXd probe = random_matrix(3, 12, rng);
  CHECK((embed(params, probe) - embed(loaded.params, probe)).cwiseAbs().maxCoeff() <
        1e-5);

  SUBCASE("corrupt magic is rejected") {
    const std::string bad = dir.file("bad.fech");
    std::ofstream out(bad, std::ios::binary);
    out << "NOPE";
    out.close();
    CHECK_THROWS_AS(load_model(bad), DataError);
  }
}

TEST_CASE("spec validation") {
  HeadSpec spec = small_spec(4, 1, true, 0.0);
  spec.emb_dim = 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec(4, 1, true, 0.0);
  spec.dropout_rate = 1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = small_spec(0, 1, true, 0.0);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
