#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <map>

#include "pdgait/model.hpp"
#include "pdgait/nn/loss.hpp"
#include "pdgait/rng.hpp"
#include "support/finite_diff.hpp"

using namespace pdgait;
using Catch::Approx;

namespace {

ModelConfig tiny_config(HeadKind head) {
  ModelConfig cfg;
  cfg.window_len = 16;  // smallest length the conv stack accepts
  cfg.channels = {Channel::LTotal, Channel::RTotal};
  cfg.head = head;
  cfg.branch_dropout = 0.0;
  cfg.concat_dropout = 0.0;
  cfg.head_dropout = 0.0;
  return cfg;
}

Eigen::MatrixXd random_input(const ModelConfig& cfg, int batch, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch) * cfg.window_len, cfg.n_channels());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("branch length bookkeeping for the 100-step window", "[model]") {
  const BranchShapes s = branch_shapes(100);
  CHECK(s.conv1_len == 98);
  CHECK(s.conv2_len == 96);
  CHECK(s.pool1_len == 48);
  CHECK(s.conv3_len == 46);
  CHECK(s.conv4_len == 44);
  CHECK(s.pool2_len == 22);
  CHECK(s.flat_len == 352);

  CHECK(branch_shapes(16).pool2_len == 1);
  CHECK_THROWS_AS(branch_shapes(15), ShapeMismatch);
}

TEST_CASE("parameter counts are frozen", "[model]") {
  ModelConfig det;  // defaults: 18 channels, detection head
  CHECK(Network(det).param_count() == 853541);

  ModelConfig sev = det;
  sev.head = HeadKind::Severity;
  CHECK(Network(sev).param_count() == 853625);

  SECTION("16 channels (totals removed)") {
    ModelConfig c16 = det;
    c16.channels.assign(kAllChannels.begin(), kAllChannels.begin() + 16);
    const long branch = 37300;  // 2000 conv + 352*100+100 dense
    const long expected =
        16 * branch + (1600 * 100 + 100) + (100 * 20 + 20) + (20 * 1 + 1);
    CHECK(Network(c16).param_count() == expected);
  }
  SECTION("per-branch share") {
    // 18 * branch + head(1800) must reproduce the frozen total.
    const long branch = 37300;
    CHECK(18 * branch + (1800 * 100 + 100) + (100 * 20 + 20) + (20 * 1 + 1) == 853541);
  }
}

TEST_CASE("detection output is one probability per sample", "[model]") {
  Network net(tiny_config(HeadKind::Detection));
  Rng rng(2);
  net.init_params(rng);
  const Eigen::MatrixXd x = random_input(net.config(), 3, rng);
  const Eigen::MatrixXd p = net.forward(x, 3, nn::Mode::Eval);
  REQUIRE(p.rows() == 3);
  REQUIRE(p.cols() == 1);
  for (int i = 0; i < 3; ++i) {
    CHECK(p(i, 0) > 0.0);
    CHECK(p(i, 0) < 1.0);
  }
  CHECK(net.last_prediction() == p);
}

TEST_CASE("severity output rows live on the simplex", "[model]") {
  Network net(tiny_config(HeadKind::Severity));
  Rng rng(3);
  net.init_params(rng);
  const Eigen::MatrixXd x = random_input(net.config(), 4, rng);
  const Eigen::MatrixXd p = net.forward(x, 4, nn::Mode::Eval);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == kSeverityClasses);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    CHECK(p.row(i).minCoeff() > 0.0);
  }
}

TEST_CASE("branches are independent per channel", "[model]") {
  Network net(tiny_config(HeadKind::Detection));
  Rng rng(5);
  net.init_params(rng);
  Eigen::MatrixXd x = random_input(net.config(), 2, rng);

  net.forward(x, 2, nn::Mode::Eval);
  const Eigen::MatrixXd branch0 = net.branch_output(0);
  const Eigen::MatrixXd branch1 = net.branch_output(1);

  x.col(1).array() += 0.75;  // disturb only channel 1
  net.forward(x, 2, nn::Mode::Eval);
  CHECK(net.branch_output(0) == branch0);
  CHECK(net.branch_output(1) != branch1);
}

TEST_CASE("eval mode is deterministic, train mode is seed-reproducible", "[model]") {
  ModelConfig cfg = tiny_config(HeadKind::Detection);
  cfg.branch_dropout = 0.5;
  cfg.concat_dropout = 0.5;
  cfg.head_dropout = 0.5;
  Network net(cfg);
  Rng rng(7);
  net.init_params(rng);
  const Eigen::MatrixXd x = random_input(cfg, 2, rng);

  const Eigen::MatrixXd e1 = net.forward(x, 2, nn::Mode::Eval);
  const Eigen::MatrixXd e2 = net.forward(x, 2, nn::Mode::Eval);
  CHECK(e1 == e2);

  Rng d1(99), d2(99), d3(1234);
  const Eigen::MatrixXd t1 = net.forward(x, 2, nn::Mode::Train, &d1);
  const Eigen::MatrixXd t2 = net.forward(x, 2, nn::Mode::Train, &d2);
  const Eigen::MatrixXd t3 = net.forward(x, 2, nn::Mode::Train, &d3);
  CHECK(t1 == t2);
  CHECK(t1 != t3);  // different masks
  CHECK(t1 != e1);  // dropout actually fired
}

TEST_CASE("window level decision rules", "[model]") {
  CHECK(classify_detection(0.51) == 1);
  CHECK(classify_detection(0.5) == 0);  // strictly-above threshold
  CHECK(classify_detection(0.49) == 0);
  CHECK(classify_detection(1.0) == 1);

  Eigen::RowVectorXd p(5);
  p << 0.1, 0.2, 0.2, 0.2, 0.3;
  CHECK(classify_severity(p) == 5);
  p << 0.9, 0.05, 0.03, 0.01, 0.01;
  CHECK(classify_severity(p) == 1);
  p << 0.3, 0.3, 0.2, 0.1, 0.1;
  CHECK(classify_severity(p) == 2);  // exact tie goes to the higher class
  p << 0.2, 0.2, 0.2, 0.2, 0.2;
  CHECK(classify_severity(p) == 5);
}

TEST_CASE("shape and cache guards", "[model]") {
  Network net(tiny_config(HeadKind::Detection));
  Rng rng(11);
  net.init_params(rng);

  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(16, 3), 1, nn::Mode::Eval), ShapeMismatch);
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(20, 2), 1, nn::Mode::Eval), ShapeMismatch);
  CHECK_THROWS_AS(net.backward(Eigen::MatrixXd::Zero(1, 1), 1), MissingForwardCache);

  ModelConfig empty = tiny_config(HeadKind::Detection);
  empty.channels.clear();
  CHECK_THROWS_AS(Network{empty}, ShapeMismatch);
}

TEST_CASE("copies share values but not storage", "[model]") {
  Network a(tiny_config(HeadKind::Detection));
  Rng rng(13);
  a.init_params(rng);
  const Eigen::MatrixXd x = random_input(a.config(), 2, rng);
  const Eigen::MatrixXd pa = a.forward(x, 2, nn::Mode::Eval);

  Network b = a;
  CHECK(b.forward(x, 2, nn::Mode::Eval) == pa);

  a.parameters()[0]->data.array() += 1.0;
  CHECK(b.forward(x, 2, nn::Mode::Eval) == pa);       // b untouched
  CHECK(a.forward(x, 2, nn::Mode::Eval) != pa);       // a changed

  SECTION("assignment keeps parameter storage in place") {
    Network c(a.config());
    nn::Tensor* before = c.parameters()[0];
    c = a;
    CHECK(c.parameters()[0] == before);
    CHECK(c.forward(x, 2, nn::Mode::Eval) == a.forward(x, 2, nn::Mode::Eval));
  }
  SECTION("assigning an incompatible architecture throws") {
    Network sev(tiny_config(HeadKind::Severity));
    CHECK_THROWS_AS(sev = a, ShapeMismatch);
  }
}

TEST_CASE("all_finite spots poisoned parameters", "[model]") {
  Network net(tiny_config(HeadKind::Detection));
  Rng rng(17);
  net.init_params(rng);
  CHECK(net.all_finite());
  net.parameters()[3]->data(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(net.all_finite());
}

TEST_CASE("full network gradient matches finite differences", "[model]") {
  // Eval mode (dropout off), fused cross-entropy logit gradient, spot-checked
  // parameters across every tensor.
  for (HeadKind head : {HeadKind::Detection, HeadKind::Severity}) {
    CAPTURE(head == HeadKind::Detection ? "detection" : "severity");
    Network net(tiny_config(head));
    Rng rng(19);
    net.init_params(rng);
    const int batch = 2;
    const Eigen::MatrixXd x = random_input(net.config(), batch, rng);

    Eigen::VectorXd target(batch);
    target << 1.0, 0.0;
    const std::vector<int> sev_target{4, 0};

    auto loss = [&] {
      const Eigen::MatrixXd p = net.forward(x, batch, nn::Mode::Eval);
      return head == HeadKind::Detection ? nn::bce_loss(p, target).value
                                         : nn::cce_loss(p, sev_target).value;
    };

    const Eigen::MatrixXd p = net.forward(x, batch, nn::Mode::Eval);
    Eigen::MatrixXd dlogits = p;
    if (head == HeadKind::Detection) {
      dlogits.col(0) -= target;
    } else {
      for (int i = 0; i < batch; ++i) dlogits(i, sev_target[static_cast<std::size_t>(i)]) -= 1.0;
    }
    dlogits /= static_cast<double>(batch);
    net.zero_grad();
    net.backward(dlogits, batch);

    double worst = 0.0;
    const double h = 1e-5;
    for (auto& [name, tensor] : net.named_parameters()) {
      for (Eigen::Index j : {Eigen::Index{0}, tensor->size() / 2, tensor->size() - 1}) {
        const double orig = tensor->data(j);
        tensor->data(j) = orig + h;
        const double fp = loss();
        tensor->data(j) = orig - h;
        const double fm = loss();
        tensor->data(j) = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = tensor->grad(j);
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    }
    CHECK(worst < 1e-3);
  }
}
