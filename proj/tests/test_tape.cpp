#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixflow/tape.hpp"
#include "testutil.hpp"

using namespace mixflow;
using namespace mixflow::testutil;

TEST_CASE("linear map gradient: loss = sum(W x) has dL/dW rows equal to x") {
  Tape tape;
  std::vector<double> wv = {0.3, -0.2, 0.7, 0.1, 0.0, -1.0};  // 3x2
  std::vector<double> gw(6, 0.0);
  std::vector<double> bv = {0.0, 0.0, 0.0};
  std::vector<double> gb(3, 0.0);
  std::vector<double> x = {1.0, 1.0};
  NodeRef w = tape.param(wv.data(), gw.data(), 6);
  NodeRef b = tape.param(bv.data(), gb.data(), 3);
  NodeRef y = tape.linear(w, b, tape.constant(x), 3, 2);
  NodeRef loss = tape.sum(y);
  tape.backward(loss);
  for (size_t i = 0; i < 6; ++i) CHECK(gw[i] == doctest::Approx(1.0));
  for (size_t i = 0; i < 3; ++i) CHECK(gb[i] == doctest::Approx(1.0));
}

TEST_CASE("constant loss leaves all gradients at zero") {
  Tape tape;
  std::vector<double> pv = {0.4, -0.1};
  std::vector<double> gp(2, 0.0);
  NodeRef p = tape.param(pv.data(), gp.data(), 2);
  (void)p;
  NodeRef loss = tape.scalar_constant(3.5);
  tape.backward(loss);
  CHECK(gp[0] == 0.0);
  CHECK(gp[1] == 0.0);
}

TEST_CASE("backward twice without reset is a usage error") {
  Tape tape;
  std::vector<double> pv = {1.0};
  std::vector<double> gp = {0.0};
  NodeRef p = tape.param(pv.data(), gp.data(), 1);
  NodeRef loss = tape.squared_norm(p);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), UsageError);
  tape.reset();
  NodeRef p2 = tape.param(pv.data(), gp.data(), 1);
  CHECK_NOTHROW(tape.backward(tape.squared_norm(p2)));
}

TEST_CASE("finite differences validate every op, 100+ random instances") {
  Rng rng(20240917);
  int instances = 0;
  double worst = 0.0;

  auto run = [&](const BuildFn& build, std::vector<std::vector<double>> params) {
    worst = std::max(worst, gradcheck(build, params));
    ++instances;
  };

  for (int rep = 0; rep < 12; ++rep) {
    // linear + squared norm
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef w = t.param(p[0].value, p[0].grad, p[0].len);
          NodeRef b = t.param(p[1].value, p[1].grad, p[1].len);
          NodeRef x = t.param(p[2].value, p[2].grad, p[2].len);
          return t.squared_norm(t.linear(w, b, x, 3, 4));
        },
        {random_vec(rng, 12), random_vec(rng, 3), random_vec(rng, 4)});

    // silu
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef x = t.param(p[0].value, p[0].grad, p[0].len);
          return t.sum(t.silu(x));
        },
        {random_vec(rng, 6, -3.0, 3.0)});

    // tanh
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef x = t.param(p[0].value, p[0].grad, p[0].len);
          return t.squared_norm(t.tanh(x));
        },
        {random_vec(rng, 5, -2.0, 2.0)});

    // relu, inputs kept away from the kink
    {
      std::vector<double> x = random_vec(rng, 6, 0.2, 2.0);
      for (size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
      run(
          [](Tape& t, const std::vector<ParamHandle>& p) {
            NodeRef x = t.param(p[0].value, p[0].grad, p[0].len);
            return t.sum(t.relu(x));
          },
          {x});
    }

    // concat of two leaves
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef a = t.param(p[0].value, p[0].grad, p[0].len);
          NodeRef b = t.param(p[1].value, p[1].grad, p[1].len);
          return t.squared_norm(t.concat(a, b));
        },
        {random_vec(rng, 3), random_vec(rng, 4)});

    // lincomb
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef a = t.param(p[0].value, p[0].grad, p[0].len);
          NodeRef b = t.param(p[1].value, p[1].grad, p[1].len);
          return t.squared_norm(t.lincomb(0.4, a, -1.3, b));
        },
        {random_vec(rng, 4), random_vec(rng, 4)});

    // reparameterized sample
    {
      std::vector<double> eps = random_vec(rng, 4, -2.0, 2.0);
      run(
          [eps](Tape& t, const std::vector<ParamHandle>& p) {
            NodeRef mu = t.param(p[0].value, p[0].grad, p[0].len);
            NodeRef lv = t.param(p[1].value, p[1].grad, p[1].len);
            return t.squared_norm(t.reparam(mu, lv, t.constant(eps)));
          },
          {random_vec(rng, 4), random_vec(rng, 4, -1.0, 1.0)});
    }

    // mixture log-variance
    {
      const double w = rng.uniform(0.05, 0.95);
      run(
          [w](Tape& t, const std::vector<ParamHandle>& p) {
            NodeRef lv = t.param(p[0].value, p[0].grad, p[0].len);
            return t.sum(t.mix_log_var(lv, w));
          },
          {random_vec(rng, 4, -1.5, 1.5)});
    }

    // KL to the standard normal
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef mu = t.param(p[0].value, p[0].grad, p[0].len);
          NodeRef lv = t.param(p[1].value, p[1].grad, p[1].len);
          return t.kl_std_normal(mu, lv);
        },
        {random_vec(rng, 4), random_vec(rng, 4, -1.0, 1.0)});

    // slice
    run(
        [](Tape& t, const std::vector<ParamHandle>& p) {
          NodeRef x = t.param(p[0].value, p[0].grad, p[0].len);
          return t.squared_norm(t.slice(x, 1, 3));
        },
        {random_vec(rng, 5)});
  }

  CHECK(instances >= 100);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients accumulate across two backward passes with reset") {
  std::vector<double> pv = {0.7};
  std::vector<double> gp = {0.0};
  Tape tape;
  NodeRef p = tape.param(pv.data(), gp.data(), 1);
  tape.backward(tape.squared_norm(p));
  const double g1 = gp[0];
  tape.reset();
  NodeRef p2 = tape.param(pv.data(), gp.data(), 1);
  tape.backward(tape.squared_norm(p2));
  CHECK(gp[0] == doctest::Approx(2.0 * g1));
}

TEST_CASE("log-variance clamp zeroes the gradient outside its range") {
  std::vector<double> mu = {0.0, 0.0};
  std::vector<double> lv = {-40.0, 25.0};  // both outside [-30, 20]
  std::vector<double> gmu(2, 0.0), glv(2, 0.0);
  std::vector<double> eps = {1.0, 1.0};
  Tape tape;
  NodeRef m = tape.param(mu.data(), gmu.data(), 2);
  NodeRef l = tape.param(lv.data(), glv.data(), 2);
  NodeRef x = tape.reparam(m, l, tape.constant(eps));
  tape.backward(tape.squared_norm(x));
  CHECK(glv[0] == 0.0);
  CHECK(glv[1] == 0.0);
}
