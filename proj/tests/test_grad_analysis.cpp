#include <doctest.h>

#include <cmath>

#include "mnce/grad_analysis.hpp"
#include "mnce/loss.hpp"
#include "mnce/rng.hpp"
#include "mnce/verification.hpp"

using mnce::BatchAngles;
using mnce::Error;
using mnce::ErrorCode;
using mnce::feasible_qtilde_range;
using mnce::grad_theta;
using mnce::m2_limit_grad;
using mnce::make_batch;
using mnce::MarginParams;
using mnce::multiplier_decomposition;
using mnce::MultiplierDecomposition;
using mnce::sign_reversal_threshold;
using mnce::subtractive_closed_form_grad;

namespace {

// Symmetric batch with every angle at theta, positives on the diagonal,
// so the row softmax is uniform: q = 1/B everywhere.
BatchAngles uniform_batch(int b, double theta) {
  std::vector<int> positives(b);
  for (int i = 0; i < b; ++i) positives[i] = i;
  return make_batch(Eigen::MatrixXd::Constant(b, b, theta), positives);
}

}  // namespace

TEST_CASE("grad_theta at a half-probability positive") {
  // q = 0.5 at B = 2 with equal angles; (1 - 0.5) sin(pi/2) / 0.25 = 2
  MarginParams params;
  const BatchAngles batch = uniform_batch(2, M_PI / 2.0);
  const Eigen::MatrixXd g = grad_theta(batch, params).grad;
  CHECK(g(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  // the negative picks up -q sin(theta)/tau
  CHECK(g(0, 1) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("grad_theta with beta zero has no q dependence") {
  MarginParams params;
  params.beta = 0.0;
  const BatchAngles batch = uniform_batch(3, M_PI / 2.0);
  const Eigen::MatrixXd g = grad_theta(batch, params).grad;
  CHECK(g(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(g(0, 1) == 0.0);
}

TEST_CASE("margins gate on the target probability") {
  mnce::Rng rng(31);
  MarginParams with;
  with.m1 = 0.7;
  const BatchAngles batch = mnce::random_batch(4, rng);
  const Eigen::MatrixXd q =
      mnce::probabilities(mnce::logits(batch, with));
  const Eigen::MatrixXd g = grad_theta(batch, with).grad;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (!batch.included(i, j) || batch.targets(i, j) == 1.0) continue;
      CHECK(g(i, j) == doctest::Approx(-q(i, j) *
                                       std::sin(batch.angles(i, j)) / 0.25)
                           .epsilon(1e-13));
    }
  }
}

TEST_CASE("sign structure of the plain gradient") {
  mnce::Rng rng(37);
  MarginParams params;
  for (int rep = 0; rep < 10; ++rep) {
    const BatchAngles batch = mnce::random_batch(6, rng);
    const Eigen::MatrixXd g = grad_theta(batch, params).grad;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        if (!batch.included(i, j)) continue;
        if (batch.targets(i, j) == 1.0) {
          CHECK(g(i, j) >= 0.0);  // (1 - q) sin(theta) / tau
        } else {
          CHECK(g(i, j) <= 0.0);  // -q sin(theta) / tau
        }
      }
    }
  }
}

TEST_CASE("multiplier decomposition closed forms") {
  MarginParams params;
  params.m1 = 0.2;

  SUBCASE("reference cell from the angular-margin map") {
    const MultiplierDecomposition d =
        multiplier_decomposition(M_PI / 2.0, 0.17, params);
    CHECK(d.prob_term == doctest::Approx(1.1028).epsilon(1e-3));
    CHECK(d.sin_term == doctest::Approx(std::cos(0.2)).epsilon(1e-14));
  }

  SUBCASE("identity at zero margins") {
    MarginParams zero;
    const MultiplierDecomposition d =
        multiplier_decomposition(1.3, 0.4, zero);
    CHECK(d.prob_term == 1.0);
    CHECK(d.sin_term == 1.0);
  }

  SUBCASE("prob term tends to one as q~ vanishes") {
    const MultiplierDecomposition d =
        multiplier_decomposition(M_PI / 2.0, 1e-12, params);
    CHECK(d.prob_term == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("rejects singular sine") {
    CHECK_THROWS_AS(multiplier_decomposition(0.0, 0.2, params), Error);
  }

  SUBCASE("rejects q~ outside (0,1)") {
    CHECK_THROWS_AS(multiplier_decomposition(1.0, 0.0, params), Error);
    CHECK_THROWS_AS(multiplier_decomposition(1.0, 1.0, params), Error);
  }
}

TEST_CASE("decomposition identity against grad_theta") {
  mnce::Rng rng(41);
  for (const auto& [m1, m2] : std::vector<std::pair<double, double>>{
           {0.1, 0.4}, {0.5, 0.7}, {0.2, 0.0}}) {
    MarginParams with;
    with.m1 = m1;
    with.m2 = m2;
    const BatchAngles batch = mnce::random_batch(6, rng);
    const Eigen::MatrixXd q_tilde =
        mnce::probabilities(mnce::logits(batch, with.without_margins()));
    const Eigen::MatrixXd plain =
        grad_theta(batch, with.without_margins()).grad;
    const Eigen::MatrixXd margin = grad_theta(batch, with).grad;
    for (int i = 0; i < 6; ++i) {
      const int l = batch.positive_col(i);
      const MultiplierDecomposition d =
          multiplier_decomposition(batch.angles(i, l), q_tilde(i, l), with);
      for (int j = 0; j < 6; ++j) {
        if (!batch.included(i, j)) continue;
        const double sin_term = (j == l) ? d.sin_term : 1.0;
        CHECK(std::fabs(margin(i, j) -
                        plain(i, j) * d.prob_term * sin_term) < 1e-10);
      }
    }
  }
}

TEST_CASE("feasible q~ range") {
  SUBCASE("reference point") {
    const auto [lo, hi] = feasible_qtilde_range(M_PI / 2.0, 256, 0.25);
    CHECK(lo == doctest::Approx(7.18e-5).epsilon(1e-3));
    CHECK(hi == doctest::Approx(0.17635).epsilon(1e-4));
  }

  SUBCASE("B=2 endpoints from a single negative") {
    const double tau = 0.25;
    const double theta = 1.0;
    const auto [lo, hi] = feasible_qtilde_range(theta, 2, tau);
    const double pos = std::exp(std::cos(theta) / tau);
    CHECK(lo == doctest::Approx(pos / (pos + std::exp(1.0 / tau)))
                    .epsilon(1e-14));
    CHECK(hi == doctest::Approx(pos / (pos + std::exp(-1.0 / tau)))
                    .epsilon(1e-14));
  }

  SUBCASE("uniform limit at huge temperature") {
    const auto [lo, hi] = feasible_qtilde_range(2.0, 8, 1e6);
    CHECK(lo == doctest::Approx(1.0 / 8.0).epsilon(1e-5));
    CHECK(hi == doctest::Approx(1.0 / 8.0).epsilon(1e-5));
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(feasible_qtilde_range(1.0, 1, 0.25), Error);
    CHECK_THROWS_AS(feasible_qtilde_range(1.0, 4, 0.0), Error);
  }
}

TEST_CASE("subtractive closed form") {
  mnce::Rng rng(43);

  SUBCASE("m2 zero is the plain margin gradient with factor one") {
    MarginParams params;
    params.m1 = 0.3;
    const BatchAngles batch = mnce::random_batch(5, rng);
    const Eigen::MatrixXd direct = grad_theta(batch, params).grad;
    const Eigen::MatrixXd closed =
        subtractive_closed_form_grad(batch, params).grad;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        CHECK(std::fabs(direct(i, j) - closed(i, j)) < 1e-12);
      }
    }
  }

  SUBCASE("matches grad_theta across an m2 sweep") {
    for (double m2 : {0.0, 0.4, 0.7, 5.0}) {
      MarginParams params;
      params.m2 = m2;
      const BatchAngles batch = mnce::random_batch(6, rng);
      const Eigen::MatrixXd direct = grad_theta(batch, params).grad;
      const Eigen::MatrixXd closed =
          subtractive_closed_form_grad(batch, params).grad;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          CHECK(std::fabs(direct(i, j) - closed(i, j)) < 1e-10);
        }
      }
    }
  }

  SUBCASE("attenuation factor value") {
    // 1 / (1 - (1 - e^-1.6) * 0.5)
    const double shrink = 1.0 - std::exp(-0.4 / 0.25);
    CHECK(shrink == doctest::Approx(0.798103).epsilon(1e-6));
    CHECK(1.0 / (1.0 - shrink * 0.5) == doctest::Approx(1.66403).epsilon(1e-5));
  }

  SUBCASE("requires beta one") {
    MarginParams params;
    params.beta = 0.5;
    const BatchAngles batch = mnce::random_batch(3, rng);
    try {
      subtractive_closed_form_grad(batch, params);
      FAIL("expected beta_not_one");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::beta_not_one);
    }
  }
}

TEST_CASE("m2 limit gradient") {
  MarginParams params;
  CHECK(m2_limit_grad(M_PI / 2.0, params) == doctest::Approx(4.0).epsilon(1e-14));
  params.m1 = 0.2;
  CHECK(m2_limit_grad(M_PI / 2.0, params) ==
        doctest::Approx(std::cos(0.2) / 0.25).epsilon(1e-14));
  CHECK(m2_limit_grad(M_PI / 2.0, params) ==
        doctest::Approx(3.92027).epsilon(1e-5));

  SUBCASE("grad_theta approaches the limit at m2 = 50") {
    mnce::Rng rng(47);
    MarginParams heavy;
    heavy.m1 = 0.2;
    heavy.m2 = 50.0;
    const BatchAngles batch = mnce::random_batch(8, rng);
    const Eigen::MatrixXd g = grad_theta(batch, heavy).grad;
    for (int i = 0; i < 8; ++i) {
      const int l = batch.positive_col(i);
      CHECK(std::fabs(g(i, l) - m2_limit_grad(batch.angles(i, l), heavy)) <
            1e-8);
    }
  }

  SUBCASE("requires beta one") {
    MarginParams byol;
    byol.beta = 0.0;
    CHECK_THROWS_AS(m2_limit_grad(1.0, byol), Error);
  }
}

TEST_CASE("sign reversal threshold") {
  CHECK(sign_reversal_threshold(0.0) == M_PI);
  CHECK(sign_reversal_threshold(0.2) == doctest::Approx(2.941593).epsilon(1e-6));
  CHECK_THROWS_AS(sign_reversal_threshold(-0.1), Error);
  CHECK_THROWS_AS(sign_reversal_threshold(M_PI), Error);

  SUBCASE("gradient flips past the threshold") {
    mnce::Rng rng(53);
    MarginParams with;
    with.m1 = 0.2;
    BatchAngles batch = mnce::random_batch(4, rng);
    const int l = batch.positive_col(0);
    batch.angles(0, l) = M_PI - 0.1;  // above pi - 0.2
    const double wide = grad_theta(batch, with).grad(0, l);
    const double base = grad_theta(batch, with.without_margins()).grad(0, l);
    CHECK(wide * base < 0.0);
  }
}
