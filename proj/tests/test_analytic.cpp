// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"

#include "hk/analytic.hpp"
#include "hk/dropout.hpp"
#include "hk/errors.hpp"

using namespace hk;
using namespace hk::analytic;

namespace {

// Brute-force oracle: dense exponentials, no shifting, no shared code.
struct Brute {
  double s = 0.0, kept = 0.0;
  std::vector<double> e;
  explicit Brute(const LogitInstance& inst) {
    std::vector<bool> masked(inst.logits.size(), false);
    for (auto m : inst.masked) {
      masked[m] = true;
    }
    for (std::size_t i = 0; i < inst.logits.size(); ++i) {
      e.push_back(std::exp(inst.logits[i]));
      s += e.back();
      kept += masked[i] ? 0.0 : e.back();
    }
  }
};

}  // namespace

TEST_CASE("closed forms at the symmetric point") {
  const auto inst = LogitInstance::single({0, 0, 0}, 2, 0);
  CHECK(wu_dropkey(inst) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dwu_dgu_dropkey(inst) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(dwu_dgu_dropattention_ng(inst) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(dwu_dgm_dropattention_ng(inst) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
  CHECK(dwu_dgm_dropkey(inst) == 0.0);
  const auto k = ratio_k(inst);
  CHECK(k.value == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_FALSE(k.degenerate);
  CHECK(k.value == doctest::Approx(dwu_dgu_dropkey(inst) / dwu_dgu_dropattention_ng(inst)));
}

TEST_CASE("forward closed form examples") {
  const auto inst = LogitInstance::single({1, 2, 3}, 2, 1);
  CHECK(wu_dropkey(inst) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(wu_dropattention(inst) == doctest::Approx(wu_dropkey(inst)).epsilon(1e-14));
  const auto lone = LogitInstance::single({0.4, -1.2}, 1, 0);
  CHECK(wu_dropkey(lone) == 1.0);
  const auto k = ratio_k(lone);
  CHECK(k.value == 0.0);
  CHECK(k.degenerate);
}

TEST_CASE("k tends to one as the masked logit vanishes") {
  const auto far = LogitInstance::single({0.5, 0.1, -20.0}, 2, 0);
  CHECK(ratio_k(far).value == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(ratio_k(far).value < 1.0);
}

TEST_CASE("closed forms agree with a brute-force evaluation") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng, 2 + rng.index(15));
    const Brute b(inst);
    const double eu = b.e[inst.probe];
    CHECK(wu_dropkey(inst) == doctest::Approx(eu / b.kept).epsilon(1e-12));
    CHECK(dwu_dgu_dropkey(inst) ==
          doctest::Approx(eu * (b.kept - eu) / (b.kept * b.kept)).epsilon(1e-10));
    CHECK(dwu_dgu_dropattention_ng(inst) ==
          doctest::Approx(eu * (b.s - eu) / (b.s * b.kept)).epsilon(1e-10));
    const auto m = inst.masked_index();
    CHECK(dwu_dgm_dropattention_ng(inst) ==
          doctest::Approx(-eu * b.e[m] / (b.s * b.kept)).epsilon(1e-10));
    const auto k = ratio_k(inst);
    CHECK(k.value >= 0.0);
    CHECK(k.value < 1.0);
    if (!k.degenerate) {
      CHECK(k.value == doctest::Approx((1 - eu / b.kept) / (1 - eu / b.s)).epsilon(1e-9));
    }
  }
}

TEST_CASE("autodiff matches the closed forms on single and multi masks") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng, 2 + rng.index(31));
    std::vector<double> c(inst.logits.size());
    for (auto& x : c) {
      x = rng.normal();
    }
    const auto r = verify_instance(inst, c);
    CHECK(r.max_forward_diff <= 1e-12);
    CHECK(r.max_backward_diff_no_gradstop <= 1e-10);
    CHECK(r.max_closed_form_diff <= 1e-10);
    CHECK(r.gm_grad_dropkey == 0.0);
    CHECK(r.loss_gm_grad_dropkey_max == 0.0);
    if (!r.k_degenerate) {
      CHECK(std::abs(r.k_empirical - r.k_closed_form) <= 1e-10);
    }
    if (r.generic) {
      CHECK(std::abs(r.gm_grad_dropattention) > 1e-8);
    }
  }
}

TEST_CASE("k is non-increasing in the masked logit") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    CHECK(k_nonincreasing_in_gm(random_instance(rng, 2 + rng.index(31)), 100, 10.0));
  }
}

TEST_CASE("instance validation") {
  CHECK_THROWS_AS(LogitInstance::single({1.0}, 0, 0).validate(), ContractError);
  CHECK_THROWS_AS(LogitInstance::single({1.0, 2.0}, 1, 1).validate(), ContractError);
  CHECK_THROWS_AS(LogitInstance::single({1.0, 2.0}, 2, 0).validate(), ContractError);
}

TEST_CASE("suite report on a small run") {
  SuiteOptions opts;
  opts.instances = 120;
  const auto report = run_suite(opts);
  CHECK(report.instances == 120);
  CHECK(report.multi_mask_instances > 0);
  CHECK(report.all_ok());
  CHECK(report.to_json().find("\"passed\": true") != std::string::npos);
}
