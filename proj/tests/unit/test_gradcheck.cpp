// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include "resadapt/gradcheck.hpp"

#include <doctest.h>

using namespace resadapt;
using namespace resadapt::testing;

TEST_CASE("shadow loss agrees with the production loss") {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = uniform_size(rng, 2, 5);
        const std::size_t d = uniform_size(rng, 2, 16);
        const std::size_t n = uniform_size(rng, 1, 32);
        const auto anchors = random_anchors(k, d, rng);
        const auto bank = gaussian_matrix(n, d, rng);
        const auto pseudo = random_pseudo_labels(n, k, rng);
        const TaskResidual residual{gaussian_matrix(k, d, rng, 0.05)};
        const Temperature tau(0.7);
        const auto adapted = adapted_anchors(anchors, residual);
        const std::vector<double> wide_bank(bank.data().begin(), bank.data().end());
        const std::vector<double> wide_anchors(adapted.anchors.data().begin(), adapted.anchors.data().end());
        const double shadow =
            verify::shadow_loss(wide_bank, d, pseudo.sample_indices, pseudo.labels, wide_anchors, k, tau.value());
        CHECK(shadow == doctest::Approx(self_training_loss(bank, pseudo, anchors, residual, tau)).epsilon(1e-9));
    }
}

TEST_CASE("gradient check passes and the sign-flip control fails") {
    verify::GradcheckOptions opts;
    const auto ok = verify::run_gradcheck(opts);
    CHECK(ok.instances == 20);
    CHECK(ok.coordinates_checked > 0);
    CHECK(ok.passed());
    CHECK(ok.worst.relative_error < 1e-4);

    opts.inject_sign_flip = true;
    const auto flipped = verify::run_gradcheck(opts);
    CHECK_FALSE(flipped.passed());
    CHECK(flipped.worst.relative_error == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("gradient check is reproducible per seed") {
    verify::GradcheckOptions opts;
    opts.seed = 5;
    opts.instances = 5;
    const auto a = verify::run_gradcheck(opts);
    const auto b = verify::run_gradcheck(opts);
    CHECK(a.coordinates_checked == b.coordinates_checked);
    CHECK(a.worst.relative_error == b.worst.relative_error);
}
