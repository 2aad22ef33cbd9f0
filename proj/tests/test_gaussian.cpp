// Copyright 2026 The modeweave authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch.hpp>

#include "modeweave/gaussian.hpp"
#include "modeweave/protocols.hpp"

using namespace modeweave;

TEST_CASE("vacuum and coherent state constructors") {
    const GaussianState v1 = vacuum(1);
    CHECK(v1.mean.isZero(0.0));
    CHECK(max_abs(v1.cov - 0.5 * Mat::Identity(2, 2)) == 0.0);

    const GaussianState v2 = vacuum(2);
    CHECK(v2.mean.size() == 4);
    CHECK(v2.mean.isZero(0.0));

    for (const double nu : symplectic_eigenvalues(v2.cov)) {
        CHECK(nu == Approx(0.5).margin(1e-12));
    }

    const GaussianState c = coherent(2, 0, 1.0, 0.5);
    CHECK(c.mean(0) == 1.0);
    CHECK(c.mean(1) == 0.5);
    CHECK(c.mean(2) == 0.0);
    CHECK(c.mean(3) == 0.0);

    const GaussianState zero_amp = coherent(2, 1, 0.0, 0.0);
    CHECK(zero_amp.mean.isZero(0.0));

    CHECK_THROWS_AS(vacuum(0), invalid_dimension_error);
    CHECK_THROWS_AS(coherent(2, 2, 1.0, 0.0), invalid_dimension_error);

    SECTION("constructed and evolved states are physical") {
        CHECK(is_physical(vacuum(3)));
        CHECK(is_physical(coherent(2, 1, 0.4, -0.2)));
        CHECK(is_physical(evolve(vacuum(2), random_generic_symplectic(2, 40))));
        GaussianState squeezed_out = vacuum(1);
        squeezed_out.cov = 0.25 * Mat::Identity(2, 2);  // below the uncertainty bound
        CHECK_FALSE(is_physical(squeezed_out));
    }
}

TEST_CASE("evolve applies the symplectic map in the Heisenberg picture") {
    const GaussianState c = coherent(2, 0, 1.0, 0.5);

    SECTION("identity leaves the state unchanged") {
        const GaussianState out = evolve(c, Mat(Mat::Identity(4, 4)));
        CHECK(max_abs((out.mean - c.mean).eval()) == 0.0);
        CHECK(max_abs(out.cov - c.cov) == 0.0);
    }

    SECTION("the symplectic form rotates each mode's mean") {
        const GaussianState out = evolve(c, omega_form(2));
        CHECK(out.mean(0) == Approx(0.5));
        CHECK(out.mean(1) == Approx(-1.0));
    }

    SECTION("composition acts right-to-left") {
        const SymplecticMatrix a = random_generic_symplectic(2, 41);
        const SymplecticMatrix b = random_generic_symplectic(2, 42);
        const GaussianState one = evolve(evolve(c, b), a);
        const GaussianState two = evolve(c, Mat(a.mat() * b.mat()));
        CHECK(max_abs((one.mean - two.mean).eval()) <= 1e-12 * max_abs(a.mat()) * max_abs(b.mat()));
        CHECK(max_abs(one.cov - two.cov) <= 1e-10 * max_abs(one.cov));
    }

    SECTION("symplectic maps preserve purity") {
        const SymplecticMatrix s = random_generic_symplectic(3, 43);
        const GaussianState out = evolve(vacuum(3), s);
        for (const double nu : symplectic_eigenvalues(out.cov)) {
            CHECK(nu == Approx(0.5).margin(1e-10));
        }
    }

    SECTION("dimension mismatch is rejected") {
        CHECK_THROWS_AS(evolve(c, omega_form(3)), invalid_dimension_error);
    }
}

TEST_CASE("verify_decoupled measures cross-mode information flow") {
    SECTION("block-diagonal nets show no leakage") {
        Mat block_diag = Mat::Zero(4, 4);
        block_diag.block<2, 2>(0, 0) = rotation(0.4) * squeeze(0.3);
        block_diag.block<2, 2>(2, 2) = rotation(-0.9);
        const DecouplingCheck check =
            verify_decoupled(SymplecticMatrix::certify(block_diag), 0, 16, 7);
        CHECK(check.decoupled);
        CHECK(check.max_leakage <= 1e-12);
    }

    SECTION("builder outputs pass at the pattern tolerance") {
        const SymplecticMatrix s = random_generic_symplectic(3, 44);
        const ProtocolSequence seq = decouple_mode(s, 1, {});
        const DecouplingCheck check = verify_decoupled(seq.net, 1, 16, 7);
        CHECK(check.decoupled);
        CHECK(check.max_leakage <= 1e-8 * std::max(1.0, max_abs(seq.net.mat())));
    }

    SECTION("generic couplers leak outright") {
        const SymplecticMatrix s = random_generic_symplectic(2, 45);
        const DecouplingCheck check = verify_decoupled(s, 0, 16, 7);
        CHECK_FALSE(check.decoupled);
        CHECK(check.max_leakage > 0.01);
    }
}

TEST_CASE("verify_swap fits the exchanged blocks") {
    SECTION("the exact swap permutation fits identities") {
        Mat perm = Mat::Zero(4, 4);
        perm.block<2, 2>(0, 2) = Mat2::Identity();
        perm.block<2, 2>(2, 0) = Mat2::Identity();
        const SwapCheck check = verify_swap(SymplecticMatrix::certify(perm), 0, 1, 16, 7);
        CHECK(check.swapped);
        CHECK(check.residual <= 1e-12);
        CHECK(max_abs(check.block_ij - Mat2::Identity()) <= 1e-12);
        CHECK(max_abs(check.block_ji - Mat2::Identity()) <= 1e-12);
    }

    SECTION("swap builder outputs pass and the fit reads the corner blocks") {
        const SymplecticMatrix s = random_generic_symplectic(3, 46);
        const ProtocolSequence seq = build_swap(s, 0, 2);
        const SwapCheck check = verify_swap(seq.net, 0, 2, 16, 7);
        CHECK(check.swapped);
        const Mat& net = seq.net.mat();
        CHECK(max_abs(check.block_ij - Mat2(net.block<2, 2>(4, 0))) <=
              1e-10 * std::max(1.0, max_abs(net)));
        CHECK(max_abs(check.block_ji - Mat2(net.block<2, 2>(0, 4))) <=
              1e-10 * std::max(1.0, max_abs(net)));
        CHECK(std::abs(check.block_ij.determinant() - 1.0) <= 1e-8);
        CHECK(std::abs(check.block_ji.determinant() - 1.0) <= 1e-8);
    }

    SECTION("a decoupled net is not a swap") {
        Mat block_diag = Mat::Zero(4, 4);
        block_diag.block<2, 2>(0, 0) = rotation(0.4);
        block_diag.block<2, 2>(2, 2) = rotation(-0.9) * squeeze(0.5);
        const SwapCheck check = verify_swap(SymplecticMatrix::certify(block_diag), 0, 1, 16, 7);
        CHECK_FALSE(check.swapped);
    }
}

TEST_CASE("verify_transfer reads one-way routes") {
    const SymplecticMatrix s = random_generic_symplectic(3, 47);
    const ProtocolSequence seq = build_asymmetric_transducer(s);

    const TransferCheck forward = verify_transfer(seq.net, 0, 2, 16, 7);
    CHECK(forward.transferred);
    CHECK(std::abs(forward.block.determinant() - 1.0) <= 1e-8);

    // The reverse direction is contaminated by the middle mode.
    const TransferCheck backward = verify_transfer(seq.net, 2, 0, 16, 7);
    CHECK_FALSE(backward.transferred);
}

TEST_CASE("structural and behavioral certification agree") {
    for (std::uint64_t seed : {51u, 52u, 53u}) {
        const SymplecticMatrix s = random_generic_symplectic(3, seed);

        const ProtocolSequence dec = decouple_mode(s, 0, {});
        const bool pattern_ok = check_pattern(dec.net.mat(), dec.pattern).passed;
        const bool sim_ok = verify_decoupled(dec.net, 0, 16, seed).decoupled;
        CHECK(pattern_ok == sim_ok);

        const ProtocolSequence swp = build_swap(s, 0, 2, {});
        const bool swap_pattern_ok = check_pattern(swp.net.mat(), swp.pattern).passed;
        const bool swap_sim_ok = verify_swap(swp.net, 0, 2, 16, seed).swapped;
        CHECK(swap_pattern_ok == swap_sim_ok);
    }
}
