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

#include <random>

#include "modeweave/symplectic.hpp"

using namespace modeweave;

TEST_CASE("omega_form builds the block-diagonal symplectic form") {
    const Mat w1 = omega_form(1);
    REQUIRE(w1.rows() == 2);
    CHECK(w1(0, 0) == 0.0);
    CHECK(w1(0, 1) == 1.0);
    CHECK(w1(1, 0) == -1.0);
    CHECK(w1(1, 1) == 0.0);

    const Mat w2 = omega_form(2);
    REQUIRE(w2.rows() == 4);
    CHECK(w2.block<2, 2>(0, 0) == omega2());
    CHECK(w2.block<2, 2>(2, 2) == omega2());
    CHECK(w2.block<2, 2>(0, 2).isZero(0.0));

    for (int n : {1, 2, 3, 5}) {
        const Mat w = omega_form(n);
        CHECK((w * w + Mat::Identity(2 * n, 2 * n)).isZero(0.0));  // exact integer entries
        CHECK((w.transpose() + w).isZero(0.0));
    }

    CHECK_THROWS_AS(omega_form(0), invalid_dimension_error);
}

TEST_CASE("is_symplectic recognises the defining condition") {
    CHECK(is_symplectic(Mat::Identity(4, 4)));
    CHECK(is_symplectic(omega_form(2)));
    Mat doubled = 2.0 * Mat::Identity(4, 4);
    CHECK_FALSE(is_symplectic(doubled));

    Mat odd = Mat::Identity(3, 3);
    CHECK_THROWS_AS(is_symplectic(odd), invalid_dimension_error);
}

TEST_CASE("rotation and squeeze generators") {
    CHECK(max_abs(rotation(0.0) - Mat2::Identity()) == 0.0);
    CHECK(max_abs(rotation(3.14159265358979323846 / 2) - omega2()) < 1e-15);
    CHECK(max_abs(rotation(3.14159265358979323846) + Mat2::Identity()) < 1e-15);

    CHECK(max_abs(squeeze(0.0) - Mat2::Identity()) == 0.0);
    const Mat2 z = squeeze(std::log(2.0));
    CHECK(z(0, 0) == Approx(0.5).margin(1e-15));
    CHECK(z(1, 1) == Approx(2.0).margin(1e-15));
    CHECK(max_abs(squeeze(0.7) * squeeze(-0.7) - Mat2::Identity()) < 1e-15);

    CHECK_THROWS_AS(squeeze(std::numeric_limits<double>::infinity()), invalid_parameter_error);
    CHECK_THROWS_AS(squeeze(std::nan("")), invalid_parameter_error);

    SECTION("rotations compose additively") {
        std::mt19937_64 rng(11);
        for (int t = 0; t < 100; ++t) {
            const double a = 3.0 * detail::uniform_pm1(rng);
            const double b = 3.0 * detail::uniform_pm1(rng);
            CHECK(max_abs(rotation(a) * rotation(b) - rotation(a + b)) < 1e-12);
        }
    }
}

TEST_CASE("layer_to_matrix embeds blocks on the diagonal") {
    CHECK(max_abs(layer_to_matrix(LocalLayer::identity(3)) - Mat::Identity(6, 6)) == 0.0);

    LocalLayer omegas;
    omegas.blocks = {omega2(), omega2()};
    CHECK(max_abs(layer_to_matrix(omegas) - omega_form(2)) == 0.0);

    LocalLayer mixed;
    mixed.blocks = {rotation(0.4), squeeze(0.9)};
    const Mat m = layer_to_matrix(mixed);
    CHECK(is_symplectic(m));
    CHECK(m.block<2, 2>(0, 2).isZero(0.0));

    LocalLayer bad;
    bad.blocks = {2.0 * Mat2::Identity()};
    CHECK_THROWS_AS(layer_to_matrix(bad), non_symplectic_error);

    SECTION("embedding commutes with blockwise composition") {
        std::mt19937_64 rng(5);
        for (int t = 0; t < 20; ++t) {
            LocalLayer a, b, ab;
            for (int k = 0; k < 3; ++k) {
                const Mat2 ba = rotation(detail::uniform_pm1(rng)) * squeeze(detail::uniform_pm1(rng));
                const Mat2 bb = rotation(detail::uniform_pm1(rng)) * squeeze(detail::uniform_pm1(rng));
                a.blocks.push_back(ba);
                b.blocks.push_back(bb);
                ab.blocks.push_back(ba * bb);
            }
            CHECK(max_abs(layer_to_matrix(ab) - layer_to_matrix(a) * layer_to_matrix(b)) < 1e-12);
        }
    }
}

TEST_CASE("SymplecticMatrix certification") {
    const Mat good = omega_form(2);
    const SymplecticMatrix s = SymplecticMatrix::certify(good);
    CHECK(s.n_modes() == 2);
    CHECK(s.residual() <= 1e-15);

    Mat bad = Mat::Identity(4, 4);
    bad(0, 0) = 1.5;
    CHECK_THROWS_AS(SymplecticMatrix::certify(bad), non_symplectic_error);
}

TEST_CASE("random_generic_symplectic is deterministic, symplectic and generic") {
    const SymplecticMatrix a = random_generic_symplectic(2, 7);
    const SymplecticMatrix b = random_generic_symplectic(2, 7);
    CHECK(max_abs(a.mat() - b.mat()) == 0.0);

    const SymplecticMatrix c = random_generic_symplectic(2, 8);
    CHECK(max_abs(a.mat() - c.mat()) > 1e-3);

    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const SymplecticMatrix s3 = random_generic_symplectic(3, seed);
        CHECK(symplecticity_residual(s3.mat()) <= 1e-10);

        const SymplecticMatrix s2 = random_generic_symplectic(2, seed);
        const double floor = 1e-8 * max_abs(s2.mat());
        for (int k = 0; k < 2; ++k) {
            for (int l = 0; l < 2; ++l) {
                CHECK(s2.mat().block<2, 2>(2 * k, 2 * l).cwiseAbs().maxCoeff() > floor);
            }
        }
    }

    CHECK_THROWS_AS(random_generic_symplectic(0, 1), invalid_dimension_error);
}

TEST_CASE("genericity_report flags vanishing subvectors and blocks") {
    SECTION("identity is not generic") {
        const GenericityReport rep = genericity_report(Mat::Identity(4, 4));
        CHECK_FALSE(rep.is_generic());
        bool off_01 = false;
        bool off_10 = false;
        for (const auto& b : rep.vanishing_blocks) {
            if (b.row_mode == 0 && b.col_mode == 1) off_01 = true;
            if (b.row_mode == 1 && b.col_mode == 0) off_10 = true;
        }
        CHECK(off_01);
        CHECK(off_10);
    }

    SECTION("random generic draws scan clean") {
        for (std::uint64_t seed : {10u, 11u, 12u}) {
            CHECK(genericity_report(random_generic_symplectic(2, seed).mat()).is_generic());
        }
    }

    SECTION("local rotations are not generic") {
        Mat m = Mat::Zero(4, 4);
        m.block<2, 2>(0, 0) = rotation(0.3);
        m.block<2, 2>(2, 2) = rotation(-1.1);
        CHECK_FALSE(genericity_report(m).is_generic());
    }
}
