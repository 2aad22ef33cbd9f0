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

#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "modeweave/errors.hpp"
#include "modeweave/symplectic.hpp"

namespace modeweave {

/// Gaussian state of n modes: mean quadrature vector and covariance matrix.
/// Vacuum covariance is Identity/2 (hbar = 1 symmetric convention, matching
/// q = (a + a^dag)/sqrt(2)).
struct GaussianState {
    int n_modes;
    Vec mean;
    Mat cov;
};

inline GaussianState vacuum(int n_modes) {
    if (n_modes < 1) {
        throw invalid_dimension_error("vacuum: n_modes must be >= 1");
    }
    return {n_modes, Vec::Zero(2 * n_modes), 0.5 * Mat::Identity(2 * n_modes, 2 * n_modes)};
}

/// Vacuum displaced by (amp_q, amp_p) on one mode.
inline GaussianState coherent(int n_modes, int mode, double amp_q, double amp_p) {
    if (mode < 0 || mode >= n_modes) {
        throw invalid_dimension_error("coherent: mode index out of range");
    }
    GaussianState s = vacuum(n_modes);
    s.mean(2 * mode) = amp_q;
    s.mean(2 * mode + 1) = amp_p;
    return s;
}

/// Heisenberg-picture action of a symplectic map: mean -> S*mean,
/// cov -> S*cov*S^T.
inline GaussianState evolve(const GaussianState& state, const Mat& s) {
    if (s.rows() != state.mean.size() || s.cols() != state.mean.size()) {
        throw invalid_dimension_error("evolve: dimension mismatch");
    }
    return {state.n_modes, s * state.mean, s * state.cov * s.transpose()};
}

inline GaussianState evolve(const GaussianState& state, const SymplecticMatrix& s) {
    return evolve(state, s.mat());
}

/// Symplectic eigenvalues of a covariance matrix (moduli of the eigenvalues
/// of i*Omega*cov, each appearing once). Pure states have all of them 1/2.
inline std::vector<double> symplectic_eigenvalues(const Mat& cov) {
    const int n = static_cast<int>(cov.rows() / 2);
    Eigen::EigenSolver<Mat> solver(omega_form(n) * cov, false);
    std::vector<double> nus;
    for (int i = 0; i < cov.rows(); ++i) {
        const double im = solver.eigenvalues()(i).imag();
        if (im > 0.0) {
            nus.push_back(im);
        }
    }
    std::sort(nus.begin(), nus.end());
    return nus;
}

/// A state is physical when its covariance is symmetric and every symplectic
/// eigenvalue respects the uncertainty bound nu >= 1/2.
inline bool is_physical(const GaussianState& state, double tolerance = 1e-9) {
    if (max_abs(state.cov - state.cov.transpose()) > 1e-12 * std::max(1.0, max_abs(state.cov))) {
        return false;
    }
    for (const double nu : symplectic_eigenvalues(state.cov)) {
        if (nu < 0.5 - tolerance) {
            return false;
        }
    }
    return true;
}

/// Result of the behavioral decoupling check.
struct DecouplingCheck {
    bool decoupled;
    double max_leakage;  // worst cross-mode mean response to a unit input
};

namespace detail {

inline Vec random_mean(int dim, std::mt19937_64& rng) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) {
        v(i) = detail::uniform_pm1(rng);
    }
    return v;
}

}  // namespace detail

/// Check behaviorally that `mode` has no effective interaction with the rest:
/// over randomized coherent inputs, perturbing the decoupled mode's input must
/// not move any other mode's output quadratures, and vice versa. Means are
/// probed through full state evolution; linearity makes mean leakage the
/// complete story.
inline DecouplingCheck verify_decoupled(const SymplecticMatrix& net, int mode, int trials = 16,
                                        std::uint64_t seed = 0,
                                        double tolerance = tol::zero_pattern) {
    const int n = net.n_modes();
    if (mode < 0 || mode >= n) {
        throw invalid_dimension_error("verify_decoupled: mode index out of range");
    }
    std::mt19937_64 rng(seed);
    double leakage = 0.0;
    for (int t = 0; t < trials; ++t) {
        GaussianState base = vacuum(n);
        base.mean = detail::random_mean(2 * n, rng);

        // Unit perturbation on the decoupled mode; read other modes' outputs.
        const double angle = 3.14159265358979323846 * detail::uniform_pm1(rng);
        GaussianState poked = base;
        poked.mean(2 * mode) += std::cos(angle);
        poked.mean(2 * mode + 1) += std::sin(angle);
        Vec delta = evolve(poked, net).mean - evolve(base, net).mean;
        for (int i = 0; i < 2 * n; ++i) {
            if (i / 2 != mode) {
                leakage = std::max(leakage, std::abs(delta(i)));
            }
        }

        // Unit perturbation on the other modes; read the decoupled mode.
        GaussianState poked_rest = base;
        Vec dir = detail::random_mean(2 * n, rng);
        dir(2 * mode) = 0.0;
        dir(2 * mode + 1) = 0.0;
        if (dir.norm() > 0.0) {
            dir.normalize();
            poked_rest.mean += dir;
            delta = evolve(poked_rest, net).mean - evolve(base, net).mean;
            leakage = std::max(leakage, std::abs(delta(2 * mode)));
            leakage = std::max(leakage, std::abs(delta(2 * mode + 1)));
        }
    }
    const double bound = tolerance * std::max(1.0, max_abs(net.mat()));
    return {leakage <= bound, leakage};
}

/// Result of the behavioral one-way transfer check.
struct TransferCheck {
    bool transferred;
    double residual;
    Mat2 block;  // fitted 2x2 map from mode `from`'s input to mode `to`'s output
};

/// Fit out_to = block * in_from over randomized trials and measure how far the
/// output deviates when spectators (every input except `from`) vary.
inline TransferCheck verify_transfer(const SymplecticMatrix& net, int from, int to,
                                     int trials = 16, std::uint64_t seed = 0,
                                     double tolerance = tol::zero_pattern) {
    const int n = net.n_modes();
    if (from < 0 || from >= n || to < 0 || to >= n) {
        throw invalid_dimension_error("verify_transfer: mode index out of range");
    }
    std::mt19937_64 rng(seed);
    const GaussianState origin = vacuum(n);

    // Two probe differences recover the block exactly (the map is linear).
    Mat2 block;
    for (int c = 0; c < 2; ++c) {
        GaussianState probe = origin;
        probe.mean(2 * from + c) = 1.0;
        const Vec delta = evolve(probe, net).mean - evolve(origin, net).mean;
        block(0, c) = delta(2 * to);
        block(1, c) = delta(2 * to + 1);
    }

    double residual = 0.0;
    for (int t = 0; t < trials; ++t) {
        GaussianState state = vacuum(n);
        state.mean = detail::random_mean(2 * n, rng);
        const Vec out = evolve(state, net).mean;
        const Vec2 in_from(state.mean(2 * from), state.mean(2 * from + 1));
        const Vec2 predicted = block * in_from;
        residual = std::max(residual, std::abs(out(2 * to) - predicted(0)));
        residual = std::max(residual, std::abs(out(2 * to + 1) - predicted(1)));
    }
    const double bound = tolerance * std::max(1.0, max_abs(net.mat()));
    const bool det_ok = std::abs(block.determinant() - 1.0) <= bound;
    return {residual <= bound && det_ok, residual, block};
}

/// Result of the behavioral swap check.
struct SwapCheck {
    bool swapped;
    double residual;
    Mat2 block_ij;  // mode i's input as seen on mode j's output
    Mat2 block_ji;
};

/// Check that the net realizes a perfect swap of modes i and j up to local
/// operations: each mode's output is a fixed determinant-one function of the
/// other mode's input alone, independent of every spectator input.
inline SwapCheck verify_swap(const SymplecticMatrix& net, int mode_i, int mode_j, int trials = 16,
                             std::uint64_t seed = 0, double tolerance = tol::zero_pattern) {
    const TransferCheck forward = verify_transfer(net, mode_i, mode_j, trials, seed, tolerance);
    const TransferCheck backward =
        verify_transfer(net, mode_j, mode_i, trials, seed + 1, tolerance);
    return {forward.transferred && backward.transferred,
            std::max(forward.residual, backward.residual), forward.block, backward.block};
}

}  // namespace modeweave
