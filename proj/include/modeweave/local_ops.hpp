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

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "modeweave/errors.hpp"
#include "modeweave/symplectic.hpp"

namespace modeweave {

template <typename T>
using SmallMat = Eigen::Matrix<T, 2, 2>;
template <typename T>
using SmallVec = Eigen::Matrix<T, 2, 1>;

/// Euler parameters of a 2x2 symplectic block:
///   block = rotation(-theta) * squeeze(r) * rotation(phi).
/// |r| is the block's squeezing cost; r == 0 iff the block is a pure rotation.
struct LocalOpDecomposition {
    double theta;
    double r;
    double phi;
};

inline Mat2 recompose(const LocalOpDecomposition& d) {
    return rotation(-d.theta) * squeeze(d.r) * rotation(d.phi);
}

/// Scale freedom when aligning one 2D vector to another.
///   unit:         L*a = b exactly (scale c = 1), squeezing as needed.
///   squeeze_free: L is a pure rotation, so L*a = c*b with c = |a|/|b|.
enum class ScaleMode { unit, squeeze_free };

// Precision-generic alignment kernels. The double instantiations form the
// public solver API; the protocol builders run them in extended precision,
// where the sandwich cancellations would otherwise eat the zero patterns.
namespace kernel {

template <typename T>
SmallMat<T> rotation(T theta) {
    using std::cos;
    using std::sin;
    SmallMat<T> r;
    r << cos(theta), sin(theta), -sin(theta), cos(theta);
    return r;
}

template <typename T>
SmallMat<T> squeeze(T r) {
    using std::exp;
    SmallMat<T> z;
    z << exp(-r), T(0), T(0), exp(r);
    return z;
}

/// Determinant-one map sending a to b in closed form,
///   L = b a^T/|a|^2 + (w b)(w a)^T/|b|^2,   w = [[0,1],[-1,0]].
/// Equals the rotate-dilate-rotate construction; the two code paths
/// cross-check each other.
template <typename T>
SmallMat<T> rank_two_align(const SmallVec<T>& a, const SmallVec<T>& b) {
    const T na2 = a.squaredNorm();
    const T nb2 = b.squaredNorm();
    if (!(na2 > T(0)) || !(nb2 > T(0))) {
        throw degenerate_vector_error("rank_two_align: zero source or target vector");
    }
    const SmallVec<T> wa(a(1), -a(0));
    const SmallVec<T> wb(b(1), -b(0));
    return (b * a.transpose()) / na2 + (wb * wa.transpose()) / nb2;
}

template <typename T>
struct AlignOutcome {
    SmallMat<T> block;
    T scale;
};

/// Rotation to the q axis, dilation, rotation to the final direction.
template <typename T>
AlignOutcome<T> align_one(const SmallVec<T>& a, const SmallVec<T>& b, ScaleMode policy) {
    using std::atan2;
    using std::log;
    const T na = a.norm();
    const T nb = b.norm();
    if (!(na > T(0)) || !(nb > T(0))) {
        throw degenerate_vector_error("align_one: zero source or target vector");
    }
    const T phi = atan2(a(1), a(0));
    const T theta = atan2(b(1), b(0));
    if (policy == ScaleMode::squeeze_free) {
        return {rotation<T>(phi - theta), na / nb};
    }
    const T r = log(na / nb);
    SmallMat<T> block = rotation<T>(-theta) * squeeze<T>(r) * rotation<T>(phi);
    return {block, T(1)};
}

/// Condition number (2-norm) of the 2x2 matrix with columns a1, a2.
template <typename T>
T pair_condition(const SmallVec<T>& a1, const SmallVec<T>& a2) {
    using std::abs;
    using std::sqrt;
    const T f2 = a1.squaredNorm() + a2.squaredNorm();
    const T det = a1(0) * a2(1) - a1(1) * a2(0);
    if (det == T(0)) {
        return std::numeric_limits<T>::infinity();
    }
    const T disc2 = f2 * f2 - T(4) * det * det;
    const T disc = sqrt(disc2 > T(0) ? disc2 : T(0));
    return (f2 + disc) / (T(2) * abs(det));
}

/// The unique linear map with L*a1 = b1 and L*a2 = b2. A determinant-one
/// solution exists iff the signed areas match; the precondition is verified,
/// not assumed.
template <typename T>
SmallMat<T> align_pair(const SmallVec<T>& a1, const SmallVec<T>& a2, const SmallVec<T>& b1,
                       const SmallVec<T>& b2, T area_tolerance = T(1e-8),
                       T condition_limit = T(1e8)) {
    using std::abs;
    const T singular_guard = T(64) * std::numeric_limits<T>::epsilon();
    const T det_a = a1(0) * a2(1) - a1(1) * a2(0);
    const T scale_a = a1.norm() > a2.norm() ? a1.norm() : a2.norm();
    if (!(scale_a > T(0)) || abs(det_a) <= singular_guard * scale_a * scale_a) {
        throw degenerate_pair_error("align_pair: source pair is singular");
    }
    const T det_b = b1(0) * b2(1) - b1(1) * b2(0);
    T area_scale = abs(det_a) > abs(det_b) ? abs(det_a) : abs(det_b);
    if (!(area_scale > T(0))) {
        area_scale = T(1);
    }
    if (abs(det_a - det_b) > area_tolerance * area_scale) {
        std::ostringstream msg;
        msg << "align_pair: symplectic areas differ (" << static_cast<double>(det_a) << " vs "
            << static_cast<double>(det_b) << ")";
        throw unsatisfiable_alignment_error(msg.str());
    }
    const T cond = pair_condition<T>(a1, a2);
    if (cond > condition_limit) {
        std::ostringstream msg;
        msg << "align_pair: source pair condition number " << static_cast<double>(cond)
            << " exceeds " << static_cast<double>(condition_limit);
        throw unsatisfiable_alignment_error(msg.str());
    }
    SmallMat<T> inv_a;
    inv_a << a2(1), -a2(0), -a1(1), a1(0);
    inv_a /= det_a;
    SmallMat<T> mb;
    mb.col(0) = b1;
    mb.col(1) = b2;
    return mb * inv_a;
}

}  // namespace kernel

struct AlignResult {
    Mat2 block;    // determinant-one map
    double scale;  // c in L*a = c*b
};

/// Align one nonzero 2D quadrature vector to another with a single-mode
/// Gaussian operation.
inline AlignResult align_one(const Vec2& a, const Vec2& b, ScaleMode policy = ScaleMode::unit) {
    const auto out = kernel::align_one<double>(a, b, policy);
    return {out.block, out.scale};
}

inline Mat2 rank_two_align(const Vec2& a, const Vec2& b) {
    return kernel::rank_two_align<double>(a, b);
}

inline double pair_condition(const Vec2& a1, const Vec2& a2) {
    return kernel::pair_condition<double>(a1, a2);
}

inline Mat2 align_pair(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2,
                       double area_tolerance = 1e-8, double condition_limit = 1e8) {
    return kernel::align_pair<double>(a1, a2, b1, b2, area_tolerance, condition_limit);
}

/// Recover (theta, r, phi) with block = rotation(-theta)*squeeze(r)*rotation(phi).
///
/// Works from L*L^T = rotation(-theta)*diag(e^-2r, e^2r)*rotation(theta),
/// with angle branches resolved by two-argument arctangent and the canonical
/// branch r >= 0. Pure rotations report theta = 0.
inline LocalOpDecomposition euler_decompose(const Mat2& block, double det_tolerance = 1e-8) {
    const double det = block.determinant();
    if (std::abs(det - 1.0) > det_tolerance) {
        std::ostringstream msg;
        msg << "euler_decompose: block determinant " << det << " is not 1";
        throw non_symplectic_error(msg.str());
    }
    // For determinant-one blocks, cosh(2r) - 1 = ((a-d)^2 + (b+c)^2) / 2
    // exactly; reading the differences before squaring keeps r accurate all
    // the way down to the rounding floor (the trace route loses half the
    // digits near orthogonality).
    const double gap_d = block(0, 0) - block(1, 1);
    const double gap_o = block(0, 1) + block(1, 0);
    const double h = 0.5 * (gap_d * gap_d + gap_o * gap_o);
    const double r = 0.5 * std::log1p(h + std::sqrt(h * (h + 2.0)));
    if (r < 1e-12) {
        // Pure rotation: theta is unconstrained, fold everything into phi.
        return {0.0, 0.0, std::atan2(block(0, 1), block(0, 0))};
    }
    const Mat2 p = block * block.transpose();
    // Off-diagonal and diagonal gap of P are -sin(2t)*sinh(2r) and
    // -2*cos(2t)*sinh(2r); sinh(2r) > 0 here, so atan2 fixes the branch.
    const double theta = 0.5 * std::atan2(-2.0 * p(0, 1), -(p(0, 0) - p(1, 1)));
    const Mat2 rot_phi = squeeze(-r) * rotation(theta) * block;
    const double phi = std::atan2(rot_phi(0, 1), rot_phi(0, 0));
    return {theta, r, phi};
}

/// Per-mode |r| of a layer's blocks. A mode reports 0 iff its block is
/// orthogonal.
inline std::vector<double> squeezing_cost(const LocalLayer& layer) {
    std::vector<double> cost;
    cost.reserve(layer.blocks.size());
    for (const auto& block : layer.blocks) {
        cost.push_back(std::abs(euler_decompose(block).r));
    }
    return cost;
}

}  // namespace modeweave
