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

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/float128.hpp>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "modeweave/errors.hpp"
#include "modeweave/local_ops.hpp"
#include "modeweave/symplectic.hpp"

namespace modeweave {

// ---------------------------------------------------------------------------
// Structure patterns
// ---------------------------------------------------------------------------

/// The matrix shapes the protocols certify. Each kind is a set of entries
/// required to vanish plus a few entries pinned to exact values, derived from
/// the kind, the mode count and the target modes.
enum class PatternKind {
    q_decoupled,  // one mode's q quadrature decoupled after a single sandwich
    decoupled,    // one mode fully decoupled from the rest
    q_transfer,   // one mode's q quadrature rerouted onto another mode
    transducer,   // one-way transfer of a whole mode onto another
    swap,         // two modes exchanged, spectators sealed off
};

inline const char* pattern_kind_name(PatternKind k) {
    switch (k) {
        case PatternKind::q_decoupled: return "q_decoupled";
        case PatternKind::decoupled: return "decoupled";
        case PatternKind::q_transfer: return "q_transfer";
        case PatternKind::transducer: return "transducer";
        case PatternKind::swap: return "swap";
    }
    return "unknown";
}

struct StructurePattern {
    struct Pin {
        int row;
        int col;
        double value;
    };

    PatternKind kind;
    int n_modes = 0;
    std::vector<int> target_modes;
    std::vector<std::pair<int, int>> zero_positions;
    std::vector<Pin> pinned_entries;

    /// Row `2m` reads (0, .., 1 at column 2s+1, .., 0) and column `2s` reads
    /// (0, .., -1 at row 2m+1, .., 0). With s == m this is the q-decoupled
    /// shape of a single sandwich.
    static StructurePattern q_transfer_shape(int n_modes, int src_mode, int tgt_mode,
                                             PatternKind kind = PatternKind::q_transfer) {
        StructurePattern p;
        p.kind = kind;
        p.n_modes = n_modes;
        p.target_modes = {src_mode, tgt_mode};
        const int row = 2 * tgt_mode;
        const int col = 2 * src_mode;
        for (int j = 0; j < 2 * n_modes; ++j) {
            if (j != col + 1) {
                p.zero_positions.emplace_back(row, j);
            }
        }
        for (int i = 0; i < 2 * n_modes; ++i) {
            if (i != row + 1 && i != row) {
                p.zero_positions.emplace_back(i, col);
            }
        }
        p.pinned_entries.push_back({row, col + 1, 1.0});
        p.pinned_entries.push_back({row + 1, col, -1.0});
        return p;
    }

    static StructurePattern q_decoupled(int n_modes, int mode) {
        auto p = q_transfer_shape(n_modes, mode, mode, PatternKind::q_decoupled);
        p.target_modes = {mode};
        return p;
    }

    /// Rows and columns of `mode` vanish outside its own 2x2 corner, which is
    /// pinned to [[0, 1], [-1, *]].
    static StructurePattern decoupled(int n_modes, int mode) {
        StructurePattern p;
        p.kind = PatternKind::decoupled;
        p.n_modes = n_modes;
        p.target_modes = {mode};
        const int q = 2 * mode;
        for (int j = 0; j < 2 * n_modes; ++j) {
            if (j != q && j != q + 1) {
                p.zero_positions.emplace_back(q, j);
                p.zero_positions.emplace_back(q + 1, j);
                p.zero_positions.emplace_back(j, q);
                p.zero_positions.emplace_back(j, q + 1);
            }
        }
        p.pinned_entries.push_back({q, q, 0.0});
        p.pinned_entries.push_back({q, q + 1, 1.0});
        p.pinned_entries.push_back({q + 1, q, -1.0});
        return p;
    }

    /// One-way transfer: mode `src`'s input reaches only mode `tgt`'s output
    /// (columns of src vanish off tgt's rows), and tgt's output depends only
    /// on src's input (rows of tgt vanish off src's columns), with the
    /// corner pinned to [[0, 1], [-1, *]].
    static StructurePattern transducer(int n_modes, int src_mode, int tgt_mode) {
        StructurePattern p;
        p.kind = PatternKind::transducer;
        p.n_modes = n_modes;
        p.target_modes = {src_mode, tgt_mode};
        const int q_src = 2 * src_mode;
        const int q_tgt = 2 * tgt_mode;
        for (int i = 0; i < 2 * n_modes; ++i) {
            if (i != q_tgt && i != q_tgt + 1) {
                p.zero_positions.emplace_back(i, q_src);
                p.zero_positions.emplace_back(i, q_src + 1);
            }
        }
        for (int j = 0; j < 2 * n_modes; ++j) {
            if (j != q_src && j != q_src + 1) {
                p.zero_positions.emplace_back(q_tgt, j);
                p.zero_positions.emplace_back(q_tgt + 1, j);
            }
        }
        p.pinned_entries.push_back({q_tgt, q_src, 0.0});
        p.pinned_entries.push_back({q_tgt, q_src + 1, 1.0});
        p.pinned_entries.push_back({q_tgt + 1, q_src, -1.0});
        return p;
    }

    /// Modes i and j couple only to each other through the antidiagonal 2x2
    /// corner blocks; the remaining modes couple only among themselves.
    static StructurePattern swap_shape(int n_modes, int mode_i, int mode_j) {
        StructurePattern p;
        p.kind = PatternKind::swap;
        p.n_modes = n_modes;
        p.target_modes = {mode_i, mode_j};
        auto mode_of = [](int idx) { return idx / 2; };
        for (int r = 0; r < 2 * n_modes; ++r) {
            for (int c = 0; c < 2 * n_modes; ++c) {
                const int rm = mode_of(r);
                const int cm = mode_of(c);
                const bool corner_ij = (rm == mode_i && cm == mode_j);
                const bool corner_ji = (rm == mode_j && cm == mode_i);
                const bool middle = (rm != mode_i && rm != mode_j && cm != mode_i && cm != mode_j);
                if (!(corner_ij || corner_ji || middle)) {
                    p.zero_positions.emplace_back(r, c);
                }
            }
        }
        p.zero_positions.emplace_back(2 * mode_i, 2 * mode_j);
        return p;
    }
};

struct PatternViolation {
    int row;
    int col;
    double value;
    double expected;
    bool is_pin;
};

struct PatternCheck {
    std::vector<PatternViolation> violations;
    double max_zero_violation = 0.0;  // relative to the matrix max-norm
    double max_pin_deviation = 0.0;   // absolute
    bool passed = true;
};

/// Scan a matrix against a pattern: required zeros are judged relative to the
/// matrix max-norm, pinned entries absolutely. Pin checks can be skipped for
/// squeezing-relaxed nets, whose pinned positions carry rescaled values while
/// the zero structure is unchanged.
inline PatternCheck check_pattern(const Mat& m, const StructurePattern& pattern,
                                  double tolerance = tol::zero_pattern, bool check_pins = true) {
    if (m.rows() != 2 * pattern.n_modes || m.cols() != 2 * pattern.n_modes) {
        throw invalid_dimension_error("check_pattern: matrix does not match pattern dimensions");
    }
    PatternCheck result;
    const double scale = std::max(max_abs(m), 1e-300);
    for (const auto& [r, c] : pattern.zero_positions) {
        const double rel = std::abs(m(r, c)) / scale;
        result.max_zero_violation = std::max(result.max_zero_violation, rel);
        if (rel > tolerance) {
            result.violations.push_back({r, c, m(r, c), 0.0, false});
        }
    }
    if (check_pins) {
        for (const auto& pin : pattern.pinned_entries) {
            const double dev = std::abs(m(pin.row, pin.col) - pin.value);
            result.max_pin_deviation = std::max(result.max_pin_deviation, dev);
            if (dev > tolerance) {
                result.violations.push_back({pin.row, pin.col, m(pin.row, pin.col), pin.value, true});
            }
        }
    }
    result.passed = result.violations.empty();
    return result;
}

// ---------------------------------------------------------------------------
// Protocol sequences
// ---------------------------------------------------------------------------

/// One use of the fixed coupler within a sequence.
struct CouplerUse {
    std::string tag = "S";
};

using ProtocolStep = std::variant<CouplerUse, LocalLayer>;

/// Multiply out a step list (first element applied first in time) against a
/// concrete coupler matrix. Later steps act from the left.
inline Mat sequence_product(const std::vector<ProtocolStep>& steps, const Mat& coupler) {
    Mat acc = Mat::Identity(coupler.rows(), coupler.cols());
    for (const auto& step : steps) {
        if (std::holds_alternative<CouplerUse>(step)) {
            acc = coupler * acc;
        } else {
            acc = layer_to_matrix(std::get<LocalLayer>(step)) * acc;
        }
    }
    return acc;
}

inline int count_coupler_uses(const std::vector<ProtocolStep>& steps) {
    int count = 0;
    for (const auto& step : steps) {
        if (std::holds_alternative<CouplerUse>(step)) {
            ++count;
        }
    }
    return count;
}

/// An ordered alternation of coupler uses and local layers together with the
/// certified net matrix it multiplies out to.
struct ProtocolSequence {
    std::vector<ProtocolStep> steps;  // time order, first applied first
    SymplecticMatrix net;
    int coupler_count = 0;
    std::vector<double> squeezing_budget;  // per-mode max |r| over all layers
    StructurePattern pattern;
    PatternCheck certification;
};

// ---------------------------------------------------------------------------
// Build options
// ---------------------------------------------------------------------------

/// How the per-mode blocks of a layer get built. The closed form evaluates
/// the rank-two expression b a^T/|a|^2 + (wb)(wa)^T/|b|^2 directly from
/// matrix entries; the constructive route composes rotation-dilation-rotation
/// from the same subvectors. Both are certified against the target pattern;
/// closed-form builds fall back to the constructive route on failure.
enum class LayerMethod { closed_form, constructive };

struct BuildOptions {
    LayerMethod method = LayerMethod::closed_form;
    bool allow_fallback = true;
    /// Squeezing relaxation: every layer block on this mode comes out
    /// orthogonal; the other modes absorb the freed scale.
    std::optional<int> exempt_mode;
    double zero_tolerance = tol::zero_pattern;
    double generic_threshold = tol::genericity;
    /// Certification tolerance for built nets. Products of four to sixteen
    /// coupler copies accumulate rounding beyond the 1e-10 input standard.
    double sym_tolerance = 1e-9;
};

// ---------------------------------------------------------------------------
// Step construction (precision-generic internals)
// ---------------------------------------------------------------------------

namespace detail {

/// Internal working precision of the protocol builders. The sandwich
/// products cancel entries several orders larger than the results they
/// leave behind; the extra mantissa keeps those cancellations clean.
using Real = long double;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using BlockList = std::vector<SmallMat<T>>;

template <typename T>
SmallVec<T> omega_times(const SmallVec<T>& v) {
    return SmallVec<T>(v(1), -v(0));
}

template <typename T>
SmallVec<T> row_pair_x(const MatX<T>& m, int row, int mode) {
    return SmallVec<T>(m(row, 2 * mode), m(row, 2 * mode + 1));
}

template <typename T>
SmallVec<T> col_pair_x(const MatX<T>& m, int col, int mode) {
    return SmallVec<T>(m(2 * mode, col), m(2 * mode + 1, col));
}

template <typename T>
T max_abs_x(const MatX<T>& m) {
    return m.cwiseAbs().maxCoeff();
}

template <typename T>
MatX<T> blocks_to_matrix(const BlockList<T>& blocks) {
    const int n = static_cast<int>(blocks.size());
    MatX<T> m = MatX<T>::Zero(2 * n, 2 * n);
    for (int k = 0; k < n; ++k) {
        m.template block<2, 2>(2 * k, 2 * k) = blocks[static_cast<std::size_t>(k)];
    }
    return m;
}

template <typename T>
SmallMat<T> aligned_block(const SmallVec<T>& src, const SmallVec<T>& tgt, LayerMethod method) {
    if (method == LayerMethod::closed_form) {
        return kernel::rank_two_align<T>(src, tgt);
    }
    return kernel::align_one<T>(src, tgt, ScaleMode::unit).block;
}

inline LocalLayer to_local_layer(const BlockList<Real>& blocks) {
    LocalLayer layer;
    layer.blocks.reserve(blocks.size());
    for (const auto& b : blocks) {
        layer.blocks.push_back(b.template cast<double>());
    }
    return layer;
}

/// Per-mode source/target subvectors for the alignment condition
/// L * (column 2s of right) = Omega * (row 2m of left). Both-zero modes get
/// identity blocks; mixed zero/nonzero pairs are edge cases.
template <typename T>
struct StepData {
    std::vector<SmallVec<T>> src;
    std::vector<SmallVec<T>> tgt;
    std::vector<bool> active;
};

template <typename T>
StepData<T> q_step_data(const MatX<T>& right, const MatX<T>& left, int src_mode, int tgt_mode,
                        double threshold, const char* what) {
    const int n = static_cast<int>(right.rows() / 2);
    StepData<T> data;
    const T src_floor = T(threshold) * max_abs_x(right);
    const T tgt_floor = T(threshold) * max_abs_x(left);
    for (int k = 0; k < n; ++k) {
        const SmallVec<T> a = col_pair_x(right, 2 * src_mode, k);
        const SmallVec<T> b = omega_times<T>(row_pair_x(left, 2 * tgt_mode, k));
        const bool a_zero = a.norm() <= src_floor;
        const bool b_zero = b.norm() <= tgt_floor;
        if (a_zero != b_zero) {
            std::ostringstream msg;
            msg << what << ": mode " << k
                << " has a vanishing subvector paired with a nonvanishing one";
            const MatX<T>& offender = a_zero ? right : left;
            throw edge_case_error(msg.str(),
                                  genericity_report(offender.template cast<double>(), threshold));
        }
        data.src.push_back(a);
        data.tgt.push_back(b);
        data.active.push_back(!a_zero);
    }
    return data;
}

template <typename T>
BlockList<T> q_step_blocks(const MatX<T>& right, const MatX<T>& left, int src_mode, int tgt_mode,
                           LayerMethod method, const std::optional<int>& exempt, double threshold,
                           const char* what, bool geometric_scale = false) {
    using std::exp;
    using std::log;
    const int n = static_cast<int>(right.rows() / 2);
    const StepData<T> data = q_step_data(right, left, src_mode, tgt_mode, threshold, what);
    T scale(1);
    if (exempt && data.active[static_cast<std::size_t>(*exempt)]) {
        const std::size_t e = static_cast<std::size_t>(*exempt);
        scale = data.src[e].norm() / data.tgt[e].norm();
    } else if (geometric_scale) {
        // Geometric mean of the per-mode norm ratios: centers the blocks'
        // squeezing around zero, which keeps deep recursion levels bounded.
        T log_sum(0);
        int active_count = 0;
        for (int k = 0; k < n; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            if (data.active[ks]) {
                log_sum += log(data.src[ks].norm() / data.tgt[ks].norm());
                ++active_count;
            }
        }
        if (active_count > 0) {
            scale = exp(log_sum / T(active_count));
        }
    }
    BlockList<T> blocks;
    blocks.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        if (!data.active[ks]) {
            blocks.push_back(SmallMat<T>::Identity());
            continue;
        }
        blocks.push_back(aligned_block<T>(data.src[ks], scale * data.tgt[ks], method));
    }
    return blocks;
}

/// Second-recursion layer: the source mode's block is pinned (a pure pi/2
/// phase shift when admissible), every other mode's gamma subvector aligns
/// onto the scaled Omega image of the left matrix's second target row.
template <typename T>
BlockList<T> p_step_blocks(const MatX<T>& right, const MatX<T>& left, int src_mode, int tgt_mode,
                           LayerMethod method, const std::optional<int>& exempt, double threshold,
                           const char* what) {
    const int n = static_cast<int>(right.rows() / 2);
    const T right_floor = T(threshold) * max_abs_x(right);
    const T left_floor = T(threshold) * max_abs_x(left);

    std::vector<SmallVec<T>> gamma(static_cast<std::size_t>(n));
    std::vector<SmallVec<T>> target(static_cast<std::size_t>(n));
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    for (int k = 0; k < n; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        gamma[ks] = col_pair_x(right, 2 * src_mode + 1, k);
        target[ks] = omega_times<T>(row_pair_x(left, 2 * tgt_mode + 1, k));
        if (k == src_mode) {
            continue;
        }
        const bool g_zero = gamma[ks].norm() <= right_floor;
        const bool t_zero = target[ks].norm() <= left_floor;
        if (g_zero != t_zero) {
            std::ostringstream msg;
            msg << what << ": mode " << k
                << " has a vanishing subvector paired with a nonvanishing one";
            const MatX<T>& offender = g_zero ? right : left;
            throw edge_case_error(msg.str(),
                                  genericity_report(offender.template cast<double>(), threshold));
        }
        active[ks] = !g_zero;
    }

    const std::size_t s = static_cast<std::size_t>(src_mode);
    const SmallVec<T> chi_s = col_pair_x(right, 2 * src_mode, src_mode);
    const SmallVec<T> wu_s = omega_times<T>(row_pair_x(left, 2 * tgt_mode, src_mode));
    const SmallVec<T> wv_s = target[s];
    SmallMat<T> pinned;
    pinned << T(0), T(-1), T(1), T(0);  // -omega

    // Coefficients (a, b) with pinned * gamma_s = a*wu_s + b*wv_s. The b
    // coefficient is the common scale of every other mode's target.
    SmallMat<T> basis;
    basis.col(0) = wu_s;
    basis.col(1) = wv_s;
    const T basis_det = basis.determinant();
    const T basis_scale = wu_s.norm() * wv_s.norm();
    using std::abs;
    const T singular_guard = T(64) * std::numeric_limits<T>::epsilon();
    if (abs(basis_det) <= singular_guard * (basis_scale > T(1) ? basis_scale : T(1))) {
        std::ostringstream msg;
        msg << what << ": target rows project degenerately onto mode " << src_mode;
        throw edge_case_error(msg.str(),
                              genericity_report(left.template cast<double>(), threshold));
    }
    SmallMat<T> basis_inv;
    basis_inv << basis(1, 1), -basis(0, 1), -basis(1, 0), basis(0, 0);
    basis_inv /= basis_det;
    const SmallVec<T> coeff = basis_inv * (pinned * gamma[s]);

    T a_coef = coeff(0);
    T b_scale = coeff(1);
    bool use_pinned = true;
    if (exempt && *exempt != src_mode && active[static_cast<std::size_t>(*exempt)]) {
        const std::size_t e = static_cast<std::size_t>(*exempt);
        b_scale = gamma[e].norm() / target[e].norm();
        a_coef = T(0);
        use_pinned = false;
    }

    BlockList<T> blocks;
    blocks.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        if (k == src_mode) {
            if (use_pinned) {
                blocks.push_back(pinned);
            } else {
                const SmallVec<T> chi_target = wu_s / b_scale;
                const SmallVec<T> gamma_target = a_coef * wu_s + b_scale * wv_s;
                blocks.push_back(kernel::align_pair<T>(chi_s, gamma[s], chi_target, gamma_target));
            }
            continue;
        }
        if (!active[ks]) {
            blocks.push_back(SmallMat<T>::Identity());
            continue;
        }
        blocks.push_back(aligned_block<T>(gamma[ks], b_scale * target[ks], method));
    }
    return blocks;
}

/// Worst required-zero entry of `m` relative to its max-norm.
template <typename T>
double zero_violation(const MatX<T>& m, const StructurePattern& pattern) {
    using std::abs;
    T scale = max_abs_x(m);
    if (!(scale > T(0))) {
        scale = T(1);
    }
    T worst(0);
    for (const auto& [r, c] : pattern.zero_positions) {
        const T rel = abs(m(r, c)) / scale;
        if (rel > worst) {
            worst = rel;
        }
    }
    return static_cast<double>(worst);
}

template <typename T>
struct SandwichX {
    MatX<T> net;
    BlockList<T> blocks;
};

template <typename T, typename BlockBuilder>
SandwichX<T> certified_sandwich(const MatX<T>& right, const MatX<T>& left,
                                const StructurePattern& pattern, const BuildOptions& opts,
                                const char* what, BlockBuilder&& build) {
    auto assemble = [&](LayerMethod method) {
        BlockList<T> blocks = build(method);
        MatX<T> net = left * blocks_to_matrix(blocks) * right;
        return SandwichX<T>{std::move(net), std::move(blocks)};
    };
    SandwichX<T> sw = assemble(opts.method);
    if (zero_violation(sw.net, pattern) > opts.zero_tolerance &&
        opts.method == LayerMethod::closed_form && opts.allow_fallback) {
        sw = assemble(LayerMethod::constructive);
    }
    const double violation = zero_violation(sw.net, pattern);
    if (violation > opts.zero_tolerance) {
        std::ostringstream msg;
        msg << what << ": net failed its zero-pattern certification (worst relative entry "
            << violation << ")";
        throw unsatisfiable_alignment_error(msg.str());
    }
    return sw;
}

template <typename T>
SandwichX<T> q_sandwich(const MatX<T>& right, const MatX<T>& left, int src_mode, int tgt_mode,
                        const BuildOptions& opts, const char* what) {
    const int n = static_cast<int>(right.rows() / 2);
    const StructurePattern pattern = StructurePattern::q_transfer_shape(n, src_mode, tgt_mode);
    return certified_sandwich<T>(right, left, pattern, opts, what, [&](LayerMethod method) {
        return q_step_blocks<T>(right, left, src_mode, tgt_mode, method, opts.exempt_mode,
                                opts.generic_threshold, what);
    });
}

template <typename T>
SandwichX<T> p_sandwich(const MatX<T>& right, const MatX<T>& left, int src_mode, int tgt_mode,
                        const StructurePattern& pattern, const BuildOptions& opts,
                        const char* what) {
    return certified_sandwich<T>(right, left, pattern, opts, what, [&](LayerMethod method) {
        return p_step_blocks<T>(right, left, src_mode, tgt_mode, method, opts.exempt_mode,
                                opts.generic_threshold, what);
    });
}

inline void require_generic(const SymplecticMatrix& s, double threshold, const char* what) {
    GenericityReport report = genericity_report(s.mat(), threshold);
    if (!report.is_generic()) {
        std::ostringstream msg;
        msg << what << ": input matrix is not generic";
        throw edge_case_error(msg.str(), std::move(report));
    }
}

inline void require_mode(int mode, int n_modes, const char* what) {
    if (mode < 0 || mode >= n_modes) {
        std::ostringstream msg;
        msg << what << ": mode index " << mode << " out of range for " << n_modes << " modes";
        throw invalid_dimension_error(msg.str());
    }
}

inline void validate_options(const BuildOptions& opts, int n_modes, const char* what) {
    if (opts.exempt_mode) {
        require_mode(*opts.exempt_mode, n_modes, what);
    }
}

inline std::vector<double> budget_from_steps(const std::vector<ProtocolStep>& steps, int n_modes) {
    std::vector<double> budget(static_cast<std::size_t>(n_modes), 0.0);
    for (const auto& step : steps) {
        if (const auto* layer = std::get_if<LocalLayer>(&step)) {
            const std::vector<double> cost = squeezing_cost(*layer);
            for (int k = 0; k < n_modes; ++k) {
                budget[static_cast<std::size_t>(k)] = std::max(
                    budget[static_cast<std::size_t>(k)], cost[static_cast<std::size_t>(k)]);
            }
        }
    }
    return budget;
}

inline ProtocolSequence finish_sequence(std::vector<ProtocolStep> steps, Mat net,
                                        StructurePattern pattern, const BuildOptions& opts,
                                        const char* what) {
    const PatternCheck certification =
        check_pattern(net, pattern, opts.zero_tolerance, !opts.exempt_mode.has_value());
    if (!certification.passed) {
        std::ostringstream msg;
        msg << what << ": net failed its pattern certification";
        throw unsatisfiable_alignment_error(msg.str());
    }
    const int n = static_cast<int>(net.rows() / 2);
    // A double-stored symplectic matrix of max-norm k cannot beat a residual
    // of order eps*k^2; widen the gate accordingly for large nets.
    const double scale = max_abs(net);
    const double gate = std::max(opts.sym_tolerance, 1e-14 * scale * scale);
    SymplecticMatrix certified = SymplecticMatrix::certify(std::move(net), gate);
    ProtocolSequence seq{std::move(steps),
                         std::move(certified),
                         0,
                         {},
                         std::move(pattern),
                         certification};
    seq.coupler_count = count_coupler_uses(seq.steps);
    seq.squeezing_budget = budget_from_steps(seq.steps, n);
    return seq;
}

/// Four-copy chain kept in working precision, for reuse by the swap
/// composition.
struct ChainX {
    MatX<Real> net;
    std::vector<ProtocolStep> steps;
};

inline ChainX decouple_chain(const MatX<Real>& sx, int mode, const BuildOptions& opts,
                             StructurePattern* pattern_out = nullptr) {
    const int n = static_cast<int>(sx.rows() / 2);
    SandwichX<Real> q = q_sandwich<Real>(sx, sx, mode, mode, opts, "decouple_mode(q)");
    StructurePattern pattern = StructurePattern::decoupled(n, mode);
    SandwichX<Real> p =
        p_sandwich<Real>(q.net, q.net, mode, mode, pattern, opts, "decouple_mode(p)");
    const LocalLayer lq = to_local_layer(q.blocks);
    const LocalLayer lp = to_local_layer(p.blocks);
    if (pattern_out != nullptr) {
        *pattern_out = std::move(pattern);
    }
    return {std::move(p.net),
            {CouplerUse{}, lq, CouplerUse{}, lp, CouplerUse{}, lq, CouplerUse{}}};
}

inline ChainX transducer_chain(const MatX<Real>& sx, int src_mode, int tgt_mode,
                               const BuildOptions& opts, StructurePattern* pattern_out = nullptr) {
    const int n = static_cast<int>(sx.rows() / 2);
    SandwichX<Real> q = q_sandwich<Real>(sx, sx, src_mode, src_mode, opts, "transducer(q)");
    SandwichX<Real> star = q_sandwich<Real>(sx, sx, src_mode, tgt_mode, opts, "transducer(route)");
    StructurePattern pattern = StructurePattern::transducer(n, src_mode, tgt_mode);
    SandwichX<Real> p =
        p_sandwich<Real>(q.net, star.net, src_mode, tgt_mode, pattern, opts, "transducer(p)");
    if (pattern_out != nullptr) {
        *pattern_out = std::move(pattern);
    }
    return {std::move(p.net),
            {CouplerUse{}, to_local_layer(q.blocks), CouplerUse{}, to_local_layer(p.blocks),
             CouplerUse{}, to_local_layer(star.blocks), CouplerUse{}}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

struct QStepResult {
    SymplecticMatrix net;  // one sandwich: coupler, layer, coupler
    LocalLayer layer;
};

/// Single sandwich decoupling the q quadrature of `mode`: the layer aligns
/// each mode's projection of the coupler's first target column onto the Omega
/// image of the matching row, which seals row 2m and column 2m of the net up
/// to the pinned +-1 entries.
inline QStepResult decouple_q_step(const SymplecticMatrix& s, int mode = 0,
                                   const BuildOptions& opts = {}) {
    using detail::Real;
    detail::require_mode(mode, s.n_modes(), "decouple_q_step");
    detail::validate_options(opts, s.n_modes(), "decouple_q_step");
    detail::require_generic(s, opts.generic_threshold, "decouple_q_step");
    const detail::MatX<Real> sx = s.mat().cast<Real>();
    detail::SandwichX<Real> sw = detail::q_sandwich<Real>(sx, sx, mode, mode, opts,
                                                          "decouple_q_step");
    return {SymplecticMatrix::certify(sw.net.cast<double>(), opts.sym_tolerance),
            detail::to_local_layer(sw.blocks)};
}

/// Decouple one mode from all the others with four coupler uses: a q-step
/// sandwich followed by a p-step sandwich on the intermediate.
inline ProtocolSequence decouple_mode(const SymplecticMatrix& s, int mode,
                                      const BuildOptions& opts = {}) {
    using detail::Real;
    const int n = s.n_modes();
    if (n < 2) {
        throw invalid_dimension_error("decouple_mode: need at least two modes");
    }
    detail::require_mode(mode, n, "decouple_mode");
    detail::validate_options(opts, n, "decouple_mode");
    detail::require_generic(s, opts.generic_threshold, "decouple_mode");

    StructurePattern pattern;
    detail::ChainX chain = detail::decouple_chain(s.mat().cast<Real>(), mode, opts, &pattern);
    return detail::finish_sequence(std::move(chain.steps), chain.net.cast<double>(),
                                   std::move(pattern), opts, "decouple_mode");
}

/// Two-mode specialization: block-diagonalizes a generic 4x4 coupler.
inline ProtocolSequence decouple_two_mode(const SymplecticMatrix& s, const BuildOptions& opts = {}) {
    if (s.n_modes() != 2) {
        throw invalid_dimension_error("decouple_two_mode: expected a two-mode matrix");
    }
    return decouple_mode(s, 0, opts);
}

namespace detail {

inline ProtocolSequence transducer_between(const SymplecticMatrix& s, int src_mode, int tgt_mode,
                                           const BuildOptions& opts) {
    const int n = s.n_modes();
    require_mode(src_mode, n, "transducer");
    require_mode(tgt_mode, n, "transducer");
    if (src_mode == tgt_mode) {
        throw invalid_parameter_error("transducer: source and target modes must differ");
    }
    validate_options(opts, n, "transducer");
    require_generic(s, opts.generic_threshold, "transducer");

    StructurePattern pattern;
    ChainX chain = transducer_chain(s.mat().cast<Real>(), src_mode, tgt_mode, opts, &pattern);
    return finish_sequence(std::move(chain.steps), chain.net.cast<double>(), std::move(pattern),
                           opts, "transducer");
}

}  // namespace detail

/// One-way transducer with four coupler uses: the first mode's input lands on
/// the last mode's output while the last mode's quadratures stop feeding back.
inline ProtocolSequence build_asymmetric_transducer(const SymplecticMatrix& s,
                                                    const BuildOptions& opts = {}) {
    if (s.n_modes() < 2) {
        throw invalid_dimension_error("build_asymmetric_transducer: need at least two modes");
    }
    return detail::transducer_between(s, 0, s.n_modes() - 1, opts);
}

/// Two-mode perfect transduction (equivalent to a swap up to local
/// operations) with four coupler uses.
inline ProtocolSequence transduce_two_mode(const SymplecticMatrix& s, const BuildOptions& opts = {}) {
    if (s.n_modes() != 2) {
        throw invalid_dimension_error("transduce_two_mode: expected a two-mode matrix");
    }
    return detail::transducer_between(s, 0, 1, opts);
}

/// Exchange two chosen modes of the multimode coupler with a fixed overhead
/// of sixteen coupler uses: one transducer chain and three decoupling chains,
/// glued by three extra local layers.
inline ProtocolSequence build_swap(const SymplecticMatrix& s, int mode_i, int mode_j,
                                   const BuildOptions& opts = {}) {
    using detail::Real;
    const int n = s.n_modes();
    if (n < 2) {
        throw invalid_dimension_error("build_swap: need at least two modes");
    }
    detail::require_mode(mode_i, n, "build_swap");
    detail::require_mode(mode_j, n, "build_swap");
    if (mode_i == mode_j) {
        throw invalid_parameter_error("build_swap: modes must differ");
    }
    detail::validate_options(opts, n, "build_swap");
    detail::require_generic(s, opts.generic_threshold, "build_swap");

    const detail::MatX<Real> sx = s.mat().cast<Real>();
    const detail::ChainX dec = detail::decouple_chain(sx, mode_i, opts);
    const detail::ChainX trans = detail::transducer_chain(sx, mode_i, mode_j, opts);

    // Inner sandwich: q-step at mode j with the decoupled net as coupler.
    detail::SandwichX<Real> inner =
        detail::q_sandwich<Real>(dec.net, dec.net, mode_j, mode_j, opts, "build_swap(inner)");
    // Mixed sandwich: route mode j of the decoupled net onto mode i of the
    // transducer.
    detail::SandwichX<Real> mixed =
        detail::q_sandwich<Real>(dec.net, trans.net, mode_j, mode_i, opts, "build_swap(route)");

    StructurePattern pattern = StructurePattern::swap_shape(n, mode_i, mode_j);
    detail::SandwichX<Real> closing = detail::p_sandwich<Real>(inner.net, mixed.net, mode_j,
                                                               mode_i, pattern, opts,
                                                               "build_swap(close)");

    std::vector<ProtocolStep> steps;
    steps.reserve(31);
    auto append = [&steps](const std::vector<ProtocolStep>& block) {
        steps.insert(steps.end(), block.begin(), block.end());
    };
    append(dec.steps);
    steps.emplace_back(detail::to_local_layer(inner.blocks));
    append(dec.steps);
    steps.emplace_back(detail::to_local_layer(closing.blocks));
    append(dec.steps);
    steps.emplace_back(detail::to_local_layer(mixed.blocks));
    append(trans.steps);

    return detail::finish_sequence(std::move(steps), closing.net.cast<double>(),
                                   std::move(pattern), opts, "build_swap");
}

// ---------------------------------------------------------------------------
// Edge cases
// ---------------------------------------------------------------------------

struct GenericizeResult {
    SymplecticMatrix net;   // (post * S * pre)^K, certified generic
    int repetitions = 0;    // K
    LocalLayer pre_layer;   // applied before each coupler use
    LocalLayer post_layer;  // applied after each coupler use
};

inline LocalLayer random_local_layer(int n_modes, std::mt19937_64& rng) {
    LocalLayer layer;
    layer.blocks.reserve(static_cast<std::size_t>(n_modes));
    for (int k = 0; k < n_modes; ++k) {
        const double t1 = 3.14159265358979323846 * detail::uniform_pm1(rng);
        const double r = 0.5 * detail::uniform_pm1(rng);
        const double t2 = 3.14159265358979323846 * detail::uniform_pm1(rng);
        layer.blocks.push_back(rotation(t1) * squeeze(r) * rotation(t2));
    }
    return layer;
}

/// Convert a non-generic coupler into a generic one by dressing each use with
/// random full-rank local layers and repeating, S_new = (post * S * pre)^K.
/// The vanishing-block count never grows along the way unless the input is a
/// mode permutation composed with local operations, in which case no K works
/// and the bound K <= N(N-1) trips.
inline GenericizeResult genericize(const SymplecticMatrix& s, std::uint64_t seed,
                                   double threshold = tol::genericity) {
    const int n = s.n_modes();
    std::mt19937_64 rng(seed);
    const LocalLayer pre = random_local_layer(n, rng);
    const LocalLayer post = random_local_layer(n, rng);
    const Mat dressed = layer_to_matrix(post) * s.mat() * layer_to_matrix(pre);
    const int budget = std::max(1, n * (n - 1));
    Mat acc = dressed;
    for (int k = 1; k <= budget; ++k) {
        if (genericity_report(acc, threshold).is_generic()) {
            return {SymplecticMatrix::certify(std::move(acc), 1e-9), k, pre, post};
        }
        acc = acc * dressed;
    }
    throw permutation_like_error(
        "genericize: no repetition count within N(N-1) yields a generic matrix; the input acts "
        "as a mode permutation up to local operations");
}

// ---------------------------------------------------------------------------
// Recursive full decoupling
// ---------------------------------------------------------------------------

namespace detail {

/// Drive a near-symplectic matrix back onto the group. The defect
/// D = m Omega m^T - Omega cancels to first order under
/// m <- (I + a D Omega / 2) m; damped steps (a ~ 1/|D|) walk large defects
/// down linearly, then full steps contract quadratically. Entries move by
/// no more than the defect itself.
template <typename T>
void resymplectify(MatX<T>& m, int max_steps = 512) {
    using std::abs;
    const int n = static_cast<int>(m.rows() / 2);
    const MatX<T> w = omega_form(n).template cast<T>();
    const MatX<T> eye = MatX<T>::Identity(2 * n, 2 * n);
    for (int step = 0; step < max_steps; ++step) {
        const MatX<T> defect = m * w * m.transpose() - w;
        const T d = max_abs_x(defect);
        const T scale = max_abs_x(m);
        // Stop at the representable floor for this magnitude.
        if (d <= T(64) * std::numeric_limits<T>::epsilon() * scale * scale) {
            break;
        }
        T alpha(1);
        if (d > T(0.5)) {
            alpha = T(0.5) / d;
        }
        m = (eye + (alpha / T(2)) * defect * w) * m;
    }
}

/// Free local squeezers evening out each mode's q/p row and column norms.
/// Keeps deep recursion levels inside the representable dynamic range.
template <typename T>
void balance_quadratures(MatX<T>& m, int passes = 6) {
    using std::sqrt;
    const int n = static_cast<int>(m.rows() / 2);
    for (int pass = 0; pass < passes; ++pass) {
        for (int k = 0; k < n; ++k) {
            const T rq = m.row(2 * k).norm();
            const T rp = m.row(2 * k + 1).norm();
            if (rq > T(0) && rp > T(0)) {
                const T f = sqrt(rq / rp);
                m.row(2 * k) /= f;
                m.row(2 * k + 1) *= f;
            }
            const T cq = m.col(2 * k).norm();
            const T cp = m.col(2 * k + 1).norm();
            if (cq > T(0) && cp > T(0)) {
                const T f = sqrt(cq / cp);
                m.col(2 * k) /= f;
                m.col(2 * k + 1) *= f;
            }
        }
    }
}

/// Swap the quadrature rows/cols of two modes in place.
template <typename T>
void swap_modes(MatX<T>& m, int a, int b) {
    if (a == b) {
        return;
    }
    m.row(2 * a).swap(m.row(2 * b));
    m.row(2 * a + 1).swap(m.row(2 * b + 1));
    m.col(2 * a).swap(m.col(2 * b));
    m.col(2 * a + 1).swap(m.col(2 * b + 1));
}

}  // namespace detail

struct FullDecoupling {
    Mat net;  // block-diagonal: one 2x2 symplectic block per original mode
    int builder_invocations = 0;
    double max_zero_violation = 0.0;  // worst per-stage relative off-block entry
};

namespace detail {

template <typename Real>
FullDecoupling decouple_all_impl(const SymplecticMatrix& s, const BuildOptions& opts) {
    const int n = s.n_modes();
    BuildOptions stage_opts = opts;
    // Deep residuals span many decades; at the working precisions used here
    // the noise floor sits far below any live subvector, so the zero
    // classifier can be near-absolute.
    stage_opts.generic_threshold = 1e-22;

    Mat full = Mat::Zero(2 * n, 2 * n);
    MatX<Real> active = s.mat().template cast<Real>();
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        labels[static_cast<std::size_t>(k)] = k;
    }

    FullDecoupling out;
    for (int stage = 0; stage + 1 < n; ++stage) {
        resymplectify(active);
        balance_quadratures(active);
        resymplectify(active);

        const int remaining = static_cast<int>(active.rows() / 2);
        struct Candidate {
            MatX<Real> net;
            double violation = 0.0;
            Real residual_norm = Real(0);
            int mode = -1;
        };
        std::optional<Candidate> best;
        for (int cand = 0; cand < remaining; ++cand) {
            try {
                BlockList<Real> q_blocks =
                    q_step_blocks<Real>(active, active, cand, cand, stage_opts.method,
                                        std::nullopt, stage_opts.generic_threshold,
                                        "decouple_all(q)", true);
                MatX<Real> q_net = active * blocks_to_matrix(q_blocks) * active;
                resymplectify(q_net);
                const StructurePattern pattern = StructurePattern::decoupled(remaining, cand);
                BlockList<Real> p_blocks =
                    p_step_blocks<Real>(q_net, q_net, cand, cand, stage_opts.method,
                                        std::nullopt, stage_opts.generic_threshold,
                                        "decouple_all(p)");
                MatX<Real> net = q_net * blocks_to_matrix(p_blocks) * q_net;
                Candidate c;
                c.violation = zero_violation(net, pattern);
                c.net = std::move(net);
                c.mode = cand;
                swap_modes(c.net, 0, cand);
                c.residual_norm = max_abs_x(
                    MatX<Real>(c.net.bottomRightCorner(2 * remaining - 2, 2 * remaining - 2)));
                // A clean pattern beats a small residual; among clean
                // candidates the smallest residual keeps later stages sane.
                auto better = [&](const Candidate& lhs, const Candidate& rhs) {
                    const bool lhs_clean = lhs.violation <= opts.zero_tolerance;
                    const bool rhs_clean = rhs.violation <= opts.zero_tolerance;
                    if (lhs_clean != rhs_clean) {
                        return lhs_clean;
                    }
                    if (lhs_clean) {
                        return lhs.residual_norm < rhs.residual_norm;
                    }
                    return lhs.violation < rhs.violation;
                };
                if (!best || better(c, *best)) {
                    best = std::move(c);
                }
            } catch (const error&) {
                // candidate mode not buildable at this stage; try the others
            }
        }
        if (!best) {
            throw unsatisfiable_alignment_error(
                "decouple_all: no remaining mode admits a decoupling step at this depth");
        }
        ++out.builder_invocations;
        out.max_zero_violation = std::max(out.max_zero_violation, best->violation);
        const int original = labels[static_cast<std::size_t>(best->mode)];
        full.block(2 * original, 2 * original, 2, 2) =
            best->net.topLeftCorner(2, 2).template cast<double>();
        labels.erase(labels.begin() + best->mode);
        active = best->net.bottomRightCorner(2 * remaining - 2, 2 * remaining - 2).eval();
    }
    const int last = labels.front();
    full.block(2 * last, 2 * last, 2, 2) = active.template cast<double>();
    out.net = std::move(full);
    return out;
}

}  // namespace detail

/// Decouple every mode by recursing on the residual block: N-1 invocations of
/// the two-sandwich decoupling step, each treating the previous residual as
/// the new coupler.
///
/// The residual interaction's squeezing content roughly doubles (in decibels)
/// per level, so the recursion is numerically aggressive: stages run in
/// quadruple precision, each stage decouples whichever remaining mode leaves
/// the smallest residual with a per-step geometric scale choice, and between
/// stages the state is rebalanced with free local squeezers and projected
/// back onto the symplectic group. Chains whose residuals outrun quadruple
/// precision are retried in 60-digit software arithmetic. The returned net
/// is block-diagonal in the original mode labels with determinant-one
/// blocks; its per-mode content is defined up to those free local dressings.
inline FullDecoupling decouple_all(const SymplecticMatrix& s, const BuildOptions& opts = {}) {
    const int n = s.n_modes();
    if (n < 2) {
        throw invalid_dimension_error("decouple_all: need at least two modes");
    }
    detail::validate_options(opts, n, "decouple_all");
    if (opts.exempt_mode) {
        throw invalid_parameter_error(
            "decouple_all: squeezing relaxation is per-stage; apply it through decouple_mode");
    }
    detail::require_generic(s, opts.generic_threshold, "decouple_all");

    using Quad = boost::multiprecision::float128;
    using Wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<60>>;
    try {
        FullDecoupling out = detail::decouple_all_impl<Quad>(s, opts);
        if (out.max_zero_violation <= opts.zero_tolerance) {
            return out;
        }
    } catch (const error&) {
        // fall through to the wide-precision retry
    }
    return detail::decouple_all_impl<Wide>(s, opts);
}

}  // namespace modeweave
