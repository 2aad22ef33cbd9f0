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

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "modeweave/errors.hpp"

namespace modeweave {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

/// Default numerical tolerances. All are overridable per call.
namespace tol {
/// Max-norm residual allowed on the symplectic condition S*Omega*S^T = Omega.
inline constexpr double symplectic = 1e-10;
/// Relative threshold for required-zero entries of a synthesized net.
inline constexpr double zero_pattern = 1e-8;
/// Relative threshold below which a 2D subvector or 2x2 block counts as zero.
inline constexpr double genericity = 1e-8;
}  // namespace tol

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

/// Quadrature ordering is interleaved (q1, p1, ..., qN, pN); mode indices are
/// zero-based throughout. Mode k owns rows/columns 2k and 2k+1.

/// Single-mode symplectic form, [[0, 1], [-1, 0]].
inline Mat2 omega2() {
    Mat2 w;
    w << 0.0, 1.0, -1.0, 0.0;
    return w;
}

/// Block-diagonal symplectic form diag(omega, ..., omega) on n_modes modes.
inline Mat omega_form(int n_modes) {
    if (n_modes < 1) {
        throw invalid_dimension_error("omega_form: n_modes must be >= 1");
    }
    Mat w = Mat::Zero(2 * n_modes, 2 * n_modes);
    for (int k = 0; k < n_modes; ++k) {
        w(2 * k, 2 * k + 1) = 1.0;
        w(2 * k + 1, 2 * k) = -1.0;
    }
    return w;
}

/// Max-norm of M*Omega*M^T - Omega. Throws on odd dimension.
inline double symplecticity_residual(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() % 2 != 0 || m.rows() == 0) {
        throw invalid_dimension_error("symplecticity_residual: matrix must be 2N x 2N");
    }
    const Mat w = omega_form(static_cast<int>(m.rows() / 2));
    return max_abs(m * w * m.transpose() - w);
}

inline bool is_symplectic(const Mat& m, double tolerance = tol::symplectic) {
    return symplecticity_residual(m) <= tolerance;
}

/// Phase-space rotation (phase shift): [[cos t, sin t], [-sin t, cos t]].
inline Mat2 rotation(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat2 r;
    r << c, s, -s, c;
    return r;
}

/// Single-mode squeezer diag(e^-r, e^r).
inline Mat2 squeeze(double r) {
    if (!std::isfinite(r)) {
        throw invalid_parameter_error("squeeze: parameter must be finite");
    }
    Mat2 z;
    z << std::exp(-r), 0.0, 0.0, std::exp(r);
    return z;
}

/// A certified real symplectic matrix on n_modes modes.
///
/// Construction goes through certify(), which measures the residual of the
/// defining condition S*Omega*S^T = Omega and rejects anything beyond the
/// given tolerance. Values are immutable afterwards.
class SymplecticMatrix {
  public:
    static SymplecticMatrix certify(Mat m, double tolerance = tol::symplectic) {
        const double res = symplecticity_residual(m);
        if (res > tolerance) {
            std::ostringstream msg;
            msg << "matrix is not symplectic: residual " << res << " exceeds " << tolerance;
            throw non_symplectic_error(msg.str());
        }
        return SymplecticMatrix(std::move(m), res);
    }

    int n_modes() const { return static_cast<int>(m_.rows() / 2); }
    const Mat& mat() const { return m_; }
    double residual() const { return residual_; }

  private:
    SymplecticMatrix(Mat m, double res) : m_(std::move(m)), residual_(res) {}
    Mat m_;
    double residual_;
};

/// Direct sum of per-mode 2x2 symplectic blocks; the only control resource
/// the protocols use besides the fixed coupler.
struct LocalLayer {
    std::vector<Mat2> blocks;

    int n_modes() const { return static_cast<int>(blocks.size()); }

    static LocalLayer identity(int n_modes) {
        LocalLayer l;
        l.blocks.assign(static_cast<std::size_t>(n_modes), Mat2::Identity());
        return l;
    }
};

/// Embed a layer as a block-diagonal 2N x 2N matrix. Every block must have
/// determinant one (the 2x2 symplectic condition).
inline Mat layer_to_matrix(const LocalLayer& layer, double det_tolerance = 1e-8) {
    const int n = layer.n_modes();
    if (n < 1) {
        throw invalid_dimension_error("layer_to_matrix: layer has no blocks");
    }
    Mat m = Mat::Zero(2 * n, 2 * n);
    for (int k = 0; k < n; ++k) {
        const double det = layer.blocks[static_cast<std::size_t>(k)].determinant();
        if (std::abs(det - 1.0) > det_tolerance) {
            std::ostringstream msg;
            msg << "layer_to_matrix: block " << k << " has determinant " << det;
            throw non_symplectic_error(msg.str());
        }
        m.block<2, 2>(2 * k, 2 * k) = layer.blocks[static_cast<std::size_t>(k)];
    }
    return m;
}

/// 2D projection of row `row` onto mode `mode`'s (q, p) columns.
inline Vec2 row_pair(const Mat& m, int row, int mode) {
    return Vec2(m(row, 2 * mode), m(row, 2 * mode + 1));
}

/// 2D projection of column `col` onto mode `mode`'s (q, p) rows.
inline Vec2 col_pair(const Mat& m, int col, int mode) {
    return Vec2(m(2 * mode, col), m(2 * mode + 1, col));
}

/// Where a matrix fails to be generic: 2D row/column projections that vanish,
/// and whole 2x2 mode-pair blocks that vanish. Generic matrices (both lists
/// empty) are exactly those for which the alignment-based local operations
/// can always be constructed.
struct GenericityReport {
    enum class Axis { row, column };

    struct ZeroSubvector {
        Axis axis;
        int index;  // row or column index in [0, 2N)
        int mode;   // mode whose 2D projection vanishes
        double norm;
    };

    struct VanishingBlock {
        int row_mode;
        int col_mode;
        double max_entry;
    };

    std::vector<ZeroSubvector> zero_subvectors;
    std::vector<VanishingBlock> vanishing_blocks;
    double threshold = 0.0;  // absolute threshold used for the scan

    bool is_generic() const { return zero_subvectors.empty() && vanishing_blocks.empty(); }

    std::string summary() const {
        std::ostringstream out;
        if (is_generic()) {
            out << "generic (no vanishing subvectors or blocks)";
            return out.str();
        }
        out << zero_subvectors.size() << " vanishing subvector(s), " << vanishing_blocks.size()
            << " vanishing block(s);";
        for (const auto& s : zero_subvectors) {
            out << " [" << (s.axis == Axis::row ? "row " : "col ") << s.index << " @ mode "
                << s.mode << "]";
        }
        for (const auto& b : vanishing_blocks) {
            out << " [block " << b.row_mode << "," << b.col_mode << "]";
        }
        return out.str();
    }
};

/// Scan every mode-projected row/column subvector and every 2x2 mode-pair
/// block against `threshold` relative to the matrix max-norm.
inline GenericityReport genericity_report(const Mat& m, double threshold = tol::genericity) {
    if (m.rows() != m.cols() || m.rows() % 2 != 0 || m.rows() == 0) {
        throw invalid_dimension_error("genericity_report: matrix must be 2N x 2N");
    }
    const int n = static_cast<int>(m.rows() / 2);
    GenericityReport report;
    report.threshold = threshold * max_abs(m);
    for (int i = 0; i < 2 * n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double rn = row_pair(m, i, k).norm();
            if (rn <= report.threshold) {
                report.zero_subvectors.push_back({GenericityReport::Axis::row, i, k, rn});
            }
            const double cn = col_pair(m, i, k).norm();
            if (cn <= report.threshold) {
                report.zero_subvectors.push_back({GenericityReport::Axis::column, i, k, cn});
            }
        }
    }
    for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
            const double entry = m.block<2, 2>(2 * k, 2 * l).cwiseAbs().maxCoeff();
            if (entry <= report.threshold) {
                report.vanishing_blocks.push_back({k, l, entry});
            }
        }
    }
    return report;
}

/// Non-generic input rejected by a protocol builder. Carries the scan that
/// triggered the rejection so callers can decide whether to genericize.
struct edge_case_error : error {
    edge_case_error(const std::string& what, GenericityReport rep)
        : error(what + ": " + rep.summary()), report(std::move(rep)) {}
    GenericityReport report;
};

namespace detail {

/// Uniform double in [-1, 1), identical on every platform for a given seed.
inline double uniform_pm1(std::mt19937_64& rng) {
    const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u01 - 1.0;
}

}  // namespace detail

/// Seeded random generic symplectic matrix: S = exp(Omega * H) with H a
/// random symmetric matrix (entries uniform in [-1, 1]). The exponential of a
/// Hamiltonian matrix is symplectic up to truncation error; the result is
/// re-certified numerically and re-drawn until generic.
inline SymplecticMatrix random_generic_symplectic(int n_modes, std::uint64_t seed,
                                                  double generic_threshold = tol::genericity,
                                                  double sym_tolerance = tol::symplectic) {
    if (n_modes < 1) {
        throw invalid_dimension_error("random_generic_symplectic: n_modes must be >= 1");
    }
    const int d = 2 * n_modes;
    std::mt19937_64 rng(seed);
    const Mat w = omega_form(n_modes);
    constexpr int max_attempts = 64;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Mat h(d, d);
        for (int i = 0; i < d; ++i) {
            h(i, i) = detail::uniform_pm1(rng);
            for (int j = i + 1; j < d; ++j) {
                const double v = detail::uniform_pm1(rng);
                h(i, j) = v;
                h(j, i) = v;
            }
        }
        const Mat s = (w * h).exp();
        if (symplecticity_residual(s) > sym_tolerance) {
            continue;
        }
        if (!genericity_report(s, generic_threshold).is_generic()) {
            continue;
        }
        return SymplecticMatrix::certify(s, sym_tolerance);
    }
    throw generation_failure_error("random_generic_symplectic: retry budget exhausted");
}

}  // namespace modeweave
