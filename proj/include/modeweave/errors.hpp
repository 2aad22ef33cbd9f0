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

#include <stdexcept>
#include <string>

namespace modeweave {

/// Base class of every exception thrown by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Matrix dimension is not 2N x 2N, or a mode count is invalid.
struct invalid_dimension_error : error {
    using error::error;
};

/// A scalar parameter is out of its admissible range (NaN, infinite, ...).
struct invalid_parameter_error : error {
    using error::error;
};

/// A matrix or 2x2 block failed its symplecticity check.
struct non_symplectic_error : error {
    using error::error;
};

/// A 2D alignment source or target vector is (numerically) zero.
struct degenerate_vector_error : error {
    using error::error;
};

/// The source pair of a two-vector alignment is (numerically) singular.
struct degenerate_pair_error : error {
    using error::error;
};

/// A requested alignment has no determinant-one solution, or the solve is
/// too ill-conditioned to trust.
struct unsatisfiable_alignment_error : error {
    using error::error;
};

/// Repeated coupler dressing never produced a generic matrix; the input
/// behaves like a mode permutation composed with local operations.
struct permutation_like_error : error {
    using error::error;
};

/// Random generation exhausted its retry budget.
struct generation_failure_error : error {
    using error::error;
};

}  // namespace modeweave
