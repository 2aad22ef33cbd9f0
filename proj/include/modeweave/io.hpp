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

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "modeweave/errors.hpp"
#include "modeweave/local_ops.hpp"
#include "modeweave/protocols.hpp"
#include "modeweave/symplectic.hpp"

namespace modeweave {

/// Input document is malformed (bad JSON, wrong ordering tag, dimension
/// mismatch).
struct file_format_error : error {
    using error::error;
};

/// The file itself could not be read or written.
struct io_error : error {
    using error::error;
};

using json = nlohmann::json;

/// Matrix document: {"n_modes": N, "ordering": "qpqp", "rows": [[...], ...]}
/// with 2N rows of 2N numbers each. The ordering tag is mandatory and must
/// spell out the interleaved quadrature convention.
inline json matrix_to_json(const Mat& m) {
    const int n = static_cast<int>(m.rows() / 2);
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return json{{"n_modes", n}, {"ordering", "qpqp"}, {"rows", std::move(rows)}};
}

inline Mat matrix_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("n_modes") || !doc.contains("ordering") ||
        !doc.contains("rows")) {
        throw file_format_error(
            "matrix document must carry 'n_modes', 'ordering' and 'rows' fields");
    }
    if (!doc["ordering"].is_string() || doc["ordering"].get<std::string>() != "qpqp") {
        throw file_format_error("matrix document has unknown quadrature ordering (expected qpqp)");
    }
    if (!doc["n_modes"].is_number_integer() || doc["n_modes"].get<int>() < 1) {
        throw file_format_error("matrix document needs a positive integer n_modes");
    }
    const int n = doc["n_modes"].get<int>();
    const auto& rows = doc["rows"];
    if (!rows.is_array() || static_cast<int>(rows.size()) != 2 * n) {
        std::ostringstream msg;
        msg << "matrix document must carry exactly " << 2 * n << " rows";
        throw file_format_error(msg.str());
    }
    Mat m(2 * n, 2 * n);
    for (int i = 0; i < 2 * n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != 2 * n) {
            std::ostringstream msg;
            msg << "row " << i << " must carry exactly " << 2 * n << " numbers";
            throw file_format_error(msg.str());
        }
        for (int j = 0; j < 2 * n; ++j) {
            const auto& cell = row[static_cast<std::size_t>(j)];
            if (!cell.is_number()) {
                throw file_format_error("matrix entries must be numbers");
            }
            m(i, j) = cell.get<double>();
        }
    }
    return m;
}

inline Mat read_matrix(std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw file_format_error(std::string("matrix document is not valid JSON: ") + e.what());
    }
    return matrix_from_json(doc);
}

inline Mat read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open '" + path + "' for reading");
    }
    return read_matrix(in);
}

inline void write_matrix_file(const std::string& path, const Mat& m) {
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot open '" + path + "' for writing");
    }
    out << matrix_to_json(m).dump(2) << "\n";
    if (!out) {
        throw io_error("failed while writing '" + path + "'");
    }
}

/// FNV-1a digest of a byte string, reported as a hex tag.
inline std::string fnv1a_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[2 + 16 + 1];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a:") + buf;
}

// ---------------------------------------------------------------------------
// Sequence serialization
// ---------------------------------------------------------------------------

inline json layer_to_json(const LocalLayer& layer) {
    json blocks = json::array();
    for (const auto& b : layer.blocks) {
        const LocalOpDecomposition d = euler_decompose(b);
        blocks.push_back(json{{"theta", d.theta},
                              {"r", d.r},
                              {"phi", d.phi},
                              {"entries", {{b(0, 0), b(0, 1)}, {b(1, 0), b(1, 1)}}}});
    }
    return blocks;
}

inline LocalLayer layer_from_json(const json& doc) {
    if (!doc.is_array() || doc.empty()) {
        throw file_format_error("layer must be a non-empty array of blocks");
    }
    LocalLayer layer;
    for (const auto& blk : doc) {
        if (!blk.contains("entries")) {
            throw file_format_error("layer block is missing its entries");
        }
        const auto& e = blk["entries"];
        Mat2 b;
        b << e[0][0].get<double>(), e[0][1].get<double>(), e[1][0].get<double>(),
            e[1][1].get<double>();
        layer.blocks.push_back(b);
    }
    return layer;
}

inline json sequence_to_json(const ProtocolSequence& seq) {
    json steps = json::array();
    for (const auto& step : seq.steps) {
        if (const auto* coupler = std::get_if<CouplerUse>(&step)) {
            steps.push_back(json{{"coupler", coupler->tag}});
        } else {
            steps.push_back(json{{"layer", layer_to_json(std::get<LocalLayer>(step))}});
        }
    }
    return json{{"steps", std::move(steps)},
                {"net", matrix_to_json(seq.net.mat())},
                {"coupler_count", seq.coupler_count},
                {"squeezing_budget", seq.squeezing_budget},
                {"pattern", pattern_kind_name(seq.pattern.kind)},
                {"target_modes", seq.pattern.target_modes}};
}

inline std::vector<ProtocolStep> steps_from_json(const json& doc) {
    if (!doc.is_array()) {
        throw file_format_error("sequence steps must be an array");
    }
    std::vector<ProtocolStep> steps;
    for (const auto& step : doc) {
        if (step.contains("coupler")) {
            steps.emplace_back(CouplerUse{step["coupler"].get<std::string>()});
        } else if (step.contains("layer")) {
            steps.emplace_back(layer_from_json(step["layer"]));
        } else {
            throw file_format_error("sequence step must be a coupler use or a layer");
        }
    }
    return steps;
}

}  // namespace modeweave
