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

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "modeweave/modeweave.hpp"

namespace {

using namespace modeweave;

// Exit codes: 0 success, 1 non-symplectic, 2 usage or parse error, 3 I/O,
// 4 non-generic input, 5 unsatisfiable construction.
constexpr int kOk = 0;
constexpr int kNonSymplectic = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kNonGeneric = 4;
constexpr int kUnsatisfiable = 5;

struct CommonFlags {
    double tolerance = tol::zero_pattern;
    std::uint64_t seed = 0;
    bool genericize = false;
    int relax_mode = -1;
    std::string out;
    std::string format = "summary";
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool builder) {
    cmd->add_option("--tolerance", flags.tolerance, "Tolerance for the command's main check");
    cmd->add_option("--seed", flags.seed, "Seed for randomized verification and dressing");
    cmd->add_option("--out", flags.out, "Write the machine-readable report to this path");
    cmd->add_option("--format", flags.format, "Console output: summary or machine")
        ->check(CLI::IsMember({"summary", "machine"}));
    if (builder) {
        cmd->add_flag("--genericize", flags.genericize,
                      "Dress non-generic inputs with random local layers first");
        cmd->add_option("--relax-mode", flags.relax_mode,
                        "Exempt this mode from squeezing (relaxed construction)");
    }
}

struct LoadedMatrix {
    Mat m;
    std::string digest;
    std::string path;
};

LoadedMatrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open '" + path + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    std::istringstream stream(bytes);
    return {read_matrix(stream), fnv1a_digest(bytes), path};
}

void emit_report(const CommonFlags& flags, const json& report, const std::string& summary) {
    if (flags.format == "machine") {
        std::cout << report.dump(2) << "\n";
    } else {
        std::cout << summary;
    }
    if (!flags.out.empty()) {
        std::ofstream out(flags.out);
        if (!out) {
            throw io_error("cannot open '" + flags.out + "' for writing");
        }
        out << report.dump(2) << "\n";
        if (!out) {
            throw io_error("failed while writing '" + flags.out + "'");
        }
    }
}

int run_verify(const std::string& path, CommonFlags flags, double sym_tolerance) {
    const LoadedMatrix input = load_matrix(path);
    const double residual = symplecticity_residual(input.m);
    const bool symplectic = residual <= sym_tolerance;
    const GenericityReport generic = genericity_report(input.m);

    json genericity = json{{"is_generic", generic.is_generic()},
                           {"zero_subvectors", json::array()},
                           {"vanishing_blocks", json::array()}};
    for (const auto& s : generic.zero_subvectors) {
        genericity["zero_subvectors"].push_back(
            json{{"axis", s.axis == GenericityReport::Axis::row ? "row" : "column"},
                 {"index", s.index},
                 {"mode", s.mode},
                 {"norm", s.norm}});
    }
    for (const auto& b : generic.vanishing_blocks) {
        genericity["vanishing_blocks"].push_back(
            json{{"row_mode", b.row_mode}, {"col_mode", b.col_mode}, {"max_entry", b.max_entry}});
    }
    json report{{"command", "verify"},
                {"input", {{"path", input.path},
                           {"digest", input.digest},
                           {"n_modes", static_cast<int>(input.m.rows() / 2)}}},
                {"tolerance", sym_tolerance},
                {"residual", residual},
                {"symplectic", symplectic},
                {"genericity", std::move(genericity)}};

    std::ostringstream summary;
    summary << "matrix: " << path << " (" << input.m.rows() / 2 << " modes, digest "
            << input.digest << ")\n"
            << "symplecticity residual: " << residual << (symplectic ? "  [ok]" : "  [FAIL]")
            << "\n"
            << "genericity: " << generic.summary() << "\n";
    emit_report(flags, report, summary.str());
    return symplectic ? kOk : kNonSymplectic;
}

int run_gen(int n_modes, CommonFlags flags, const std::string& out_path) {
    const SymplecticMatrix s = random_generic_symplectic(n_modes, flags.seed);
    write_matrix_file(out_path, s.mat());
    json report{{"command", "gen"},
                {"n_modes", n_modes},
                {"seed", flags.seed},
                {"out", out_path},
                {"residual", s.residual()}};
    std::ostringstream summary;
    summary << "wrote " << n_modes << "-mode generic symplectic matrix (seed " << flags.seed
            << ") to " << out_path << "\n";
    emit_report(flags, report, summary.str());
    return kOk;
}

struct BuildOutcome {
    ProtocolSequence sequence;
    json genericize_note;
};

/// Shared front half of the builder commands: load, certify, check or repair
/// genericity, and hand a coupler to the builder callback.
template <typename Builder>
int run_builder(const std::string& path, CommonFlags flags, const char* command,
                Builder&& build_and_simulate) {
    const LoadedMatrix input = load_matrix(path);
    SymplecticMatrix coupler = SymplecticMatrix::certify(input.m);  // throws at 1e-10

    json genericize_note{{"applied", false}};
    const GenericityReport generic = genericity_report(coupler.mat());
    if (!generic.is_generic()) {
        if (!flags.genericize) {
            std::cerr << command << ": input is not generic: " << generic.summary() << "\n"
                      << "(re-run with --genericize to dress it)\n";
            return kNonGeneric;
        }
        GenericizeResult dressed = genericize(coupler, flags.seed);
        genericize_note = json{{"applied", true},
                               {"repetitions", dressed.repetitions},
                               {"pre_layer", layer_to_json(dressed.pre_layer)},
                               {"post_layer", layer_to_json(dressed.post_layer)}};
        coupler = std::move(dressed.net);
    }

    BuildOptions opts;
    opts.zero_tolerance = flags.tolerance;
    if (flags.relax_mode >= 0) {
        opts.exempt_mode = flags.relax_mode;
    }

    auto [outcome, simulation, sim_ok] = build_and_simulate(coupler, opts);
    outcome.genericize_note = genericize_note;

    const ProtocolSequence& seq = outcome.sequence;
    const double violation =
        std::max(seq.certification.max_zero_violation, seq.certification.max_pin_deviation);
    const bool pattern_ok = seq.certification.passed;

    json report{{"command", command},
                {"input", {{"path", input.path},
                           {"digest", input.digest},
                           {"n_modes", coupler.n_modes()}}},
                {"tolerances", {{"symplectic", tol::symplectic},
                                {"zero", flags.tolerance},
                                {"genericity", tol::genericity}}},
                {"seed", flags.seed},
                {"genericize", outcome.genericize_note},
                {"pattern_verified", pattern_ok},
                {"max_pattern_violation", violation},
                {"simulation", simulation},
                {"coupler_count", seq.coupler_count},
                {"squeezing_budget", seq.squeezing_budget},
                {"sequence", sequence_to_json(seq)}};

    std::ostringstream summary;
    summary << command << ": " << path << " (" << coupler.n_modes() << " modes)\n"
            << "pattern " << pattern_kind_name(seq.pattern.kind) << ": "
            << (pattern_ok ? "verified" : "FAILED") << " (worst violation " << violation << ")\n"
            << "simulation: " << (sim_ok ? "verified" : "FAILED") << "\n"
            << "coupler uses: " << seq.coupler_count << "\n"
            << "squeezing budget per mode:";
    for (const double r : seq.squeezing_budget) {
        summary << " " << r;
    }
    summary << "\n";
    emit_report(flags, report, summary.str());
    return (pattern_ok && sim_ok) ? kOk : kUnsatisfiable;
}

int run_decouple(const std::string& path, CommonFlags flags, int mode) {
    return run_builder(path, flags, "decouple", [&](const SymplecticMatrix& s,
                                                    const BuildOptions& opts) {
        BuildOutcome outcome{decouple_mode(s, mode, opts), {}};
        const DecouplingCheck check =
            verify_decoupled(outcome.sequence.net, mode, 16, flags.seed, flags.tolerance);
        json sim{{"kind", "decoupled"},
                 {"verified", check.decoupled},
                 {"max_leakage", check.max_leakage},
                 {"trials", 16}};
        return std::tuple{std::move(outcome), std::move(sim), check.decoupled};
    });
}

int run_transduce(const std::string& path, CommonFlags flags) {
    return run_builder(path, flags, "transduce", [&](const SymplecticMatrix& s,
                                                     const BuildOptions& opts) {
        const int n = s.n_modes();
        BuildOutcome outcome{
            n == 2 ? transduce_two_mode(s, opts) : build_asymmetric_transducer(s, opts), {}};
        json sim;
        bool ok = false;
        if (n == 2) {
            const SwapCheck check =
                verify_swap(outcome.sequence.net, 0, 1, 16, flags.seed, flags.tolerance);
            ok = check.swapped;
            sim = json{{"kind", "swap"}, {"verified", ok}, {"residual", check.residual}};
        } else {
            const TransferCheck check =
                verify_transfer(outcome.sequence.net, 0, n - 1, 16, flags.seed, flags.tolerance);
            ok = check.transferred;
            sim = json{{"kind", "transfer"}, {"verified", ok}, {"residual", check.residual}};
        }
        return std::tuple{std::move(outcome), std::move(sim), ok};
    });
}

int run_swap(const std::string& path, CommonFlags flags, int mode_i, int mode_j) {
    return run_builder(path, flags, "swap", [&](const SymplecticMatrix& s,
                                                const BuildOptions& opts) {
        BuildOutcome outcome{build_swap(s, mode_i, mode_j, opts), {}};
        const SwapCheck check =
            verify_swap(outcome.sequence.net, mode_i, mode_j, 16, flags.seed, flags.tolerance);
        json sim{{"kind", "swap"},
                 {"verified", check.swapped},
                 {"residual", check.residual},
                 {"trials", 16}};
        return std::tuple{std::move(outcome), std::move(sim), check.swapped};
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "modeweave: synthesize and verify interference-based decoupling and swapping\n"
        "sequences for multimode Gaussian couplers (modes are numbered from 0)"};
    app.require_subcommand(1);

    CommonFlags verify_flags, gen_flags, dec_flags, trans_flags, swap_flags;
    std::string verify_path, dec_path, trans_path, swap_path, gen_out;
    int gen_modes = 2;
    int dec_mode = 0;
    int swap_i = 0;
    int swap_j = 1;
    double sym_tolerance = tol::symplectic;

    CLI::App* verify = app.add_subcommand("verify", "Check symplecticity and genericity");
    verify->add_option("file", verify_path, "Matrix document")->required();
    verify_flags.tolerance = tol::symplectic;
    add_common(verify, verify_flags, false);

    CLI::App* gen = app.add_subcommand("gen", "Generate a random generic symplectic matrix");
    gen->add_option("n_modes", gen_modes, "Number of modes")->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output path")->required();
    gen->add_option("--seed", gen_flags.seed, "Generator seed");
    gen->add_option("--format", gen_flags.format, "Console output: summary or machine")
        ->check(CLI::IsMember({"summary", "machine"}));

    CLI::App* dec = app.add_subcommand("decouple", "Decouple one mode with four coupler uses");
    dec->add_option("file", dec_path, "Matrix document")->required();
    dec->add_option("--mode", dec_mode, "Mode to decouple (default 0)");
    add_common(dec, dec_flags, true);

    CLI::App* trans = app.add_subcommand(
        "transduce", "Build the transducer routing the first mode onto the last");
    trans->add_option("file", trans_path, "Matrix document")->required();
    add_common(trans, trans_flags, true);

    CLI::App* swp = app.add_subcommand("swap", "Swap two modes with sixteen coupler uses");
    swp->add_option("file", swap_path, "Matrix document")->required();
    swp->add_option("i", swap_i, "First mode")->required();
    swp->add_option("j", swap_j, "Second mode")->required();
    add_common(swp, swap_flags, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (verify->parsed()) {
            sym_tolerance = verify_flags.tolerance;
            return run_verify(verify_path, verify_flags, sym_tolerance);
        }
        if (gen->parsed()) {
            return run_gen(gen_modes, gen_flags, gen_out);
        }
        if (dec->parsed()) {
            return run_decouple(dec_path, dec_flags, dec_mode);
        }
        if (trans->parsed()) {
            return run_transduce(trans_path, trans_flags);
        }
        if (swp->parsed()) {
            if (swap_i == swap_j) {
                std::cerr << "swap: the two modes must differ\n";
                return kUsage;
            }
            return run_swap(swap_path, swap_flags, swap_i, swap_j);
        }
    } catch (const file_format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const non_symplectic_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNonSymplectic;
    } catch (const edge_case_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNonGeneric;
    } catch (const permutation_like_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUnsatisfiable;
    } catch (const invalid_dimension_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const invalid_parameter_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUnsatisfiable;
    }
    return kUsage;
}
