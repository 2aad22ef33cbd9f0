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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "modeweave/io.hpp"

namespace fs = std::filesystem;
using namespace modeweave;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    static const std::string binary = MODEWEAVE_CLI_PATH;
    static int counter = 0;
    const fs::path out_path =
        fs::temp_directory_path() / ("modeweave_cli_out_" + std::to_string(counter++) + ".txt");
    const std::string command = binary + " " + args + " > " + out_path.string() + " 2>&1";
    const int status = std::system(command.c_str());
    std::ifstream in(out_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    fs::remove(out_path);
    int code = -1;
    if (WIFEXITED(status)) {
        code = WEXITSTATUS(status);
    }
    return {code, buf.str()};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("modeweave_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("cli: gen is deterministic and verifies round trip") {
    TempDir dir;
    const std::string a = (dir.path / "a.json").string();
    const std::string b = (dir.path / "b.json").string();

    CHECK(run_cli("gen 2 --seed 7 --out " + a).exit_code == 0);
    CHECK(run_cli("gen 2 --seed 7 --out " + b).exit_code == 0);
    CHECK(slurp(a) == slurp(b));  // byte-identical for equal seeds

    const RunResult verify = run_cli("verify " + a + " --format machine");
    CHECK(verify.exit_code == 0);
    const json verdict = json::parse(verify.output);
    CHECK(verdict["symplectic"].get<bool>());
    CHECK(verdict["genericity"]["is_generic"].get<bool>());

    const std::string c = (dir.path / "c.json").string();
    CHECK(run_cli("gen 2 --seed 8 --out " + c).exit_code == 0);
    CHECK(slurp(a) != slurp(c));

    const std::string one = (dir.path / "one.json").string();
    CHECK(run_cli("gen 1 --seed 3 --out " + one).exit_code == 0);
    const Mat m = read_matrix_file(one);
    REQUIRE(m.rows() == 2);
    CHECK(std::abs(m.determinant() - 1.0) <= 1e-10);
}

TEST_CASE("cli: verify classifies inputs and exit codes") {
    TempDir dir;

    SECTION("the identity is symplectic with zero residual") {
        const std::string path = (dir.path / "id.json").string();
        write_matrix_file(path, Mat::Identity(4, 4));
        const RunResult res = run_cli("verify " + path + " --format machine");
        CHECK(res.exit_code == 0);
        const json doc = json::parse(res.output);
        CHECK(doc["residual"].get<double>() == 0.0);
        CHECK_FALSE(doc["genericity"]["is_generic"].get<bool>());
    }

    SECTION("non-symplectic input exits 1") {
        const std::string path = (dir.path / "bad.json").string();
        write_matrix_file(path, Mat(2.0 * Mat::Identity(4, 4)));
        CHECK(run_cli("verify " + path).exit_code == 1);
    }

    SECTION("malformed documents exit 2") {
        const std::string path = (dir.path / "broken.json").string();
        std::ofstream(path) << "{\"n_modes\": 2, \"ordering\": \"qpqp\", \"rows\": [[1,0],[0,1]]}";
        CHECK(run_cli("verify " + path).exit_code == 2);

        const std::string text = (dir.path / "text.json").string();
        std::ofstream(text) << "not json at all";
        CHECK(run_cli("verify " + text).exit_code == 2);
    }

    SECTION("missing files exit 3") {
        CHECK(run_cli("verify " + (dir.path / "nope.json").string()).exit_code == 3);
    }
}

TEST_CASE("cli: decouple end to end") {
    TempDir dir;
    const std::string input = (dir.path / "s.json").string();
    REQUIRE(run_cli("gen 3 --seed 11 --out " + input).exit_code == 0);

    SECTION("generic input decouples with a verified report") {
        const std::string report_path = (dir.path / "report.json").string();
        const RunResult res =
            run_cli("decouple " + input + " --mode 1 --seed 5 --out " + report_path);
        CHECK(res.exit_code == 0);

        const json report = json::parse(slurp(report_path));
        CHECK(report["pattern_verified"].get<bool>());
        CHECK(report["coupler_count"].get<int>() == 4);
        CHECK(report["simulation"]["verified"].get<bool>());

        // Independent re-verification: multiply the serialized steps against
        // the input coupler and re-scan the pattern.
        const Mat coupler = read_matrix_file(input);
        const auto steps = steps_from_json(report["sequence"]["steps"]);
        const Mat net = sequence_product(steps, coupler);
        const Mat declared = matrix_from_json(report["sequence"]["net"]);
        CHECK(max_abs(net - declared) <= 1e-9 * max_abs(declared));
        CHECK(check_pattern(net, StructurePattern::decoupled(3, 1)).passed);
    }

    SECTION("reports are byte-stable across runs") {
        const std::string r1 = (dir.path / "r1.json").string();
        const std::string r2 = (dir.path / "r2.json").string();
        REQUIRE(run_cli("decouple " + input + " --seed 5 --out " + r1).exit_code == 0);
        REQUIRE(run_cli("decouple " + input + " --seed 5 --out " + r2).exit_code == 0);
        CHECK(slurp(r1) == slurp(r2));
    }

    SECTION("relaxed runs zero out the exempt mode's budget") {
        const std::string report_path = (dir.path / "relaxed.json").string();
        const RunResult res =
            run_cli("decouple " + input + " --relax-mode 0 --out " + report_path);
        CHECK(res.exit_code == 0);
        const json report = json::parse(slurp(report_path));
        CHECK(report["squeezing_budget"][0].get<double>() <= 1e-10);
    }

    SECTION("non-generic input without --genericize exits 4") {
        const std::string id = (dir.path / "id.json").string();
        write_matrix_file(id, Mat::Identity(6, 6));
        CHECK(run_cli("decouple " + id).exit_code == 4);
    }

    SECTION("permutation-like input with --genericize exits 5") {
        const std::string id = (dir.path / "id.json").string();
        write_matrix_file(id, Mat::Identity(6, 6));
        CHECK(run_cli("decouple " + id + " --genericize").exit_code == 5);
    }
}

TEST_CASE("cli: transduce and swap") {
    TempDir dir;
    const std::string two = (dir.path / "two.json").string();
    const std::string three = (dir.path / "three.json").string();
    REQUIRE(run_cli("gen 2 --seed 21 --out " + two).exit_code == 0);
    REQUIRE(run_cli("gen 3 --seed 22 --out " + three).exit_code == 0);

    SECTION("two-mode transduction verifies as a swap") {
        const std::string report_path = (dir.path / "td2.json").string();
        CHECK(run_cli("transduce " + two + " --out " + report_path).exit_code == 0);
        const json report = json::parse(slurp(report_path));
        CHECK(report["coupler_count"].get<int>() == 4);
        CHECK(report["simulation"]["kind"].get<std::string>() == "swap");
    }

    SECTION("multimode transduction verifies the one-way route") {
        const std::string report_path = (dir.path / "td3.json").string();
        CHECK(run_cli("transduce " + three + " --out " + report_path).exit_code == 0);
        const json report = json::parse(slurp(report_path));
        CHECK(report["simulation"]["kind"].get<std::string>() == "transfer");
    }

    SECTION("swap reports sixteen coupler uses") {
        const std::string report_path = (dir.path / "swap.json").string();
        CHECK(run_cli("swap " + three + " 0 2 --seed 3 --out " + report_path).exit_code == 0);
        const json report = json::parse(slurp(report_path));
        CHECK(report["coupler_count"].get<int>() == 16);
        CHECK(report["pattern_verified"].get<bool>());
        CHECK(report["simulation"]["verified"].get<bool>());
    }

    SECTION("swapping a mode with itself is a usage error") {
        CHECK(run_cli("swap " + three + " 1 1").exit_code == 2);
    }

    SECTION("non-symplectic input exits 1") {
        const std::string bad = (dir.path / "bad.json").string();
        write_matrix_file(bad, Mat(3.0 * Mat::Identity(4, 4)));
        CHECK(run_cli("transduce " + bad).exit_code == 1);
    }
}
