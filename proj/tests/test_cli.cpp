// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line interface: exit codes, byte-level
// determinism of dumps and reports, and verify-on-reingest.

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#ifndef NLH_CLI_PATH
#error "NLH_CLI_PATH must point at the built CLI binary"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(NLH_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0)
    res.output.append(buf.data(), got);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double report_value(const std::string& report, const std::string& key) {
  std::stringstream ss(report);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind(key + " = ", 0) == 0)
      return std::strtod(line.c_str() + key.size() + 3, nullptr);
  }
  FAIL("key '" << key << "' not found in report");
  return 0.0;
}

}  // namespace

TEST_CASE("cli: classify report lists the born-infeld branches") {
  auto res = run_cli("density-classify --family born_infeld --interval 0 4");
  REQUIRE(res.exit_code == 0);
  REQUIRE(res.output.find("branch_1.regime = elliptic") != std::string::npos);
  REQUIRE(res.output.find("branch_2.regime = hyperbolic") != std::string::npos);
  REQUIRE(res.output.find("sonic_points = 1\n") != std::string::npos);
}

TEST_CASE("cli: repeated runs are byte-identical") {
  const std::string out1 = "/tmp/nlhodge_cli_a.csv";
  const std::string out2 = "/tmp/nlhodge_cli_b.csv";
  const std::string args =
      "construct --family born_infeld --branch 0 1 "
      "--stream-closed \"cos(x3)*dx34\" --dim 4 --res 7 --out ";
  auto r1 = run_cli(args + out1);
  auto r2 = run_cli(args + out2);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(r1.output == r2.output);
  const std::string c1 = slurp(out1), c2 = slurp(out2);
  REQUIRE_FALSE(c1.empty());
  REQUIRE(c1 == c2);
  std::remove(out1.c_str());
  std::remove(out2.c_str());
}

TEST_CASE("cli: verify reproduces the construct residual on reingest") {
  const std::string dump = "/tmp/nlhodge_cli_reingest.csv";
  auto build = run_cli(
      "construct --family born_infeld --branch 0 1 "
      "--stream-closed \"cos(x3)*dx34\" --dim 4 --res 7 --out " +
      dump);
  REQUIRE(build.exit_code == 0);
  auto verify = run_cli("verify --family born_infeld --input " + dump);
  REQUIRE(verify.exit_code == 0);
  const double r_construct = report_value(build.output, "residual.codiff_l2");
  const double r_verify = report_value(verify.output, "residual.codiff_l2");
  REQUIRE(std::abs(r_construct - r_verify) <= 1e-12 * std::max(1.0, r_construct));
  std::remove(dump.c_str());
}

TEST_CASE("cli: exit codes") {
  SECTION("sonic guard trip reports 2 with tau_s") {
    auto res = run_cli(
        "bvp-continue --family maximal --bound-k 0.5 --probe-top 0.99 "
        "--kind dirichlet --g \"x1\" --res 9 --tau-range 0 1 --tau-steps 10");
    REQUIRE(res.exit_code == 2);
    REQUIRE(res.output.find("sonic_tripped = true") != std::string::npos);
    const double tau_s = report_value(res.output, "tau_s");
    REQUIRE(std::abs(tau_s - std::sqrt(0.75)) / std::sqrt(0.75) <= 0.05);
  }
  SECTION("non-convergence reports 3") {
    auto res = run_cli(
        "bvp-solve --family minimal --kind dirichlet "
        "--g \"log(cos(x1)/cos(x2))\" --bounds \"-0.9:0.9\" --res 17 "
        "--max-iters 2");
    REQUIRE(res.exit_code == 3);
  }
  SECTION("config errors report 4") {
    REQUIRE(run_cli("density-classify --family nosuch --interval 0 1").exit_code == 4);
    REQUIRE(run_cli("construct --no-such-flag").exit_code == 4);
    REQUIRE(run_cli("density-classify --interval 0").exit_code == 4);
  }
  SECTION("domain violations report 5") {
    // minus family needs |df| > 1
    auto res = run_cli(
        "construct --family born_infeld --sign - --stream \"0.5*x3*dx4\" "
        "--dim 4 --res 5");
    REQUIRE(res.exit_code == 5);
  }
}

TEST_CASE("cli: remaining subcommand surfaces") {
  SECTION("density-dual and density-invert") {
    auto dual = run_cli("density-dual --family minimal --interval 0 9");
    REQUIRE(dual.exit_code == 0);
    REQUIRE(report_value(dual.output, "max_identity_defect") <= 1e-12);
    auto inv = run_cli("density-invert --family born_infeld --branch 0 1 --r 3");
    REQUIRE(inv.exit_code == 0);
    REQUIRE(report_value(inv.output, "psi") == Catch::Approx(0.75).margin(1e-10));
  }
  SECTION("custom density schemas: expression and table") {
    auto ex = run_cli(
        "density-classify --rho-expr \"1/sqrt(1+t)\" --interval 0 8");
    REQUIRE(ex.exit_code == 0);
    REQUIRE(ex.output.find("branch_count = 1") != std::string::npos);
    REQUIRE(ex.output.find("branch_1.regime = elliptic") != std::string::npos);

    const std::string table = "/tmp/nlhodge_cli_table.csv";
    {
      std::ofstream f(table);
      f << "t,rho\n";
      for (int i = 0; i <= 100; ++i) {
        const double t = 0.04 * i;
        f << t << ',' << 1.0 / std::sqrt(1.0 + t) << '\n';
      }
    }
    auto tb = run_cli("density-invert --rho-table " + table + " --branch 0 4 --r 0.75");
    REQUIRE(tb.exit_code == 0);
    // psi of the interpolated minimal density, close to the exact value 3
    REQUIRE(report_value(tb.output, "psi") == Catch::Approx(3.0).margin(1e-3));
    std::remove(table.c_str());
  }
  SECTION("transform round trip through files") {
    const std::string d1 = "/tmp/nlhodge_cli_t1.csv";
    const std::string d2 = "/tmp/nlhodge_cli_t2.csv";
    const std::string d3 = "/tmp/nlhodge_cli_t3.csv";
    REQUIRE(run_cli("construct --family minimal --branch 0 9 --stream \"0.3*x1*x2\" "
                    "--dim 2 --res 9 --out " + d1).exit_code == 0);
    REQUIRE(run_cli("transform --kind conformal_t --direction forward --input " +
                    d1 + " --eta \"0.2*t\" --out " + d2).exit_code == 0);
    REQUIRE(run_cli("transform --kind conformal_t --direction inverse --input " +
                    d2 + " --eta \"0.2*t\" --interval 0 2 --out " + d3).exit_code == 0);
    // round trip restores the field to inversion tolerance
    std::string o1 = slurp(d1), o3 = slurp(d3);
    REQUIRE_FALSE(o1.empty());
    auto dual = run_cli("transform --kind dual --input " + d1 +
                        " --family minimal --interval 0 9");
    REQUIRE(dual.exit_code == 0);
    REQUIRE(report_value(dual.output, "star_identity_defect") <= 1e-10);
    std::remove(d1.c_str());
    std::remove(d2.c_str());
    std::remove(d3.c_str());
  }
  SECTION("aharmonic-check and energy") {
    auto ah = run_cli(
        "aharmonic-check --family minimal --u \"x1*x2\" --branch 0 5 --res 17");
    REQUIRE(ah.exit_code == 0);
    REQUIRE(report_value(ah.output, "d_of_B_l2") <= 1e-9);

    const std::string dump = "/tmp/nlhodge_cli_e.csv";
    REQUIRE(run_cli("construct --family minimal --branch 0 9 --stream \"0.3*x1*x2\" "
                    "--dim 2 --res 17 --out " + dump).exit_code == 0);
    auto en = run_cli("energy --family minimal --input " + dump +
                      " --phi \"sin(x1)*cos(x2)\"");
    REQUIRE(en.exit_code == 0);
    REQUIRE(report_value(en.output, "rel_defect") <= 1e-6);
    std::remove(dump.c_str());
  }
  SECTION("bvp-solve happy path with field dump") {
    const std::string dump = "/tmp/nlhodge_cli_u.csv";
    auto res = run_cli(
        "bvp-solve --family constant --kind dirichlet --g \"x1*x2\" --res 9 "
        "--out " + dump);
    REQUIRE(res.exit_code == 0);
    REQUIRE(res.output.find("subsonic = true") != std::string::npos);
    REQUIRE(report_value(res.output, "verify.trace_defect") <= 1e-10);
    const std::string csv = slurp(dump);
    REQUIRE(csv.rfind("x1,x2,u,w0_1,w0_2,w_1,w_2,Q", 0) == 0);
    std::remove(dump.c_str());
  }
}

TEST_CASE("cli: config file values are overridden by flags") {
  const std::string cfg = "/tmp/nlhodge_cli.cfg";
  {
    std::ofstream f(cfg);
    f << "[density-classify]\nfamily = born_infeld\ninterval = 0 4\nsamples = 64\n";
  }
  auto from_cfg = run_cli("density-classify --config " + cfg);
  REQUIRE(from_cfg.exit_code == 0);
  REQUIRE(from_cfg.output.find("branch_count = 2") != std::string::npos);
  auto overridden = run_cli("density-classify --config " + cfg + " --interval 0 0.5");
  REQUIRE(overridden.exit_code == 0);
  REQUIRE(overridden.output.find("branch_count = 1") != std::string::npos);
  std::remove(cfg.c_str());
}
