// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every subcommand reads a config (flags win over
// --config file entries), runs one job, prints a key/value report to stdout,
// and optionally writes CSV field dumps. Exit codes: 0 success, 2 sonic
// guard, 3 non-convergence, 4 config/usage error, 5 domain/range error.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nlhodge/nlhodge.hpp"

using namespace nlhodge;

namespace {

// ---------------------------------------------------------------------------
// Option bundles.
// ---------------------------------------------------------------------------

struct GridOpts {
  int dim = 2;
  std::vector<int> res{33};
  std::vector<std::string> bounds;  // "lo:hi" per axis

  Grid build() const {
    std::vector<int> r = res;
    if (static_cast<int>(r.size()) == 1) r.assign(static_cast<std::size_t>(dim), r[0]);
    if (static_cast<int>(r.size()) != dim)
      throw config_error("--res needs one value or one per axis");
    std::vector<Interval> b;
    if (bounds.empty()) {
      b.assign(static_cast<std::size_t>(dim), Interval{0.0, 1.0});
    } else {
      std::vector<std::string> bs = bounds;
      if (bs.size() == 1 && dim > 1) bs.assign(static_cast<std::size_t>(dim), bs[0]);
      if (static_cast<int>(bs.size()) != dim)
        throw config_error("--bounds needs one 'lo:hi' or one per axis");
      for (const auto& s : bs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
          throw config_error("--bounds entries look like 'lo:hi'");
        b.push_back({std::strtod(s.substr(0, colon).c_str(), nullptr),
                     std::strtod(s.substr(colon + 1).c_str(), nullptr)});
      }
    }
    return Grid(dim, b, r);
  }
};

void add_grid_opts(CLI::App* cmd, GridOpts& g) {
  cmd->add_option("--dim", g.dim, "Grid dimension (2..4)");
  cmd->add_option("--res", g.res, "Nodes per axis (single value broadcasts)");
  cmd->add_option("--bounds", g.bounds, "Axis intervals 'lo:hi' (broadcasts)");
}

struct DensityOpts {
  std::string family = "constant";
  double param = 1.0;
  std::string rho_expr;
  std::string table_path;

  Density build() const {
    if (!rho_expr.empty()) {
      const expr::Expr e = expr::Expr::parse(rho_expr);
      if (e.uses_x()) throw config_error("--rho-expr must depend on t only");
      return Density::custom("expr:" + rho_expr,
                             [e](const Point& x, double t) { return e(x, t); });
    }
    if (!table_path.empty()) {
      auto [ts, rs] = read_density_table(table_path);
      return Density::from_table(std::move(ts), std::move(rs));
    }
    if (family == "constant") return Density::constant(param);
    if (family == "p_power") return Density::p_power(param);
    if (family == "minimal") return Density::minimal();
    if (family == "maximal") return Density::maximal();
    if (family == "born_infeld") return Density::born_infeld();
    if (family == "extremal") return Density::extremal();
    throw config_error("unknown density family '" + family + "'");
  }
};

void add_density_opts(CLI::App* cmd, DensityOpts& d) {
  cmd->add_option("--family", d.family,
                  "Density family: constant, p_power, minimal, maximal, "
                  "born_infeld, extremal");
  cmd->add_option("--param", d.param, "Family parameter (c or p)");
  cmd->add_option("--rho-expr", d.rho_expr, "Custom density as an expression in t");
  cmd->add_option("--rho-table", d.table_path,
                  "CSV table (t,rho) interpolated monotone-cubically");
}

struct OutputOpts {
  std::string out_csv;
  std::string report_path;
};

void add_output_opts(CLI::App* cmd, OutputOpts& o) {
  cmd->add_option("--out", o.out_csv, "Write field dump CSV here");
  cmd->add_option("--report", o.report_path, "Write the report document here");
}

void emit(const ReportDoc& doc, const OutputOpts& out) {
  std::fputs(doc.str().c_str(), stdout);
  if (!out.report_path.empty()) doc.write_file(out.report_path);
}

void report_residuals(ReportDoc& doc, const std::string& prefix,
                      const ResidualReport& rep) {
  doc.set(prefix + ".codiff_l2", rep.codiff.l2);
  doc.set(prefix + ".codiff_max", rep.codiff.max);
  if (rep.frobenius) {
    doc.set(prefix + ".frobenius_l2", rep.frobenius->l2);
    doc.set(prefix + ".frobenius_max", rep.frobenius->max);
  }
  if (rep.weak_frobenius) {
    doc.set(prefix + ".weak_frobenius_l2", rep.weak_frobenius->l2);
    doc.set(prefix + ".weak_frobenius_max", rep.weak_frobenius->max);
  }
  if (rep.closedness) {
    doc.set(prefix + ".closedness_l2", rep.closedness->l2);
    doc.set(prefix + ".closedness_max", rep.closedness->max);
  }
  doc.set(prefix + ".sonic_nodes", rep.sonic_nodes);
  doc.set(prefix + ".h_max", rep.h_max);
}

SpaceFn form_component_fn(const expr::FormExpr& fe, const Grid& g, unsigned mask) {
  // sample once on the grid and close over the column
  DiscreteForm w = fe.sample(g);
  const int c = w.basis().position(mask);
  std::vector<double> vals = w.comp(c);
  const Grid grid = g;
  return [vals = std::move(vals), grid](const Point& x) {
    // locate the node by coordinates (exact for on-grid points)
    std::array<int, 4> id{0, 0, 0, 0};
    for (int a = 0; a < grid.dim(); ++a) {
      id[a] = static_cast<int>(
          std::lround((x[a] - grid.bounds(a).lo) / grid.spacing(a)));
      id[a] = std::clamp(id[a], 0, grid.res(a) - 1);
    }
    return vals[grid.flatten(id)];
  };
}

// ---------------------------------------------------------------------------
// Subcommand jobs.
// ---------------------------------------------------------------------------

int run_density_classify(const DensityOpts& dopt, std::vector<double> interval,
                         int samples, const OutputOpts& out) {
  const Density rho = dopt.build();
  const RegimeReport rep = classify(rho, interval[0], interval[1], samples);
  ReportDoc doc;
  doc.set("command", std::string("density-classify"));
  doc.set("density", rho.label());
  doc.set("interval_lo", interval[0]);
  doc.set("interval_hi", interval[1]);
  doc.set("branch_count", rep.branches.size());
  for (std::size_t i = 0; i < rep.branches.size(); ++i) {
    const auto& br = rep.branches[i];
    const std::string p = "branch_" + std::to_string(i + 1);
    doc.set(p + ".t1", br.t1);
    doc.set(p + ".t2", br.t2);
    doc.set(p + ".r1", br.r1);
    doc.set(p + ".r2", br.r2);
    doc.set(p + ".direction", std::string(br.increasing ? "increasing" : "decreasing"));
    doc.set(p + ".regime", std::string(to_string(br.regime)));
  }
  doc.set_list("sonic_points", rep.sonic_points);
  doc.set("low_confidence", rep.low_confidence);
  emit(doc, out);
  return 0;
}

int run_density_dual(const DensityOpts& dopt, std::vector<double> interval,
                     int samples, const OutputOpts& out) {
  const Density rho = dopt.build();
  const MonotoneBranch br = make_branch(rho, interval[0], interval[1]);
  const DualPair pair = dual_density(rho, br);
  double max_identity = 0.0, max_involution = 0.0, max_phi_inverse = 0.0;
  const DualPair pair2 = dual_density(pair.rho_hat, pair.branch_hat);
  const double a = br.t_eval_lo(), b = br.t_eval_hi();
  const Point x0{0, 0, 0, 0};
  std::vector<double> ts, rhos, thats, rhohats;
  for (int i = 1; i < samples; ++i) {
    const double t = a + (b - a) * i / samples;
    const double th = rho.phi(x0, t);
    const double r = rho.rho(x0, t);
    const double rh = pair.rho_hat.rho(x0, th);
    max_identity = std::max(max_identity, std::abs(r * rh - 1.0));
    max_phi_inverse =
        std::max(max_phi_inverse, std::abs(pair.rho_hat.phi(x0, th) - t));
    max_involution =
        std::max(max_involution, std::abs(pair2.rho_hat.rho(x0, t) - r));
    ts.push_back(t);
    rhos.push_back(r);
    thats.push_back(th);
    rhohats.push_back(rh);
  }
  ReportDoc doc;
  doc.set("command", std::string("density-dual"));
  doc.set("density", rho.label());
  doc.set("branch.regime", std::string(to_string(br.regime)));
  doc.set("dual.regime", std::string(to_string(pair.branch_hat.regime)));
  doc.set("max_identity_defect", max_identity);
  doc.set("max_phi_inverse_defect", max_phi_inverse);
  doc.set("max_involution_defect", max_involution);
  emit(doc, out);
  if (!out.out_csv.empty()) {
    std::ofstream f(out.out_csv, std::ios::binary);
    if (!f) throw config_error("cannot open '" + out.out_csv + "'");
    f << "t,rho,t_hat,rho_hat\n";
    for (std::size_t i = 0; i < ts.size(); ++i)
      f << fmt17(ts[i]) << ',' << fmt17(rhos[i]) << ',' << fmt17(thats[i]) << ','
        << fmt17(rhohats[i]) << '\n';
  }
  return 0;
}

int run_density_invert(const DensityOpts& dopt, std::vector<double> branch_iv,
                       double r, const OutputOpts& out) {
  const Density rho = dopt.build();
  const MonotoneBranch br = make_branch(rho, branch_iv[0], branch_iv[1]);
  const double t = psi_invert(br, r);
  ReportDoc doc;
  doc.set("command", std::string("density-invert"));
  doc.set("density", rho.label());
  doc.set("branch.regime", std::string(to_string(br.regime)));
  doc.set("r", r);
  doc.set("psi", t);
  doc.set("residual", std::abs(rho.phi(br.x, t) - r));
  emit(doc, out);
  return 0;
}

int run_construct(const GridOpts& gopt, const DensityOpts& dopt,
                  const std::string& stream, const std::string& stream_closed,
                  std::vector<double> branch_iv, const std::string& sign,
                  const OutputOpts& out) {
  const Grid g = gopt.build();
  if (stream.empty() == stream_closed.empty())
    throw config_error("construct: give exactly one of --stream or --stream-closed");

  StreamResult res;
  if (!sign.empty()) {
    if (dopt.family != "born_infeld" || stream.empty())
      throw config_error("--sign applies to --family born_infeld with --stream");
    const auto fe = expr::FormExpr::parse(stream, g.dim());
    res = born_infeld_family(fe.sample(g), sign == "-" ? -1 : +1);
  } else {
    if (branch_iv.size() != 2)
      throw config_error("construct: --branch LO HI is required");
    const Density rho = dopt.build();
    const MonotoneBranch br = make_branch(rho, branch_iv[0], branch_iv[1]);
    StreamInput in;
    if (!stream.empty())
      in = StreamInput::from_potential(
          expr::FormExpr::parse(stream, g.dim()).sample(g), br);
    else
      in = StreamInput::from_closed(
          expr::FormExpr::parse(stream_closed, g.dim()).sample(g), br);
    res = from_stream(in);
  }

  ReportDoc doc;
  doc.set("command", std::string("construct"));
  doc.set("degree", res.w.degree());
  doc.set("max_q", res.max_q);
  report_residuals(doc, "residual", res.report);
  emit(doc, out);
  if (!out.out_csv.empty()) {
    std::vector<FieldColumn> cols;
    append_form_columns(res.w, "w", cols);
    cols.push_back({"Q", qnorm(res.w).values()});
    write_field_csv(out.out_csv, g, cols);
  }
  return 0;
}

int run_verify(const std::string& input, const DensityOpts& dopt,
               const std::string& gamma, const std::string& sigma,
               std::vector<double> branch_iv, const OutputOpts& out) {
  const FieldTable table = read_field_csv(input);
  const DiscreteForm w = table.extract_form("w");
  const Density rho = dopt.build();
  std::optional<DiscreteForm> Gamma, Sigma;
  if (!gamma.empty())
    Gamma = expr::FormExpr::parse(gamma, table.grid.dim()).sample(table.grid);
  if (!sigma.empty())
    Sigma = expr::FormExpr::parse(sigma, table.grid.dim()).sample(table.grid);
  std::optional<MonotoneBranch> br;
  if (branch_iv.size() == 2) br = make_branch(rho, branch_iv[0], branch_iv[1]);
  const ResidualReport rep = verify_system(w, rho, Gamma, Sigma, br);
  ReportDoc doc;
  doc.set("command", std::string("verify"));
  doc.set("input", input);
  doc.set("degree", w.degree());
  doc.set("nodes", table.grid.size());
  report_residuals(doc, "residual", rep);
  emit(doc, out);
  return 0;
}

int run_transform(const std::string& kind, const std::string& direction,
                  const std::string& input, const DensityOpts& dopt,
                  const std::string& eta_src, std::vector<double> interval,
                  const OutputOpts& out) {
  const FieldTable table = read_field_csv(input);
  const DiscreteForm w = table.extract_form("w");
  const bool forward = direction != "inverse";

  ReportDoc doc;
  doc.set("command", std::string("transform"));
  doc.set("kind", kind);
  doc.set("direction", std::string(forward ? "forward" : "inverse"));

  DiscreteForm result;
  if (kind == "dual") {
    if (interval.size() != 2)
      throw config_error("transform dual: --interval LO HI (branch) required");
    const Density rho = dopt.build();
    const MonotoneBranch br = make_branch(rho, interval[0], interval[1]);
    auto res = dual_transform(w, rho, br);
    result = res.xi;
    const int k = w.degree(), n = w.grid().dim();
    const double sigma_k = (k * (n - k)) % 2 == 0 ? 1.0 : -1.0;
    const DiscreteForm back = hodge_star(apply_A(res.pair.rho_hat, res.xi));
    doc.set("degree_out", result.degree());
    doc.set("density_out", res.pair.rho_hat.label());
    doc.set("regime_in", std::string(to_string(*res.record.regime_in)));
    doc.set("regime_out", std::string(to_string(*res.record.regime_out)));
    doc.set("star_identity_defect", max_abs(back - sigma_k * w));
  } else if (kind == "conformal_t") {
    if (eta_src.empty()) throw config_error("transform conformal_t: --eta required");
    const expr::Expr e = expr::Expr::parse(eta_src);
    if (e.uses_x()) throw config_error("conformal_t: eta must depend on t only");
    const ScalarFn eta = expr::scalar_fn_of_t(e);
    if (forward) {
      result = conformal_forward_t(w, eta);
    } else {
      if (interval.size() != 2)
        throw config_error("conformal_t inverse: --interval LO HI required");
      result = conformal_inverse_t(w, EtaMap::build(eta, interval[0], interval[1]));
    }
    doc.set("degree_out", result.degree());
  } else if (kind == "conformal_x") {
    if (eta_src.empty()) throw config_error("transform conformal_x: --eta required");
    const expr::Expr e = expr::Expr::parse(eta_src);
    if (e.uses_t()) throw config_error("conformal_x: eta must depend on x only");
    result = conformal_x(w, expr::space_fn(e),
                         forward ? TransformDirection::forward
                                 : TransformDirection::inverse);
    doc.set("degree_out", result.degree());
  } else {
    throw config_error("transform kinds: dual, conformal_t, conformal_x");
  }

  emit(doc, out);
  if (!out.out_csv.empty()) {
    std::vector<FieldColumn> cols;
    append_form_columns(result, "w", cols);
    cols.push_back({"Q", qnorm(result).values()});
    write_field_csv(out.out_csv, table.grid, cols);
  }
  return 0;
}

int run_aharmonic(const GridOpts& gopt, const DensityOpts& dopt,
                  const std::string& u_src, const std::string& v_src,
                  std::vector<double> branch_iv, const OutputOpts& out) {
  const Grid g = gopt.build();
  const Density rho = dopt.build();
  const MonotoneBranch br = make_branch(rho, branch_iv[0], branch_iv[1]);
  const DiscreteForm u = expr::FormExpr::parse(u_src, g.dim()).sample(g);
  std::optional<DiscreteForm> v;
  if (!v_src.empty()) v = expr::FormExpr::parse(v_src, g.dim()).sample(g);
  const AharmonicReport rep = aharmonic_check(u, v, rho, br);
  ReportDoc doc;
  doc.set("command", std::string("aharmonic-check"));
  doc.set("density", rho.label());
  if (rep.conjugacy) {
    doc.set("conjugacy_l2", rep.conjugacy->l2);
    doc.set("conjugacy_max", rep.conjugacy->max);
  }
  doc.set("codiff_l2", rep.codiff.l2);
  doc.set("codiff_max", rep.codiff.max);
  doc.set("codiff_interior_l2", rep.codiff_interior.l2);
  doc.set("frobenius_l2", rep.frobenius.l2);
  doc.set("frobenius_interior_l2", rep.frobenius_interior.l2);
  doc.set("d_of_B_l2", rep.d_of_B.l2);
  doc.set("d_of_B_interior_l2", rep.d_of_B_interior.l2);
  doc.set("h_max", rep.h_max);
  emit(doc, out);
  return 0;
}

int run_energy(const std::string& input, const DensityOpts& dopt,
               const std::string& phi_src, const std::string& gamma_src,
               const OutputOpts& out) {
  const FieldTable table = read_field_csv(input);
  const DiscreteForm w = table.extract_form("w");
  const Density rho = dopt.build();
  ReportDoc doc;
  doc.set("command", std::string("energy"));
  doc.set("density", rho.label());
  if (phi_src.empty()) {
    doc.set("energy", energy(w, rho));
  } else {
    const DiscreteForm phi =
        expr::FormExpr::parse(phi_src, table.grid.dim()).sample(table.grid);
    std::optional<DiscreteForm> Gamma;
    if (!gamma_src.empty())
      Gamma = expr::FormExpr::parse(gamma_src, table.grid.dim()).sample(table.grid);
    const EnergyCheck chk = energy_gradient_check(w, rho, phi, Gamma);
    doc.set("energy", chk.energy_value);
    doc.set("fd_derivative", chk.fd_derivative);
    doc.set("pairing", chk.pairing);
    doc.set("rel_defect", chk.rel_defect);
    if (chk.euler_lagrange) {
      doc.set("euler_lagrange_l2", chk.euler_lagrange->l2);
      doc.set("euler_lagrange_max", chk.euler_lagrange->max);
    }
  }
  emit(doc, out);
  return 0;
}

struct BvpOpts {
  GridOpts grid;
  DensityOpts density;
  std::string kind = "dirichlet";
  std::string g_src, nu_src, sigma_src;
  std::string eta_src, zeta_src;
  double bound_k = 0.0;
  double probe_top = 16.0;
  int probe_samples = 256;
  SolveConfig cfg;
};

void add_bvp_opts(CLI::App* cmd, BvpOpts& o) {
  add_grid_opts(cmd, o.grid);
  add_density_opts(cmd, o.density);
  cmd->add_option("--kind", o.kind, "dirichlet or neumann");
  cmd->add_option("--g", o.g_src, "Dirichlet boundary potential (expression in x)");
  cmd->add_option("--nu", o.nu_src, "Neumann normal flux (expression in x)");
  cmd->add_option("--sigma", o.sigma_src, "Source 1-form (form expression)");
  cmd->add_option("--eta", o.eta_src, "Frobenius coefficient eta (expression in t)");
  cmd->add_option("--zeta", o.zeta_src, "Coefficient zeta (expression in x, t)");
  cmd->add_option("--bound-k", o.bound_k, "Admissibility bound k in (0,1]");
  cmd->add_option("--probe-top", o.probe_top, "Upper end of the admissibility probe");
  cmd->add_option("--probe-samples", o.probe_samples, "Admissibility probe samples");
  cmd->add_option("--tol", o.cfg.tol, "Nonlinear residual tolerance");
  cmd->add_option("--max-iters", o.cfg.max_iters, "Outer iteration cap");
  cmd->add_option("--margin", o.cfg.sonic_margin, "Sonic guard margin");
  cmd->add_flag("--no-newton", [&o](std::int64_t) { o.cfg.newton = false; },
                "Disable the Newton refinement phase");
}

struct BvpSetup {
  Grid grid;
  AdmissibleSystem system;
  BoundaryData data;
};

BvpSetup bvp_setup(const BvpOpts& o) {
  BvpSetup s{o.grid.build(), {}, {}};
  if (s.grid.dim() != 2) throw config_error("bvp: --dim must be 2");

  ScalarFn eta = ScalarFn::zero();
  if (!o.eta_src.empty()) {
    const expr::Expr e = expr::Expr::parse(o.eta_src);
    if (e.uses_x()) throw config_error("--eta must depend on t only");
    eta = expr::scalar_fn_of_t(e);
  }
  SpaceTimeFn zeta = [](const Point&, double) { return 0.0; };
  if (!o.zeta_src.empty()) zeta = expr::space_time_fn(expr::Expr::parse(o.zeta_src));

  AdmissibilityProbe probe;
  probe.t_hi = o.probe_top;
  probe.t_samples = o.probe_samples;
  probe.bound_k = o.bound_k;
  probe.points.clear();
  // probe the corners and the center of the box
  const auto& b0 = s.grid.bounds(0);
  const auto& b1 = s.grid.bounds(1);
  for (double x0 : {b0.lo, 0.5 * (b0.lo + b0.hi), b0.hi})
    for (double x1 : {b1.lo, 0.5 * (b1.lo + b1.hi), b1.hi})
      probe.points.push_back(Point{x0, x1, 0, 0});

  auto res = check_admissible(o.density.build(), zeta, eta, probe);
  if (!res.ok)
    throw precondition_error("bvp: system not admissible (condition " +
                             std::string(1, res.failure.condition) + " at t = " +
                             fmt17(res.failure.t) + "): " + res.failure.message);
  s.system = std::move(res.system);

  s.data.kind = o.kind == "neumann" ? BoundaryKind::neumann : BoundaryKind::dirichlet;
  if (o.kind != "neumann" && o.kind != "dirichlet")
    throw config_error("--kind must be dirichlet or neumann");
  if (s.data.kind == BoundaryKind::dirichlet) {
    if (o.g_src.empty()) throw config_error("dirichlet: --g is required");
    s.data.g = expr::space_fn(expr::Expr::parse(o.g_src));
  } else {
    if (o.nu_src.empty()) throw config_error("neumann: --nu is required");
    s.data.nu = expr::space_fn(expr::Expr::parse(o.nu_src));
  }
  if (!o.sigma_src.empty()) {
    const auto fe = expr::FormExpr::parse(o.sigma_src, 2);
    if (fe.degree() != 1) throw config_error("--sigma must be a 1-form");
    s.data.sigma = std::array<SpaceFn, 2>{form_component_fn(fe, s.grid, 0b01),
                                          form_component_fn(fe, s.grid, 0b10)};
  }
  return s;
}

void report_bvp_solution(ReportDoc& doc, const BvpSolution& sol,
                         const AdmissibleSystem& sys, const BoundaryData& data) {
  doc.set("iterations", sol.report.iterations);
  doc.set("residual", sol.report.residual);
  doc.set("max_q", sol.report.max_q);
  doc.set("Q_s", sys.Q_s);
  doc.set("subsonic", sol.report.subsonic);
  doc.set("method", sol.report.method);
  doc.set("energy_monotone", sol.report.energy_monotone);
  doc.set_list("energy_history", sol.report.energy_history);
  const BvpResiduals ver = verify_bvp(sol, sys, data);
  doc.set("verify.codiff_l2", ver.codiff.l2);
  doc.set("verify.codiff_interior_l2", ver.codiff_interior.l2);
  doc.set("verify.frobenius_l2", ver.frobenius.l2);
  doc.set("verify.frobenius_interior_l2", ver.frobenius_interior.l2);
  doc.set("verify.trace_defect", ver.trace_defect);
  doc.set("verify.flux_defect", ver.flux_defect);
  doc.set("verify.pullback_defect", ver.pullback_defect);
}

void dump_bvp_csv(const std::string& path, const BvpSolution& sol) {
  std::vector<FieldColumn> cols;
  cols.push_back({"u", sol.u.values()});
  append_form_columns(sol.w0, "w0", cols);
  append_form_columns(sol.w, "w", cols);
  cols.push_back({"Q", qnorm(sol.w).values()});
  write_field_csv(path, sol.grid, cols);
}

int run_bvp_solve(const BvpOpts& o, const OutputOpts& out) {
  const BvpSetup s = bvp_setup(o);
  const BvpSolution sol = solve_bvp(s.system, s.data, s.grid, o.cfg);
  ReportDoc doc;
  doc.set("command", std::string("bvp-solve"));
  doc.set("kind", o.kind);
  report_bvp_solution(doc, sol, s.system, s.data);
  emit(doc, out);
  if (!out.out_csv.empty()) dump_bvp_csv(out.out_csv, sol);
  return 0;
}

int run_bvp_continue(const BvpOpts& o, std::vector<double> tau_range, int tau_steps,
                     const OutputOpts& out) {
  const BvpSetup s = bvp_setup(o);
  std::vector<double> taus;
  for (int i = 1; i <= tau_steps; ++i)
    taus.push_back(tau_range[0] +
                   (tau_range[1] - tau_range[0]) * i / static_cast<double>(tau_steps));
  const ContinuationResult res = continuation(s.system, s.data, taus, s.grid, o.cfg);

  ReportDoc doc;
  doc.set("command", std::string("bvp-continue"));
  doc.set("kind", o.kind);
  doc.set("Q_s", s.system.Q_s);
  doc.set("sonic_tripped", res.report.sonic_tripped);
  if (res.report.tau_s) doc.set("tau_s", *res.report.tau_s);
  doc.set("steps", res.report.path.size());
  for (std::size_t i = 0; i < res.report.path.size(); ++i) {
    const auto& e = res.report.path[i];
    const std::string p = "step_" + std::to_string(i + 1);
    doc.set(p + ".tau", e.tau);
    doc.set(p + ".tripped", e.tripped);
    if (!e.tripped) {
      doc.set(p + ".max_q", e.max_q);
      doc.set(p + ".residual", e.residual);
      doc.set(p + ".iterations", e.iterations);
      doc.set(p + ".step_diff", e.step_diff);
    }
  }
  emit(doc, out);
  if (!out.out_csv.empty() && res.last_subsonic)
    dump_bvp_csv(out.out_csv, *res.last_subsonic);
  return res.report.sonic_tripped ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nlhodge: construct, transform, and verify solutions of "
               "quasilinear Hodge systems"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value config file");

  int exit_code = 0;
  std::function<void()> job;  // set by the chosen subcommand, run once after parse

  // density-classify
  {
    auto* cmd = app.add_subcommand("density-classify",
                                   "Partition [lo,hi] into monotone branches");
    cmd->configurable();
    cmd->fallthrough();
    auto dopt = std::make_shared<DensityOpts>();
    auto interval = std::make_shared<std::vector<double>>();
    auto samples = std::make_shared<int>(256);
    auto out = std::make_shared<OutputOpts>();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--interval", *interval, "Probe interval LO HI")
        ->expected(2)
        ->required();
    cmd->add_option("--samples", *samples, "Number of probe samples");
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_density_classify(*dopt, *interval, *samples, *out); };
    });
  }

  // density-dual
  {
    auto* cmd = app.add_subcommand("density-dual",
                                   "Construct the dual density on a branch");
    cmd->configurable();
    cmd->fallthrough();
    auto dopt = std::make_shared<DensityOpts>();
    auto interval = std::make_shared<std::vector<double>>();
    auto samples = std::make_shared<int>(64);
    auto out = std::make_shared<OutputOpts>();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--interval", *interval, "Branch interval LO HI")
        ->expected(2)
        ->required();
    cmd->add_option("--samples", *samples, "Sampling resolution");
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_density_dual(*dopt, *interval, *samples, *out); };
    });
  }

  // density-invert
  {
    auto* cmd = app.add_subcommand("density-invert", "Invert phi on a branch");
    cmd->configurable();
    cmd->fallthrough();
    auto dopt = std::make_shared<DensityOpts>();
    auto interval = std::make_shared<std::vector<double>>();
    auto r = std::make_shared<double>(0.0);
    auto out = std::make_shared<OutputOpts>();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--branch", *interval, "Branch interval LO HI")
        ->expected(2)
        ->required();
    cmd->add_option("--r", *r, "Value to invert")->required();
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_density_invert(*dopt, *interval, *r, *out); };
    });
  }

  // construct
  {
    auto* cmd = app.add_subcommand("construct",
                                   "Build a solution from a stream form");
    cmd->configurable();
    cmd->fallthrough();
    auto gopt = std::make_shared<GridOpts>();
    auto dopt = std::make_shared<DensityOpts>();
    auto stream = std::make_shared<std::string>();
    auto closed = std::make_shared<std::string>();
    auto interval = std::make_shared<std::vector<double>>();
    auto sign = std::make_shared<std::string>();
    auto out = std::make_shared<OutputOpts>();
    add_grid_opts(cmd, *gopt);
    add_density_opts(cmd, *dopt);
    cmd->add_option("--stream", *stream, "Stream potential (form expression)");
    cmd->add_option("--stream-closed", *closed, "Closed form supplied directly");
    cmd->add_option("--branch", *interval, "Branch interval LO HI")->expected(2);
    cmd->add_option("--sign", *sign, "+ or - (Born-Infeld families)");
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_construct(*gopt, *dopt, *stream, *closed, *interval, *sign, *out); };
    });
  }

  // verify
  {
    auto* cmd = app.add_subcommand("verify", "Verify a field dump against a system");
    cmd->configurable();
    cmd->fallthrough();
    auto input = std::make_shared<std::string>();
    auto dopt = std::make_shared<DensityOpts>();
    auto gamma = std::make_shared<std::string>();
    auto sigma = std::make_shared<std::string>();
    auto interval = std::make_shared<std::vector<double>>();
    auto out = std::make_shared<OutputOpts>();
    cmd->add_option("--input", *input, "CSV field dump")->required();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--gamma", *gamma, "Frobenius coefficient (form expression)");
    cmd->add_option("--sigma", *sigma, "Right-hand coefficient (form expression)");
    cmd->add_option("--branch", *interval, "Branch for sonic proximity")->expected(2);
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_verify(*input, *dopt, *gamma, *sigma, *interval, *out); };
    });
  }

  // transform
  {
    auto* cmd = app.add_subcommand("transform",
                                   "Dual or conformal transform of a field dump");
    cmd->configurable();
    cmd->fallthrough();
    auto kind = std::make_shared<std::string>();
    auto direction = std::make_shared<std::string>("forward");
    auto input = std::make_shared<std::string>();
    auto dopt = std::make_shared<DensityOpts>();
    auto eta = std::make_shared<std::string>();
    auto interval = std::make_shared<std::vector<double>>();
    auto out = std::make_shared<OutputOpts>();
    cmd->add_option("--kind", *kind, "dual, conformal_t, conformal_x")->required();
    cmd->add_option("--direction", *direction, "forward or inverse");
    cmd->add_option("--input", *input, "CSV field dump")->required();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--eta", *eta, "Coefficient eta (expression)");
    cmd->add_option("--interval", *interval, "Branch / eta-map interval LO HI")
        ->expected(2);
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_transform(*kind, *direction, *input, *dopt, *eta, *interval, *out); };
    });
  }

  // aharmonic-check
  {
    auto* cmd = app.add_subcommand("aharmonic-check",
                                   "Conjugate-pair and Frobenius defects");
    cmd->configurable();
    cmd->fallthrough();
    auto gopt = std::make_shared<GridOpts>();
    auto dopt = std::make_shared<DensityOpts>();
    auto u = std::make_shared<std::string>();
    auto v = std::make_shared<std::string>();
    auto interval = std::make_shared<std::vector<double>>();
    auto out = std::make_shared<OutputOpts>();
    add_grid_opts(cmd, *gopt);
    add_density_opts(cmd, *dopt);
    cmd->add_option("--u", *u, "Potential (form expression, degree k-1)")->required();
    cmd->add_option("--v", *v, "Conjugate potential (degree k+1)");
    cmd->add_option("--branch", *interval, "Branch interval LO HI")
        ->expected(2)
        ->required();
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_aharmonic(*gopt, *dopt, *u, *v, *interval, *out); };
    });
  }

  // energy
  {
    auto* cmd = app.add_subcommand("energy",
                                   "Nonlinear energy and its variational check");
    cmd->configurable();
    cmd->fallthrough();
    auto input = std::make_shared<std::string>();
    auto dopt = std::make_shared<DensityOpts>();
    auto phi = std::make_shared<std::string>();
    auto gamma = std::make_shared<std::string>();
    auto out = std::make_shared<OutputOpts>();
    cmd->add_option("--input", *input, "CSV field dump")->required();
    add_density_opts(cmd, *dopt);
    cmd->add_option("--phi", *phi, "Test form for the gradient check");
    cmd->add_option("--gamma", *gamma, "Coefficient for the Euler-Lagrange residual");
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_energy(*input, *dopt, *phi, *gamma, *out); };
    });
  }

  // bvp-solve
  {
    auto* cmd = app.add_subcommand("bvp-solve",
                                   "Subsonic Dirichlet/Neumann solve on a rectangle");
    cmd->configurable();
    cmd->fallthrough();
    auto opts = std::make_shared<BvpOpts>();
    auto out = std::make_shared<OutputOpts>();
    add_bvp_opts(cmd, *opts);
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_bvp_solve(*opts, *out); };
    });
  }

  // bvp-continue
  {
    auto* cmd = app.add_subcommand("bvp-continue",
                                   "Amplitude continuation with sonic bracketing");
    cmd->configurable();
    cmd->fallthrough();
    auto opts = std::make_shared<BvpOpts>();
    auto tau_range = std::make_shared<std::vector<double>>(std::vector<double>{0.0, 1.0});
    auto tau_steps = std::make_shared<int>(10);
    auto out = std::make_shared<OutputOpts>();
    add_bvp_opts(cmd, *opts);
    cmd->add_option("--tau-range", *tau_range, "Amplitude range LO HI")->expected(2);
    cmd->add_option("--tau-steps", *tau_steps, "Number of amplitude steps");
    add_output_opts(cmd, *out);
    cmd->callback([=, &job, &exit_code] {
      job = [=, &exit_code] { exit_code = run_bvp_continue(*opts, *tau_range, *tau_steps, *out); };
    });
  }

  try {
    app.parse(argc, argv);
    if (job) job();
    return exit_code;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  } catch (const sonic_error& e) {
    std::fprintf(stderr, "sonic guard: %s\n", e.what());
    return 2;
  } catch (const convergence_error& e) {
    std::fprintf(stderr, "non-convergence: %s\n", e.what());
    return 3;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 4;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
