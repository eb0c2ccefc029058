// Experiment driver: reproducible runs from flags or a key=value config file,
// JSON/CSV outputs plus a manifest echoing the resolved configuration.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dipolerg/bounds.hpp"
#include "dipolerg/frd.hpp"
#include "dipolerg/gas.hpp"
#include "dipolerg/kernels.hpp"
#include "dipolerg/polymers.hpp"
#include "dipolerg/rgflow.hpp"

using nlohmann::json;
using namespace dipolerg;

namespace {

std::vector<std::vector<std::int64_t>> parse_points(const std::string& s, int d) {
  std::vector<std::vector<std::int64_t>> out;
  std::stringstream ss(s);
  std::string group;
  while (std::getline(ss, group, ';')) {
    std::vector<std::int64_t> pt;
    std::stringstream gs(group);
    std::string tok;
    while (std::getline(gs, tok, ',')) pt.push_back(std::stoll(tok));
    if (static_cast<int>(pt.size()) != d) throw Error("point with wrong dimension: " + group);
    out.push_back(pt);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

std::vector<std::int64_t> parse_longs(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoll(tok));
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open output file " + path);
  f << text;
}

// manifest carries the full resolved config and the code version; the
// timestamp lives only here so result files stay byte-comparable
void write_manifest(const std::string& out, const std::string& command,
                    const json& config) {
  json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  m["timestamp"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  write_text(out + ".manifest.json", m.dump(2) + "\n");
}

struct CommonOpts {
  std::string out = "result";
  std::string format = "json";
  int threads = 1;
};

int status_exit(RunStatus s) {
  return s == RunStatus::ok || s == RunStatus::warning ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dipole-gas renormalization-group laboratory"};
  app.set_config("--config", "", "key=value configuration file (flags override)");
  app.require_subcommand(1);
  app.fallthrough();

  CommonOpts common;
  app.add_option("--out", common.out, "output path stem");
  app.add_option("--format", common.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", common.threads, "worker thread cap");

  // ---- green --------------------------------------------------------------
  auto* green = app.add_subcommand("green", "lattice Coulomb kernel");
  int g_d = 3, g_radius = 0;
  double g_tol = 1e-6;
  std::string g_site;
  green->add_option("--d", g_d);
  green->add_option("--radius", g_radius, "build a table of this radius");
  green->add_option("--tol", g_tol);
  green->add_option("--x", g_site, "single site, e.g. 1,0,0");

  // ---- frd ----------------------------------------------------------------
  auto* frd = app.add_subcommand("frd", "finite-range decomposition");
  int f_d = 3, f_L = 5, f_J = 3, f_tail = 12;
  double f_kappa = 1.0;
  frd->add_option("--d", f_d);
  frd->add_option("--L", f_L);
  frd->add_option("--J", f_J);
  frd->add_option("--kappa", f_kappa);
  frd->add_option("--tail-radius", f_tail);

  // ---- polymers -------------------------------------------------------------
  auto* poly = app.add_subcommand("polymers", "small-set combinatorics");
  int p_d = 2;
  std::string p_adj = "sup", p_ls = "2,4,8";
  std::uint64_t p_budget = 200'000'000;
  poly->add_option("--d", p_d);
  poly->add_option("--adjacency", p_adj)->check(CLI::IsMember({"sup", "face"}));
  poly->add_option("--l", p_ls, "comma list of l arguments for n3");
  poly->add_option("--budget", p_budget, "enumeration node budget");

  // ---- gas ------------------------------------------------------------------
  auto* gas = app.add_subcommand("gas", "dipole gas checks");
  gas->require_subcommand(1);
  auto* ks = gas->add_subcommand("kac-siegert", "order-n coefficient identity");
  int k_d = 3, k_side = 4, k_n = 1, k_order = 12;
  double k_tol = 1e-6;
  ks->add_option("--d", k_d);
  ks->add_option("--side", k_side);
  ks->add_option("--n", k_n);
  ks->add_option("--order", k_order);
  ks->add_option("--tol", k_tol);

  auto* part = gas->add_subcommand("partition", "quadratic partition function");
  int q_d = 1;
  std::int64_t q_side = 81;
  double q_sigma = 0.5;
  bool q_mc = false;
  long q_samples = 20000;
  std::uint64_t q_seed = 1;
  part->add_option("--d", q_d);
  part->add_option("--side", q_side);
  part->add_option("--sigma", q_sigma);
  part->add_flag("--mc", q_mc, "add the Monte Carlo cross-check path");
  part->add_option("--samples", q_samples);
  part->add_option("--seed", q_seed);

  auto* corr = gas->add_subcommand("correlate", "truncated correlation");
  CorrelationRequest creq;
  std::string c_points = "0,0,0;2,0,0", c_dirs = "1,1", c_variant = "linear";
  corr->add_option("--d", creq.d);
  corr->add_option("--side", creq.side);
  corr->add_option("--z", creq.z);
  corr->add_option("--sigma", creq.sigma);
  corr->add_option("--points", c_points);
  corr->add_option("--dirs", c_dirs);
  corr->add_option("--variant", c_variant)->check(CLI::IsMember({"linear", "exp"}));
  corr->add_option("--samples", creq.samples);
  corr->add_option("--seed", creq.seed);
  corr->add_option("--chains", creq.chains);

  auto* dec = gas->add_subcommand("decay", "gradient-gradient decay fit");
  CorrelationRequest dreq;
  int dec_dir = 1;
  std::string dec_seps = "1,2,4,8";
  dec->add_option("--d", dreq.d);
  dec->add_option("--side", dreq.side);
  dec->add_option("--z", dreq.z);
  dec->add_option("--sigma", dreq.sigma);
  dec->add_option("--direction", dec_dir);
  dec->add_option("--separations", dec_seps);
  dec->add_option("--samples", dreq.samples);
  dec->add_option("--seed", dreq.seed);
  dec->add_option("--chains", dreq.chains);

  // ---- flow -----------------------------------------------------------------
  auto* flow = app.add_subcommand("flow", "truncated RG flow");
  flow->require_subcommand(1);
  int w_d = 3, w_L = 3, w_J = 5;
  double w_z = 5e-4, w_sigma0 = 0.0, w_kappa = 1.0, w_tol = 1e-10;
  std::string w_points, w_dirs;
  FlowOptions wopts;
  bool w_stable = false;
  for (auto* sub : {flow->add_subcommand("run", "run a flow trajectory"),
                    flow->add_subcommand("stable-sigma", "shoot for the stable manifold"),
                    flow->add_subcommand("fF", "scale-resolved correlation series")}) {
    sub->set_help_flag("--help", "print help");
    sub->add_option("--d", w_d);
    sub->add_option("--L", w_L);
    sub->add_option("--J", w_J);
    sub->add_option("--z", w_z);
    sub->add_option("--sigma0", w_sigma0);
    sub->add_option("--kappa", w_kappa);
    sub->add_option("--tol", w_tol);
    sub->add_option("--points", w_points);
    sub->add_option("--dirs", w_dirs);
    sub->add_option("--A", wopts.A);
    sub->add_option("--h", wopts.h);
    sub->add_option("--r", wopts.r);
    sub->add_flag("--stable", w_stable, "use stable_sigma(z) as sigma0");
  }

  // ---- bounds ---------------------------------------------------------------
  auto* bounds = app.add_subcommand("bounds", "rigorous-constants ledger");
  bounds->require_subcommand(1);
  LedgerInput lin;
  double b_mu = 0.5, b_eta = 1.5, b_tail_tol = 1e-6;
  int b_N = 20;
  for (auto* sub : {bounds->add_subcommand("ledger", "evaluate the contraction ledger"),
                    bounds->add_subcommand("min-L", "smallest admissible odd L"),
                    bounds->add_subcommand("min-A", "smallest admissible A"),
                    bounds->add_subcommand("tail", "final-integral tail estimate")}) {
    sub->set_help_flag("--help", "print help");
    sub->add_option("--d", lin.d);
    sub->add_option("--L", lin.L);
    sub->add_option("--A", lin.A);
    sub->add_option("--h", lin.h);
    sub->add_option("--q", lin.q);
    sub->add_option("--m", lin.m);
    sub->add_option("--r", lin.r);
    sub->add_option("--eps", lin.eps);
    sub->add_option("--c", lin.c);
    sub->add_option("--mu", b_mu);
    sub->add_option("--eta", b_eta);
    sub->add_option("--N", b_N);
    sub->add_option("--tail-tol", b_tail_tol);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // validation failure
  }

  try {
    json config;
    for (const auto* opt : app.get_options()) {
      if (!opt->get_lnames().empty() && opt->count() > 0) {
        config[opt->get_lnames()[0]] = opt->as<std::string>();
      }
    }

    if (*green) {
      json res;
      if (!g_site.empty()) {
        std::vector<int> x;
        for (const auto v : parse_ints(g_site)) x.push_back(v);
        res["x"] = x;
        res["value"] = coulomb(g_d, x, g_tol);
        write_text(common.out + ".json", res.dump(2) + "\n");
      } else {
        const int radius = g_radius > 0 ? g_radius : 6;
        const Kernel k = build_coulomb_table(g_d, radius, common.threads);
        std::ostringstream csv;
        k.for_each_site([&](const std::vector<int>& x, double v) {
          for (int a = 0; a < g_d; ++a) csv << x[a] << ",";
          csv << std::setprecision(17) << v << "\n";
        });
        write_text(common.out + ".csv", csv.str());
        res["radius"] = radius;
        res["origin_value"] = k.at(std::vector<int>(g_d, 0));
        write_text(common.out + ".json", res.dump(2) + "\n");
      }
      write_manifest(common.out, "green", config);
      return 0;
    }

    if (*frd) {
      FrdOptions opts;
      opts.kappa = f_kappa;
      opts.tail_radius = f_tail;
      opts.threads = common.threads;
      const RangeDecomposition rd = build_decomposition(f_d, f_L, f_J, opts);
      json res;
      res["d"] = f_d;
      res["L"] = f_L;
      res["J"] = f_J;
      res["status"] = to_string(rd.status);
      res["symbol_residual"] = rd.symbol_residual;
      res["min_symbol"] = rd.min_symbol;
      json scales = json::array();
      for (int j = 1; j <= f_J; ++j) {
        json s;
        s["j"] = j;
        s["cheb_order"] = rd.cutoffs[j - 1].cheb_order;
        s["lambda_c"] = rd.cutoffs[j - 1].lambda_c;
        s["tabulated"] = rd.has_table(j);
        scales.push_back(s);
      }
      for (const auto& alpha : std::vector<std::vector<int>>{{}, {1}, {1, 2}}) {
        const DecayReport rep = verify_decay(rd, alpha);
        json ja = json::array();
        for (const auto& sd : rep.scales) ja.push_back(sd.constant);
        res["decay_constants"][std::to_string(alpha.size())] = ja;
        res["decay_spread"][std::to_string(alpha.size())] = rep.spread;
      }
      res["scales"] = scales;
      write_text(common.out + ".json", res.dump(2) + "\n");
      for (int j = 1; j <= f_J; ++j) {
        if (!rd.has_table(j)) continue;
        std::ostringstream csv;
        rd.gammas[j - 1].for_each_site([&](const std::vector<int>& x, double v) {
          if (v == 0.0) return;
          for (int a = 0; a < f_d; ++a) csv << x[a] << ",";
          csv << std::setprecision(17) << v << "\n";
        });
        write_text(common.out + ".gamma" + std::to_string(j) + ".csv", csv.str());
      }
      write_manifest(common.out, "frd", config);
      return status_exit(rd.status);
    }

    if (*poly) {
      EnumerationBudget budget;
      budget.max_nodes = p_budget;
      const Adjacency adj = p_adj == "sup" ? Adjacency::sup : Adjacency::face;
      const NConstants nc = p_d == 3 && adj == Adjacency::sup
                                ? n_constants_cached(p_d, adj)
                                : n_constants(p_d, adj, 0, budget);
      std::ostringstream csv;
      csv << "d,n1,n2";
      const auto ls = parse_doubles(p_ls);
      for (const auto l : ls) csv << ",n3(" << l << ")";
      csv << "\n" << p_d << "," << std::setprecision(17) << nc.n1 << "," << nc.n2;
      for (const auto l : ls) csv << "," << nc.n3(l);
      csv << "\n";
      write_text(common.out + ".csv", csv.str());
      write_manifest(common.out, "polymers", config);
      return 0;
    }

    if (*gas) {
      if (*ks) {
        const KacSiegertResult r = kac_siegert_check(k_d, k_side, k_n, k_order);
        json res;
        res["n"] = k_n;
        res["grand_route"] = r.grand_route;
        res["field_route"] = r.field_route;
        res["rel_diff"] = r.rel_diff;
        res["tol"] = k_tol;
        res["pass"] = r.rel_diff <= k_tol;
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "gas kac-siegert", config);
        return r.rel_diff <= k_tol ? 0 : 3;
      }
      if (*part) {
        Torus geom(q_d, q_side);
        json res;
        res["volume"] = geom.volume();
        res["sigma"] = q_sigma;
        res["exact"] = quadratic_partition_exact(geom.volume(), q_sigma);
        RunStatus st = RunStatus::ok;
        if (q_mc) {
          const MCEstimate mc = quadratic_partition_mc(geom, q_sigma, q_seed, q_samples);
          res["mc"] = {{"mean", mc.mean},
                       {"stderr", mc.std_error},
                       {"samples", mc.samples},
                       {"seed", mc.seed},
                       {"ess_fraction", mc.ess_fraction},
                       {"status", to_string(mc.status)}};
          st = mc.status;
        }
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "gas partition", config);
        return status_exit(st);
      }
      if (*corr) {
        creq.field.variant = c_variant == "linear" ? FieldVariant::gradient_linear
                                                   : FieldVariant::gradient_exponential;
        creq.field.points = parse_points(c_points, creq.d);
        creq.field.dirs = parse_ints(c_dirs);
        const CumulantResult r = mc_truncated_correlation(creq);
        json res;
        res["observable"] = c_variant == "linear" ? "grad_phi" : "exp_i_grad_phi";
        res["points"] = json::parse("[]");
        for (const auto& p : creq.field.points) res["points"].push_back(p);
        res["dirs"] = creq.field.dirs;
        res["estimate"] = {{"re", r.value.real()}, {"im", r.value.imag()}};
        res["stderr"] = r.std_error;
        res["samples"] = r.samples;
        res["seed"] = r.seed;
        res["ess_fraction"] = r.ess_fraction;
        res["status"] = to_string(r.status);
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "gas correlate", config);
        return status_exit(r.status);
      }
      if (*dec) {
        const DecayFitResult r =
            decay_exponent_fit(dreq, dec_dir, parse_longs(dec_seps));
        std::ostringstream csv;
        csv << "separation,value,stderr\n";
        for (const auto& p : r.points) {
          csv << p.separation << "," << std::setprecision(17) << p.value << ","
              << p.std_error << "\n";
        }
        write_text(common.out + ".csv", csv.str());
        json res;
        res["exponent"] = r.exponent;
        res["fit_stderr"] = r.fit_std_error;
        res["eta"] = r.eta;
        res["eta_minus_eps_floor"] = r.eta - 0.1;
        res["status"] = to_string(r.status);
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "gas decay", config);
        return status_exit(r.status);
      }
    }

    if (*flow) {
      FrdOptions fopts;
      fopts.kappa = w_kappa;
      fopts.threads = common.threads;
      fopts.tail_radius = 6;
      const RangeDecomposition rd = build_decomposition(w_d, w_L, w_J, fopts);
      wopts.threads = common.threads;
      ExternalFieldSpec field;
      if (!w_points.empty()) {
        field.variant = FieldVariant::gradient_linear;
        field.points = parse_points(w_points, w_d);
        field.dirs = parse_ints(w_dirs);
      }
      const bool want_stable = w_stable;
      double sigma0 = w_sigma0;
      ShootingResult shoot;
      if (want_stable || flow->get_subcommands()[0]->get_name() == "stable-sigma") {
        shoot = stable_sigma(w_z, field, rd, w_J, w_tol, wopts);
        sigma0 = shoot.sigma0;
      }
      const std::string sub = flow->get_subcommands()[0]->get_name();
      if (sub == "stable-sigma") {
        json res;
        res["z"] = w_z;
        res["sigma0"] = shoot.sigma0;
        res["final_sigma"] = shoot.final_sigma;
        res["evaluations"] = shoot.evaluations;
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "flow stable-sigma", config);
        return status_exit(shoot.status);
      }
      const Trajectory traj = run_flow(w_z, sigma0, field, rd, w_J, wopts);
      if (sub == "run") {
        std::ostringstream lines;  // JSON lines per scale
        FFSeries ff;
        const bool with_f = field.variant != FieldVariant::none;
        if (with_f) ff = accumulate_fF(traj, field, w_L, wopts.adj);
        std::complex<double> partial = 0.0;
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
          json line;
          line["j"] = traj.states[i].j;
          line["sigma"] = traj.states[i].sigma;
          line["norm_K"] = traj.states[i].norm_k;
          line["ratio"] = i > 0 ? traj.ratios[i - 1] : 0.0;
          line["E_bulk"] = traj.states[i].bulk_energy_per_block;
          if (with_f && i > 0) {
            partial += ff.per_scale[i - 1];
            line["fF_partial"] = {{"re", partial.real()}, {"im", partial.imag()}};
          }
          lines << line.dump() << "\n";
        }
        write_text(common.out + ".jsonl", lines.str());
        json res;
        res["geometric_ok"] = traj.geometric_ok;
        res["status"] = to_string(traj.status);
        write_text(common.out + ".json", res.dump(2) + "\n");
        write_manifest(common.out, "flow run", config);
        return status_exit(traj.status);
      }
      // fF
      const FFSeries ff = accumulate_fF(traj, field, w_L, wopts.adj);
      json res;
      res["j0"] = ff.j0;
      res["total"] = {{"re", ff.total.real()}, {"im", ff.total.imag()}};
      json per = json::array();
      for (const auto& c : ff.per_scale) {
        per.push_back({{"re", c.real()}, {"im", c.imag()}});
      }
      res["per_scale"] = per;
      write_text(common.out + ".json", res.dump(2) + "\n");
      write_manifest(common.out, "flow fF", config);
      return status_exit(traj.status);
    }

    if (*bounds) {
      const std::string sub = bounds->get_subcommands()[0]->get_name();
      json res;
      if (sub == "ledger") {
        const LedgerReport rep = contraction_ledger(lin);
        res = {{"n1", rep.n1},
               {"n2", rep.n2},
               {"L2_bulk", rep.l2_bulk},
               {"L2_f", rep.l2_f},
               {"L3_prime", rep.l3_prime},
               {"L4", rep.l4},
               {"Delta", rep.delta},
               {"L1_estimate",
                std::isfinite(rep.l1_estimate) ? json(rep.l1_estimate) : json("inf")},
               {"L1_status", to_string(rep.l1_status)},
               {"total_explicit", rep.total_explicit},
               {"admissible", rep.admissible}};
        std::cout << "operator      bound\n";
        std::cout << "L2 (bulk)     " << rep.l2_bulk << "\n";
        std::cout << "L2 (f part)   " << rep.l2_f << "\n";
        std::cout << "L3'           " << rep.l3_prime << "\n";
        std::cout << "L4 (j=0)      " << rep.l4 << "\n";
        std::cout << "Delta         " << rep.delta << "\n";
        std::cout << "L1 estimate   " << rep.l1_estimate << "\n";
        std::cout << "total         " << rep.total << (rep.admissible ? "  (<= 1/4)" : "")
                  << "\n";
      } else if (sub == "min-L") {
        res["min_L"] = min_scale_for_contraction(lin.d, b_mu, lin);
      } else if (sub == "min-A") {
        res["min_A"] = min_A_for_correlation(lin.d, b_eta, lin.eps, lin.r, lin.adj);
      } else {
        res["tail_bound"] = tail_bound(lin.h, lin.A, lin.c, lin.r, b_N);
        res["N_for_tol"] = tail_scale_for(lin.h, lin.A, lin.c, lin.r, b_tail_tol);
      }
      write_text(common.out + ".json", res.dump(2) + "\n");
      write_manifest(common.out, "bounds " + sub, config);
      return 0;
    }
  } catch (const BudgetExceededError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
