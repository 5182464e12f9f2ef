#pragma once

// Command-line front end. Every command resolves its configuration
// (defaults <- config file <- flags), runs, and only then writes its
// artifacts, so a failing run leaves nothing behind.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "geoconc/bounds.hpp"
#include "geoconc/coupling.hpp"
#include "geoconc/experiments.hpp"
#include "geoconc/io.hpp"
#include "geoconc/martingale.hpp"

namespace geoconc::cli {

using io::Json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kWarning = 4 };

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned jobs = 1;
  bool strict = false;
  // Per-command parameters; empty means "config file or default".
  std::optional<std::size_t> n, samples, x, s_max, horizon;
  std::optional<double> kappa, M0, L;
  std::optional<std::string> init, f;
  std::vector<double> t_grid;
};

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  bool warning = false;
  std::string warning_text;
  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
};

struct Context {
  std::string command;
  Json resolved;
  std::string digest;
  io::ChainConfig chain{two_state_kernel(0.5, 0.5), "", 0};  // replaced by resolve()
  std::optional<MinorizationCertificate> cert;
  Json functional_json;
  Json params;
  std::uint64_t seed = 1;
  unsigned jobs = 1;

  Json meta() const {
    return {{"tool", io::kToolName}, {"version", io::kVersion}, {"config_digest", digest},
            {"command", command}};
  }
  Json stamp(Json body) const {
    body["meta"] = meta();
    return body;
  }
  io::CsvWriter csv(const std::vector<std::string>& header) const { return {digest, header}; }
  const MinorizationCertificate& certificate() const { return *cert; }
  std::size_t param_size(const char* key) const { return params.at(key).get<std::size_t>(); }
  double param_double(const char* key) const { return params.at(key).get<double>(); }
};

namespace detail {

inline Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
    return j;
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

template <typename T>
void set_param(Json& params, const Json& file_params, const char* key, const std::optional<T>& flag,
               const T& fallback) {
  if (flag) {
    params[key] = *flag;
  } else if (file_params.contains(key) && !file_params.at(key).is_null()) {
    try {
      params[key] = file_params.at(key).get<T>();
    } catch (const Json::exception&) {
      throw InvalidArgument(std::string("params: field '") + key + "' has the wrong type");
    }
  } else {
    params[key] = fallback;
  }
}

inline std::vector<double> default_t_grid(double sum_L_sq) {
  std::vector<double> t;
  const double scale = std::sqrt(sum_L_sq);
  for (int k = 0; k <= 8; ++k) t.push_back(0.25 * k * scale);
  return t;
}

inline Distribution init_law(const Context& ctx, const std::string& init, std::size_t x) {
  const std::size_t S = ctx.chain.kernel.size();
  if (init == "stationary") return stationary(ctx.chain.kernel);
  if (init == "point") {
    if (x >= S) throw InvalidArgument("params: x outside the state space");
    return Distribution::point(S, x);
  }
  throw InvalidArgument("params: init must be 'point' or 'stationary'");
}

// Largest horizon <= 6 whose path count stays small.
inline std::size_t enumeration_horizon(std::size_t S) {
  std::size_t n = 1;
  double count = double(S);
  while (n < 6 && count * double(S) <= 2e5) {
    ++n;
    count *= double(S);
  }
  return n;
}

inline void write_files(const std::string& dir, const Artifacts& a) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : a.files) {
    const auto path = std::filesystem::path(dir) / name;
    const auto tmp = std::filesystem::path(dir) / (name + ".tmp");
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw InvalidArgument("cannot write '" + tmp.string() + "'");
      os << content;
    }
    std::filesystem::rename(tmp, path);
  }
}

}  // namespace detail

// --- Commands ---------------------------------------------------------------

inline Artifacts cmd_simulate(const Context& ctx) {
  const auto n = ctx.param_size("n");
  const auto samples = ctx.param_size("samples");
  const auto init = ctx.params.at("init").get<std::string>();
  const auto x = ctx.param_size("x");
  const Distribution mu = detail::init_law(ctx, init, x);
  const auto& P = ctx.chain.kernel;
  std::vector<Trajectory> runs(samples);
  parallel_for(samples, ctx.jobs, [&](std::size_t i) {
    runs[i] = simulate(P, mu, n, derive_seed(ctx.seed, i), init);
  });
  auto csv = ctx.csv({"sample", "t", "state"});
  std::vector<double> occupancy(P.size(), 0.0);
  for (std::size_t i = 0; i < samples; ++i)
    for (std::size_t t = 0; t < n; ++t) {
      csv.row(i, t, runs[i].states[t]);
      occupancy[runs[i].states[t]] += 1.0;
    }
  for (auto& o : occupancy) o /= double(samples * n);
  const Distribution pi = stationary(P);
  Json body = {{"samples", samples},
               {"n", n},
               {"init", init},
               {"occupancy", occupancy},
               {"stationary", pi.weights()},
               {"occupancy_tv_to_stationary", tv_distance(std::span<const double>(occupancy), pi.weights())}};
  Artifacts a;
  a.add("trajectories.csv", csv.str());
  a.add("simulate.json", io::to_json_text(ctx.stamp(body)));
  return a;
}

inline Artifacts cmd_split(const Context& ctx) {
  const auto& cert0 = ctx.certificate();
  const bool skeleton = cert0.m > 1;
  const TransitionKernel P = skeleton ? skeleton_kernel(ctx.chain.kernel, cert0.m) : ctx.chain.kernel;
  const auto cert = skeleton_certificate(cert0);
  const SplitChain chain(P, cert);
  const auto n = ctx.param_size("n");
  const auto init = ctx.params.at("init").get<std::string>();
  const Distribution mu = detail::init_law(ctx, init, ctx.param_size("x"));

  const Matrix full = chain.full_matrix();
  auto mcsv = ctx.csv([&] {
    std::vector<std::string> h{"row"};
    for (std::size_t c = 0; c < 2 * P.size(); ++c)
      h.push_back(std::to_string(c / 2) + (c % 2 ? "H" : "L"));
    return h;
  }());
  for (Eigen::Index r = 0; r < full.rows(); ++r) {
    std::ostringstream line;
    line << (r / 2) << (r % 2 ? "H" : "L");
    for (Eigen::Index c = 0; c < full.cols(); ++c) line << "," << io::format_double(full(r, c));
    mcsv.row_strings({line.str()});
  }

  // First-marginal laws of the split chain against P^n.
  double marginal_err = 0.0;
  RowVector split_law = chain.lift(mu);
  RowVector base = mu.row();
  for (std::size_t k = 0; k <= n; ++k) {
    marginal_err = std::max(marginal_err, (chain.first_marginal(split_law) - base).cwiseAbs().maxCoeff());
    split_law = split_law * full;
    base = base * P.matrix();
  }

  Json residual = Json::array();
  double residual_row_err = 0.0;
  if (cert.delta < 1.0) {
    const auto res = residual_kernel(P, cert);
    for (auto c : cert.C) {
      std::vector<double> row(res.rows.row(c).data(), res.rows.row(c).data() + P.size());
      residual.push_back({{"state", c}, {"row", row}});
      residual_row_err = std::max(residual_row_err, std::abs(res.rows.row(c).sum() - 1.0));
    }
  }

  const auto path = simulate_split(chain, mu, n + 1, ctx.seed);
  auto tcsv = ctx.csv({"t", "state", "level", "atom"});
  for (std::size_t t = 0; t < path.size(); ++t)
    tcsv.row(t, path[t].base, std::string(path[t].level == Level::low ? "low" : "high"),
             chain.is_atom(path[t]));
  const auto returns = atom_return_gaps(path, cert);

  Json body = {{"certificate", io::certificate_json(cert0)},
               {"skeleton", skeleton},
               {"split_states", 2 * P.size()},
               {"compact_states", chain.compact_size()},
               {"residual", residual},
               {"residual_row_sum_max_error", residual_row_err},
               {"marginal_horizon", n},
               {"marginal_max_error", marginal_err},
               {"atom_return_gaps", returns.gaps}};
  Artifacts a;
  a.add("split_matrix.csv", mcsv.str());
  a.add("split_trajectory.csv", tcsv.str());
  a.add("split.json", io::to_json_text(ctx.stamp(body)));
  return a;
}

inline Artifacts cmd_couple(const Context& ctx) {
  const auto& cert = ctx.certificate();
  const auto x = ctx.param_size("x");
  const auto samples = ctx.param_size("samples");
  const double kappa = ctx.param_double("kappa");
  MomentOptions mo;
  mo.jobs = ctx.jobs;
  mo.horizon = ctx.param_size("horizon");
  const auto rep = coupling_moment_mc(ctx.chain.kernel, cert, x, kappa, samples, ctx.seed, mo);

  // Post-tau identity on the same seeds.
  std::vector<char> identity(samples, 1);
  CoupleOptions co;
  co.horizon = mo.horizon;
  parallel_for(samples, ctx.jobs, [&](std::size_t i) {
    if (!rep.taus[i]) return;
    co.record = *rep.taus[i] + 8;
    const auto run = couple(ctx.chain.kernel, cert, x, derive_seed(ctx.seed, i), co);
    for (std::size_t k = *run.tau; k < run.chi.states.size(); ++k)
      if (run.xi.states[k] != run.chi.states[k]) identity[i] = 0;
  });
  std::size_t ok = 0;
  for (char c : identity) ok += c;

  auto csv = ctx.csv({"sample", "tau"});
  for (std::size_t i = 0; i < samples; ++i)
    csv.row(i, rep.taus[i] ? std::to_string(*rep.taus[i]) : std::string());

  Json body = {{"x", x},
               {"kappa", kappa},
               {"samples", samples},
               {"m", cert.m},
               {"estimate", io::number(rep.estimate)},
               {"std_error", io::number(rep.std_error)},
               {"n_exceeded", rep.n_exceeded},
               {"unreliable", rep.unreliable},
               {"post_tau_identity_rate", double(ok) / double(samples)},
               {"exact", rep.exact ? io::number(*rep.exact) : Json()},
               {"kappa_star", rep.kappa_star ? io::number(*rep.kappa_star) : Json()},
               {"pass", rep.pass ? Json(*rep.pass) : Json()}};
  Artifacts a;
  a.add("taus.csv", csv.str());
  a.add("coupling.json", io::to_json_text(ctx.stamp(body)));
  if (rep.unreliable) {
    a.warning = true;
    a.warning_text = "more than 0.1% of coupling runs exceeded the horizon";
  }
  return a;
}

inline Artifacts cmd_estimate_constants(const Context& ctx) {
  const auto& cert = ctx.certificate();
  const auto est = estimate_ledger(ctx.chain.kernel, cert);
  Json body = io::ledger_json(est.ledger);
  body["kappa_coupling"] = est.kappa_coupling;
  body["kappa_coupling_star"] = io::number(est.kappa_coupling_star);
  body["kappa_return_star"] = io::number(est.kappa_return_star);
  body["m"] = est.m;
  body["skeleton"] = est.skeleton;
  body["certificate"] = io::certificate_json(cert);

  // Empirical minimal constants from the exact martingale decomposition.
  const TransitionKernel P = cert.m > 1 ? skeleton_kernel(ctx.chain.kernel, cert.m) : ctx.chain.kernel;
  const auto c1 = skeleton_certificate(cert);
  const std::size_t n_enum = detail::enumeration_horizon(P.size());
  io::ChainConfig enum_chain{P, ctx.chain.type, ctx.chain.s_max};
  const auto fc = io::parse_functional(ctx.functional_json, enum_chain, n_enum);
  Json emp = Json::object();
  if (fc.spec.sum_L_sq() > 0.0) {
    const auto dec = martingale_increments_exact(P, c1, c1.C.front(), fc.spec);
    const auto r = verify_increment_inequalities(dec, est.ledger);
    emp = {{"horizon", n_enum},
           {"x0", c1.C.front()},
           {"functional", fc.kind},
           {"M3", io::number(r.M3_min)},
           {"M3_scaled", io::number(r.M3_min_scaled)},
           {"M4", io::number(r.M4_min)},
           {"M5", io::number(r.M5_min)},
           {"M6", io::number(r.M6_min)},
           {"martingale_defect", r.martingale_defect},
           {"telescoping_defect", r.telescoping_defect},
           {"off_return_defect", r.off_return_defect},
           {"coupling_gap_ratio", io::number(r.coupling_gap_ratio)},
           {"cond_mgf_holds", r.cond_mgf_holds},
           {"cond_mgf_scaled_holds", r.cond_mgf_scaled_holds}};
  }
  body["empirical_min"] = emp;
  Artifacts a;
  a.add("ledger.json", io::to_json_text(ctx.stamp(body)));
  return a;
}

inline Artifacts cmd_concentration(const Context& ctx) {
  const auto& cert = ctx.certificate();
  const auto n = ctx.param_size("n");
  const auto fc = io::parse_functional(ctx.functional_json, ctx.chain, n);
  const auto init = ctx.params.at("init").get<std::string>();
  InitSpec is = init == "stationary" ? InitSpec::stationary() : InitSpec::point(ctx.param_size("x"));
  if (init != "stationary" && init != "point")
    throw InvalidArgument("params: init must be 'point' or 'stationary'");
  ConcentrationOptions opt;
  opt.jobs = ctx.jobs;
  if (!ctx.params.at("M0").is_null()) opt.M0 = ctx.param_double("M0");
  auto grid = ctx.params.at("t_grid").get<std::vector<double>>();
  const auto rep = concentration_experiment(ctx.chain.kernel, cert, fc.spec, is,
                                            ctx.param_size("samples"), grid, ctx.seed, opt);
  auto csv = ctx.csv({"t", "empirical", "stderr", "bound"});
  for (std::size_t k = 0; k < rep.t_grid.size(); ++k)
    csv.row(rep.t_grid[k], rep.empirical[k], rep.std_error[k], rep.bound[k]);
  Json body = {{"n", rep.n},
               {"n_samples", rep.n_samples},
               {"init", rep.init},
               {"functional", fc.kind},
               {"M0_used", rep.M0_used},
               {"M0_source", rep.M0_source},
               {"mean", rep.mean},
               {"mean_exact", rep.mean_exact},
               {"mean_std_error", rep.mean_std_error},
               {"t_grid", rep.t_grid},
               {"t_effective", rep.t_effective},
               {"empirical", rep.empirical},
               {"std_error", rep.std_error},
               {"bound", rep.bound},
               {"mcdiarmid_reference", rep.mcdiarmid},
               {"fitted_M0", rep.fitted_M0},
               {"pass", rep.pass},
               {"resolution_warning", rep.resolution_warning}};
  Artifacts a;
  a.add("tails.csv", csv.str());
  a.add("concentration.json", io::to_json_text(ctx.stamp(body)));
  if (rep.resolution_warning) {
    a.warning = true;
    a.warning_text = "fewer than 10 expected exceedances at the largest t";
  }
  if (!rep.pass && rep.M0_source == "assembled")
    throw NumericError("empirical tail exceeds the assembled bound by more than 3 standard errors");
  return a;
}

inline Artifacts cmd_counterexample(const Context& ctx) {
  const auto f = ctx.params.at("f").get<std::string>();
  const auto cert = counterexample_certificate(named_growth_function(f), f, ctx.param_double("M0"),
                                               ctx.param_double("L"), ctx.param_size("s_max"),
                                               ctx.seed);
  Json body = {{"f", cert.f_description},
               {"M0", cert.M0},
               {"L", cert.L},
               {"N", cert.N},
               {"n", cert.n},
               {"g_N", cert.g_N},
               {"threshold", cert.threshold},
               {"lhs", cert.lhs},
               {"rhs", cert.rhs},
               {"valid", cert.valid()},
               {"pi_truncated", cert.pi_truncated},
               {"s_max", cert.s_max},
               {"descent",
                {{"path", cert.descent.path},
                 {"K", cert.descent.K},
                 {"n_g_N", cert.descent.n_gN},
                 {"deterministic", cert.descent.deterministic},
                 {"holds", cert.descent.holds}}}};
  Artifacts a;
  a.add("certificate.json", io::to_json_text(ctx.stamp(body)));
  return a;
}

inline Artifacts cmd_characterize(const Context& ctx) {
  const auto rep = characterization_experiment(ctx.chain.kernel, ctx.certificate(),
                                               ctx.param_size("n"), ctx.param_size("samples"),
                                               ctx.seed, ctx.jobs);
  auto csv = ctx.csv({"n", "lhs_exact", "visit_tail_exact", "geometric", "rhs", "holds", "lhs_mc",
                      "lhs_mc_se", "visit_tail_mc"});
  for (const auto& r : rep.rows)
    csv.row(r.n, r.lhs_exact, r.visit_tail_exact, r.geometric, r.rhs, r.holds, r.lhs_mc,
            r.lhs_mc_se, r.visit_tail_mc);
  Json body = {{"pi_C", rep.pi_C},
               {"epsilon", rep.epsilon},
               {"delta", rep.delta},
               {"skeleton", rep.skeleton},
               {"all_hold", rep.all_hold},
               {"fitted_kappa", io::number(rep.fitted_kappa)},
               {"kappa_star", io::number(rep.kappa_star)},
               {"atom_kappa_star", io::number(rep.atom_kappa_star)},
               {"atom_test_kappa", rep.atom_test_kappa},
               {"atom_moment", rep.atom_moment},
               {"n_samples", rep.n_samples}};
  Artifacts a;
  a.add("characterization.csv", csv.str());
  a.add("characterization.json", io::to_json_text(ctx.stamp(body)));
  if (!rep.all_hold) throw NumericError("characterization inequality failed on the exact oracle");
  return a;
}

inline Artifacts cmd_oracle(const Context& ctx) {
  const auto& P = ctx.chain.kernel;
  const auto& cert = ctx.certificate();
  const auto x = ctx.param_size("x");
  const auto n = ctx.param_size("n");
  const double kappa = ctx.param_double("kappa");
  const Distribution pi = stationary(P);
  const auto fit = fit_geometric_decay(P, pi);

  Json body = {{"stationary", pi.weights()},
               {"second_eigenvalue_modulus", second_eigenvalue_modulus(P)},
               {"decay_rho", fit.rho},
               {"decay_V", fit.V},
               {"certificate", io::certificate_json(cert)},
               {"delta_max", minorization_delta(P, cert.C, cert.m, cert.nu)}};

  const TransitionKernel Pm = cert.m > 1 ? skeleton_kernel(P, cert.m) : P;
  const auto c1 = skeleton_certificate(cert);
  const CouplingOracle oracle(SplitChain(Pm, c1), stationary(Pm), x);
  const double ks = oracle.kappa_star();
  body["coupling_kappa_star"] = io::number(ks);
  body["coupling_moment"] = kappa < ks ? Json(oracle.moment(kappa)) : Json();
  body["kappa"] = kappa;
  const auto ret = return_moment_sup(Pm, c1.C, 1.0 + 0.5 * (std::min(kappa, 2.0) - 1.0));
  body["return_kappa_star"] = io::number(ret.kappa_star);
  body["skeleton"] = cert.m > 1;

  const auto law = oracle.law(n);
  const auto surv = oracle.survival(n);
  auto csv = ctx.csv({"k", "pmf", "survival"});
  for (std::size_t k = 0; k <= n; ++k) csv.row(k, law.pmf[k], surv[k]);
  body["coupling_tail_beyond_cutoff"] = law.tail;

  Artifacts a;
  a.add("coupling_law.csv", csv.str());
  a.add("oracle.json", io::to_json_text(ctx.stamp(body)));
  return a;
}

// --- Driver -----------------------------------------------------------------

inline Context resolve(const std::string& command, const Flags& flags) {
  const Json file = detail::load_config(flags.config_path);
  const Json file_params = file.value("params", Json::object());
  if (!file_params.is_object()) throw InvalidArgument("params: expected an object");

  Context ctx;
  ctx.command = command;
  ctx.jobs = std::max(1u, flags.jobs);
  if (flags.seed) {
    ctx.seed = *flags.seed;
  } else if (file.contains("seed")) {
    try {
      ctx.seed = file.at("seed").get<std::uint64_t>();
    } catch (const Json::exception&) {
      throw InvalidArgument("config: seed must be an unsigned integer");
    }
  }

  Json chain_json = file.value("chain", Json());
  if (command == "counterexample") {
    std::size_t s_max = 30;
    if (chain_json.is_object() && chain_json.value("type", "") == "ladder")
      s_max = chain_json.value("s_max", s_max);
    if (flags.s_max) s_max = *flags.s_max;
    else if (file_params.contains("s_max")) s_max = file_params.at("s_max").get<std::size_t>();
    chain_json = {{"type", "ladder"}, {"s_max", s_max}};
  }
  if (chain_json.is_null()) chain_json = io::default_chain_json();
  ctx.chain = io::parse_chain(chain_json);
  ctx.functional_json = file.value("functional", Json());

  Json params = Json::object();
  using detail::set_param;
  const std::size_t S = ctx.chain.kernel.size();
  const Json cert_json = file.value("certificate", Json());
  if (command != "counterexample") ctx.cert = io::parse_certificate(cert_json, ctx.chain);
  const std::size_t x_default = ctx.cert ? ctx.cert->C.front() : 0;
  const std::optional<std::vector<double>> tg =
      flags.t_grid.empty() ? std::nullopt : std::optional(flags.t_grid);

  if (command == "simulate") {
    set_param<std::size_t>(params, file_params, "n", flags.n, 100);
    set_param<std::size_t>(params, file_params, "samples", flags.samples, 1);
    set_param<std::string>(params, file_params, "init", flags.init, "point");
    set_param<std::size_t>(params, file_params, "x", flags.x, x_default);
  } else if (command == "split") {
    set_param<std::size_t>(params, file_params, "n", flags.n, 50);
    set_param<std::string>(params, file_params, "init", flags.init, "point");
    set_param<std::size_t>(params, file_params, "x", flags.x, x_default);
  } else if (command == "couple") {
    set_param<std::size_t>(params, file_params, "x", flags.x, x_default);
    set_param<std::size_t>(params, file_params, "samples", flags.samples, 10000);
    set_param<double>(params, file_params, "kappa", flags.kappa, 1.1);
    set_param<std::size_t>(params, file_params, "horizon", flags.horizon, 1000000);
  } else if (command == "estimate-constants") {
    // no parameters beyond chain, certificate and functional
  } else if (command == "concentration-test") {
    set_param<std::size_t>(params, file_params, "n", flags.n, 100);
    set_param<std::size_t>(params, file_params, "samples", flags.samples, 100000);
    set_param<std::string>(params, file_params, "init", flags.init, "point");
    set_param<std::size_t>(params, file_params, "x", flags.x, x_default);
    if (flags.M0) params["M0"] = *flags.M0;
    else params["M0"] = file_params.value("M0", Json());
    const auto fc = io::parse_functional(ctx.functional_json, ctx.chain, params["n"].get<std::size_t>());
    set_param<std::vector<double>>(params, file_params, "t_grid", tg,
                                   detail::default_t_grid(fc.spec.sum_L_sq()));
  } else if (command == "counterexample") {
    set_param<std::string>(params, file_params, "f", flags.f, "sqrt_log");
    set_param<double>(params, file_params, "M0", flags.M0, 1.0);
    set_param<double>(params, file_params, "L", flags.L, 1.0);
    params["s_max"] = ctx.chain.s_max;
  } else if (command == "characterize") {
    set_param<std::size_t>(params, file_params, "n", flags.n, 200);
    set_param<std::size_t>(params, file_params, "samples", flags.samples, 10000);
  } else if (command == "oracle") {
    set_param<std::size_t>(params, file_params, "x", flags.x, x_default);
    set_param<std::size_t>(params, file_params, "n", flags.n, 200);
    set_param<double>(params, file_params, "kappa", flags.kappa, 1.1);
  } else {
    throw InvalidArgument("unknown command '" + command + "'");
  }
  if (params.contains("x") && params["x"].get<std::size_t>() >= S)
    throw InvalidArgument("params: x outside the state space");
  ctx.params = params;

  ctx.resolved = {{"command", command},
                  {"seed", ctx.seed},
                  {"chain", chain_json},
                  {"certificate", ctx.cert ? io::certificate_json(*ctx.cert) : Json()},
                  {"functional", ctx.functional_json},
                  {"params", params}};
  ctx.digest = io::config_digest(ctx.resolved);
  return ctx;
}

inline Artifacts dispatch(const Context& ctx) {
  const auto& c = ctx.command;
  if (c == "simulate") return cmd_simulate(ctx);
  if (c == "split") return cmd_split(ctx);
  if (c == "couple") return cmd_couple(ctx);
  if (c == "estimate-constants") return cmd_estimate_constants(ctx);
  if (c == "concentration-test") return cmd_concentration(ctx);
  if (c == "counterexample") return cmd_counterexample(ctx);
  if (c == "characterize") return cmd_characterize(ctx);
  if (c == "oracle") return cmd_oracle(ctx);
  throw InvalidArgument("unknown command '" + c + "'");
}

inline void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << io::to_json_text(Json{{"error", kind}, {"message", message}});
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Concentration diagnostics for geometrically ergodic Markov chains", "geoconc"};
  Flags flags;
  app.add_option("--config", flags.config_path, "JSON run configuration");
  app.add_option("--seed", flags.seed, "top-level seed");
  app.add_option("--out", flags.out_dir, "artifact directory");
  app.add_option("--jobs", flags.jobs, "worker threads (artifacts do not depend on it)");
  app.add_flag("--strict", flags.strict, "exit 4 on resolution warnings");
  app.add_option("--n", flags.n, "horizon");
  app.add_option("--samples", flags.samples, "Monte Carlo sample count");
  app.add_option("--t-grid", flags.t_grid, "deviation levels t")->delimiter(',');
  app.add_option("--kappa", flags.kappa, "moment base");
  app.add_option("--x", flags.x, "start state (0-based)");
  app.add_option("--M0", flags.M0, "concentration constant");
  app.add_option("--L", flags.L, "oscillation constant");
  app.add_option("--s-max", flags.s_max, "ladder truncation");
  app.add_option("--init", flags.init, "point or stationary");
  app.add_option("--f", flags.f, "growth function (sqrt_log, log1p)");
  app.add_option("--horizon", flags.horizon, "coupling horizon");
  app.require_subcommand(1);
  app.fallthrough();
  for (const char* name : {"simulate", "split", "couple", "estimate-constants",
                           "concentration-test", "counterexample", "characterize", "oracle"})
    app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "config", e.what());
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const Context ctx = resolve(command, flags);
    Artifacts a = dispatch(ctx);
    const std::string config_text =
        io::to_json_text(Json{{"meta", ctx.meta()}, {"config", ctx.resolved}});
    a.files.insert(a.files.begin(), {"config.json", config_text});
    detail::write_files(flags.out_dir, a);
    out << config_text;
    for (const auto& f : a.files) out << "wrote " << (std::filesystem::path(flags.out_dir) / f.first).string() << "\n";
    if (a.warning) {
      err << io::to_json_text(Json{{"warning", a.warning_text}});
      if (flags.strict) return kWarning;
    }
    return kOk;
  } catch (const Error& e) {
    const bool numeric = e.category() == ErrorCategory::numeric;
    report_error(err, numeric ? "numeric" : "config", e.what());
    return numeric ? kNumericError : kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, "config", e.what());
    return kConfigError;
  }
}

}  // namespace geoconc::cli
