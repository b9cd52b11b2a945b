#include "warpex/cli.hpp"

#include <chrono>
#include <map>
#include <iostream>
#include <numeric>
#include <random>

#include <CLI11.hpp>

#include "warpex/empirics.hpp"
#include "warpex/error.hpp"
#include "warpex/fit.hpp"
#include "warpex/io.hpp"
#include "warpex/loss.hpp"
#include "warpex/parallel.hpp"
#include "warpex/simulate.hpp"
#include "warpex/tailmargins.hpp"

namespace warpex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed view of a config object that reports problems by JSON pointer.
class Cfg {
 public:
  Cfg(const json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
    if (!j_.is_object()) throw ValidationError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_[key].is_null(); }
  std::string at(const std::string& key) const { return ptr_ + "/" + key; }
  const json& raw(const std::string& key) const {
    if (!has(key)) throw ValidationError(at(key) + ": required field is missing");
    return j_[key];
  }
  Cfg child(const std::string& key) const { return Cfg(raw(key), at(key)); }

  double num(const std::string& key, std::optional<double> def = std::nullopt) const {
    if (!has(key)) return require(key, def);
    if (!j_[key].is_number()) throw ValidationError(at(key) + ": expected a number");
    return j_[key].get<double>();
  }
  long integer(const std::string& key, std::optional<long> def = std::nullopt) const {
    if (!has(key)) return require(key, def);
    if (!j_[key].is_number_integer()) throw ValidationError(at(key) + ": expected an integer");
    return j_[key].get<long>();
  }
  std::string str(const std::string& key, std::optional<std::string> def = std::nullopt) const {
    if (!has(key)) return require(key, def);
    if (!j_[key].is_string()) throw ValidationError(at(key) + ": expected a string");
    return j_[key].get<std::string>();
  }
  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    if (!j_[key].is_boolean()) throw ValidationError(at(key) + ": expected true or false");
    return j_[key].get<bool>();
  }
  double prob(const std::string& key, double def) const {
    const double v = num(key, def);
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(at(key) + ": must lie in [0, 1]");
    return v;
  }
  double positive(const std::string& key, double def) const {
    const double v = num(key, def);
    if (!(v > 0.0)) throw ValidationError(at(key) + ": must be positive");
    return v;
  }

 private:
  template <class T>
  T require(const std::string& key, const std::optional<T>& def) const {
    if (!def) throw ValidationError(at(key) + ": required field is missing");
    return *def;
  }
  std::string where() const { return ptr_.empty() ? "/" : ptr_; }

  const json& j_;
  std::string ptr_;
};

// Shared bookkeeping for one command: resolves input paths and writes the manifest.
class Run {
 public:
  Run(std::string command, const CommandOptions& opt)
      : command_(std::move(command)), opt_(opt), start_(std::chrono::steady_clock::now()) {
    set_thread_count(opt.threads);
    fs::create_directories(opt.out);
  }

  fs::path input(const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !opt_.config_path.empty()) path = opt_.config_path.parent_path() / path;
    if (!fs::exists(path)) throw ValidationError("input file not found: " + path.string());
    path = fs::weakly_canonical(path);
    inputs_[path.string()] = sha256_file(path);
    return path;
  }

  std::uint64_t seed(const Cfg& cfg) const {
    if (opt_.seed) return *opt_.seed;
    const long s = cfg.integer("seed", 0L);
    if (s < 0) throw ValidationError("/seed: must be nonnegative");
    return static_cast<std::uint64_t>(s);
  }

  fs::path out(const std::string& name) const { return opt_.out / name; }

  void finish(std::uint64_t seed, const json& extra = json::object()) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m{{"command", command_},
           {"config_hash", sha256_hex(opt_.config.dump())},
           {"inputs", inputs_},
           {"seed", seed},
           {"threads", opt_.threads},
           {"version", kVersion},
           {"wall_clock_seconds", secs}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_json(out("manifest.json"), m);
  }

 private:
  std::string command_;
  const CommandOptions& opt_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{seed, purpose};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kSites = 1, kTruth = 2, kSimulate = 3, kSplit = 4, kInit = 5, kBootstrap = 6 };

json record_to_json(const AffineRecord& r) { return json{{"shift", r.shift}, {"scale", r.scale}}; }

AffineRecord record_from_json(const json& j) {
  AffineRecord r;
  r.shift = j.at("shift").get<std::array<double, 2>>();
  r.scale = j.at("scale").get<std::array<double, 2>>();
  return r;
}

std::vector<std::string> labels_of(const LocationSet& s) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < s.size(); ++i) out.push_back(s.label(i));
  return out;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
  return out;
}

// ---- simulate ---------------------------------------------------------------

json simulate_preset(const std::string& name) {
  std::string arch = name;
  if (arch.rfind("table1-", 0) == 0) arch = arch.substr(7);
  architecture_preset(arch);  // validates the name
  return json{{"sites", {{"grid", {101, 101}}, {"sample", 200}}},
              {"psi", {{"phi", 0.2}, {"kappa", 1.0}}},
              {"truth", arch},
              {"risk", {{"risk", "site"}, {"site", 0}}},
              {"n", 5000}};
}

LocationSet simulation_sites(const Cfg& cfg, Run& run, std::uint64_t seed) {
  const json& s = cfg.raw("sites");
  if (s.is_string()) return read_sites_csv(run.input(s.get<std::string>()));
  const Cfg sc(s, cfg.at("sites"));
  const json& g = sc.raw("grid");
  if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() || !g[1].is_number_integer() ||
      g[0].get<int>() < 2 || g[1].get<int>() < 2)
    throw ValidationError(sc.at("grid") + ": expected [nx, ny] with both >= 2");
  LocationSet grid = unit_grid(g[0].get<int>(), g[1].get<int>());
  if (!sc.has("sample")) return grid;
  const long d = sc.integer("sample");
  if (d < 1 || d > grid.size()) throw ValidationError(sc.at("sample") + ": must lie in [1, grid size]");
  std::vector<Eigen::Index> idx(static_cast<size_t>(grid.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto rng = stream(seed, kSites);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<size_t>(d));
  std::sort(idx.begin(), idx.end());
  return grid.subset(idx);
}

VariogramParams psi_from(const Cfg& c) {
  VariogramParams p{c.positive("phi", 1.0), c.num("kappa", 1.0)};
  if (!(p.kappa > 0.0 && p.kappa < 2.0)) throw ValidationError(c.at("kappa") + ": must lie in (0, 2)");
  return p;
}

}  // namespace

void cmd_simulate(const CommandOptions& opt) {
  Run run("simulate", opt);
  json merged = opt.config;
  if (merged.contains("preset")) {
    if (!merged["preset"].is_string()) throw ValidationError("/preset: expected a string");
    json base = simulate_preset(merged["preset"].get<std::string>());
    for (const auto& [k, v] : merged.items()) base[k] = v;
    merged = base;
  }
  const Cfg cfg(merged, "");
  const std::uint64_t seed = run.seed(cfg);

  SimConfig sc;
  const LocationSet sites = simulation_sites(cfg, run, seed);
  sc.sites = sites.coords;
  sc.psi = psi_from(cfg.child("psi"));
  sc.risk = risk_from_json(cfg.raw("risk"), "/risk");
  sc.risk.validate(sites.size());
  const long n = cfg.integer("n");
  if (n < 1) throw ValidationError("/n: must be >= 1");
  sc.n = n;
  sc.seed = seed;
  sc.max_rejection_tries = cfg.integer("max_rejection_tries", 1'000'000L);
  if (cfg.has("truth")) {
    const json& t = cfg.raw("truth");
    if (t.is_string()) {
      auto rng = stream(seed, kTruth);
      sc.truth = random_constrained_stack(architecture_preset(t.get<std::string>()), rng,
                                          cfg.positive("truth_spread", 1.0));
    } else {
      sc.truth = stack_from_json(t, "/truth");
    }
  }

  const SimResult res = simulate(sc);
  write_matrix_csv(run.out("data.csv"), res.z, labels_of(sites));
  write_sites_csv(run.out("sites.csv"), sites, &res.warped);
  if (sc.truth) write_json(run.out("truth.json"), stack_to_json(*sc.truth));
  json side{{"config", merged},
            {"seed", seed},
            {"n", sc.n},
            {"sites", sites.size()},
            {"risk", risk_to_json(sc.risk)},
            {"acceptance_rate", res.acceptance_rate},
            {"proposals", res.proposals}};
  write_json(run.out("simulation.json"), side);
  run.finish(seed);
}

// ---- margins ----------------------------------------------------------------

void cmd_margins(const CommandOptions& opt) {
  Run run("margins", opt);
  const Cfg cfg(opt.config, "");
  const std::uint64_t seed = run.seed(cfg);
  const LongSeries ls = read_long_csv(run.input(cfg.str("data")));
  const double q = cfg.prob("quantile", 0.95);

  CsvTable params;
  params.header = {"site_id", "u", "tau", "xi", "ks_dist", "ks_p"};
  json failed = json::array();
  std::vector<std::string> ok_sites;
  std::vector<std::vector<double>> columns;
  double xi_sum = 0.0;
  int ks_reject = 0;
  for (size_t s = 0; s < ls.sites.size(); ++s) {
    try {
      const SiteMargin m = fit_site_margin(ls.values[s], q);
      params.rows.push_back({ls.sites[s], format_double(m.u), format_double(m.gpd.tau), format_double(m.gpd.xi),
                             format_double(m.gpd.ks_distance), format_double(m.gpd.ks_p)});
      ok_sites.push_back(ls.sites[s]);
      columns.push_back(to_pareto_scale(ls.values[s], m));
      xi_sum += m.gpd.xi;
      ks_reject += m.gpd.ks_p < 0.05 ? 1 : 0;
    } catch (const std::exception& e) {
      failed.push_back({{"site_id", ls.sites[s]}, {"reason", e.what()}});
    }
  }
  write_csv(run.out("gpd.csv"), params);
  if (!columns.empty()) {
    const size_t t = columns.front().size();
    for (size_t s = 0; s < columns.size(); ++s)
      if (columns[s].size() != t)
        throw ValidationError("site '" + ok_sites[s] + "' has " + std::to_string(columns[s].size()) +
                              " observations, expected " + std::to_string(t) + " for the wide matrix");
    Eigen::MatrixXd wide(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(columns.size()));
    for (size_t s = 0; s < columns.size(); ++s)
      wide.col(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::VectorXd>(columns[s].data(), static_cast<Eigen::Index>(t));
    write_matrix_csv(run.out("pareto.csv"), wide, ok_sites);
  }
  json summary{{"quantile", q},
               {"sites", ls.sites.size()},
               {"fitted", ok_sites.size()},
               {"failed", failed},
               {"ks_rejections_5pct", ks_reject},
               {"beta", ok_sites.empty() ? json(nullptr) : json(xi_sum / static_cast<double>(ok_sites.size()))}};
  write_json(run.out("summary.json"), summary);
  run.finish(seed);
}

// ---- fit --------------------------------------------------------------------

namespace {

FitConfig fit_config_from(const Cfg& cfg) {
  FitConfig fc;
  fc.loss = loss_kind_from_string(cfg.str("loss", "gsm"));
  fc.risk = risk_from_json(cfg.has("risk") ? cfg.raw("risk") : json{{"risk", "sum"}}, "/risk");
  fc.weight_scheme = weight_scheme_from_string(cfg.str("weight_scheme", "one_over_two_minus_pi"));
  fc.reg.alpha = cfg.num("alpha", 1.0);
  if (fc.reg.alpha < 0.0) throw ValidationError("/alpha: must be nonnegative");
  if (cfg.has("optimizer")) {
    const Cfg o = cfg.child("optimizer");
    fc.lr_psi = o.positive("lr_psi", fc.lr_psi);
    fc.lr_warp = o.positive("lr_warp", fc.lr_warp);
    fc.max_steps = static_cast<int>(o.integer("max_steps", fc.max_steps));
    if (fc.max_steps < 0) throw ValidationError(o.at("max_steps") + ": must be >= 0");
    fc.patience = static_cast<int>(o.integer("patience", fc.patience));
    if (fc.patience < 1) throw ValidationError(o.at("patience") + ": must be >= 1");
    fc.rel_tol = o.num("rel_tol", fc.rel_tol);
  }
  if (cfg.has("init")) {
    const Cfg i = cfg.child("init");
    fc.init_psi = psi_from(i);
    if (!(fc.init_psi.kappa > kKappaMin && fc.init_psi.kappa < kKappaMax))
      throw ValidationError(i.at("kappa") + ": must lie in (0.05, 1.95)");
  }
  return fc;
}

json fit_config_to_json(const FitConfig& fc) {
  return json{{"loss", to_string(fc.loss)},
              {"risk", risk_to_json(fc.risk)},
              {"weight_scheme", to_string(fc.weight_scheme)},
              {"alpha", fc.reg.alpha},
              {"optimizer",
               {{"lr_psi", fc.lr_psi},
                {"lr_warp", fc.lr_warp},
                {"max_steps", fc.max_steps},
                {"patience", fc.patience},
                {"rel_tol", fc.rel_tol}}},
              {"init", {{"phi", fc.init_psi.phi}, {"kappa", fc.init_psi.kappa}}}};
}

// Everything a downstream command needs to rebuild the training state of a fit.
struct FitContext {
  json fit;
  FitConfig cfg;
  VariogramParams psi;
  WarpStack stack;
  LocationSet sites;  // all sites, original coordinates
  Eigen::MatrixXd data;
  std::vector<Eigen::Index> train, test;
  AffineRecord record;
  ExceedanceSet events;  // training events

  Coords scaled(const std::vector<Eigen::Index>& idx) const { return record.apply(sites.subset(idx).coords); }
  Coords warped(const std::vector<Eigen::Index>& idx) const {
    const Coords train_scaled = scaled(train);
    if (stack.empty()) return scaled(idx);
    const WarpResult wr = stack.apply(train_scaled);
    return stack.apply(scaled(idx), wr.records);
  }
};

void check_data_sites(const Eigen::MatrixXd& data, const std::vector<std::string>& header, const LocationSet& sites) {
  if (data.cols() != sites.size())
    throw ValidationError("data has " + std::to_string(data.cols()) + " columns but the sites file lists " +
                          std::to_string(sites.size()) + " sites");
  if (data.rows() == 0) throw ValidationError("data file has no rows");
  (void)header;
}

FitContext load_fit(Run& run, const std::string& path) {
  FitContext c;
  c.fit = read_json(run.input(path));
  try {
    const json& meta = c.fit.at("metadata");
    c.cfg = fit_config_from(Cfg(meta.at("config"), "/metadata/config"));
    c.psi = {c.fit.at("psi").at("phi").get<double>(), c.fit.at("psi").at("kappa").get<double>()};
    c.stack = stack_from_json(c.fit.at("stack"), "/stack");
    c.sites = read_sites_csv(run.input(meta.at("sites").get<std::string>()));
    std::vector<std::string> header;
    c.data = read_matrix_csv(run.input(meta.at("data").get<std::string>()), &header);
    check_data_sites(c.data, header, c.sites);
    c.train = meta.at("train").get<std::vector<Eigen::Index>>();
    c.test = meta.at("test").get<std::vector<Eigen::Index>>();
    c.record = record_from_json(meta.at("site_record"));
    c.events = select_exceedances(take_columns(c.data, c.train), c.cfg.risk, meta.at("u").get<double>(),
                                  meta.at("u_marg").get<double>());
    c.events.q_risk = meta.at("q_risk").get<double>();
    c.events.q_marg = meta.at("q_marg").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed fit file (" + e.what() + ")");
  }
  return c;
}

}  // namespace

void cmd_fit(const CommandOptions& opt) {
  Run run("fit", opt);
  const Cfg cfg(opt.config, "");
  const std::uint64_t seed = run.seed(cfg);
  const fs::path data_path = run.input(cfg.str("data"));
  const fs::path sites_path = run.input(cfg.str("sites"));
  const LocationSet sites = read_sites_csv(sites_path);
  std::vector<std::string> header;
  const Eigen::MatrixXd data = read_matrix_csv(data_path, &header);
  check_data_sites(data, header, sites);

  const FitConfig fc = fit_config_from(cfg);
  const auto arch = architecture_from_json(cfg.has("architecture") ? cfg.raw("architecture") : json("arch0"),
                                           "/architecture");
  const RescalePolicy policy = rescale_policy_from_string(cfg.str("rescale_policy", "after_each_unit"));
  const double q_risk = cfg.prob("q_risk", 0.95);
  const double q_marg = cfg.prob("q_marg", 0.95);

  std::vector<Eigen::Index> train(static_cast<size_t>(sites.size())), test;
  std::iota(train.begin(), train.end(), Eigen::Index{0});
  if (cfg.has("split")) {
    const Cfg sp = cfg.child("split");
    const long ntr = sp.integer("train");
    const long nte = sp.integer("test", 0L);
    if (ntr < 2 || nte < 0 || ntr + nte > sites.size())
      throw ValidationError(sp.at("train") + ": need train >= 2 and train + test <= number of sites");
    auto rng = stream(seed, kSplit);
    std::shuffle(train.begin(), train.end(), rng);
    test.assign(train.begin() + ntr, train.begin() + ntr + nte);
    train.resize(static_cast<size_t>(ntr));
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
  }
  fc.risk.validate(static_cast<Eigen::Index>(train.size()));

  const auto [scaled, record] = rescale_unit_square(sites.subset(train));
  const ExceedanceSet ex = extract_exceedances(take_columns(data, train), fc.risk, q_risk, q_marg);
  auto rng = stream(seed, kInit);
  const WarpStack init = build_identity_stack(arch, rng, cfg.num("mt_noise", 1e-3), policy);
  const FitResult res = fit(FitData::for_events(scaled.coords, ex, fc), init, fc);

  const Coords warped = res.stack.empty() ? scaled.coords : res.stack.apply(scaled.coords).warped;
  json meta{{"config", fit_config_to_json(fc)},
            {"architecture", architecture_to_json(arch)},
            {"rescale_policy", to_string(policy)},
            {"data", data_path.string()},
            {"sites", sites_path.string()},
            {"train", train},
            {"test", test},
            {"site_record", record_to_json(record)},
            {"anchor_site", sites.label(train.front())},
            {"u", ex.u},
            {"u_marg", ex.u_marg},
            {"q_risk", q_risk},
            {"q_marg", q_marg},
            {"quantile_type", 7},
            {"n_exceedances", ex.count()},
            {"seed", seed}};
  json out{{"psi", {{"phi", res.psi.phi}, {"kappa", res.psi.kappa}}},
           {"stack", stack_to_json(res.stack)},
           {"loss", res.loss},
           {"converged", res.converged},
           {"steps", res.steps},
           {"rejected_steps", res.rejected_steps},
           {"metadata", meta}};
  write_json(run.out("fit.json"), out);
  write_sites_csv(run.out("warped.csv"), scaled, &warped);
  CsvTable trace;
  trace.header = {"step", "block", "loss", "penalty"};
  for (const auto& t : res.trace)
    trace.rows.push_back({std::to_string(t.step), to_string(t.block), format_double(t.loss), format_double(t.penalty)});
  write_csv(run.out("trace.csv"), trace);
  run.finish(seed, {{"loss", to_string(fc.loss)}});
}

// ---- evaluate ---------------------------------------------------------------

namespace {

void write_cep_distance(const fs::path& path, const CepDistanceTable& t, const LocationSet& sites,
                        const std::vector<Eigen::Index>& idx) {
  CsvTable csv;
  csv.header = {"i", "j", "distance", "pi_hat", "pi_model"};
  for (const auto& r : t.rows)
    csv.rows.push_back({sites.label(idx[static_cast<size_t>(r.i)]), sites.label(idx[static_cast<size_t>(r.j)]),
                        format_double(r.distance), format_double(r.pi_hat), format_double(r.pi_model)});
  write_csv(path, csv);
}

RiskSpec subset_risk(RiskSpec r, Eigen::Index dim) {
  if (r.kind == RiskKind::Site && r.site_index >= dim) r.site_index = 0;
  return r;
}

}  // namespace

void cmd_evaluate(const CommandOptions& opt) {
  Run run("evaluate", opt);
  const Cfg cfg(opt.config, "");
  const std::uint64_t seed = run.seed(cfg);
  const FitContext c = load_fit(run, cfg.str("fit"));
  const std::string set = cfg.str("set", "test");
  if (set != "test" && set != "train") throw ValidationError("/set: expected test or train");
  const std::vector<Eigen::Index>& idx = set == "test" ? c.test : c.train;
  if (idx.size() < 2) throw ValidationError("evaluate: the " + set + " set has fewer than two sites");

  const Eigen::MatrixXd x = take_columns(c.data, idx);
  const RiskSpec risk = subset_risk(c.cfg.risk, static_cast<Eigen::Index>(idx.size()));
  const ExceedanceSet ex = select_exceedances(x, risk, c.events.u, c.events.u_marg);
  if (ex.count() == 0) throw ValidationError("evaluate: no r-exceedances on the " + set + " sites");
  const CepMatrix cep = empirical_cep(ex, c.cfg.weight_scheme);
  const Coords original = c.scaled(idx);
  const Coords warped = c.warped(idx);

  const Eigen::MatrixXd model = fitted_cep(c.psi, WarpStack{}, warped);
  double se = 0.0;
  for (Eigen::Index i = 0; i < cep.dim(); ++i)
    for (Eigen::Index j = i + 1; j < cep.dim(); ++j)
      if (cep.valid(i, j)) se += (cep.pi(i, j) - model(i, j)) * (cep.pi(i, j) - model(i, j));
  const double gs =
      gsm_loss(c.psi, WarpStack{}, warped, GsmEvents::prepare(ex.z, risk), false, Regularizer{0.0}).value;

  const CepDistanceTable t_orig = cep_vs_distance(cep, original, c.psi);
  const CepDistanceTable t_warp = cep_vs_distance(cep, warped, c.psi);
  write_cep_distance(run.out("cep_distance_original.csv"), t_orig, c.sites, idx);
  write_cep_distance(run.out("cep_distance_warped.csv"), t_warp, c.sites, idx);
  json metrics{{"set", set},
               {"sites", idx.size()},
               {"events", ex.count()},
               {"valid_pairs", cep.valid_pairs()},
               {"se", se},
               {"gs", gs},
               {"mean_abs_diff_original", t_orig.mean_abs_diff},
               {"mean_abs_diff_warped", t_warp.mean_abs_diff}};
  write_json(run.out("metrics.json"), metrics);
  run.finish(seed);
}

// ---- bootstrap --------------------------------------------------------------

void cmd_bootstrap(const CommandOptions& opt) {
  Run run("bootstrap", opt);
  const Cfg cfg(opt.config, "");
  const std::uint64_t seed = run.seed(cfg);
  const FitContext c = load_fit(run, cfg.str("fit"));
  BootstrapConfig bc;
  bc.replicates = static_cast<int>(cfg.integer("replicates", 30L));
  if (bc.replicates < 2) throw ValidationError("/replicates: must be >= 2");
  bc.mode = bootstrap_mode_from_string(cfg.str("mode", "fixed_warping"));
  bc.same_resample = cfg.flag("same_resample", false);
  {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(kBootstrap)};
    std::uint32_t v[2];
    seq.generate(v, v + 2);
    bc.seed = (static_cast<std::uint64_t>(v[0]) << 32) | v[1];
  }
  FitResult baseline;
  baseline.psi = c.psi;
  baseline.stack = c.stack;
  const BootstrapResult br = bootstrap(c.events, c.scaled(c.train), baseline, c.cfg, bc);

  json psi = json::array();
  for (const auto& p : br.psi) psi.push_back({{"phi", p.phi}, {"kappa", p.kappa}});
  CsvTable sd;
  sd.header = {"i", "j", "sd"};
  for (Eigen::Index i = 0; i < br.cep_sd.rows(); ++i)
    for (Eigen::Index j = i + 1; j < br.cep_sd.cols(); ++j)
      sd.rows.push_back({c.sites.label(c.train[static_cast<size_t>(i)]), c.sites.label(c.train[static_cast<size_t>(j)]),
                         format_double(br.cep_sd(i, j))});
  write_csv(run.out("cep_sd.csv"), sd);
  write_json(run.out("bootstrap.json"), {{"mode", to_string(br.mode)},
                                         {"replicates", bc.replicates},
                                         {"failures", br.failures},
                                         {"failure_messages", br.failure_messages},
                                         {"psi", psi},
                                         {"psi_sd", {{"phi", br.psi_sd[0]}, {"kappa", br.psi_sd[1]}}}});
  run.finish(seed, {{"mode", to_string(br.mode)}, {"replicates", bc.replicates}});
}

// ---- export -----------------------------------------------------------------

void cmd_export(const CommandOptions& opt) {
  Run run("export", opt);
  const Cfg cfg(opt.config, "");
  const std::uint64_t seed = run.seed(cfg);
  const FitContext c = load_fit(run, cfg.str("fit"));
  const CepMatrix cep = empirical_cep(c.events, c.cfg.weight_scheme);
  CsvTable csv;
  csv.header = {"i", "j", "pi_hat", "weight", "n_joint", "n_marg"};
  const Coords original = c.scaled(c.train);
  const Coords warped = c.warped(c.train);
  CsvTable dist;
  dist.header = {"i", "j", "d_original", "d_warped", "pi_hat", "pi_model"};
  for (Eigen::Index i = 0; i < cep.dim(); ++i)
    for (Eigen::Index j = i + 1; j < cep.dim(); ++j) {
      if (!cep.valid(i, j)) continue;
      const std::string a = c.sites.label(c.train[static_cast<size_t>(i)]);
      const std::string b = c.sites.label(c.train[static_cast<size_t>(j)]);
      csv.rows.push_back({a, b, format_double(cep.pi(i, j)), format_double(cep.weight(i, j)),
                          std::to_string(cep.n_joint(i, j)), format_double(0.5 * (cep.n_marg[i] + cep.n_marg[j]))});
      const double dw = (warped.row(i) - warped.row(j)).norm();
      dist.rows.push_back({a, b, format_double((original.row(i) - original.row(j)).norm()), format_double(dw),
                           format_double(cep.pi(i, j)), format_double(theoretical_cep(semivariogram(dw, c.psi)))});
    }
  write_csv(run.out("cep.csv"), csv);
  write_csv(run.out("cep_distance.csv"), dist);
  write_sites_csv(run.out("warped_sites.csv"), c.sites.subset(c.train), &warped);
  if (cfg.has("sites")) {
    // Extra sites are mapped with the training rescale and warp records.
    const LocationSet extra = read_sites_csv(run.input(cfg.str("sites")));
    const Coords scaled = c.record.apply(extra.coords);
    Coords w = scaled;
    if (!c.stack.empty()) w = c.stack.apply(scaled, c.stack.apply(original).records);
    write_sites_csv(run.out("warped_extra_sites.csv"), extra, &w);
  }
  run.finish(seed);
}

// ---- entry point ------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"Nonstationary spatial extremes via deep compositional warping"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommandOptions opt;
  std::string config, out = "out";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  const std::vector<std::pair<std::string, void (*)(const CommandOptions&)>> commands{
      {"simulate", cmd_simulate}, {"margins", cmd_margins},     {"fit", cmd_fit},
      {"evaluate", cmd_evaluate}, {"bootstrap", cmd_bootstrap}, {"export", cmd_export}};
  const std::map<std::string, std::string> help{
      {"simulate", "Simulate a Brown-Resnick r-Pareto process"},
      {"margins", "Fit GPD margins and transform to the Pareto scale"},
      {"fit", "Fit dependence and warping parameters"},
      {"evaluate", "Square error and gradient score on held-out sites"},
      {"bootstrap", "Nonparametric bootstrap of a fit"},
      {"export", "Export empirical CEPs and warped coordinates"}};
  std::vector<CLI::App*> subs;
  CLI::Option* seed_opt = nullptr;
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    auto* so = sub->add_option("--seed", seed, "Master seed for all randomness");
    sub->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
    sub->add_option("--out", out, "Output directory");
    subs.push_back(sub);
    sub->callback([&, so] { seed_opt = so; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    opt.config_path = config;
    opt.config = read_json(config);
    if (seed_opt && seed_opt->count() > 0) opt.seed = seed;
    opt.threads = threads;
    opt.out = out;
    for (size_t k = 0; k < subs.size(); ++k)
      if (subs[k]->parsed()) commands[k].second(opt);
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace warpex
