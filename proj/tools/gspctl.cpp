// gspctl: file-based front end for pacing, recommendations, market replay,
// regret inference and synthetic markets.
//
// Exit codes: 0 success, 1 invalid input, 2 pacing did not converge.

#include <atomic>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "gsp/io/files.hpp"

namespace fs = std::filesystem;
using namespace gsp;
using namespace gsp::io;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitNotConverged = 2;

struct Flags {
  std::string market, bidders, traces, out;
  std::optional<std::uint64_t> seed;
  double tol = 1e-8;
  std::size_t max_iter = 500;
  std::string method = "fixed-point";
  bool oracle = false;
  std::optional<double> budget, goal, inventory;
  std::size_t k = 3;
  std::size_t jobs = 1;
  double delta = 1e-9;

  PacingOptions pacing() const {
    PacingOptions p;
    p.tol = tol;
    p.max_iter = max_iter;
    p.method = method == "gauss-newton" ? PacingMethod::gauss_newton : PacingMethod::fixed_point;
    p.engine = oracle ? Engine::oracle : Engine::dp;
    return p;
  }
};

/// Writes results under the output directory, refusing to replace any input.
class Outputs {
 public:
  Outputs(fs::path dir, const std::vector<fs::path>& inputs) : dir_(std::move(dir)) {
    for (const auto& p : inputs)
      if (!p.empty()) inputs_.push_back(fs::weakly_canonical(p));
  }

  void save(const fs::path& rel, const std::string& content) const {
    const fs::path target = dir_ / rel;
    const fs::path canon = fs::weakly_canonical(target);
    for (const auto& in : inputs_)
      if (in == canon) throw InvalidInput("refusing to overwrite input file '" + target.string() + "'");
    write_file_atomic(target, content);
  }

 private:
  fs::path dir_;
  std::vector<fs::path> inputs_;
};

struct RegionFiles {
  std::string name;  // output subdirectory, empty for a single region
  fs::path market, bidders, traces;
};

/// --market may be a market.json file, a region directory holding
/// market.json / bidders.csv / trace.csv, or a directory of region directories.
std::vector<RegionFiles> resolve_regions(const Flags& f) {
  if (f.market.empty()) throw InvalidInput("--market is required");
  const fs::path m = f.market;
  auto region_in = [&](const fs::path& dir, const std::string& name) {
    RegionFiles r{name, dir / "market.json", dir / "bidders.csv", {}};
    if (fs::exists(dir / "trace.csv")) r.traces = dir / "trace.csv";
    return r;
  };
  std::vector<RegionFiles> out;
  if (fs::is_directory(m)) {
    if (fs::exists(m / "market.json")) {
      out.push_back(region_in(m, ""));
    } else {
      std::vector<fs::path> dirs;
      for (const auto& e : fs::directory_iterator(m))
        if (e.is_directory() && fs::exists(e.path() / "market.json")) dirs.push_back(e.path());
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) out.push_back(region_in(d, d.filename().string()));
      if (out.empty()) throw InvalidInput("no market.json found under '" + m.string() + "'");
    }
  } else {
    if (!fs::exists(m)) throw InvalidInput("cannot open '" + m.string() + "'");
    out.push_back({"", m, {}, {}});
  }
  if (!f.bidders.empty() || !f.traces.empty()) {
    if (out.size() > 1) throw InvalidInput("--bidders and --traces need a single region");
    if (!f.bidders.empty()) out[0].bidders = f.bidders;
    if (!f.traces.empty()) out[0].traces = f.traces;
  }
  if (out[0].bidders.empty()) throw InvalidInput("--bidders is required");
  return out;
}

std::vector<fs::path> inputs_of(const std::vector<RegionFiles>& regions) {
  std::vector<fs::path> in;
  for (const auto& r : regions) in.insert(in.end(), {r.market, r.bidders, r.traces});
  return in;
}

struct Replay {
  MarketFile market;
  std::vector<Agent> agents;
  std::vector<BidTrace> traces;
  SimulationResult sim;
};

Replay replay(const RegionFiles& r, const PacingOptions& pacing, bool need_traces) {
  Replay out;
  out.market = read_market(r.market);
  if (!out.market.has_volume) throw InvalidInput(r.market.string() + ": missing 'base_daily_volume'");
  out.agents = agents(read_bidders(r.bidders), r.bidders.string());
  if (!r.traces.empty()) out.traces = read_traces(r.traces);
  else if (need_traces) throw InvalidInput("--traces is required");
  out.sim = simulate(out.market.region, out.agents, out.traces, pacing);
  return out;
}

void report_unconverged(const std::string& region, const SimulationResult& sim) {
  for (Date d : sim.unconverged)
    std::cerr << "pacing did not converge" << (region.empty() ? "" : " in " + region) << " on " << format_date(d)
              << "\n";
}

// ---------------------------------------------------------------------------

int cmd_pace(const Flags& f) {
  if (f.market.empty() || f.bidders.empty()) throw InvalidInput("--market and --bidders are required");
  const MarketSnapshot m = snapshot(read_market(f.market), read_bidders(f.bidders));
  const PacingSolution s = solve_pacing(m, f.pacing());
  Outputs(f.out, {f.market, f.bidders}).save("pacing.csv", pacing_csv(s));
  if (!s.converged) {
    std::cerr << "pacing did not converge: residual " << format_number(s.residual_inf_norm) << " after "
              << s.iterations << " iterations\n";
    return kExitNotConverged;
  }
  return 0;
}

int cmd_outcomes(const Flags& f) {
  if (f.market.empty() || f.bidders.empty()) throw InvalidInput("--market and --bidders are required");
  const auto rows = read_bidders(f.bidders);
  const MarketSnapshot m = canonical_market(snapshot(read_market(f.market), rows));
  std::map<std::string, double> given;
  for (const auto& b : rows)
    if (b.pi) given[b.agent_id] = *b.pi;
  std::vector<double> pi;
  for (const auto& b : m.bidders) pi.push_back(given.count(b.id) ? given.at(b.id) : 1.0);
  const OutcomeTable o = evaluate_outcomes(f.oracle ? Engine::oracle : Engine::dp, m, pi);
  Outputs(f.out, {f.market, f.bidders}).save("outcomes.csv", snapshot_outcomes_csv(m, o));
  return 0;
}

int cmd_recommend(const Flags& f) {
  if (f.market.empty() || f.bidders.empty()) throw InvalidInput("--market and --bidders are required");
  if (f.budget.has_value() == f.goal.has_value()) throw InvalidInput("give either --budget or --goal");
  if (f.goal && !f.inventory) throw InvalidInput("--goal needs --inventory");
  const MarketSnapshot m = snapshot(read_market(f.market), read_bidders(f.bidders));
  RecommendOptions opt;
  opt.pacing = f.pacing();
  std::string text;
  if (f.budget) {
    const Recommendation r = recommend_bid(m, *f.budget, opt);
    text = json_object({{"bid", json_number(r.bid)},
                        {"expected_share", json_number(r.expected_share)},
                        {"expected_spend", json_number(r.expected_spend)},
                        {"corner_case", json(to_string(r.corner_case)).dump()}});
  } else {
    const GoalRecommendation r = recommend_for_goal(m, {*f.goal, *f.inventory}, opt);
    text = json_object({{"bid", json_number(r.bid)},
                        {"expected_share", json_number(r.expected_share)},
                        {"expected_spend", json_number(r.budget_per_mille)},
                        {"budget_per_mille", json_number(r.budget_per_mille)},
                        {"monthly_budget", json_number(r.monthly_budget)},
                        {"corner_case", json(to_string(r.corner_case)).dump()}});
  }
  std::cout << text;
  if (!f.out.empty()) Outputs(f.out, {f.market, f.bidders}).save("recommendation.json", text);
  return 0;
}

int cmd_simulate(const Flags& f) {
  const auto regions = resolve_regions(f);
  const Outputs out(f.out, inputs_of(regions));
  const PacingOptions pacing = f.pacing();
  std::vector<std::optional<Replay>> results(regions.size());
  std::vector<std::string> errors(regions.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < regions.size();) {
      try {
        results[i] = replay(regions[i], pacing, false);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(f.jobs, regions.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw InvalidInput(e);

  bool converged = true;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const fs::path dir = regions[i].name;
    out.save(dir / "outcomes.csv", outcomes_csv(results[i]->sim));
    out.save(dir / "ledgers.csv", ledgers_csv(results[i]->sim));
    report_unconverged(regions[i].name, results[i]->sim);
    converged &= results[i]->sim.unconverged.empty();
  }
  return converged ? 0 : kExitNotConverged;
}

/// Regret reports for agents active at least a week; shorter-lived agents
/// still take part in the replay.
int cmd_infer(const Flags& f, bool compare) {
  if (!(f.delta >= 0.0)) throw InvalidInput("--delta must be nonnegative");
  const auto regions = resolve_regions(f);
  const Outputs out(f.out, inputs_of(regions));
  const PacingOptions pacing = f.pacing();
  bool converged = true;
  for (const auto& region : regions) {
    const Replay r = replay(region, pacing, true);
    report_unconverged(region.name, r.sim);
    converged &= r.sim.unconverged.empty();
    const auto history = r.sim.history();
    std::vector<RegretReport> reports;
    for (const auto& t : r.traces) {
      if (t.active_days() < kMinClusterDays) continue;
      if (compare) {
        reports.push_back(compare_with_recommendation(t, history, f.delta, pacing));
      } else {
        const RationalizableSet s = build_rationalizable_set(t, history);
        RegretReport rep;
        rep.agent_id = t.agent_id;
        rep.v_star = s.v_star;
        rep.eps_star = s.eps_star;
        rep.budget_constrained = s.budget_constrained;
        if (s.v_star > 0.0) rep.relative_regret = s.eps_star / s.v_star;
        if (s.curves.played_eq_sum > 0.0)
          rep.per_impression_regret = s.eps_star * static_cast<double>(s.curves.days) / s.curves.played_eq_sum;
        reports.push_back(rep);
      }
    }
    const fs::path dir = region.name;
    out.save(dir / "report.csv", report_csv(reports, compare));
    if (compare) {
      out.save(dir / "regret_hist.csv", regret_hist_csv(reports));
      CsvWriter adherence{"group", "month", "fraction", "agents"};
      add_adherence_rows(adherence, "all", adherence_curve(r.traces));
      out.save(dir / "adherence.csv", adherence.str());
    }
  }
  return converged ? 0 : kExitNotConverged;
}

int cmd_cluster(const Flags& f) {
  std::vector<std::pair<std::string, fs::path>> sources;  // (output subdir, trace file)
  if (!f.traces.empty()) {
    sources.emplace_back("", f.traces);
  } else {
    for (const auto& r : resolve_regions(f)) {
      if (r.traces.empty()) throw InvalidInput("no trace.csv for region '" + r.name + "'");
      sources.emplace_back(r.name, r.traces);
    }
  }
  if (f.k == 0) throw InvalidInput("--k must be positive");
  std::vector<fs::path> inputs;
  for (const auto& s : sources) inputs.push_back(s.second);
  const Outputs out(f.out, inputs);
  for (const auto& [name, path] : sources) {
    const std::vector<BidTrace> traces = read_traces(path);
    const FrequencyClusters c = cluster_by_frequency(traces, f.k);
    if (c.degenerate)
      std::cerr << "only " << c.clusters << " distinct change frequencies" << (name.empty() ? "" : " in " + name)
                << "; fewer than " << f.k << " clusters\n";
    CsvWriter adherence{"group", "month", "fraction", "agents"};
    add_adherence_rows(adherence, "all", adherence_curve(traces));
    for (std::size_t k = 1; k <= c.clusters; ++k) {
      std::vector<BidTrace> members;
      for (std::size_t i = 0; i < traces.size(); ++i)
        if (c.agents[i].cluster == static_cast<int>(k)) members.push_back(traces[i]);
      add_adherence_rows(adherence, std::to_string(k), adherence_curve(members));
    }
    out.save(fs::path(name) / "clusters.csv", clusters_csv(c, traces));
    out.save(fs::path(name) / "adherence.csv", adherence.str());
  }
  return 0;
}

int cmd_gen_market(const Flags& f) {
  if (!f.seed) throw InvalidInput("--seed is required");
  SyntheticMarketSpec spec = f.market.empty() ? SyntheticMarketSpec{} : read_spec(f.market);
  spec.seed = *f.seed;
  spec.validate();
  const Outputs out(f.out, {f.market});
  const PacingOptions pacing = f.pacing();
  bool converged = true;
  for (std::size_t i = 0; i < spec.regions; ++i) {
    const RegionDataset r = generate_region(spec, i, pacing);
    const fs::path dir = r.name;
    out.save(dir / "market.json", market_json(r.config));
    out.save(dir / "bidders.csv", bidders_csv(r.plain_agents()));
    out.save(dir / "trace.csv", traces_csv(r.traces));
    out.save(dir / "truth.csv", truth_csv(r));
    report_unconverged(r.name, r.simulation);
    converged &= r.simulation.unconverged.empty();
  }
  return converged ? 0 : kExitNotConverged;
}

int cmd_integrity(const Flags& f) {
  if (f.market.empty() || f.bidders.empty()) throw InvalidInput("--market and --bidders are required");
  const MarketSnapshot m = snapshot(read_market(f.market), read_bidders(f.bidders));
  IntegrityOptions opt;
  opt.recommend.pacing = f.pacing();
  if (f.inventory) opt.inventory = *f.inventory;
  const IntegrityReport rep = integrity_suite(m, opt);
  CsvWriter w{"test", "passed", "max_violation"};
  for (const auto& c : rep.checks) {
    w.row({c.name, c.passed ? "1" : "0", format_number(c.max_violation)});
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " " << format_number(c.max_violation) << "\n";
  }
  if (!f.out.empty()) Outputs(f.out, {f.market, f.bidders}).save("integrity.csv", w.str());
  return rep.passed() ? 0 : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-smoothed GSP auctions: pacing, recommendations, replay and regret inference"};
  app.require_subcommand(1);
  Flags f;

  auto market = [&](CLI::App* c, const char* help) { c->add_option("--market", f.market, help); };
  auto bidders = [&](CLI::App* c) { c->add_option("--bidders", f.bidders, "bidders.csv"); };
  auto traces = [&](CLI::App* c) { c->add_option("--traces", f.traces, "trace.csv"); };
  auto out = [&](CLI::App* c, bool required = true) {
    auto* o = c->add_option("--out", f.out, "output directory");
    if (required) o->required();
  };
  auto solver = [&](CLI::App* c) {
    c->add_option("--tol", f.tol, "pacing tolerance")->check(CLI::PositiveNumber);
    c->add_option("--max-iter", f.max_iter, "pacing iteration limit")->check(CLI::PositiveNumber);
    c->add_option("--method", f.method, "pacing method")->check(CLI::IsMember({"fixed-point", "gauss-newton"}));
    c->add_flag("--oracle", f.oracle, "use the enumeration engine");
  };

  auto* pace = app.add_subcommand("pace", "solve filtering probabilities of one market");
  market(pace, "market.json");
  bidders(pace);
  out(pace);
  solver(pace);

  auto* outcomes = app.add_subcommand("outcomes", "expected share and spend per bidder");
  market(outcomes, "market.json");
  bidders(outcomes);
  out(outcomes);
  outcomes->add_flag("--oracle", f.oracle, "use the enumeration engine");

  auto* recommend = app.add_subcommand("recommend", "bid for a new bidder");
  market(recommend, "market.json");
  bidders(recommend);
  out(recommend, false);
  solver(recommend);
  recommend->add_option("--budget", f.budget, "budget per mille");
  recommend->add_option("--goal", f.goal, "impression goal");
  recommend->add_option("--inventory", f.inventory, "projected impressions");

  auto* simulate_cmd = app.add_subcommand("simulate", "replay regions day by day");
  market(simulate_cmd, "market.json, region directory, or directory of regions");
  bidders(simulate_cmd);
  traces(simulate_cmd);
  out(simulate_cmd);
  solver(simulate_cmd);
  simulate_cmd->add_option("--jobs", f.jobs, "regions replayed in parallel")->check(CLI::PositiveNumber);

  auto* infer = app.add_subcommand("infer", "values and regret from bid traces");
  market(infer, "market.json, region directory, or directory of regions");
  bidders(infer);
  traces(infer);
  out(infer);
  solver(infer);

  auto* compare = app.add_subcommand("compare-reco", "regret of play against the recommendation");
  market(compare, "market.json, region directory, or directory of regions");
  bidders(compare);
  traces(compare);
  out(compare);
  solver(compare);
  compare->add_option("--delta", f.delta, "classification tolerance");

  auto* cluster = app.add_subcommand("cluster", "cluster agents by bid-change frequency");
  market(cluster, "region directory or directory of regions");
  traces(cluster);
  out(cluster);
  cluster->add_option("--k", f.k, "number of clusters");

  auto* gen = app.add_subcommand("gen-market", "synthetic regions with bid traces");
  market(gen, "optional spec JSON");
  out(gen);
  solver(gen);
  gen->add_option("--seed", f.seed, "random seed");

  auto* integrity = app.add_subcommand("integrity", "recommendation integrity tests");
  market(integrity, "market.json");
  bidders(integrity);
  out(integrity, false);
  solver(integrity);
  integrity->add_option("--inventory", f.inventory, "inventory for the goal test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*pace) return cmd_pace(f);
    if (*outcomes) return cmd_outcomes(f);
    if (*recommend) return cmd_recommend(f);
    if (*simulate_cmd) return cmd_simulate(f);
    if (*infer) return cmd_infer(f, false);
    if (*compare) return cmd_infer(f, true);
    if (*cluster) return cmd_cluster(f);
    if (*gen) return cmd_gen_market(f);
    if (*integrity) return cmd_integrity(f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
