// fkw: command-line front end for the samplers, oracles and experiments.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error or invalid
// parameters, 3 time budget exhausted (a partial report is still written).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fkw/geometry.hpp"
#include "fkw/gibbs.hpp"
#include "fkw/harness.hpp"
#include "fkw/io.hpp"
#include "fkw/lattice.hpp"
#include "fkw/stats.hpp"
#include "fkw/walks.hpp"
#include "fkw/watermelon.hpp"

namespace {

using namespace fkw;
using io::Json;
namespace hs = fkw::harness;
namespace wm = fkw::watermelon;
using gibbs::RcParams;
using lattice::Boundary;
using lattice::BoxGeometry;
using lattice::EdgeConfig;

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kBudget = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 1;
  std::size_t threads = hs::default_threads();
  std::string out;
  std::string config;
  double budget_seconds = 0.0;
  bool timings = false;
};

// What a subcommand hands back for printing and writing.
struct Outcome {
  Json results = Json::object();
  std::optional<io::CsvTable> table;
  std::vector<Json> records;  // JSON-lines payload
  std::map<std::string, bool> checks;
  std::string summary;  // printed to stdout; results are dumped when empty
  bool partial = false;
};

using Runner = std::function<Outcome(const hs::RunContext&, const Globals&)>;

struct Command {
  CLI::App* app = nullptr;
  Runner run;
};

// ---------------------------------------------------------------------------
// Parsing helpers

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = io::trim(item);
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError(std::string("--") + what + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string("--") + what + " needs at least one value");
  return out;
}

std::vector<int> ints(const std::string& s, const char* what) { return parse_list<int>(s, what); }
std::vector<long long> longs(const std::string& s, const char* what) { return parse_list<long long>(s, what); }

void require_same_r(const std::vector<int>& x, const std::vector<int>& y) {
  if (x.size() != y.size()) throw UsageError("--x and --y need the same number of entries");
  if (!lattice::in_weyl_chamber<int>(x) || !lattice::in_weyl_chamber<int>(y)) {
    throw UsageError("--x and --y must be strictly increasing");
  }
}

walks::IncrementDist parse_dist(const std::string& s) {
  try {
    return walks::IncrementDist::parse(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--dist: ") + e.what() + " (or 'simple', 'lazy')");
  }
}

struct ModelOpts {
  double p = 0.3;
  double q = 1.0;
  std::string boundary = "free";

  void add(CLI::App* app) {
    app->add_option("--p", p, "edge weight p in (0,1)");
    app->add_option("--q", q, "cluster weight q >= 1");
    app->add_option("--boundary", boundary, "free or wired")->check(CLI::IsMember({"free", "wired"}));
  }

  RcParams params() const {
    RcParams r{p, q, lattice::parse_boundary(boundary)};
    try {
      r.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return r;
  }
};

hs::ConNiMethod con_ni_method(const std::string& s) {
  try {
    return hs::parse_con_ni_method(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

bool decreasing(const std::vector<double>& v, bool strict) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (strict ? !(v[i] < v[i - 1]) : !(v[i] <= v[i - 1])) return false;
  }
  return true;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

hs::RunContext sub_context(const hs::RunContext& ctx, std::uint64_t salt) {
  hs::RunContext sub = ctx;
  sub.seed = ctx.seed + 0x9E3779B97F4A7C15ull * salt;
  return sub;
}

io::CsvTable summary_table() { return io::CsvTable({"n", "estimate", "stderr", "samples", "seconds"}); }

std::string seconds_cell(double s, const Globals& g) { return g.timings ? fmt(s, 4) : std::string{}; }

void add_points(io::CsvTable& t, const std::vector<hs::DecayPoint>& pts, const Globals& g) {
  for (const auto& p : pts) t.row(p.n, p.value, p.stderr_, p.samples, seconds_cell(p.seconds, g));
}

Json envelopes_json(const EdgeConfig& c, std::span<const int> x, std::span<const int> y) {
  const auto env = lattice::extract_envelopes(c, x, y);
  return {{"upper", env.upper}, {"lower", env.lower}};
}

// ---------------------------------------------------------------------------
// Subcommands

Command add_sample_fk(CLI::App& app) {
  auto* sub = app.add_subcommand("sample-fk", "Heat-bath samples of the FK measure on a box");
  auto m = std::make_shared<ModelOpts>();
  auto n = std::make_shared<int>(4);
  auto height = std::make_shared<int>(2);
  auto count = std::make_shared<std::size_t>(10);
  auto burn = std::make_shared<std::size_t>(200);
  auto thin = std::make_shared<std::size_t>(10);
  m->add(sub);
  sub->add_option("--n", *n, "box length: columns 0..n")->check(CLI::PositiveNumber);
  sub->add_option("--height", *height, "half height H: rows -H..H")->check(CLI::NonNegativeNumber);
  sub->add_option("--count", *count, "number of samples")->check(CLI::PositiveNumber);
  sub->add_option("--burn-in", *burn, "sweeps before the first sample");
  sub->add_option("--thinning", *thin, "sweeps between samples");
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            const auto params = m->params();
            const BoxGeometry g(*n, -*height, *height);
            Outcome o;
            o.table = io::CsvTable({"index", "open", "clusters"});
            std::vector<double> open, clusters;
            gibbs::run_chain(params, g, {*burn, *thin}, *count, ctx.seed, 0, [&](const gibbs::ChainState& s) {
              const auto& c = s.config();
              const auto k = c.open_count();
              const auto cl = s.labeling().cluster_count();
              o.table->row(open.size(), k, cl);
              o.records.push_back({{"index", open.size()}, {"config", lattice::to_line(c)}});
              open.push_back(static_cast<double>(k) / static_cast<double>(c.edge_count()));
              clusters.push_back(static_cast<double>(cl));
            });
            const auto a = stats::mean_se(open), b = stats::mean_se(clusters);
            o.results = {{"box", g.to_string()},
                         {"edges", g.edge_count()},
                         {"samples", *count},
                         {"open_fraction", {{"mean", a.mean}, {"se", a.se}}},
                         {"clusters", {{"mean", b.mean}, {"se", b.se}}}};
            return o;
          }};
}

struct ConnectionOpts {
  std::string x = "-1,1";
  std::string y = "-1,1";
  std::optional<int> height;

  void add(CLI::App* app) {
    app->add_option("--x", x, "starting heights at column 0, comma separated, increasing");
    app->add_option("--y", y, "ending heights at column n, comma separated, increasing");
    app->add_option("--height", height, "half height H of the box; default grows like sqrt(n)");
  }

  std::pair<std::vector<int>, std::vector<int>> xy() const {
    auto a = ints(x, "x"), b = ints(y, "y");
    require_same_r(a, b);
    return {a, b};
  }

  BoxGeometry box(int n, const std::vector<int>& a, const std::vector<int>& b) const {
    if (height) {
      const BoxGeometry g(n, -*height, *height);
      for (int v : a) if (v < -*height || v > *height) throw UsageError("--x lies outside the box");
      for (int v : b) if (v < -*height || v > *height) throw UsageError("--y lies outside the box");
      return g;
    }
    return hs::default_box(n, a, b);
  }
};

struct ConditionedOpts {
  std::string method = "splitting";
  std::size_t particles = 400;
  std::size_t thin = 4;

  void add(CLI::App* app) {
    app->add_option("--method", method, "splitting (q=1, free) or rejection");
    app->add_option("--particles", particles, "particles per splitting proposal")->check(CLI::PositiveNumber);
    app->add_option("--thin", thin, "proposals between emitted samples")->check(CLI::PositiveNumber);
  }

  hs::ConNiMethod parsed(const RcParams& params) const {
    const auto m = con_ni_method(method);
    if (m == hs::ConNiMethod::enumeration) throw UsageError("--method enumeration does not produce samples");
    if (m == hs::ConNiMethod::splitting && (params.q != 1.0 || params.boundary != Boundary::free)) {
      throw UsageError("--method splitting needs q = 1 and free boundary; use --method rejection");
    }
    return m;
  }
};

Command add_sample_conditioned(CLI::App& app) {
  auto* sub = app.add_subcommand("sample-conditioned", "Samples of the FK measure conditioned on Con and NI");
  auto m = std::make_shared<ModelOpts>();
  auto c = std::make_shared<ConnectionOpts>();
  auto s = std::make_shared<ConditionedOpts>();
  auto n = std::make_shared<int>(8);
  auto count = std::make_shared<std::size_t>(10);
  m->add(sub);
  c->add(sub);
  s->add(sub);
  sub->add_option("--n", *n, "box length")->check(CLI::PositiveNumber);
  sub->add_option("--count", *count, "number of samples")->check(CLI::PositiveNumber);
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            const auto params = m->params();
            const auto [x, y] = c->xy();
            const auto g = c->box(*n, x, y);
            const auto method = s->parsed(params);
            const auto batch = hs::sample_conditioned(params, g, x, y, *count, method, ctx, s->particles, s->thin);
            Outcome o;
            o.table = io::CsvTable({"index", "open", "max_width"});
            for (std::size_t i = 0; i < batch.configs.size(); ++i) {
              const auto& cfg = batch.configs[i];
              const auto env = envelopes_json(cfg, x, y);
              int w = 0;
              const auto e = lattice::extract_envelopes(cfg, x, y);
              for (std::size_t k = 0; k < e.r(); ++k) {
                for (std::size_t t = 0; t < e.upper[k].size(); ++t) w = std::max(w, e.upper[k][t] - e.lower[k][t]);
              }
              o.table->row(i, cfg.open_count(), w);
              o.records.push_back({{"index", i}, {"config", lattice::to_line(cfg)}, {"envelopes", env}});
            }
            o.results = {{"box", g.to_string()},
                         {"method", std::string(hs::to_string(method))},
                         {"samples", batch.configs.size()},
                         {"proposals", batch.proposals},
                         {"acceptance", batch.acceptance}};
            return o;
          }};
}

Command add_skeleton(CLI::App& app) {
  auto* sub = app.add_subcommand("skeleton", "Cone points, maximal and synchronized skeletons of conditioned samples");
  auto m = std::make_shared<ModelOpts>();
  auto c = std::make_shared<ConnectionOpts>();
  auto s = std::make_shared<ConditionedOpts>();
  auto n = std::make_shared<int>(16);
  auto count = std::make_shared<std::size_t>(1);
  auto delta = std::make_shared<double>(1.0);
  m->add(sub);
  c->add(sub);
  s->add(sub);
  sub->add_option("--n", *n, "box length")->check(CLI::PositiveNumber);
  sub->add_option("--count", *count, "number of samples")->check(CLI::PositiveNumber);
  sub->add_option("--delta", *delta, "cone slope")->check(CLI::PositiveNumber);
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            const auto params = m->params();
            const auto [x, y] = c->xy();
            const auto g = c->box(*n, x, y);
            const auto method = s->parsed(params);
            const geometry::ConeParams cone{*delta};
            const auto batch = hs::sample_conditioned(params, g, x, y, *count, method, ctx, s->particles, s->thin);
            Outcome o;
            o.table = io::CsvTable({"index", "cluster", "cone_points", "sync_times"});
            std::vector<double> sync_counts;
            for (std::size_t idx = 0; idx < batch.configs.size(); ++idx) {
              const auto& cfg = batch.configs[idx];
              const auto labels = lattice::label_clusters(cfg);
              std::vector<geometry::Skeleton> sks;
              Json maximal = Json::array();
              for (std::size_t i = 0; i < x.size(); ++i) {
                const auto members = labels.members(labels.root(g.vertex({0, x[i]})));
                const auto sites = geometry::cluster_sites(g, members);
                sks.push_back(geometry::maximal_decomposition(sites, cone, {0, x[i]}, {*n, y[i]}));
                Json pts = Json::array();
                for (const auto& p : sks.back().points) pts.push_back({p.col, p.row});
                maximal.push_back(pts);
              }
              const auto sync = geometry::synchronized_skeleton(sks);
              for (std::size_t i = 0; i < sks.size(); ++i) o.table->row(idx, i, sks[i].points.size(), sync.columns.size());
              sync_counts.push_back(static_cast<double>(sync.columns.size()));
              auto rec = io::trajectory_record(sync.columns, sync.heights);
              rec["index"] = idx;
              rec["maximal"] = maximal;
              o.records.push_back(rec);
            }
            const auto ms = stats::mean_se(sync_counts);
            o.results = {{"box", g.to_string()},
                         {"delta", *delta},
                         {"samples", batch.configs.size()},
                         {"sync_times", {{"mean", ms.mean}, {"se", ms.se}}}};
            return o;
          }};
}

struct WalkOpts {
  std::string dist = "simple";
  std::string x = "0,2";
  std::string y = "0,2";

  void add(CLI::App* app) {
    app->add_option("--dist", dist, "increment law: simple, lazy, or theta:x:p,theta:x:p,...");
    app->add_option("--x", x, "starting heights, comma separated, increasing");
    app->add_option("--y", y, "ending heights, comma separated, increasing");
  }

  std::pair<walks::Point, walks::Point> xy() const {
    auto a = longs(x, "x"), b = longs(y, "y");
    if (a.size() != b.size()) throw UsageError("--x and --y need the same number of entries");
    if (!walks::in_weyl(a) || !walks::in_weyl(b)) throw UsageError("--x and --y must be strictly increasing");
    return {a, b};
  }
};

Command add_walk_bridge(CLI::App& app) {
  auto* sub = app.add_subcommand("walk-bridge", "Walk systems conditioned to stay ordered and hit y at time n");
  auto w = std::make_shared<WalkOpts>();
  auto n = std::make_shared<long long>(32);
  auto count = std::make_shared<std::size_t>(10);
  auto method = std::make_shared<std::string>("dp-backward");
  auto attempts = std::make_shared<std::size_t>(200'000'000);
  w->add(sub);
  sub->add_option("--n", *n, "time horizon")->check(CLI::PositiveNumber);
  sub->add_option("--count", *count, "number of samples")->check(CLI::PositiveNumber);
  sub->add_option("--method", *method, "dp-backward or rejection")->check(CLI::IsMember({"dp-backward", "rejection"}));
  sub->add_option("--max-attempts", *attempts, "rejection attempts before giving up");
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            const auto dist = parse_dist(w->dist);
            const auto [x, y] = w->xy();
            const auto m = *method == "rejection" ? walks::BridgeMethod::rejection : walks::BridgeMethod::dp_backward;
            const auto batch = walks::sample_conditioned_bridge(dist, x, y, *n, *count, ctx.seed, m, *attempts);
            Outcome o;
            o.table = io::CsvTable({"index", "steps", "min_gap"});
            std::vector<double> gaps;
            for (std::size_t i = 0; i < batch.samples.size(); ++i) {
              const auto& sys = batch.samples[i];
              std::vector<std::vector<long long>> heights;
              double g = std::numeric_limits<double>::infinity();
              for (std::size_t k = 0; k <= sys.steps(); ++k) {
                heights.push_back(sys.heights_at(k));
                if (k > 0 && k < sys.steps()) g = std::min(g, walks::min_pair_distance(heights.back()));
              }
              o.table->row(i, sys.steps(), std::isfinite(g) ? fmt(g) : std::string("inf"));
              if (std::isfinite(g)) gaps.push_back(g);
              auto rec = io::trajectory_record(sys.walks[0].times, heights);
              rec["index"] = i;
              o.records.push_back(rec);
            }
            o.results = {{"method", *method},
                         {"samples", batch.samples.size()},
                         {"attempts", batch.attempts},
                         {"acceptance_rate", batch.acceptance_rate},
                         {"kernel", batch.kernel},
                         {"leaked_mass", batch.leaked_mass}};
            if (!gaps.empty()) {
              const auto ms = stats::mean_se(gaps);
              o.results["interior_min_gap"] = {{"mean", ms.mean}, {"se", ms.se}};
            }
            return o;
          }};
}

Command add_km_prob(CLI::App& app) {
  auto* sub = app.add_subcommand("km-prob", "Karlin-McGregor count and probability for simple-walk bridges");
  auto r = std::make_shared<std::size_t>(2);
  auto x = std::make_shared<std::string>();
  auto y = std::make_shared<std::string>();
  auto n = std::make_shared<long long>(0);
  sub->add_option("--r", *r, "number of walks")->check(CLI::PositiveNumber);
  sub->add_option("--x", *x, "starting heights")->required();
  sub->add_option("--y", *y, "ending heights")->required();
  sub->add_option("--n", *n, "number of steps")->required()->check(CLI::NonNegativeNumber);
  return {sub, [=](const hs::RunContext&, const Globals&) {
            const auto a = longs(*x, "x"), b = longs(*y, "y");
            if (a.size() != *r || b.size() != *r) throw UsageError("--x and --y need exactly r entries");
            if (!walks::in_weyl(a) || !walks::in_weyl(b)) throw UsageError("--x and --y must be strictly increasing");
            if (!walks::km_applicable(a)) {
              throw UsageError("starting heights of mixed parity: walks can cross without meeting; use dp-kernel");
            }
            const auto km = walks::km_bridge_count(a, b, *n);
            Outcome o;
            const std::string count = km.count.str();
            const double prob = static_cast<double>(km.probability);
            o.results = {{"count", count}, {"probability", prob}};
            o.summary = "count " + count + "\nprobability " + fmt(prob, 12) + "\n";
            return o;
          }};
}

Command add_dp_kernel(CLI::App& app) {
  auto* sub = app.add_subcommand("dp-kernel", "Exact q_n(x,y) by dynamic programming over the Weyl chamber");
  auto w = std::make_shared<WalkOpts>();
  auto n = std::make_shared<long long>(2);
  auto cap = std::make_shared<std::optional<long long>>();
  w->add(sub);
  sub->add_option("--n", *n, "time horizon")->check(CLI::NonNegativeNumber);
  sub->add_option("--cap", *cap, "height cap H of the state space [-H,H]^r");
  return {sub, [=](const hs::RunContext&, const Globals&) {
            const auto dist = parse_dist(w->dist);
            const auto [x, y] = w->xy();
            const auto k = walks::dp_weyl_kernel(dist, x, y, *n, *cap);
            Outcome o;
            o.results = {{"probability", k.probability},
                         {"leaked_mass", k.leaked_mass},
                         {"height_cap", k.height_cap},
                         {"states", k.states}};
            o.summary = "probability " + fmt(k.probability, 12) + "\nleaked_mass " + fmt(k.leaked_mass) + "\n";
            if (dist.is_simple()) {
              const auto cnt = walks::dp_weyl_count(x, y, *n).str();
              o.results["count"] = cnt;
              o.summary = "count " + cnt + "\n" + o.summary;
            }
            return o;
          }};
}

Command add_estimate_v(CLI::App& app) {
  auto* sub = app.add_subcommand("estimate-v", "Harmonic function V of the killed walk on a grid of W");
  auto dist = std::make_shared<std::string>("lazy");
  auto r = std::make_shared<std::size_t>(2);
  auto max_gap = std::make_shared<long long>(30);
  auto iterations = std::make_shared<std::size_t>(8000);
  auto tol = std::make_shared<double>(1e-3);
  sub->add_option("--dist", *dist, "increment law: simple, lazy, or theta:x:p,...");
  sub->add_option("--r", *r, "number of walks (2 or 3)")->check(CLI::Range(2, 3));
  sub->add_option("--max-gap", *max_gap, "largest gap on the grid")->check(CLI::PositiveNumber);
  sub->add_option("--iterations", *iterations, "power iterations")->check(CLI::PositiveNumber);
  sub->add_option("--tolerance", *tol, "residual tolerance");
  return {sub, [=](const hs::RunContext&, const Globals&) {
            const auto d = parse_dist(*dist);
            std::vector<walks::Point> pts;
            for (long long a = 1; a <= *max_gap; ++a) {
              if (*r == 2) {
                pts.push_back({0, a});
                continue;
              }
              for (long long b = 1; b <= *max_gap; ++b) pts.push_back({0, a, a + b});
            }
            const auto est = walks::estimate_V(d, *r, pts, *iterations, *tol);
            Outcome o;
            o.table = io::CsvTable({"point", "v", "v_over_delta", "gap"});
            bool ratio_ok = true;
            for (std::size_t k = 0; k < pts.size(); ++k) {
              std::string label;
              for (std::size_t i = 0; i < pts[k].size(); ++i) label += (i ? " " : "") + std::to_string(pts[k][i]);
              const double ratio = est.values[k] / walks::vandermonde_of(pts[k]);
              const double gap = geometry::gap(pts[k]);
              if (gap >= 20 && (ratio < 0.9 || ratio > 1.1)) ratio_ok = false;
              o.table->row(label, est.values[k], ratio, gap);
            }
            o.checks["v_over_delta_within_10pct_at_gap_20"] = ratio_ok;
            o.results = {{"r", *r},
                         {"points", pts.size()},
                         {"iterations", est.iterations},
                         {"residual", est.residual},
                         {"converged", est.converged}};
            if (!est.converged) o.summary = "warning: extrapolation residual above the tolerance\n";
            return o;
          }};
}

Command add_watermelon(CLI::App& app) {
  auto* sub = app.add_subcommand("watermelon", "Brownian watermelon samples or its exact ordered marginals");
  auto r = std::make_shared<std::size_t>(2);
  auto m = std::make_shared<std::size_t>(64);
  auto count = std::make_shared<std::size_t>(1000);
  auto method = std::make_shared<std::string>("matrix-bridge");
  auto eps = std::make_shared<double>(0.05);
  auto t = std::make_shared<double>(0.5);
  auto density = std::make_shared<bool>(false);
  auto attempts = std::make_shared<std::size_t>(50'000'000);
  sub->add_option("--r", *r, "number of bridges")->check(CLI::PositiveNumber);
  sub->add_option("--grid", *m, "number of time steps on [0,1]")->check(CLI::PositiveNumber);
  sub->add_option("--count", *count, "number of samples")->check(CLI::PositiveNumber);
  sub->add_option("--method", *method, "matrix-bridge or epsilon-rejection")
      ->check(CLI::IsMember({"matrix-bridge", "epsilon-rejection"}));
  sub->add_option("--eps", *eps, "starting separation for epsilon-rejection");
  sub->add_option("--t", *t, "time of the marginal check")->check(CLI::Range(0.0, 1.0));
  sub->add_flag("--density", *density, "tabulate the exact ordered marginal CDFs at t instead of sampling");
  sub->add_option("--max-attempts", *attempts, "rejection attempts before giving up");
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            if (!(*t > 0.0 && *t < 1.0)) throw UsageError("--t must lie strictly inside (0,1)");
            Outcome o;
            if (*density) {
              if (*r > 3) throw UsageError("exact marginals are tabulated for r <= 3");
              const wm::OrderedMarginals om(*r, *t);
              std::vector<std::string> header{"z"};
              for (std::size_t k = 0; k < *r; ++k) header.push_back("cdf_" + std::to_string(k));
              io::CsvTable table(header);
              const double s = std::sqrt(*t * (1.0 - *t));
              const double half = 4.0 * s * (1.0 + 0.5 * static_cast<double>(*r));
              for (int i = 0; i <= 200; ++i) {
                const double z = -half + 2.0 * half * i / 200.0;
                std::vector<std::string> row{fmt(z, 8)};
                for (std::size_t k = 0; k < *r; ++k) row.push_back(fmt(om.cdf(k, z), 10));
                table.add(row);
              }
              o.table = std::move(table);
              o.results = {{"r", *r}, {"t", *t}, {"points", 201}};
              return o;
            }
            const auto grid = wm::uniform_grid(*m);
            const auto meth = *method == "matrix-bridge" ? wm::Method::matrix_bridge : wm::Method::epsilon_rejection;
            const auto batch = wm::sample_watermelon(*r, grid, *count, ctx.seed, meth, *eps, *attempts);
            const auto k = static_cast<std::size_t>(std::lround(*t * static_cast<double>(*m)));
            for (std::size_t i = 0; i < batch.samples.size(); ++i) {
              auto rec = io::trajectory_record(batch.samples[i].times, batch.samples[i].heights);
              rec["index"] = i;
              o.records.push_back(rec);
            }
            o.results = {{"r", *r},
                         {"method", *method},
                         {"samples", batch.samples.size()},
                         {"attempts", batch.attempts},
                         {"acceptance_rate", batch.acceptance_rate}};
            if (*r <= 3 && k > 0 && k < *m) {
              const double tk = grid[k];
              const wm::OrderedMarginals om(*r, tk);
              o.table = io::CsvTable({"coordinate", "t", "ks", "threshold"});
              const double thr = stats::ks_threshold(batch.samples.size());
              bool pass = true;
              for (std::size_t i = 0; i < *r; ++i) {
                const double d = stats::ks_one_sample(wm::coordinate_at(batch.samples, k, i),
                                                      [&](double v) { return om.cdf(i, v); });
                o.table->row(i, tk, d, thr);
                pass = pass && d < thr;
              }
              o.checks["marginal_ks_below_threshold"] = pass;
            }
            return o;
          }};
}

std::vector<int> n_list_option(const std::string& s) {
  auto v = ints(s, "n-list");
  for (int n : v) if (n < 1) throw UsageError("--n-list entries must be positive");
  return v;
}

Command add_estimate_tau(CLI::App& app) {
  auto* sub = app.add_subcommand("estimate-tau", "Inverse correlation length from the decay of phi[0 <-> (n,0)]");
  auto m = std::make_shared<ModelOpts>();
  auto n_list = std::make_shared<std::string>("8,12,16,24,32");
  auto samples = std::make_shared<std::size_t>(100000);
  auto method = std::make_shared<std::string>("splitting");
  auto prefactor = std::make_shared<double>(0.5);
  auto half = std::make_shared<std::optional<int>>();
  m->add(sub);
  sub->add_option("--n-list", *n_list, "distances, comma separated");
  sub->add_option("--samples", *samples, "samples (or particles) per distance")->check(CLI::PositiveNumber);
  sub->add_option("--method", *method, "splitting or rejection");
  sub->add_option("--prefactor", *prefactor, "assumed polynomial prefactor exponent");
  sub->add_option("--half-height", *half, "fixed half height of the strip");
  return {sub, [=](const hs::RunContext& ctx, const Globals& g) {
            const auto params = m->params();
            hs::TauOptions opt;
            opt.prefactor_exponent = *prefactor;
            opt.half_height = *half;
            opt.method = con_ni_method(*method);
            if (opt.method == hs::ConNiMethod::splitting && (params.q != 1.0 || params.boundary != Boundary::free)) {
              throw UsageError("--method splitting needs q = 1 and free boundary; use --method rejection");
            }
            const auto t = hs::estimate_tau(params, n_list_option(*n_list), *samples, ctx, opt);
            Outcome o;
            o.results = hs::to_json(t);
            o.table = summary_table();
            add_points(*o.table, t.fit.points, g);
            o.checks["subadditive_bound"] = t.subadditive_ok;
            o.partial = t.partial;
            o.summary = "tau " + fmt(t.tau) + " +- " + fmt(t.se) + "\n";
            for (const auto& w : t.warnings) o.summary += "warning: " + w + "\n";
            return o;
          }};
}

Command add_scaling(CLI::App& app) {
  auto* sub = app.add_subcommand("scaling", "Exponent fit of phi[Con, NI] or of the walk surrogate q_n");
  auto model = std::make_shared<std::string>("percolation");
  auto m = std::make_shared<ModelOpts>();
  auto x = std::make_shared<std::string>("-1,1");
  auto y = std::make_shared<std::string>("-1,1");
  auto dist = std::make_shared<std::string>("simple");
  auto n_list = std::make_shared<std::string>();
  auto samples = std::make_shared<std::size_t>(100000);
  auto method = std::make_shared<std::string>("splitting");
  auto no_tau = std::make_shared<bool>(false);
  sub->add_option("--model", *model, "percolation or walk")->check(CLI::IsMember({"percolation", "walk"}));
  m->add(sub);
  sub->add_option("--x", *x, "starting heights");
  sub->add_option("--y", *y, "ending heights");
  sub->add_option("--dist", *dist, "increment law for --model walk");
  sub->add_option("--n-list", *n_list, "distances; default 8,12,16,24,32 (percolation) or 32,64,128,256 (walk)");
  sub->add_option("--samples", *samples, "samples per distance")->check(CLI::PositiveNumber);
  sub->add_option("--method", *method, "splitting, rejection or enumeration");
  sub->add_flag("--no-tau", *no_tau, "skip the independent tau estimate");
  return {sub, [=](const hs::RunContext& ctx, const Globals& g) {
            Outcome o;
            o.table = summary_table();
            if (*model == "walk") {
              const auto d = parse_dist(*dist);
              const auto a = longs(*x, "x"), b = longs(*y, "y");
              if (a.size() != b.size() || !walks::in_weyl(a) || !walks::in_weyl(b)) {
                throw UsageError("--x and --y must be increasing and of equal length");
              }
              std::vector<long long> ns;
              for (int n : n_list_option(n_list->empty() ? "32,64,128,256" : *n_list)) ns.push_back(n);
              const auto f = hs::fit_walk_exponent(d, a, b, ns);
              const double target = static_cast<double>(a.size() * a.size()) / 2.0;
              o.results = {{"model", "walk"}, {"fit", hs::to_json(f)}, {"rho_target", target}};
              add_points(*o.table, f.points, g);
              o.checks["rho_within_0.15"] = std::abs(f.rho - target) <= 0.15;
              o.summary = "rho " + fmt(f.rho) + " (target " + fmt(target) + ")\n";
              return o;
            }
            const auto params = m->params();
            const auto a = ints(*x, "x"), b = ints(*y, "y");
            require_same_r(a, b);
            const auto meth = con_ni_method(*method);
            const auto ns = n_list_option(n_list->empty() ? "8,12,16,24,32" : *n_list);
            if (ns.size() < 4) throw UsageError("--n-list needs at least four distances");
            const auto res = hs::fit_con_ni_scaling(params, a, b, ns, *samples, ctx, meth, !*no_tau);
            o.results = {{"model", "percolation"}, {"fit", hs::to_json(res.fit)}, {"rho_target", res.rho_target}};
            if (res.tau) {
              o.results["tau"] = hs::to_json(*res.tau);
              o.results["rate_z"] = res.rate_z;
              o.checks["rate_consistent_with_tau_3sigma"] = std::abs(res.rate_z) <= 3.0;
            }
            add_points(*o.table, res.fit.points, g);
            o.checks["rho_in_1_3"] = res.fit.rho >= 1.0 && res.fit.rho <= 3.0;
            o.checks["well_conditioned"] = !res.fit.ill_conditioned;
            o.partial = res.partial;
            o.summary = "rho " + fmt(res.fit.rho) + " +- " + fmt(res.fit.rho_se) + "\nrate " + fmt(res.fit.rate) +
                        " +- " + fmt(res.fit.rate_se) + "\n";
            return o;
          }};
}

Command add_convergence(CLI::App& app) {
  auto* sub = app.add_subcommand("convergence", "KS distance of scaled envelope midpoints to the watermelon marginal");
  auto m = std::make_shared<ModelOpts>();
  auto x = std::make_shared<std::string>("-1,1");
  auto y = std::make_shared<std::string>("-1,1");
  auto n_list = std::make_shared<std::string>("8,16,32");
  auto samples = std::make_shared<std::size_t>(2000);
  auto sigma = std::make_shared<std::optional<double>>();
  auto particles = std::make_shared<std::size_t>(400);
  auto thin = std::make_shared<std::size_t>(4);
  m->add(sub);
  sub->add_option("--x", *x, "starting heights");
  sub->add_option("--y", *y, "ending heights");
  sub->add_option("--n-list", *n_list, "even box lengths");
  sub->add_option("--samples", *samples, "conditioned samples per n")->check(CLI::PositiveNumber);
  sub->add_option("--sigma", *sigma, "diffusivity; fitted at the largest n when absent");
  sub->add_option("--particles", *particles, "particles per splitting proposal")->check(CLI::PositiveNumber);
  sub->add_option("--thin", *thin, "proposals between samples")->check(CLI::PositiveNumber);
  return {sub, [=](const hs::RunContext& ctx, const Globals& g) {
            const auto params = m->params();
            if (params.q != 1.0 || params.boundary != Boundary::free) throw UsageError("convergence needs q = 1, free");
            const auto a = ints(*x, "x"), b = ints(*y, "y");
            require_same_r(a, b);
            const auto ns = n_list_option(*n_list);
            for (int n : ns) if (n % 2) throw UsageError("--n-list entries must be even");
            hs::ConvergenceOptions opt;
            opt.sigma = *sigma;
            opt.particles = *particles;
            opt.thin = *thin;
            const auto rep = hs::envelope_convergence_test(params, a, b, ns, *samples, ctx, opt);
            Outcome o;
            o.results = hs::to_json(rep);
            o.table = io::CsvTable({"n", "ks", "ks_threshold", "width_median_over_sqrt_n", "width_median_over_log_n",
                                    "acceptance", "samples", "seconds"});
            for (const auto& row : rep.rows) {
              o.table->row(row.n, row.ks, row.ks_threshold, row.width_median_over_sqrt_n,
                           row.width_median_over_log_n, row.acceptance, row.samples, seconds_cell(row.seconds, g));
            }
            o.checks["ks_non_increasing"] = rep.ks_non_increasing;
            o.checks["width_decreasing"] = rep.width_decreasing;
            if (!rep.rows.empty()) o.checks["ks_gate_at_largest_n"] = rep.rows.back().ks < rep.rows.back().ks_threshold;
            o.partial = rep.partial;
            return o;
          }};
}

Command add_repulsion(CLI::App& app) {
  auto* sub = app.add_subcommand("repulsion", "Edge and bulk repulsion frequencies for walks or percolation");
  auto model = std::make_shared<std::string>("walk");
  auto m = std::make_shared<ModelOpts>();
  auto dist = std::make_shared<std::string>("simple");
  auto x = std::make_shared<std::string>();
  auto y = std::make_shared<std::string>();
  auto n_list = std::make_shared<std::string>();
  auto samples = std::make_shared<std::size_t>(2000);
  auto eps = std::make_shared<double>(0.2);
  auto bulk = std::make_shared<double>(0.15);
  auto particles = std::make_shared<std::size_t>(400);
  auto thin = std::make_shared<std::size_t>(4);
  sub->add_option("--model", *model, "walk or percolation")->check(CLI::IsMember({"walk", "percolation"}));
  m->add(sub);
  sub->add_option("--dist", *dist, "increment law for --model walk");
  sub->add_option("--x", *x, "starting heights; default 0,2 (walk) or -1,1 (percolation)");
  sub->add_option("--y", *y, "ending heights; default as --x");
  sub->add_option("--n-list", *n_list, "horizons; default 64,256,1024 (walk) or 8,16,32 (percolation)");
  sub->add_option("--samples", *samples, "conditioned samples per n")->check(CLI::PositiveNumber);
  sub->add_option("--eps", *eps, "exponent epsilon")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--bulk-exponent", *bulk, "bulk gap threshold exponent (walk)");
  sub->add_option("--particles", *particles, "particles per splitting proposal")->check(CLI::PositiveNumber);
  sub->add_option("--thin", *thin, "proposals between samples")->check(CLI::PositiveNumber);
  return {sub, [=](const hs::RunContext& ctx, const Globals&) {
            Outcome o;
            const bool walk = *model == "walk";
            const std::string xs = x->empty() ? (walk ? "0,2" : "-1,1") : *x;
            const std::string ys = y->empty() ? xs : *y;
            const auto ns = n_list_option(n_list->empty() ? (walk ? "64,256,1024" : "8,16,32") : *n_list);
            Json rows = Json::array();
            if (walk) {
              const auto d = parse_dist(*dist);
              const auto a = longs(xs, "x"), b = longs(ys, "y");
              if (a.size() != b.size() || !walks::in_weyl(a) || !walks::in_weyl(b)) {
                throw UsageError("--x and --y must be increasing and of equal length");
              }
              o.table = io::CsvTable({"n", "samples", "freq_eta_late", "freq_last_early", "freq_bulk_close", "mean_eta"});
              std::vector<double> late, close;
              for (int n : ns) {
                if (ctx.budget.expired()) {
                  o.partial = true;
                  break;
                }
                const auto batch = walks::sample_conditioned_bridge(d, a, b, n, *samples,
                                                                    sub_context(ctx, n).seed,
                                                                    walks::BridgeMethod::dp_backward);
                const auto s = walks::repulsion_stats(batch.samples, n, {*eps, *bulk});
                o.table->row(n, s.samples, s.freq_eta_late, s.freq_last_early, s.freq_bulk_close, s.mean_eta);
                rows.push_back({{"n", n},
                                {"samples", s.samples},
                                {"freq_eta_late", s.freq_eta_late},
                                {"freq_last_early", s.freq_last_early},
                                {"freq_bulk_close", s.freq_bulk_close},
                                {"mean_eta", s.mean_eta}});
                late.push_back(s.freq_eta_late);
                close.push_back(s.freq_bulk_close);
              }
              o.checks["edge_frequency_decreasing"] = decreasing(late, true);
              o.checks["bulk_frequency_decreasing"] = decreasing(close, true);
            } else {
              const auto params = m->params();
              const auto a = ints(xs, "x"), b = ints(ys, "y");
              require_same_r(a, b);
              const auto meth = params.q == 1.0 && params.boundary == Boundary::free ? hs::ConNiMethod::splitting
                                                                                      : hs::ConNiMethod::rejection;
              o.table = io::CsvTable({"n", "samples", "freq_t1_late", "freq_t2_early", "freq_bulk_close",
                                      "freq_violation"});
              std::vector<double> viol;
              for (int n : ns) {
                if (ctx.budget.expired()) {
                  o.partial = true;
                  break;
                }
                const auto g = hs::default_box(n, a, b);
                const auto batch =
                    hs::sample_conditioned(params, g, a, b, *samples, meth, sub_context(ctx, n), *particles, *thin);
                const auto row = hs::globrep_diagnostic(batch.configs, a, b, *eps);
                o.table->row(n, row.samples, row.freq_t1_late, row.freq_t2_early, row.freq_bulk_close,
                             row.freq_violation);
                rows.push_back(hs::to_json(row));
                viol.push_back(row.freq_violation);
              }
              o.checks["violation_frequency_decreasing"] = decreasing(viol, true);
            }
            o.results = {{"model", *model}, {"eps", *eps}, {"rows", rows}};
            return o;
          }};
}

Command add_duality(CLI::App& app) {
  auto* sub = app.add_subcommand("duality", "Supercritical truncated decay rate against 2 tau at the dual point");
  auto p = std::make_shared<double>(0.6);
  auto n_list = std::make_shared<std::string>("4,6,8,10,12");
  auto samples = std::make_shared<std::size_t>(1000000);
  auto tau_n = std::make_shared<std::string>("8,12,16,24,32");
  auto tau_samples = std::make_shared<std::size_t>(100000);
  auto margin = std::make_shared<int>(0);
  sub->add_option("--p", *p, "supercritical edge weight (q = 1)");
  sub->add_option("--n-list", *n_list, "distances for the truncated two-point function");
  sub->add_option("--samples", *samples, "explorations per distance")->check(CLI::PositiveNumber);
  sub->add_option("--tau-n-list", *tau_n, "distances for tau at the dual point");
  sub->add_option("--tau-samples", *tau_samples, "samples per distance for tau")->check(CLI::PositiveNumber);
  sub->add_option("--margin", *margin, "box margin; default max(4, 2 sqrt n)");
  return {sub, [=](const hs::RunContext& ctx, const Globals& g) {
            if (!(*p > 0.5 && *p < 1.0)) throw UsageError("--p must lie in (1/2, 1)");
            const auto rep =
                hs::duality_stretch_check(*p, n_list_option(*n_list), *samples, n_list_option(*tau_n), *tau_samples,
                                          ctx, *margin);
            Outcome o;
            Json pts = Json::array();
            o.table = summary_table();
            for (const auto& e : rep.points) {
              pts.push_back({{"n", e.n}, {"estimate", e.value}, {"stderr", e.stderr_}, {"samples", e.samples},
                             {"hits", e.hits}});
            }
            for (const auto& pt : rep.fit.points) o.table->row(pt.n, pt.value, pt.stderr_, pt.samples, seconds_cell(pt.seconds, g));
            o.results = {{"p", rep.p},
                         {"p_star", rep.p_star},
                         {"involution_error", rep.involution_error},
                         {"fit", hs::to_json(rep.fit)},
                         {"tau_dual", hs::to_json(rep.tau_dual)},
                         {"ratio", rep.ratio},
                         {"ratio_se", rep.ratio_se},
                         {"points", pts}};
            o.checks["involution"] = rep.involution_error < 1e-12;
            o.checks["ratio_in_1.6_2.4"] = rep.ratio >= 1.6 && rep.ratio <= 2.4;
            o.partial = rep.partial;
            o.summary = "ratio " + fmt(rep.ratio) + " +- " + fmt(rep.ratio_se) + "\n";
            return o;
          }};
}

Command add_report(CLI::App& app) {
  auto* sub = app.add_subcommand("report", "Summarise JSON reports written by other subcommands");
  auto inputs = std::make_shared<std::vector<std::string>>();
  sub->add_option("inputs", *inputs, "JSON report files")->required()->check(CLI::ExistingFile);
  return {sub, [=](const hs::RunContext&, const Globals&) {
            Outcome o;
            o.table = io::CsvTable({"file", "experiment", "check", "pass", "partial"});
            Json files = Json::array();
            bool all = true;
            for (const auto& path : *inputs) {
              Json j;
              try {
                j = Json::parse(io::read_file(path));
              } catch (const Json::parse_error& e) {
                throw UsageError(path + " is not a JSON report: " + e.what());
              }
              const std::string id = j.value("experiment", std::string("?"));
              const bool partial = j.value("partial", false);
              const auto checks = j.value("checks", Json::object());
              for (const auto& [k, v] : checks.items()) {
                o.table->row(path, id, k, v.get<bool>() ? "true" : "false", partial ? "true" : "false");
                all = all && v.get<bool>();
                o.summary += (v.get<bool>() ? "PASS " : "FAIL ") + id + " " + k + "\n";
              }
              files.push_back({{"file", path}, {"experiment", id}, {"partial", partial}, {"checks", checks}});
            }
            o.results = {{"files", files}, {"all_pass", all}};
            return o;
          }};
}

Command add_dual(CLI::App& app) {
  auto* sub = app.add_subcommand("dual", "Dual parameter p* of (p, q)");
  auto p = std::make_shared<double>(0.5);
  auto q = std::make_shared<double>(1.0);
  sub->add_option("--p", *p, "edge weight in (0,1)")->required();
  sub->add_option("--q", *q, "cluster weight >= 1");
  return {sub, [=](const hs::RunContext&, const Globals&) {
            double ps = 0.0;
            try {
              ps = gibbs::dual_parameter(*p, *q);
            } catch (const std::invalid_argument& e) {
              throw UsageError(e.what());
            }
            Outcome o;
            o.results = {{"p", *p}, {"q", *q}, {"p_star", ps}};
            o.summary = fmt(ps) + "\n";
            return o;
          }};
}

// ---------------------------------------------------------------------------
// Config merging: values from --config are inserted for every key that does
// not appear on the command line, so flags always win.

std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

std::vector<std::string> merge_config(std::vector<std::string> args, const std::vector<std::string>& subcommands) {
  const auto path = find_config(args);
  if (!path) return args;
  std::map<std::string, std::string> cfg;
  try {
    cfg = io::parse_config(io::read_file(*path));
  } catch (const std::exception& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
  std::set<std::string> given;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (sub_pos == args.size() && std::find(subcommands.begin(), subcommands.end(), a) != subcommands.end()) {
      sub_pos = i;
    }
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  if (sub_pos == args.size()) {
    auto it = cfg.find("subcommand");
    if (it == cfg.end()) return args;
    args.push_back(it->second);
    sub_pos = args.size() - 1;
  }
  std::vector<std::string> extra;
  for (const auto& [k, v] : cfg) {
    if (k == "subcommand" || k == "config" || given.count(k)) continue;
    extra.push_back("--" + k + "=" + v);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, extra.begin(), extra.end());
  return args;
}

std::map<std::string, std::string> collect_params(const CLI::App& sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name.empty() || name == "help") continue;
    std::string v;
    if (o->get_type_size() == 0) {
      v = o->count() ? "true" : "false";
    } else if (o->count()) {
      for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = o->get_default_str();
      if (v.empty()) continue;
    }
    out[name] = v;
  }
  return out;
}

// Wall-clock fields are dropped unless --timings is given, so that repeated
// runs produce identical files.
void scrub_seconds(Json& j) {
  if (j.is_object()) {
    j.erase("seconds");
    for (auto& [k, v] : j.items()) scrub_seconds(v);
  } else if (j.is_array()) {
    for (auto& v : j) scrub_seconds(v);
  }
}

void write_outputs(const Globals& g, const io::RunManifest& manifest, const std::string& id, const Outcome& o,
                   double seconds) {
  if (g.out.empty()) return;
  const std::filesystem::path path(g.out);
  const auto ext = path.extension().string();
  if (ext == ".csv") {
    if (!o.table) throw UsageError(id + " produces no table; use a .json or .jsonl output");
    io::write_atomic(path, o.table->render(manifest));
    return;
  }
  if (ext == ".jsonl") {
    std::string text = Json{{"manifest", manifest.to_json()}, {"partial", o.partial}}.dump() + "\n";
    for (const auto& r : o.records) text += r.dump() + "\n";
    if (o.records.empty()) text += o.results.dump() + "\n";
    io::write_atomic(path, text);
    return;
  }
  hs::ExperimentReport rep;
  rep.id = id;
  rep.manifest = manifest;
  rep.results = o.results;
  rep.checks = o.checks;
  rep.partial = o.partial;
  rep.seconds = seconds;
  Json j = rep.to_json();
  if (!g.timings) j.erase("seconds");
  if (!g.timings) scrub_seconds(j["results"]);
  io::write_atomic(path, j.dump(2) + "\n");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"fkw: FK percolation, ordered walks and Brownian watermelons", "fkw"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--threads", g.threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file: .json report, .csv table or .jsonl records");
  app.add_option("--config", g.config, "key = value file; command-line flags take precedence");
  app.add_option("--budget-seconds", g.budget_seconds, "wall-clock budget; 0 means unlimited")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--timings", g.timings, "record wall-clock seconds in output files");

  std::vector<Command> commands{add_sample_fk(app),    add_sample_conditioned(app), add_skeleton(app),
                                add_walk_bridge(app),  add_km_prob(app),            add_dp_kernel(app),
                                add_estimate_v(app),   add_watermelon(app),         add_estimate_tau(app),
                                add_scaling(app),      add_convergence(app),        add_repulsion(app),
                                add_duality(app),      add_report(app),             add_dual(app)};
  std::vector<std::string> names;
  for (const auto& c : commands) names.push_back(c.app->get_name());

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(args, names);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const Command* cmd = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) cmd = &c;
  }
  io::RunManifest manifest;
  manifest.subcommand = cmd->app->get_name();
  manifest.seed = g.seed;
  manifest.params = collect_params(*cmd->app);
  if (g.budget_seconds > 0) manifest.params["budget-seconds"] = fmt(g.budget_seconds, 17);
  if (!g.config.empty()) manifest.inputs.push_back(g.config);
  if (cmd->app->get_name() == "report") {
    for (const auto& r : cmd->app->get_option("inputs")->results()) manifest.inputs.push_back(r);
  }
  if (!g.out.empty()) manifest.outputs.push_back(g.out);

  hs::RunContext ctx;
  ctx.seed = g.seed;
  ctx.threads = g.threads;
  if (g.budget_seconds > 0) ctx.budget = hs::Budget(g.budget_seconds);

  hs::Stopwatch sw;
  Outcome o;
  int code = kOk;
  try {
    o = cmd->run(ctx, g);
  } catch (const walks::BudgetExhausted& e) {
    o = Outcome{};
    o.partial = true;
    o.results = {{"error", e.what()}};
    std::cerr << "budget exhausted: " << e.what() << "\n";
    code = kBudget;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  if (o.partial) code = kBudget;
  const double seconds = sw.seconds();
  try {
    write_outputs(g, manifest, manifest.subcommand, o, seconds);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  std::cout << (o.summary.empty() ? o.results.dump(2) + "\n" : o.summary);
  for (const auto& [k, v] : o.checks) std::cout << (v ? "PASS " : "FAIL ") << k << "\n";
  if (o.partial) std::cout << "partial: time budget exhausted\n";
  std::cerr << manifest.subcommand << " finished in " << fmt(seconds, 4) << " s\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) { return dispatch(argc, argv); }
