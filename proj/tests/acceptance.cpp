// Acceptance suite. Prints one PASS/FAIL line per criterion followed by the
// measured values; exits non-zero if any criterion fails.
//
//   fkw_acceptance [--only 1,5] [--seed S] [--threads T] [--skip-stretch]

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fkw/gibbs.hpp"
#include "fkw/harness.hpp"
#include "fkw/lattice.hpp"
#include "fkw/stats.hpp"
#include "fkw/walks.hpp"
#include "fkw/watermelon.hpp"

namespace {

using namespace fkw;
namespace hs = fkw::harness;
namespace wm = fkw::watermelon;
using lattice::Boundary;
using lattice::BoxGeometry;

struct Verdict {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;  // 0: no limit
  std::function<Verdict(const hs::RunContext&)> run;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string join(const std::vector<double>& v, int digits = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i], digits);
  return "[" + s + "]";
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return true;
}

// 1. Heat-bath law of (open edges, clusters) against exact enumeration.
Verdict sampler_exactness(const hs::RunContext& ctx) {
  constexpr std::size_t kMaxEdges = 28;
  constexpr std::size_t kSweeps = 1'000'000;
  std::vector<BoxGeometry> boxes;
  for (int rows = 2;; ++rows) {
    if (BoxGeometry(1, 0, rows - 1).edge_count() > kMaxEdges) break;
    for (int n = 1; BoxGeometry(n, 0, rows - 1).edge_count() <= kMaxEdges; ++n) boxes.emplace_back(n, 0, rows - 1);
  }
  const std::vector<Boundary> bcs{Boundary::free, Boundary::wired};
  const std::vector<double> qs{1.0, 1.5, 2.0};

  std::vector<gibbs::OkCounts> counts(boxes.size() * bcs.size());
  hs::parallel_for(counts.size(), ctx.threads, [&](std::size_t i) {
    counts[i] = gibbs::exact_ok_counts(boxes[i / bcs.size()], bcs[i % bcs.size()]);
  });

  const std::size_t runs = counts.size() * qs.size();
  std::vector<double> tv(runs, 0.0);
  hs::parallel_for(runs, ctx.threads, [&](std::size_t job) {
    const std::size_t c = job / qs.size();
    const BoxGeometry& g = boxes[c / bcs.size()];
    const double q = qs[job % qs.size()];
    const gibbs::RcParams params{std::sqrt(q) / (1.0 + std::sqrt(q)), q, bcs[c % bcs.size()]};
    const std::size_t width = g.vertex_count() + 1;
    std::vector<std::uint64_t> hist((g.edge_count() + 1) * width, 0);
    gibbs::run_chain(params, g, {1000, 1}, kSweeps, ctx.seed, job, [&](const gibbs::ChainState& s) {
      ++hist[s.config().open_count() * width + s.cluster_count()];
    });
    const auto exact = gibbs::ok_law(params, counts[c]);
    double d = 0.0, covered = 0.0;
    for (const auto& [key, p] : exact) {
      const double emp = static_cast<double>(hist[key.first * width + key.second]) / kSweeps;
      d += std::abs(emp - p);
      covered += emp;
    }
    tv[job] = 0.5 * (d + (1.0 - covered));  // empirical mass outside the exact support
  });

  Verdict v;
  std::size_t worst = 0;
  for (std::size_t j = 1; j < runs; ++j) {
    if (tv[j] > tv[worst]) worst = j;
  }
  const std::size_t wc = worst / qs.size();
  v.pass = tv[worst] < 0.01;
  v.summary = "max TV " + num(tv[worst]) + " < 0.01 over " + std::to_string(runs) + " runs (" +
              std::to_string(boxes.size()) + " boxes, q in {1, 1.5, 2}, free and wired, 1e6 sweeps)";
  v.details.push_back("worst: box " + boxes[wc / bcs.size()].to_string() + " " +
                      std::string(lattice::to_string(bcs[wc % bcs.size()])) + " q=" + num(qs[worst % qs.size()]));
  double mean = 0.0;
  for (double t : tv) mean += t / static_cast<double>(runs);
  v.details.push_back("mean TV " + num(mean));
  return v;
}

// 2. DP kernel against Karlin-McGregor and a plain pair recursion.
Verdict oracle_equivalence(const hs::RunContext&) {
  constexpr long long kN = 12, kL = 6;
  walks::CubeGrid grid(2, -kL - kN, kL + kN);
  std::size_t cases = 0, km_cases = 0, mismatches = 0;
  std::string first_bad;
  for (long long x1 = -kL; x1 <= kL; ++x1) {
    for (long long x2 = x1 + 1; x2 <= kL; ++x2) {
      const walks::Point x{x1, x2};
      walks::ForwardDp<walks::BigInt> dp(grid, walks::simple_count_kernels(), x);
      // Independent oracle: pairs (a, b) with a < b after every step.
      std::map<std::pair<long long, long long>, std::uint64_t> naive{{{x1, x2}, 1}};
      for (long long n = 1; n <= kN; ++n) {
        dp.advance();
        std::map<std::pair<long long, long long>, std::uint64_t> next;
        for (const auto& [ab, c] : naive) {
          for (int da : {-1, 1}) {
            for (int db : {-1, 1}) {
              if (ab.first + da < ab.second + db) next[{ab.first + da, ab.second + db}] += c;
            }
          }
        }
        naive.swap(next);
        for (long long y1 = -kL; y1 <= kL; ++y1) {
          for (long long y2 = y1 + 1; y2 <= kL; ++y2) {
            const walks::Point y{y1, y2};
            const walks::BigInt d = dp.current()[grid.index(y)];
            const auto it = naive.find({y1, y2});
            bool ok = d == walks::BigInt(it == naive.end() ? 0 : it->second);
            if (walks::km_applicable(x)) {
              ok = ok && d == walks::km_bridge_count(x, y, n).count;
              ++km_cases;
            }
            ++cases;
            if (!ok && mismatches++ == 0) {
              first_bad = "x=(" + std::to_string(x1) + "," + std::to_string(x2) + ") y=(" + std::to_string(y1) + "," +
                          std::to_string(y2) + ") n=" + std::to_string(n);
            }
          }
        }
      }
    }
  }
  // n = 2, x = y = (0, 2): all 16 pairs of two-step paths.
  std::size_t enumerated = 0;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      long long p = 0, q = 2;
      bool ordered = true;
      for (int t = 0; t < 2; ++t) {
        p += (a >> t & 1) ? 1 : -1;
        q += (b >> t & 1) ? 1 : -1;
        ordered = ordered && p < q;
      }
      if (ordered && p == 0 && q == 2) ++enumerated;
    }
  }
  const walks::Point x02{0, 2};
  const auto km = walks::km_bridge_count(x02, x02, 2).count;
  const auto dp = walks::dp_weyl_count(x02, x02, 2);
  Verdict v;
  v.pass = mismatches == 0 && enumerated == 3 && km == 3 && dp == 3;
  v.summary = std::to_string(cases) + " cases (" + std::to_string(km_cases) + " against Karlin-McGregor), " +
              std::to_string(mismatches) + " mismatches; n=2 x=y=(0,2): enumeration " + std::to_string(enumerated) +
              ", KM " + km.str() + ", DP " + dp.str();
  if (!first_bad.empty()) v.details.push_back("first mismatch " + first_bad);
  return v;
}

// 3. Exponent of q_n for two simple walks.
Verdict walk_exponent(const hs::RunContext&) {
  const std::vector<long long> ns{32, 48, 64, 96, 128, 160, 192, 224, 256};
  const auto f = hs::fit_walk_exponent(walks::IncrementDist::simple(), {0, 2}, {0, 2}, ns);
  Verdict v;
  v.pass = std::abs(f.rho - 2.0) <= 0.15;
  v.summary = "rho " + num(f.rho) + ", |rho - 2| <= 0.15 (x=y=(0,2), n 32..256)";
  return v;
}

// 4. Exponent and rate of phi[Con, NI] for two percolation clusters.
Verdict percolation_exponent(const hs::RunContext& ctx) {
  const gibbs::RcParams params{0.3, 1.0, Boundary::free};
  const std::vector<int> x{-1, 1};
  const auto res = hs::fit_con_ni_scaling(params, x, x, {8, 12, 16, 24, 32}, 100'000, ctx,
                                          hs::ConNiMethod::splitting, true);
  Verdict v;
  const bool rho_ok = res.fit.rho >= 1.0 && res.fit.rho <= 3.0;
  const bool rate_ok = res.tau && std::abs(res.rate_z) <= 3.0;
  v.pass = rho_ok && rate_ok && !res.partial;
  v.summary = "rho " + num(res.fit.rho) + " +- " + num(res.fit.rho_se) + " in [1, 3]; rate per cluster " + num(res.fit.rate) +
              " +- " + num(res.fit.rate_se) + " vs tau " + (res.tau ? num(res.tau->tau) : "n/a") +
              ", z " + num(res.rate_z) + " (|z| <= 3)";
  for (const auto& p : res.fit.points) {
    v.details.push_back("n=" + std::to_string(p.n) + " phi=" + num(p.value) + " +- " + num(p.stderr_));
  }
  if (res.tau) v.details.push_back("tau " + num(res.tau->tau) + " +- " + num(res.tau->se));
  return v;
}

// 5. Watermelon sampler against the exact marginal at t = 1/2.
Verdict watermelon_gate(const hs::RunContext& ctx) {
  constexpr std::size_t kCount = 10'000;
  const auto grid = wm::uniform_grid(64);
  const std::size_t mid = 32;
  const auto two = wm::sample_watermelon(2, grid, kCount, ctx.seed, wm::Method::matrix_bridge);
  const wm::OrderedMarginals om(2, 0.5);
  const double thr = stats::ks_threshold(kCount);
  std::vector<double> ks;
  for (std::size_t i = 0; i < 2; ++i) {
    ks.push_back(stats::ks_one_sample(wm::coordinate_at(two.samples, mid, i),
                                      [&](double z) { return om.cdf(i, z); }));
  }
  const auto one = wm::sample_watermelon(1, grid, kCount, ctx.seed + 1, wm::Method::matrix_bridge);
  const auto m1 = wm::coordinate_at(one.samples, mid, 0);
  const double var = stats::variance(m1);
  const double se = 0.25 * std::sqrt(2.0 / static_cast<double>(kCount - 1));
  Verdict v;
  v.pass = ks[0] < thr && ks[1] < thr && std::abs(var - 0.25) <= 3.0 * se;
  v.summary = "r=2 KS " + join(ks) + " < " + num(thr) + "; r=1 variance " + num(var) + " = 0.25 +- " +
              num(3.0 * se);
  return v;
}

// 6. Envelope midpoints against the watermelon marginal.
Verdict convergence_trend(const hs::RunContext& ctx) {
  const gibbs::RcParams params{0.3, 1.0, Boundary::free};
  const std::vector<int> ns{8, 16, 32};
  // The r=1 gate is sized at N=2000. The r=2 trend compares KS values that
  // differ by about 0.01 between successive n, so it needs N=10^4 to put the
  // sampling spread of each value (about 0.003) well below that.
  constexpr std::size_t kGateSamples = 2000;
  constexpr std::size_t kTrendSamples = 10'000;
  const auto one = hs::envelope_convergence_test(params, {0}, {0}, ns, kGateSamples, ctx);
  hs::ConvergenceOptions opt;
  opt.sigma = one.sigma;  // diffusivity from the single cluster, reused for r = 2
  const auto two = hs::envelope_convergence_test(params, {-1, 1}, {-1, 1}, ns, kTrendSamples, ctx, opt);
  std::vector<double> ks1, ks2;
  for (const auto& r : one.rows) ks1.push_back(r.ks);
  for (const auto& r : two.rows) ks2.push_back(r.ks);
  const bool gate = !one.rows.empty() && one.rows.back().ks < one.rows.back().ks_threshold;
  Verdict v;
  v.pass = two.ks_non_increasing && gate && !one.partial && !two.partial;
  v.summary = "r=2 KS " + join(ks2) + (two.ks_non_increasing ? "" : " NOT") + " non-increasing; r=1 KS at n=32 " + (ks1.empty() ? "n/a" : num(ks1.back())) +
              " < " + (one.rows.empty() ? "n/a" : num(one.rows.back().ks_threshold));
  v.details.push_back("sigma " + num(one.sigma) + " (from r=1 at n=32); r=1 KS " + join(ks1));
  for (const auto& r : two.rows) {
    v.details.push_back("r=2 n=" + std::to_string(r.n) + " samples " + std::to_string(r.samples) + " KS " + num(r.ks) +
                        " (alpha=0.01 threshold " + num(r.ks_threshold) + "), median width / sqrt n " +
                        num(r.width_median_over_sqrt_n));
  }
  return v;
}

// 7. Edge and bulk repulsion of conditioned walks; GlobRep for clusters.
Verdict repulsion_trends(const hs::RunContext& ctx) {
  const auto lazy = walks::IncrementDist::lazy();
  const walks::Point x{0, 2};
  const std::vector<long long> ns{64, 256, 1024};
  constexpr double kGateEps = 0.3;
  constexpr std::size_t kWalkSamples = 4000;
  std::map<double, std::vector<double>> late, close;
  for (long long n : ns) {
    const auto batch = walks::sample_conditioned_bridge(lazy, x, x, n, kWalkSamples,
                                                        ctx.seed + 7919u * static_cast<std::uint64_t>(n),
                                                        walks::BridgeMethod::dp_backward);
    for (double eps : {0.1, 0.2, 0.3}) {
      const auto s = walks::repulsion_stats(batch.samples, n, {eps, 0.15});
      late[eps].push_back(s.freq_eta_late);
      close[eps].push_back(s.freq_bulk_close);
    }
  }
  const gibbs::RcParams params{0.3, 1.0, Boundary::free};
  const std::vector<int> px{-1, 1};
  std::vector<double> viol;
  for (int n : {8, 16, 32}) {
    hs::RunContext sub = ctx;
    sub.seed = ctx.seed + 104729u * static_cast<std::uint64_t>(n);
    const auto b = hs::sample_conditioned(params, hs::default_box(n, px, px), px, px, 1000, hs::ConNiMethod::splitting,
                                          sub);
    viol.push_back(hs::globrep_diagnostic(b.configs, px, px, 0.2).freq_violation);
  }
  const bool edge = strictly_decreasing(late[kGateEps]);
  const bool bulk = strictly_decreasing(close[kGateEps]);
  const bool glob = strictly_decreasing(viol);
  Verdict v;
  v.pass = edge && bulk && glob;
  v.summary = "eps=0.3: P[eta > n^0.7] " + join(late[kGateEps]) + (edge ? " decreasing" : " NOT decreasing") +
              "; P[bulk gap <= n^0.15] " + join(close[kGateEps]) + (bulk ? " decreasing" : " NOT decreasing") +
              "; GlobRep violation " + join(viol) + (glob ? " decreasing" : " NOT decreasing");
  for (double eps : {0.1, 0.2}) {
    v.details.push_back("eps=" + num(eps) + ": edge " + join(late[eps]) + ", bulk " + join(close[eps]));
  }
  v.details.push_back("walks: lazy, x=y=(0,2), n 64/256/1024, " + std::to_string(kWalkSamples) +
                      " dp-backward bridges each; clusters: p=0.3, x=y=(-1,1), 1000 samples each");
  return v;
}

// 8. Confinement of a single walk near 0.
Verdict non_confinement(const hs::RunContext& ctx) {
  constexpr double kEps = 0.2;
  std::vector<double> freq, ratio, exact, exact_ratio;
  std::vector<std::string> rows;
  for (long long n : {256LL, 1024LL, 4096LL}) {
    const auto r = hs::non_confinement_trial(n, kEps, 0.9, 4'000'000, ctx);
    const double scale = std::pow(static_cast<double>(n), 1.0 - 3.0 * kEps);
    freq.push_back(r.frequency);
    ratio.push_back(r.hits ? -std::log(r.frequency) / scale : INFINITY);
    exact.push_back(r.exact);
    exact_ratio.push_back(-std::log(r.exact) / scale);
    rows.push_back("n=" + std::to_string(n) + " horizon " + std::to_string(r.horizon) + " tube " + num(r.tube) +
                   " hits " + std::to_string(r.hits) + "/" + std::to_string(r.samples) + " freq " + num(r.frequency) +
                   " +- " + num(r.stderr_) + " exact " + num(r.exact));
  }
  const bool dec = strictly_decreasing(freq);
  bool mono = true;
  for (std::size_t i = 1; i < ratio.size(); ++i) mono = mono && ratio[i] >= ratio[i - 1];
  Verdict v;
  v.pass = dec && mono;
  v.summary = "P[count > 0.9 n^0.8] " + join(freq) + (dec ? " decreasing" : " NOT decreasing") +
              "; -log P / n^0.4 " + join(ratio) + (mono ? " non-decreasing" : " NOT non-decreasing");
  v.details = rows;
  v.details.push_back("exact -log P / n^0.4 " + join(exact_ratio));
  return v;
}

// 9. Properties of the harmonic function of the killed lazy walk.
Verdict harmonic_function(const hs::RunContext&) {
  const auto lazy = walks::IncrementDist::lazy();
  Verdict v;
  v.pass = true;
  std::string summary;
  for (std::size_t r : {2u, 3u}) {
    const long long g_max = r == 2 ? 40 : 30;
    std::vector<walks::Point> pts;
    std::vector<std::vector<long long>> gaps;
    for (long long a = 1; a <= g_max; ++a) {
      if (r == 2) {
        pts.push_back({0, a});
        gaps.push_back({a});
        continue;
      }
      for (long long b = 1; b <= g_max; ++b) {
        pts.push_back({0, a, a + b});
        gaps.push_back({a, b});
      }
    }
    const auto est = walks::estimate_V(lazy, r, pts, 8000, 1e-3);
    // Property 2.
    double worst_ratio = 1.0;
    std::size_t far = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (geometry::gap(pts[k]) < 20) continue;
      ++far;
      const double ratio = est.values[k] / walks::vandermonde_of(pts[k]);
      if (std::abs(ratio - 1.0) > std::abs(worst_ratio - 1.0)) worst_ratio = ratio;
    }
    const bool p2 = far > 0 && worst_ratio >= 0.9 && worst_ratio <= 1.1;
    // Property 1: every pair with all gaps strictly larger.
    std::size_t pairs = 0, violations = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        bool larger = true;
        for (std::size_t d = 0; d < gaps[i].size(); ++d) larger = larger && gaps[j][d] > gaps[i][d];
        if (!larger) continue;
        ++pairs;
        if (est.values[j] < est.values[i]) ++violations;
      }
    }
    const bool p1 = violations == 0;
    // Property 3: c fitted where Gap >= g_max / 2, bound checked on the whole grid.
    const auto poly = [&](const walks::Point& z) {
      double p = 1.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        for (std::size_t j = i + 1; j < z.size(); ++j) p *= 1.0 + static_cast<double>(z[j] - z[i]);
      }
      return p;
    };
    double c = 0.0, worst_bound = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (2 * static_cast<long long>(geometry::gap(pts[k])) >= g_max) c = std::max(c, est.values[k] / poly(pts[k]));
    }
    std::size_t bound_violations = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      worst_bound = std::max(worst_bound, est.values[k] / (c * poly(pts[k])));
      if (est.values[k] > c * poly(pts[k])) ++bound_violations;
    }
    const bool p3 = bound_violations == 0;
    v.pass = v.pass && p1 && p2 && p3 && est.converged;
    summary += (summary.empty() ? "" : "; ") + std::string("r=") + std::to_string(r) + ": V/Delta at Gap>=20 worst " +
               num(worst_ratio) + ", monotone " + std::to_string(pairs - violations) + "/" + std::to_string(pairs) +
               " pairs, V <= c prod(1+gaps) with c=" + num(c) + " (" + std::to_string(bound_violations) +
               " violations)";
    v.details.push_back("r=" + std::to_string(r) + ": " + std::to_string(pts.size()) + " points, residual " +
                        num(est.residual) + (est.converged ? ", converged" : ", NOT converged") +
                        ", max V/(c prod) " + num(worst_bound));
  }
  v.summary = summary;
  return v;
}

// 10. Supercritical truncated decay against twice tau at the dual point.
Verdict duality_stretch(const hs::RunContext& ctx) {
  const auto rep = hs::duality_stretch_check(0.6, {4, 6, 8, 10, 12}, 10'000'000, {8, 12, 16, 24, 32}, 100'000, ctx, 0);
  Verdict v;
  v.pass = rep.ratio >= 1.6 && rep.ratio <= 2.4 && !rep.partial;
  v.summary = "p=0.6, p*=" + num(rep.p_star) + ": rate ratio " + num(rep.ratio) + " +- " + num(rep.ratio_se) +
              " in [1.6, 2.4]";
  for (const auto& e : rep.points) {
    v.details.push_back("n=" + std::to_string(e.n) + " truncated " + num(e.value) + " +- " + num(e.stderr_) + " (" +
                        std::to_string(e.hits) + " hits)");
  }
  v.details.push_back("rate " + num(rep.fit.rate) + " +- " + num(rep.fit.rate_se) + ", tau(p*) " +
                      num(rep.tau_dual.tau) + " +- " + num(rep.tau_dual.se));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria 1-10");
  std::string only;
  std::uint64_t seed = 20240601;
  std::size_t threads = hs::default_threads();
  bool skip_stretch = false;
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--skip-stretch", skip_stretch, "skip criterion 10");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (!only.empty()) {
    std::stringstream ss(only);
    for (std::string tok; std::getline(ss, tok, ',');) selected.insert(std::stoi(tok));
  }

  const std::vector<Criterion> criteria{
      {1, "sampler exactness", 300, sampler_exactness},
      {2, "oracle equivalence", 60, oracle_equivalence},
      {3, "walk exponent", 600, walk_exponent},
      {4, "percolation exponent", 3600, percolation_exponent},
      {5, "watermelon gate", 300, watermelon_gate},
      {6, "convergence trend", 3600, convergence_trend},
      {7, "repulsion trends", 1800, repulsion_trends},
      {8, "non-confinement", 300, non_confinement},
      {9, "harmonic function", 600, harmonic_function},
      {10, "duality stretch", 0, duality_stretch},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const std::string head = "criterion " + std::to_string(c.id) + " (" + c.title + ")";
    if (c.id == 10 && skip_stretch) {
      std::cout << "SKIP " << head << ": --skip-stretch" << std::endl;
      continue;
    }
    hs::RunContext ctx;
    ctx.seed = seed + static_cast<std::uint64_t>(c.id);
    ctx.threads = threads;
    hs::Stopwatch sw;
    Verdict v;
    try {
      v = c.run(ctx);
    } catch (const std::exception& e) {
      v.pass = false;
      v.summary = std::string("error: ") + e.what();
    }
    const double s = sw.seconds();
    const bool in_time = c.limit_seconds <= 0 || s < c.limit_seconds;
    const bool pass = v.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS " : "FAIL ") << head << ": " << v.summary << "; runtime " << num(s, 4) << " s";
    if (c.limit_seconds > 0) std::cout << (in_time ? " < " : " >= ") << num(c.limit_seconds, 5) << " s";
    std::cout << "\n";
    for (const auto& d : v.details) std::cout << "    " << d << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
