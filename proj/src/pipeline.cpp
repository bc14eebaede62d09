#include "subpop/pipeline.hpp"

#include "subpop/mixture_em.hpp"
#include "subpop/permutation.hpp"
#include "subpop/transform.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace subpop {

std::string_view to_string(TestKind kind) {
  switch (kind) {
    case TestKind::T: return "t";
    case TestKind::Wmw: return "wmw";
    case TestKind::Ks: return "ks";
    case TestKind::Hotelling: return "hotelling";
    case TestKind::Coordinate: return "coordinate";
    case TestKind::Spatial: return "spatial";
  }
  return "?";
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Usual: return "usual";
    case Mode::Method1: return "method1";
    case Mode::Method2: return "method2";
  }
  return "?";
}

TestKind parse_test_kind(std::string_view text) {
  for (auto k : {TestKind::T, TestKind::Wmw, TestKind::Ks, TestKind::Hotelling,
                 TestKind::Coordinate, TestKind::Spatial}) {
    if (to_string(k) == text) return k;
  }
  throw InvalidArgument("unknown test '" + std::string(text) +
                        "' (expected t, wmw, ks, hotelling, coordinate or spatial)");
}

Mode parse_mode(std::string_view text) {
  for (auto m : {Mode::Usual, Mode::Method1, Mode::Method2}) {
    if (to_string(m) == text) return m;
  }
  throw InvalidArgument("unknown mode '" + std::string(text) + "' (expected usual, method1 or method2)");
}

bool is_univariate(TestKind kind) {
  return kind == TestKind::T || kind == TestKind::Wmw || kind == TestKind::Ks;
}

std::vector<TestKind> default_tests(Index dim) {
  if (dim == 1) return {TestKind::T, TestKind::Wmw, TestKind::Ks};
  return {TestKind::Hotelling, TestKind::Coordinate, TestKind::Spatial};
}

void TwoSampleData::validate() const {
  if (x1.dim() != x2.dim()) throw InvalidArgument("groups have different dimensions");
  if (x1.size() < 2 || x2.size() < 2) throw InvalidArgument("each group needs at least two points");
}

void AnalysisConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(beta >= 0.0 && beta < 0.5)) throw InvalidArgument("beta must lie in [0, 0.5)");
  if (M < 1) throw InvalidArgument("M must be >= 1");
  if (k_max < 2) throw InvalidArgument("k_max must be >= 2");
  if (gap_B < 1) throw InvalidArgument("gap_B must be >= 1");
  if (perm_B < 1) throw InvalidArgument("perm_B must be >= 1");
  if (!(enumeration_cap >= 0.0)) throw InvalidArgument("enumeration_cap must be >= 0");
}

std::vector<ClusterComposition> cluster_composition(std::span<const int> labels1,
                                                    std::span<const int> labels2, int k) {
  std::vector<ClusterComposition> out(static_cast<std::size_t>(k));
  for (int l : labels1) ++out.at(static_cast<std::size_t>(l)).group1;
  for (int l : labels2) ++out.at(static_cast<std::size_t>(l)).group2;
  return out;
}

bool degeneracy_guard(std::span<const ClusterComposition> clusters, double beta) {
  for (const auto& c : clusters) {
    const Index total = c.group1 + c.group2;
    if (total == 0) continue;
    const double smaller = static_cast<double>(std::min(c.group1, c.group2));
    if (smaller < beta * static_cast<double>(total)) return true;
  }
  return false;
}

namespace {

// Stream ids below the analysis seed.
constexpr std::uint64_t kSelectStream = 1;
constexpr std::uint64_t kPamStream = 2;
constexpr std::uint64_t kPlanStream = 3;
constexpr std::uint64_t kDrawStream = 4;

std::vector<TestKind> resolve_tests(const TwoSampleData& data, const AnalysisConfig& cfg) {
  data.validate();
  cfg.validate();
  auto tests = cfg.tests.empty() ? default_tests(data.x1.dim()) : cfg.tests;
  std::sort(tests.begin(), tests.end());
  tests.erase(std::unique(tests.begin(), tests.end()), tests.end());
  for (auto t : tests) {
    if (is_univariate(t) && data.x1.dim() != 1) {
      throw InvalidArgument("test '" + std::string(to_string(t)) + "' needs univariate data");
    }
  }
  return tests;
}

// Pooled sample in lexicographic order, so that the result of everything
// built on it does not depend on which group was passed first.
LabeledPool canonical_pool(const TwoSampleData& data) {
  const PointSet raw = PointSet::concat(data.x1, data.x2);
  const auto order = lexicographic_order(raw);
  std::vector<std::uint8_t> mask(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) mask[i] = order[i] >= data.x1.size() ? 1 : 0;
  return LabeledPool::from_membership(raw.subset(order), std::move(mask));
}

// Univariate permutation statistic is x-bar minus y-bar, so "group 2 larger"
// sits in its lower tail.
Alternative permutation_tail(Alternative alt) {
  switch (alt) {
    case Alternative::Greater: return Alternative::Less;
    case Alternative::Less: return Alternative::Greater;
    case Alternative::TwoSided: return Alternative::TwoSided;
  }
  return alt;
}

struct TestContext {
  const AnalysisConfig& cfg;
  const PermutationPlan& plan;
  bool classical_t;
};

TestOutcome run_one(TestKind kind, const LabeledPool& pool, const TestContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto permuted = [&](const GroupStatistic& stat, Alternative tail, Alternative reported) {
    auto out = permutation_pvalue(stat, pool, ctx.plan, tail, cfg.alpha);
    out.alternative = reported;
    return out;
  };
  if (is_univariate(kind)) {
    const auto x = pool.group(1).column(0);
    const auto y = pool.group(2).column(0);
    switch (kind) {
      case TestKind::T:
        if (ctx.classical_t) return t_test(x, y, cfg.alternative, cfg.alpha);
        return permuted(t_statistic(pool.pooled), permutation_tail(cfg.alternative), cfg.alternative);
      case TestKind::Wmw: return wmw_test(x, y, cfg.alternative, cfg.alpha);
      default: return ks_test(x, y, cfg.alternative, cfg.alpha);
    }
  }
  switch (kind) {
    case TestKind::Hotelling:
      return permuted(hotelling_statistic(pool.pooled), Alternative::Greater, Alternative::TwoSided);
    case TestKind::Coordinate:
      return permuted(coordwise_rank_statistic(pool.pooled), Alternative::Greater,
                      Alternative::TwoSided);
    default:
      return permuted(spatial_rank_statistic(pool.pooled), Alternative::Greater,
                      Alternative::TwoSided);
  }
}

std::map<TestKind, TestOutcome> run_tests(const std::vector<TestKind>& tests, const LabeledPool& pool,
                                          const TestContext& ctx) {
  std::map<TestKind, TestOutcome> out;
  for (auto kind : tests) out.emplace(kind, run_one(kind, pool, ctx));
  return out;
}

PermutationPlan make_plan(const LabeledPool& pool, const AnalysisConfig& cfg) {
  return PermutationPlan::build(pool.n1, pool.n2, cfg.perm_B, derive_seed(cfg.seed, kPlanStream));
}

// Shared front half of both methods: k selection, pooled clustering, EM and
// the MAP labelling with its guard check.
struct ClusterFit {
  KSelection selection;
  LabeledPool pool;
  std::optional<MixtureModel> model;  // only when k0 >= 2
  std::vector<int> map_labels;        // pooled order
  std::vector<ClusterComposition> composition;
  bool guard = false;
};

ClusterFit fit_clusters(const TwoSampleData& data, const AnalysisConfig& cfg) {
  ClusterFit fit;
  const SelectionOptions sel{cfg.k_max, cfg.gap_B, 0.02};
  fit.selection = select_k0(data.x1, data.x2, sel, derive_seed(cfg.seed, kSelectStream));
  fit.pool = canonical_pool(data);
  const int k0 = fit.selection.k0;
  if (k0 < 2) return fit;

  const auto init = pam(fit.pool.pooled, k0, derive_seed(cfg.seed, kPamStream));
  fit.model = em_fit(fit.pool.pooled, k0, init);
  fit.map_labels = map_assign(*fit.model, fit.pool.pooled).labels;

  fit.composition.assign(static_cast<std::size_t>(k0), {});
  for (std::size_t i = 0; i < fit.map_labels.size(); ++i) {
    auto& c = fit.composition[static_cast<std::size_t>(fit.map_labels[i])];
    (fit.pool.in_group2[i] ? c.group2 : c.group1) += 1;
  }
  fit.guard = degeneracy_guard(fit.composition, cfg.beta);
  return fit;
}

LabeledPool relabel(const LabeledPool& pool, const Whitener& whitener, std::span<const int> labels) {
  return LabeledPool::from_membership(whitener.apply(pool.pooled, labels), pool.in_group2);
}

AnalysisReport base_report(Mode mode, const ClusterFit& fit) {
  AnalysisReport report;
  report.mode = mode;
  report.k_selection = fit.selection;
  report.guard_triggered = fit.guard;
  report.assignment_summary = fit.composition;
  if (fit.model) {
    report.em = EmSummary{fit.model->iterations, fit.model->log_likelihood, fit.model->converged};
  }
  return report;
}

}  // namespace

AnalysisReport usual_test(const TwoSampleData& data, const AnalysisConfig& cfg) {
  const auto tests = resolve_tests(data, cfg);
  const auto pool = canonical_pool(data);
  const auto plan = make_plan(pool, cfg);
  AnalysisReport report;
  report.mode = Mode::Usual;
  report.outcomes = run_tests(tests, pool, {cfg, plan, true});
  return report;
}

AnalysisReport method1(const TwoSampleData& data, const AnalysisConfig& cfg) {
  const auto tests = resolve_tests(data, cfg);
  const auto fit = fit_clusters(data, cfg);
  const auto plan = make_plan(fit.pool, cfg);
  auto report = base_report(Mode::Method1, fit);

  if (!fit.model) {
    report.outcomes = run_tests(tests, fit.pool, {cfg, plan, false});
  } else if (fit.guard) {
    report.outcomes = run_tests(tests, fit.pool, {cfg, plan, true});
  } else {
    const Whitener whitener(*fit.model);
    report.outcomes = run_tests(tests, relabel(fit.pool, whitener, fit.map_labels), {cfg, plan, false});
  }
  return report;
}

AnalysisReport method2(const TwoSampleData& data, const AnalysisConfig& cfg) {
  const auto tests = resolve_tests(data, cfg);
  const auto fit = fit_clusters(data, cfg);
  const auto plan = make_plan(fit.pool, cfg);
  auto report = base_report(Mode::Method2, fit);
  const TestContext ctx{cfg, plan, false};

  auto indicator_phi = [&](const std::map<TestKind, TestOutcome>& outcomes) {
    std::map<TestKind, double> phi;
    for (const auto& [kind, o] : outcomes) phi[kind] = o.reject ? 1.0 : 0.0;
    return phi;
  };

  if (!fit.model || fit.guard) {
    report.outcomes = run_tests(tests, fit.pool, {cfg, plan, fit.guard});
    report.phi = indicator_phi(report.outcomes);
    report.phi_exact = true;
    report.assignments_evaluated = 1;
    return report;
  }

  const auto& model = *fit.model;
  const Whitener whitener(model);
  const PointSet& pooled = fit.pool.pooled;
  const Index n = pooled.size();
  const int k0 = model.k();

  // Conditional decisions are cached per labelling; with well separated
  // clusters most posterior draws repeat the same few labellings.
  std::map<std::vector<int>, std::map<TestKind, bool>> cache;
  auto decide = [&](const std::vector<int>& labels) -> const std::map<TestKind, bool>& {
    auto it = cache.find(labels);
    if (it != cache.end()) return it->second;
    std::map<TestKind, bool> d;
    for (const auto& [kind, o] : run_tests(tests, relabel(fit.pool, whitener, labels), ctx)) {
      d[kind] = o.reject;
    }
    return cache.emplace(labels, std::move(d)).first->second;
  };

  std::map<TestKind, double> phi;
  for (auto kind : tests) phi[kind] = 0.0;

  const double log_count = static_cast<double>(n) * std::log(static_cast<double>(k0));
  if (cfg.enumeration_cap >= 1.0 && log_count <= std::log(cfg.enumeration_cap) + 1e-12) {
    // P(C | X) is proportional to the product of the component densities.
    const Matrix logd = component_log_densities(model, pooled);
    const double top = logd.rowwise().maxCoeff().sum();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    double total = 0.0;
    while (true) {
      double ll = 0.0;
      for (Index i = 0; i < n; ++i) ll += logd(i, labels[static_cast<std::size_t>(i)]);
      const double w = std::exp(ll - top);
      total += w;
      for (const auto& [kind, rej] : decide(labels)) {
        if (rej) phi[kind] += w;
      }
      Index pos = 0;
      while (pos < n && ++labels[static_cast<std::size_t>(pos)] == k0) {
        labels[static_cast<std::size_t>(pos)] = 0;
        ++pos;
      }
      if (pos == n) break;
    }
    for (auto& [kind, v] : phi) v /= total;
    report.phi_exact = true;
  } else {
    const Matrix resp = responsibilities(model, pooled);
    Rng rng(derive_seed(cfg.seed, kDrawStream));
    for (int m = 0; m < cfg.M; ++m) {
      for (const auto& [kind, rej] : decide(sample_labels(resp, rng))) {
        if (rej) phi[kind] += 1.0;
      }
    }
    for (auto& [kind, v] : phi) v /= static_cast<double>(cfg.M);
  }
  report.assignments_evaluated = static_cast<int>(cache.size());

  report.outcomes = run_tests(tests, relabel(fit.pool, whitener, fit.map_labels), ctx);
  for (auto& [kind, o] : report.outcomes) o.reject = phi.at(kind) >= 0.5;
  report.phi = std::move(phi);
  return report;
}

AnalysisReport analyze(const TwoSampleData& data, const AnalysisConfig& cfg, Mode mode) {
  switch (mode) {
    case Mode::Usual: return usual_test(data, cfg);
    case Mode::Method1: return method1(data, cfg);
    case Mode::Method2: return method2(data, cfg);
  }
  throw InvalidArgument("unknown mode");
}

}  // namespace subpop
