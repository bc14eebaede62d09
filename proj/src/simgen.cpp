#include "subpop/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace subpop {

std::string_view to_string(Family family) {
  return family == Family::Gaussian ? "gaussian" : "cauchy";
}

Index MixtureSpec::dim() const {
  return components.empty() ? 0 : components.front().location.size();
}

void MixtureSpec::validate() const {
  if (components.empty()) throw InvalidArgument("mixture needs at least one component");
  if (weights.size() != components.size()) throw InvalidArgument("one weight per component required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("mixture weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("mixture weights must sum to 1");
  const Index d = dim();
  if (d < 1) throw InvalidArgument("mixture components need a location");
  for (const auto& c : components) {
    if (c.location.size() != d || c.scale.rows() != d || c.scale.cols() != d) {
      throw InvalidArgument("mixture components must share one dimension");
    }
  }
  if (shift.size() != 0 && shift.size() != d) throw InvalidArgument("shift has the wrong dimension");
}

std::vector<Index> apportion(std::span<const double> weights, Index n) {
  std::vector<Index> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  Index used = 0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    const double exact = weights[r] * static_cast<double>(n);
    counts[r] = static_cast<Index>(std::floor(exact + 1e-9));
    used += counts[r];
    remainder.emplace_back(exact - static_cast<double>(counts[r]), r);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n && i < remainder.size(); ++i, ++used) ++counts[remainder[i].second];
  return counts;
}

PointSet sample_mixture(const MixtureSpec& spec, Index n, Rng& rng) {
  spec.validate();
  if (n < 0) throw InvalidArgument("sample size must be >= 0");
  const Index d = spec.dim();

  std::vector<Matrix> factors;
  for (const auto& c : spec.components) {
    Eigen::LLT<Matrix> llt(c.scale);
    if (llt.info() != Eigen::Success) throw InvalidArgument("component scale is not positive definite");
    factors.emplace_back(llt.matrixL());
  }

  std::vector<std::size_t> which(static_cast<std::size_t>(n));
  if (spec.fixed_composition) {
    const auto counts = apportion(spec.weights, n);
    std::size_t pos = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
      for (Index j = 0; j < counts[r]; ++j) which[pos++] = r;
    }
  } else {
    std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
    for (auto& w : which) w = pick(rng);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, d);
  Vector z(d);
  for (Index i = 0; i < n; ++i) {
    const auto r = which[static_cast<std::size_t>(i)];
    const auto& comp = spec.components[r];
    for (Index j = 0; j < d; ++j) z(j) = normal(rng);
    Vector dev = factors[r] * z;
    if (comp.family == Family::Cauchy) {
      double w = 0.0;
      while (w == 0.0) w = std::abs(normal(rng));
      dev /= w;
    }
    out.row(i) = (comp.location + dev).transpose();
  }
  if (spec.shift.size() == d) out.rowwise() += spec.shift.transpose();
  return PointSet(std::move(out));
}

void ExperimentSpec::validate() const {
  control.validate();
  treatment.validate();
  if (control.dim() != treatment.dim()) throw InvalidArgument("control and treatment dimensions differ");
  if (shift_direction.size() != 0 && shift_direction.size() != control.dim()) {
    throw InvalidArgument("shift direction has the wrong dimension");
  }
  if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
  if (n1 < 2 || n2 < 2) throw InvalidArgument("group sizes must be >= 2");
  if (modes.empty()) throw InvalidArgument("at least one mode required");
  cfg.validate();
}

DataSampler ExperimentSpec::sampler() const {
  validate();
  MixtureSpec shifted = treatment;
  if (shift_direction.size() != 0) shifted.shift = delta * shift_direction;
  return [control = control, shifted, n1 = n1, n2 = n2](Rng& rng) {
    TwoSampleData data;
    data.x1 = sample_mixture(control, n1, rng);
    data.x2 = sample_mixture(shifted, n2, rng);
    return data;
  };
}

ExperimentResult run_replicates(const DataSampler& sampler, int replicates, const AnalysisConfig& cfg,
                                const std::vector<Mode>& modes) {
  if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
  ExperimentResult result;
  result.replicates = replicates;
  std::map<std::pair<Mode, TestKind>, int> hits;

  for (int r = 0; r < replicates; ++r) {
    ReplicateRecord rec;
    rec.index = r;
    rec.data_seed = derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(r));
    rec.analysis_seed = derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(r) + 1);
    Rng rng(rec.data_seed);
    const TwoSampleData data = sampler(rng);
    AnalysisConfig local = cfg;
    local.seed = rec.analysis_seed;
    try {
      for (auto mode : modes) {
        const auto report = analyze(data, local, mode);
        if (report.k_selection) rec.k0 = report.k_selection->k0;
        rec.guard[mode] = report.guard_triggered;
        for (const auto& [kind, o] : report.outcomes) rec.decisions[mode][kind] = o.reject;
      }
    } catch (const NumericalFailure& e) {
      rec.failed = true;
      rec.failure = e.what();
      rec.decisions.clear();
      rec.guard.clear();
      ++result.failed;
    }
    if (!rec.failed) {
      for (const auto& [mode, per_test] : rec.decisions) {
        for (const auto& [kind, rej] : per_test) hits[{mode, kind}] += rej ? 1 : 0;
      }
    }
    result.records.push_back(std::move(rec));
  }

  const int used = replicates - result.failed;
  if (used > 0) {
    for (const auto& [key, h] : hits) {
      const double p = static_cast<double>(h) / used;
      result.rejection_proportion[key] = p;
      result.standard_error[key] = std::sqrt(p * (1.0 - p) / used);
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  return run_replicates(spec.sampler(), spec.replicates, spec.cfg, spec.modes);
}

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Matrix mat2(double a, double b, double c) {
  Matrix m(2, 2);
  m << a, b, b, c;
  return m;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

MixtureSpec mixture(std::vector<MixtureComponent> comps, std::vector<double> weights) {
  MixtureSpec s;
  s.components = std::move(comps);
  s.weights = std::move(weights);
  return s;
}

ExperimentSpec design(std::string name, MixtureSpec control, MixtureSpec treatment, Vector direction,
                      double delta, Index n, Alternative alt) {
  ExperimentSpec e;
  e.name = std::move(name);
  e.control = std::move(control);
  e.treatment = std::move(treatment);
  e.shift_direction = std::move(direction);
  e.delta = delta;
  e.n1 = n;
  e.n2 = n;
  e.cfg.alternative = alt;
  return e;
}

ExperimentSpec two_normal(std::string name, double p1, double p2, double delta) {
  const std::vector<MixtureComponent> comps{{vec({0.0}), scalar(0.25)}, {vec({3.0}), scalar(0.25)}};
  return design(std::move(name), mixture(comps, {1.0 - p1, 1.0 - p2}), mixture(comps, {p1, p2}),
                vec({1.0}), delta, 100, Alternative::Greater);
}

ExperimentSpec three_normal(std::string name, double mu, double delta) {
  std::vector<MixtureComponent> comps;
  for (int r = 0; r < 3; ++r) comps.push_back({vec({r * mu}), scalar(0.25)});
  return design(std::move(name), mixture(comps, {0.4, 0.3, 0.3}), mixture(comps, {0.6, 0.2, 0.2}),
                vec({1.0}), delta, 100, Alternative::TwoSided);
}

std::vector<MixtureComponent> bivariate_line(double step, Family family) {
  std::vector<MixtureComponent> comps;
  for (int r = 0; r < 3; ++r) comps.push_back({vec({r * step, r * step}), mat2(1.0, -0.5, 1.0), family});
  return comps;
}

}  // namespace

std::map<std::string, ExperimentSpec> builtin_designs(double delta) {
  std::map<std::string, ExperimentSpec> out;
  auto add = [&](ExperimentSpec e) {
    auto name = e.name;
    out.emplace(std::move(name), std::move(e));
  };

  add(two_normal("two-normal-false-alarm", 0.25, 0.75, delta));
  add(two_normal("two-normal-masked", 0.75, 0.25, delta));
  add(three_normal("three-normal-mu2", 2.0, delta));
  add(three_normal("three-normal-mu3", 3.0, delta));

  {
    const auto comps = bivariate_line(3.0, Family::Gaussian);
    add(design("bivariate-line", mixture(comps, {0.4, 0.3, 0.3}), mixture(comps, {0.6, 0.2, 0.2}),
               vec({1.0, 1.0}), delta, 100, Alternative::TwoSided));
  }
  {
    const auto comps = bivariate_line(5.0, Family::Cauchy);
    add(design("bivariate-cauchy", mixture(comps, {0.4, 0.3, 0.3}), mixture(comps, {0.6, 0.2, 0.2}),
               vec({1.0, 1.0}), delta, 100, Alternative::TwoSided));
  }
  {
    const auto comps = bivariate_line(3.0, Family::Gaussian);
    add(design("bivariate-orthogonal", mixture(comps, {0.3, 0.4, 0.3}), mixture(comps, {0.3, 0.4, 0.3}),
               vec({0.0, 1.0}), delta, 100, Alternative::TwoSided));
  }
  {
    const std::vector<MixtureComponent> comps{{vec({0.0, 0.0}), mat2(1.0, 0.0, 0.5)},
                                              {vec({3.0, 3.0}), mat2(0.5, 0.0, 1.0)},
                                              {vec({6.0, 0.0}), mat2(1.0, 0.0, 0.5)}};
    add(design("bivariate-unequal-scale", mixture(comps, {0.3, 0.4, 0.3}),
               mixture(comps, {0.3, 0.4, 0.3}), vec({0.0, 1.0}), delta, 100, Alternative::TwoSided));
  }
  {
    // Two tight clusters side by side; the groups differ only in how many
    // points they take from each one.
    const std::vector<MixtureComponent> comps{{vec({0.0, 0.0}), mat2(0.01, 0.0, 0.01)},
                                              {vec({3.0, 0.0}), mat2(0.01, 0.0, 0.01)}};
    auto control = mixture(comps, {2.0 / 3.0, 1.0 / 3.0});
    auto treatment = mixture(comps, {1.0 / 3.0, 2.0 / 3.0});
    control.fixed_composition = true;
    treatment.fixed_composition = true;
    auto e = design("synthetic-level", std::move(control), std::move(treatment), vec({0.0, 1.0}), delta,
                    30, Alternative::TwoSided);
    e.replicates = 200;
    add(std::move(e));
  }
  return out;
}

std::vector<std::string> builtin_design_names() {
  std::vector<std::string> names;
  for (const auto& [name, spec] : builtin_designs()) names.push_back(name);
  return names;
}

DataSampler stratified_sampler(std::vector<PointSet> strata, StratifiedGroup control,
                               StratifiedGroup treatment) {
  if (strata.empty()) throw InvalidArgument("stratified sampler needs strata");
  const Index d = strata.front().dim();
  for (const auto& s : strata) {
    if (s.dim() != d) throw InvalidArgument("strata must share one dimension");
  }
  for (const auto* g : {&control, &treatment}) {
    if (g->strata.empty() || g->strata.size() != g->weights.size()) {
      throw InvalidArgument("each group needs strata with one weight each");
    }
    for (int s : g->strata) {
      if (s < 0 || static_cast<std::size_t>(s) >= strata.size()) throw InvalidArgument("stratum out of range");
    }
    if (g->n < 2) throw InvalidArgument("group sizes must be >= 2");
  }

  return [strata = std::move(strata), control = std::move(control),
          treatment = std::move(treatment)](Rng& rng) {
    std::vector<std::vector<Index>> remaining(strata.size());
    for (std::size_t s = 0; s < strata.size(); ++s) {
      remaining[s].resize(static_cast<std::size_t>(strata[s].size()));
      std::iota(remaining[s].begin(), remaining[s].end(), Index{0});
    }
    auto draw = [&](const StratifiedGroup& g) {
      std::vector<Index> counts;
      if (g.fixed_composition) {
        counts = apportion(g.weights, g.n);
      } else {
        counts.assign(g.weights.size(), 0);
        std::discrete_distribution<std::size_t> pick(g.weights.begin(), g.weights.end());
        for (Index i = 0; i < g.n; ++i) ++counts[pick(rng)];
      }
      std::vector<PointSet> parts;
      for (std::size_t j = 0; j < g.strata.size(); ++j) {
        const auto s = static_cast<std::size_t>(g.strata[j]);
        auto& pool = remaining[s];
        const auto c = static_cast<std::size_t>(counts[j]);
        if (c > pool.size()) throw InvalidArgument("stratum has too few points for the requested draw");
        for (std::size_t i = 0; i < c; ++i) {
          std::uniform_int_distribution<std::size_t> u(i, pool.size() - 1);
          std::swap(pool[i], pool[u(rng)]);
        }
        std::vector<Index> taken(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c));
        pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c));
        parts.push_back(strata[s].subset(taken));
      }
      PointSet out = parts.front();
      for (std::size_t j = 1; j < parts.size(); ++j) out = PointSet::concat(out, parts[j]);
      return out;
    };
    TwoSampleData data;
    data.x1 = draw(control);
    data.x2 = draw(treatment);
    return data;
  };
}

}  // namespace subpop
