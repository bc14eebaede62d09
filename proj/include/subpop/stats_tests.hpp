#pragma once

#include "subpop/common.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace subpop {

/// For the univariate tests `Greater` means the second sample (treatment) is
/// shifted upward relative to the first (control). Multivariate statistics
/// are nonnegative and only support `TwoSided`.
enum class Alternative { TwoSided, Greater, Less };

enum class PMethod { Exact, Asymptotic, Permutation };

std::string_view to_string(Alternative alt);
std::string_view to_string(PMethod method);
Alternative parse_alternative(std::string_view text);

struct TestOutcome {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;  // p_value <= alpha
  double alpha = 0.05;
  Alternative alternative = Alternative::TwoSided;
  PMethod p_method = PMethod::Asymptotic;
  std::optional<int> n_permutations;
  bool degenerate = false;  // e.g. zero variance with distinct means
};

TestOutcome make_outcome(double statistic, double p_value, double alpha, Alternative alternative,
                         PMethod method);

/// Pooled-variance Student t. The statistic is (mean(x) - mean(y)) / se,
/// so `Greater` corresponds to the lower tail of t.
TestOutcome t_test(std::span<const double> x, std::span<const double> y,
                   Alternative alternative = Alternative::TwoSided, double alpha = 0.05);

/// Wilcoxon-Mann-Whitney with U = #{y > x} + #{ties}/2. Exact enumeration for
/// n1 + n2 <= 12 without ties, otherwise the normal approximation with
/// continuity and tie corrections.
TestOutcome wmw_test(std::span<const double> x, std::span<const double> y,
                     Alternative alternative = Alternative::TwoSided, double alpha = 0.05);

/// Two-sample Kolmogorov-Smirnov. `Greater` uses sup(F_x - G_y), i.e. y
/// stochastically larger. Exact null distribution (lattice-path count) when
/// there are no ties and n1 n2 <= 10000, asymptotic Kolmogorov law with
/// n_eff = n1 n2 / (n1 + n2) otherwise.
TestOutcome ks_test(std::span<const double> x, std::span<const double> y,
                    Alternative alternative = Alternative::TwoSided, double alpha = 0.05);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

/// Midranks (1-based, ties averaged).
std::vector<double> midranks(std::span<const double> values);

/// Hotelling T^2 = (n1 n2 / n) dbar' S_pooled^{-1} dbar.
double hotelling_t2(const PointSet& x1, const PointSet& x2);
/// Upper-tail p-value of T^2 through its F(d, n - d - 1) representation.
double hotelling_f_pvalue(double t2, Index n1, Index n2, Index d);

/// Puri-Sen quadratic form of the centred coordinate-wise rank sums of
/// group 2 with their permutation covariance.
double coordwise_rank_stat(const PointSet& x1, const PointSet& x2);

/// Spatial ranks R(z) = (1/n) sum_i (z - z_i)/|z - z_i| of every pooled point.
Matrix spatial_ranks(const PointSet& pooled);

/// n * Rbar_2' B^{-1} Rbar_2 with B = (1/n) sum R(z_i) R(z_i)'.
double spatial_rank_stat(const PointSet& x1, const PointSet& x2);

}  // namespace subpop
