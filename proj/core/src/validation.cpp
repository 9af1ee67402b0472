#include "tbal/validation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "tbal/estimators.hpp"
#include "tbal/io.hpp"
#include "tbal/population_model.hpp"
#include "tbal/theory.hpp"

namespace tbal {

namespace {

struct Instance {
  Matrix x;
  Vector w;
  PotentialOutcomes po;
};

Instance make_instance(Rng& rng, std::size_t n, int d, double delta) {
  const auto pop = GaussianPopulationPair::isotropic(d, delta);
  Instance inst;
  inst.x = sample_covariates(pop, Population::source, n, rng);
  inst.w = importance_weights(pop, inst.x);
  inst.po = generate_outcomes(OutcomeModel{}, inst.x, rng);
  return inst;
}

double statistic(const ValidationOptions& opt, const BalanceEvaluator& eval, const Vector& z) {
  return opt.statistic ? opt.statistic(eval, z) : eval(z);
}

std::vector<double> all_statistics(const ValidationOptions& opt, const BalanceEvaluator& eval,
                                   const std::vector<AssignmentVector>& zs) {
  std::vector<double> m;
  m.reserve(zs.size());
  for (const auto& z : zs) m.push_back(statistic(opt, eval, z.signs()));
  return m;
}

// Index of -z for every enumerated z.
std::vector<std::size_t> partner_index(const std::vector<AssignmentVector>& zs) {
  std::vector<std::size_t> partner(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const auto neg = zs[i].negated();
    partner[i] = static_cast<std::size_t>(std::find(zs.begin(), zs.end(), neg) - zs.begin());
  }
  return partner;
}

double sample_effect(const Instance& inst) {
  return inst.w.dot(inst.po.y1 - inst.po.y0) / static_cast<double>(inst.w.size());
}

Rng check_rng(std::uint64_t seed, std::uint64_t k) { return Rng(splitmix64_mix(seed ^ splitmix64_mix(k))); }

}  // namespace

StatisticHook sign_asymmetric_statistic() {
  return [](const BalanceEvaluator& eval, const Vector& z) {
    const double m = eval(z);
    return z[0] > 0.0 ? m * (1.0 + 1e-9) : m;
  };
}

std::string format_check(const CheckResult& c) {
  return "check=" + c.name + " status=" + (c.passed ? "pass" : "fail") + " value=" + format_number(c.value, 12) +
         " tolerance=" + format_number(c.tolerance, 12);
}

std::vector<CheckResult> run_enumeration_suite(const ValidationOptions& opt) {
  std::vector<CheckResult> out;
  constexpr std::size_t n = 8;
  const double nn = static_cast<double>(n);
  Rng rng(opt.seed);
  const Instance inst = make_instance(rng, n, 2, 0.3);
  const WeightedCovariates wc(inst.x, inst.w);
  const auto zs = enumerate_balanced_assignments(n);

  {
    double worst = 0.0;
    bool exact = true;
    for (auto c : {BalanceCriterion::source, BalanceCriterion::target, BalanceCriterion::alternate}) {
      const BalanceEvaluator eval(wc, c);
      for (const auto& z : zs) {
        const double a = statistic(opt, eval, z.signs());
        const double b = statistic(opt, eval, z.negated().signs());
        exact = exact && a == b;
        worst = std::max(worst, std::abs(a - b));
      }
    }
    out.push_back({"enum.sign_symmetry", exact, worst, 0.0});
  }

  {
    const BalanceEvaluator eval(wc, BalanceCriterion::target);
    const auto m = all_statistics(opt, eval, zs);
    std::vector<double> thresholds = m;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(std::numeric_limits<double>::infinity());

    const double effect = sample_effect(inst);
    bool exact_half = true;
    double worst_freq = 0.0;
    double worst_mean = 0.0;
    for (double a : thresholds) {
      std::size_t accepted = 0;
      std::vector<std::size_t> treated(n, 0);
      double sum = 0.0;
      for (std::size_t k = 0; k < zs.size(); ++k) {
        if (!(m[k] < a)) continue;
        ++accepted;
        for (std::size_t i = 0; i < n; ++i) treated[i] += static_cast<std::size_t>(zs[k].treatment(i));
        sum += weighted_estimator(observed_outcomes(inst.po, zs[k].signs()), zs[k], inst.w);
      }
      if (accepted == 0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        exact_half = exact_half && 2 * treated[i] == accepted;
        worst_freq = std::max(worst_freq, std::abs(static_cast<double>(treated[i]) / accepted - 0.5));
      }
      worst_mean = std::max(worst_mean, std::abs(sum / accepted - effect));
    }
    out.push_back({"enum.treatment_probability", exact_half, worst_freq, 0.0});
    out.push_back({"enum.conditional_mean", worst_mean <= 1e-12, worst_mean, 1e-12});
  }

  {
    const Matrix c = weighted_mean_covariance(wc);
    const auto d = wc.d();
    Vector mean = Vector::Zero(d);
    Matrix second = Matrix::Zero(d, d);
    for (const auto& z : zs) {
      Vector u = Vector::Zero(d);
      for (Eigen::Index i = 0; i < wc.n(); ++i) u += z.signs()[i] * wc.xw().row(i).transpose();
      mean += u;
      second += u * u.transpose();
    }
    const double cnt = static_cast<double>(zs.size());
    mean /= cnt;
    const Matrix brute = second / cnt - mean * mean.transpose();
    const double err = (brute - c).cwiseAbs().maxCoeff();
    const double tol = 1e-10 * (1.0 + c.cwiseAbs().maxCoeff());
    out.push_back({"enum.covariance", err <= tol, err, tol});
  }

  {
    double worst = 0.0;
    for (const auto& z : zs) {
      const auto ht = ht_decomposition_check(inst.po.y0, inst.po.y1, inst.w, z);
      worst = std::max(worst, std::abs(ht.lhs - ht.rhs) / (1.0 + std::abs(ht.rhs)));
    }
    out.push_back({"enum.ht_identity", worst <= 1e-10, worst, 1e-10});
  }

  // d = 1 instance for the finite-sample scalar results.
  Rng rng1 = check_rng(opt.seed, 100);
  const Instance one = make_instance(rng1, n, 1, 0.3);
  const WeightedCovariates wc1(one.x, one.w);
  const Vector wx = one.w.cwiseProduct(one.x.col(0));

  {
    std::vector<double> v;
    for (const auto& z : zs) v.push_back(2.0 / nn * wx.dot(z.signs()));
    const auto best = truncation_oracle_1d(v, 0.5);
    const auto partner = partner_index(zs);
    std::vector<std::size_t> pairs;
    for (std::size_t k = 0; k < zs.size(); ++k) {
      if (k < partner[k]) pairs.push_back(k);
    }
    const std::size_t take = best.optimal_set.size() / 2;
    double margin = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 200; ++trial) {
      for (std::size_t j = 0; j < take; ++j) std::swap(pairs[j], pairs[j + rng1.bounded(pairs.size() - j)]);
      std::vector<double> sq;
      for (std::size_t j = 0; j < take; ++j) {
        sq.push_back(v[pairs[j]] * v[pairs[j]]);
        sq.push_back(v[partner[pairs[j]]] * v[partner[pairs[j]]]);
      }
      std::sort(sq.begin(), sq.end());
      const double adv = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(sq.size());
      margin = std::min(margin, adv - best.optimal_value);
    }
    out.push_back({"enum.truncation_optimality_1d", margin >= 0.0, margin, 0.0});
  }

  {
    const BalanceEvaluator eval(wc1, BalanceCriterion::target);
    const auto m = all_statistics(opt, eval, zs);
    std::vector<double> sorted = m;
    std::sort(sorted.begin(), sorted.end());
    const double a = sorted[sorted.size() / 2];
    double all = 0.0;
    double acc = 0.0;
    std::size_t n_acc = 0;
    for (std::size_t k = 0; k < zs.size(); ++k) {
      const double s = wx.dot(zs[k].signs());
      all += s * s;
      if (m[k] < a) {
        acc += s * s;
        ++n_acc;
      }
    }
    const double ratio = (acc / n_acc) / (all / static_cast<double>(zs.size()));
    out.push_back({"enum.truncation_reduces_second_moment", ratio < 1.0, ratio, 1.0});

    // Enumerated variance of the estimator with noise integrated analytically,
    // for y1 = 3x + e1 and y0 = x + e0 (beta = 2), both unconditionally and on
    // the accepted set.
    double worst = 0.0;
    for (bool conditional : {false, true}) {
      double s1 = 0.0;
      double s2 = 0.0;
      double sm = 0.0;
      std::size_t cnt = 0;
      for (std::size_t k = 0; k < zs.size(); ++k) {
        if (conditional && !(m[k] < a)) continue;
        double tau = 0.0;
        double noise = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const double zi = zs[k].signs()[ii];
          tau += 2.0 / nn * zi * one.w[ii] * (zi > 0 ? 3.0 : 1.0) * one.x(ii, 0);
          noise += 4.0 / (nn * nn) * one.w[ii] * one.w[ii];
        }
        s1 += tau;
        s2 += tau * tau + noise;
        const double s = wx.dot(zs[k].signs());
        sm += s * s;
        ++cnt;
      }
      const double c = static_cast<double>(cnt);
      const double enumerated = s2 / c - (s1 / c) * (s1 / c);
      const auto dec = d1_variance_decomposition(2.0, 1.0, one.w, sm / c);
      worst = std::max(worst, std::abs(dec.total - enumerated) / enumerated);
    }
    out.push_back({"enum.d1_variance_decomposition", worst <= 1e-10, worst, 1e-10});
  }
  return out;
}

std::vector<CheckResult> run_mc_suite(const ValidationOptions& opt) {
  std::vector<CheckResult> out;

  {
    Rng rng = check_rng(opt.seed, 1);
    std::vector<double> counts(16, 0.0);
    const int draws = 60000;
    for (int t = 0; t < draws; ++t) {
      const auto z = draw_balanced_assignment(4, rng);
      unsigned mask = 0;
      for (std::size_t i = 0; i < 4; ++i) mask |= static_cast<unsigned>(z.treatment(i)) << i;
      counts[mask] += 1.0;
    }
    double chi2 = 0.0;
    for (unsigned mask = 0; mask < 16; ++mask) {
      if (std::popcount(mask) != 2) continue;
      chi2 += (counts[mask] - 10000.0) * (counts[mask] - 10000.0) / 10000.0;
    }
    // chi-square(5) upper 0.001 point.
    out.push_back({"mc.assignment_uniformity", chi2 <= 20.515, chi2, 20.515});
  }

  {
    Rng rng = check_rng(opt.seed, 2);
    const double a = threshold_for_alpha(3, 0.4);
    const double v = variance_reduction_factor(3, a);
    const Matrix c = truncated_identity_covariance(3, a, 1000000, rng);
    const double dev = (c - v * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff();
    out.push_back({"mc.truncated_covariance", dev <= 0.01, dev, 0.01});
  }

  {
    Rng rng = check_rng(opt.seed, 3);
    constexpr std::size_t n = 500;
    const Instance inst = make_instance(rng, n, 2, 0.3);
    const WeightedCovariates wc(inst.x, inst.w);
    const Vector c = 0.5 * inst.w.cwiseProduct(inst.po.y1 + inst.po.y0);
    const double r2 = squared_multiple_correlation(wc.xw(), c);

    AssignmentSampler sampler(n);
    Vector z;
    const int draws = 100000;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
    for (int t = 0; t < draws; ++t) {
      sampler.draw(rng, z);
      const AssignmentVector av(z);
      Eigen::Vector3d row;
      row[0] = weighted_estimator(observed_outcomes(inst.po, z), av, inst.w);
      row.tail<2>() = 2.0 / n * (wc.xw().transpose() * z);
      sum += row;
      cross += row * row.transpose();
    }
    const Eigen::Vector3d mean = sum / draws;
    const Eigen::Matrix3d cov = cross / draws - mean * mean.transpose();
    const Eigen::Vector2d cross_tv = cov.block<2, 1>(1, 0);
    const double explained = cross_tv.dot(cov.block<2, 2>(1, 1).ldlt().solve(cross_tv));
    const double r2_mc = explained / cov(0, 0);
    const double gap = std::abs(r2 - r2_mc);
    out.push_back({"mc.r2_routes", gap <= 0.02, gap, 0.02});
  }

  {
    Rng rng = check_rng(opt.seed, 4);
    const auto pop = GaussianPopulationPair::isotropic(2, 0.3);
    const std::size_t n = 100000;
    const Matrix x = sample_covariates(pop, Population::source, n, rng);
    const Vector w = importance_weights(pop, x);
    const Matrix xt = sample_covariates(pop, Population::target, n, rng);
    double worst = 0.0;
    const auto compare = [&](const Vector& g_source, const Vector& g_target) {
      const Vector wg = w.cwiseProduct(g_source);
      const double m1 = wg.mean();
      const double m2 = g_target.mean();
      const double v1 = (wg.array() - m1).square().mean();
      const double v2 = (g_target.array() - m2).square().mean();
      const double se = std::sqrt((v1 + v2) / static_cast<double>(n));
      worst = std::max(worst, std::abs(m1 - m2) / se);
    };
    compare(x.col(0), xt.col(0));
    compare(x.rowwise().squaredNorm(), xt.rowwise().squaredNorm());
    out.push_back({"mc.change_of_measure", worst <= 4.0, worst, 4.0});
  }

  {
    Rng rng = check_rng(opt.seed, 5);
    constexpr std::size_t n = 8;
    const Instance inst = make_instance(rng, n, 1, 0.3);
    const WeightedCovariates wc(inst.x, inst.w);
    const BalanceEvaluator eval(wc, BalanceCriterion::target);
    const auto zs = enumerate_balanced_assignments(n);
    std::vector<double> m;
    for (const auto& z : zs) m.push_back(eval.value(z));
    std::vector<double> sorted = m;
    std::sort(sorted.begin(), sorted.end());
    const double a = sorted[sorted.size() / 2];
    const double p = static_cast<double>(std::count_if(m.begin(), m.end(), [a](double v) { return v < a; })) /
                     static_cast<double>(m.size());
    const int runs = 100000;
    double draws = 0.0;
    for (int t = 0; t < runs; ++t) draws += static_cast<double>(rerandomize_threshold(eval, a, 1000, rng).draws_used);
    const double p_hat = runs / draws;
    const double se = p * std::sqrt((1.0 - p) / runs);
    const double score = std::abs(p_hat - p) / se;
    out.push_back({"mc.threshold_acceptance_rate", score <= 3.0, score, 3.0});
  }

  {
    Rng rng = check_rng(opt.seed, 6);
    constexpr std::size_t n = 200;
    const Instance inst = make_instance(rng, n, 2, 0.3);
    const WeightedCovariates wc(inst.x, inst.w);
    const BalanceEvaluator eval(wc, BalanceCriterion::target);
    const double a = threshold_for_alpha(2, 0.5);
    const Vector c = 0.5 * inst.w.cwiseProduct(inst.po.y1 + inst.po.y0);
    const double predicted = 1.0 - (1.0 - variance_reduction_factor(2, a)) * squared_multiple_correlation(wc.xw(), c);

    const int draws = 20000;
    const auto variance_of = [&](bool balanced) {
      AssignmentSampler sampler(n);
      Vector z;
      double s1 = 0.0;
      double s2 = 0.0;
      for (int t = 0; t < draws; ++t) {
        double est;
        if (balanced) {
          const auto res = rerandomize_threshold(eval, a, 100000, rng);
          est = weighted_estimator(observed_outcomes(inst.po, res.z.signs()), res.z, inst.w);
        } else {
          sampler.draw(rng, z);
          est = weighted_estimator(observed_outcomes(inst.po, z), AssignmentVector(z), inst.w);
        }
        s1 += est;
        s2 += est * est;
      }
      return s2 / draws - (s1 / draws) * (s1 / draws);
    };
    const double ratio = variance_of(true) / variance_of(false);
    const double gap = std::abs(ratio - predicted);
    out.push_back({"mc.conditional_variance_ratio", gap <= 0.05, gap, 0.05});
  }

  {
    Rng rng = check_rng(opt.seed, 7);
    Matrix samples(10000, 2);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      samples(i, 0) = rng.normal();
      samples(i, 1) = rng.normal();
    }
    const auto res = trace_truncation_oracle(samples, 0.5, rng);
    const double full = samples.rowwise().squaredNorm().mean();
    const double margin = res.trace_adversary_min - res.trace_tail;
    out.push_back({"mc.trace_truncation", margin >= 0.0 && res.trace_tail < full, margin, 0.0});
  }

  {
    Rng rng = check_rng(opt.seed, 8);
    Matrix m = Matrix::Zero(3, 3);
    m.diagonal() << 1.0, 1.0, 4.0;
    double sum = 0.0;
    const int draws = 100000;
    Vector b(3);
    for (int t = 0; t < draws; ++t) {
      for (int j = 0; j < 3; ++j) b[j] = rng.normal();
      b.normalize();
      sum += b.dot(m * b);
    }
    const double gap = std::abs(sum / draws - expected_beta_trace_form(m, 1.0));
    out.push_back({"mc.sphere_trace_average", gap <= 0.02, gap, 0.02});
  }
  return out;
}

}  // namespace tbal
