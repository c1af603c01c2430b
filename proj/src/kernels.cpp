#include "svyconform/kernels.hpp"

#include <cmath>

#include "svyconform/error.hpp"

namespace svyconform::kernels {

namespace {

std::size_t n_blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

// Runs body(begin, end, block) over fixed-size blocks.
template <class Body>
void for_blocks(std::size_t n, ExecPolicy policy, Body body) {
  const auto nb = static_cast<long>(n_blocks(n));
  if (policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
    for (long b = 0; b < nb; ++b) {
      const auto lo = static_cast<std::size_t>(b) * kBlock;
      body(lo, std::min(n, lo + kBlock), static_cast<std::size_t>(b));
    }
  } else {
    for (long b = 0; b < nb; ++b) {
      const auto lo = static_cast<std::size_t>(b) * kBlock;
      body(lo, std::min(n, lo + kBlock), static_cast<std::size_t>(b));
    }
  }
}

Tally combine(std::vector<Tally>& parts, int n_groups) {
  Tally t;
  t.group_units.assign(static_cast<std::size_t>(n_groups), 0);
  t.group_covered.assign(static_cast<std::size_t>(n_groups), 0);
  for (const auto& p : parts) {
    t.units += p.units;
    t.covered += p.covered;
    t.vacuous += p.vacuous;
    t.length_sum += p.length_sum;
    for (std::size_t g = 0; g < p.group_units.size(); ++g) {
      t.group_units[g] += p.group_units[g];
      t.group_covered[g] += p.group_covered[g];
    }
  }
  return t;
}

void check_broadcast(std::size_t got, std::size_t n, const char* what) {
  require(got == 1 || got == n, std::string(what) + " must have one entry or one per unit");
}

}  // namespace

std::vector<double> predict_all(const ScoreModel& model, const FinitePopulation& pop, ExecPolicy policy) {
  std::vector<double> out(pop.size());
  const bool use_x = model.dim() != 0;
  for_blocks(pop.size(), policy, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = model.predict(use_x ? pop.x(i) : std::span<const double>{});
  });
  return out;
}

std::vector<double> predict_proba_all(const ScoreModel& model, const FinitePopulation& pop, ExecPolicy policy) {
  const auto k = static_cast<std::size_t>(model.n_classes());
  require(k >= 2, "model is not a classifier");
  std::vector<double> out(pop.size() * k);
  for_blocks(pop.size(), policy, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto p = model.predict_proba(pop.x(i));
      std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
  });
  return out;
}

std::vector<double> weighted_radii(const WeightedScoreCdf& cdf, double beta, std::span<const double> test_weights,
                                   ExecPolicy policy) {
  std::vector<double> out(test_weights.size());
  for_blocks(test_weights.size(), policy, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = cdf.padded_quantile(beta, test_weights[i]).as_double();
  });
  return out;
}

Tally tally_intervals(std::span<const double> center, std::span<const double> radius, std::span<const double> y,
                      std::span<const int> group, int n_groups, ExecPolicy policy) {
  const std::size_t n = y.size();
  require(center.size() == n, "one center per unit is required");
  check_broadcast(radius.size(), n, "radius");
  require(group.empty() || group.size() == n, "group codes must cover every unit");
  std::vector<Tally> parts(n_blocks(n));
  for_blocks(n, policy, [&](std::size_t lo, std::size_t hi, std::size_t b) {
    Tally& t = parts[b];
    t.group_units.assign(static_cast<std::size_t>(n_groups), 0);
    t.group_covered.assign(static_cast<std::size_t>(n_groups), 0);
    for (std::size_t i = lo; i < hi; ++i) {
      const double r = radius.size() == 1 ? radius[0] : radius[i];
      const bool hit = std::abs(y[i] - center[i]) <= r;
      ++t.units;
      t.covered += hit;
      if (std::isinf(r)) {
        ++t.vacuous;
      } else {
        t.length_sum += 2.0 * r;
      }
      if (!group.empty()) {
        const auto g = static_cast<std::size_t>(group[i]);
        ++t.group_units[g];
        t.group_covered[g] += hit;
      }
    }
  });
  return combine(parts, n_groups);
}

Tally tally_sets(std::span<const double> probs, int n_classes, std::span<const double> q, std::span<const double> y,
                 std::span<const int> group, int n_groups, ExecPolicy policy) {
  const std::size_t n = y.size();
  const auto k = static_cast<std::size_t>(n_classes);
  require(probs.size() == n * k, "probability matrix must be N x K");
  check_broadcast(q.size(), n, "q");
  require(group.empty() || group.size() == n, "group codes must cover every unit");
  std::vector<Tally> parts(n_blocks(n));
  for_blocks(n, policy, [&](std::size_t lo, std::size_t hi, std::size_t b) {
    Tally& t = parts[b];
    t.group_units.assign(static_cast<std::size_t>(n_groups), 0);
    t.group_covered.assign(static_cast<std::size_t>(n_groups), 0);
    for (std::size_t i = lo; i < hi; ++i) {
      const double qi = q.size() == 1 ? q[0] : q[i];
      const double* p = probs.data() + i * k;
      std::size_t size = 0;
      for (std::size_t c = 0; c < k; ++c) size += 1.0 - p[c] <= qi;
      const bool hit = 1.0 - p[static_cast<std::size_t>(y[i])] <= qi;
      ++t.units;
      t.covered += hit;
      if (size == k) ++t.vacuous;
      t.length_sum += static_cast<double>(size);
      if (!group.empty()) {
        const auto g = static_cast<std::size_t>(group[i]);
        ++t.group_units[g];
        t.group_covered[g] += hit;
      }
    }
  });
  return combine(parts, n_groups);
}

}  // namespace svyconform::kernels
