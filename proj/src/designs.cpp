#include "svyconform/designs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svyconform/error.hpp"

namespace svyconform {

std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::kSrsWr: return "srs-wr";
    case DesignKind::kSrsWor: return "srs-wor";
    case DesignKind::kPpsWr: return "pps-wr";
    case DesignKind::kPpsWor: return "pps-wor";
    case DesignKind::kStratified: return "stratified";
    case DesignKind::kCluster: return "cluster";
  }
  return "?";
}

DesignKind parse_design_kind(std::string_view text) {
  for (auto k : {DesignKind::kSrsWr, DesignKind::kSrsWor, DesignKind::kPpsWr, DesignKind::kPpsWor,
                 DesignKind::kStratified, DesignKind::kCluster})
    if (to_string(k) == text) return k;
  throw InvalidInput("unknown design '" + std::string(text) +
                     "' (expected srs-wr, srs-wor, pps-wr, pps-wor, stratified or cluster)");
}

bool DesignSpec::exchangeable() const {
  return kind == DesignKind::kSrsWr || kind == DesignKind::kSrsWor;
}

bool DesignSpec::requires_size_measure() const {
  auto pps = [](DesignKind k) { return k == DesignKind::kPpsWr || k == DesignKind::kPpsWor; };
  return pps(kind) || (kind == DesignKind::kStratified && pps(within_stratum_kind));
}

DrawnSample DrawnSample::subset(std::span<const std::size_t> positions) const {
  DrawnSample out;
  out.design = design;
  out.flags = flags;
  out.unit_ids.reserve(positions.size());
  out.base_weight.reserve(positions.size());
  for (auto p : positions) {
    out.unit_ids.push_back(unit_ids[p]);
    out.base_weight.push_back(base_weight[p]);
    if (!stratum_of.empty()) out.stratum_of.push_back(stratum_of[p]);
    if (!cluster_of.empty()) out.cluster_of.push_back(cluster_of[p]);
  }
  return out;
}

namespace {

bool is_wor(DesignKind k) { return k == DesignKind::kSrsWor || k == DesignKind::kPpsWor; }

// Fenwick tree over non-negative masses; supports removal and inversion of
// the cumulative sum in id order.
class MassTree {
 public:
  explicit MassTree(std::span<const double> mass) : tree_(mass.size() + 1, 0.0) {
    for (std::size_t i = 0; i < mass.size(); ++i) add(i, mass[i]);
    top_ = 1;
    while (top_ * 2 <= mass.size()) top_ *= 2;
  }

  void add(std::size_t i, double delta) {
    for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += delta;
  }

  double total() const {
    double s = 0.0;
    for (std::size_t k = tree_.size() - 1; k > 0; k -= k & (~k + 1)) s += tree_[k];
    return s;
  }

  // Smallest index whose inclusive prefix sum exceeds u.
  std::size_t find(double u) const {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= u) {
        pos += step;
        u -= tree_[pos];
      }
    }
    return std::min(pos, tree_.size() - 2);
  }

 private:
  std::vector<double> tree_;
  std::size_t top_ = 1;
};

// Draws n indices (into `members`) under an element design; returns the
// chosen positions into `members` and the matching base weights.
void draw_elements(DesignKind kind, std::size_t n, std::span<const std::size_t> members,
                   std::span<const double> sizes, Rng& rng, std::vector<std::size_t>& out_index,
                   std::vector<double>& out_weight) {
  const std::size_t N = members.size();
  require(n >= 1, "sample size must be >= 1");
  if (is_wor(kind)) require(n <= N, "without-replacement sample of " + std::to_string(n) +
                                        " exceeds population of " + std::to_string(N));
  switch (kind) {
    case DesignKind::kSrsWr: {
      const double w = static_cast<double>(N) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        out_index.push_back(members[rng.uniform_index(N)]);
        out_weight.push_back(w);
      }
      return;
    }
    case DesignKind::kSrsWor: {
      std::vector<std::size_t> pool(members.begin(), members.end());
      const double w = static_cast<double>(N) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(N - i));
        std::swap(pool[i], pool[j]);
        out_index.push_back(pool[i]);
        out_weight.push_back(w);
      }
      return;
    }
    case DesignKind::kPpsWr:
    case DesignKind::kPpsWor: {
      std::vector<double> mass(N);
      for (std::size_t i = 0; i < N; ++i) mass[i] = sizes[members[i]];
      const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
      const double dn = static_cast<double>(n);
      if (kind == DesignKind::kPpsWr) {
        std::vector<double> cum(N);
        std::partial_sum(mass.begin(), mass.end(), cum.begin());
        for (std::size_t i = 0; i < n; ++i) {
          const double u = rng.uniform() * cum.back();
          auto j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
          j = std::min(j, N - 1);
          out_index.push_back(members[j]);
          out_weight.push_back(total / (dn * mass[j]));
        }
      } else {
        MassTree tree(mass);
        for (std::size_t i = 0; i < n; ++i) {
          const double u = rng.uniform() * tree.total();
          std::size_t j = tree.find(u);
          // Guard against landing on an already-removed unit through
          // rounding in the tree sums.
          while (mass[j] == 0.0) j = (j + 1) % N;
          out_index.push_back(members[j]);
          out_weight.push_back(total / (dn * mass[j]));
          tree.add(j, -mass[j]);
          mass[j] = 0.0;
        }
      }
      return;
    }
    default:
      throw InvalidInput("not an element-level design");
  }
}

}  // namespace

void validate(const DesignSpec& spec, const FinitePopulation& pop) {
  if (spec.requires_size_measure())
    require(pop.has_size_measure(), "PPS design requires a size measure");
  switch (spec.kind) {
    case DesignKind::kSrsWr:
    case DesignKind::kPpsWr:
      require(spec.n >= 1, "sample size must be >= 1");
      break;
    case DesignKind::kSrsWor:
    case DesignKind::kPpsWor:
      require(spec.n >= 1, "sample size must be >= 1");
      require(spec.n <= pop.size(), "without-replacement sample of " + std::to_string(spec.n) +
                                        " exceeds population of " + std::to_string(pop.size()));
      break;
    case DesignKind::kStratified: {
      require(pop.has_strata(), "stratified design requires stratum labels");
      require(!spec.allocation.empty(), "stratified design has an empty stratum allocation");
      require(spec.within_stratum_kind != DesignKind::kStratified &&
                  spec.within_stratum_kind != DesignKind::kCluster,
              "within-stratum design must be an element design");
      const auto& strata = pop.strata();
      const auto members = strata.members();
      for (std::size_t h = 0; h < strata.n_levels(); ++h) {
        auto it = spec.allocation.find(strata.names[h]);
        require(it != spec.allocation.end(), "stratum '" + strata.names[h] + "' has no allocation");
        require(it->second >= 1, "stratum '" + strata.names[h] + "' has an empty allocation");
        if (is_wor(spec.within_stratum_kind))
          require(it->second <= members[h].size(),
                  "allocation for stratum '" + strata.names[h] + "' exceeds its size");
      }
      for (const auto& [name, count] : spec.allocation)
        require(std::find(strata.names.begin(), strata.names.end(), name) != strata.names.end(),
                "allocation names unknown stratum '" + name + "'");
      break;
    }
    case DesignKind::kCluster:
      require(pop.has_clusters(), "cluster design requires cluster labels");
      require(spec.n >= 1, "number of sampled clusters must be >= 1");
      require(spec.n <= pop.clusters().n_levels(),
              "cannot sample " + std::to_string(spec.n) + " of " +
                  std::to_string(pop.clusters().n_levels()) + " clusters");
      break;
  }
}

DrawnSample draw(const FinitePopulation& pop, const DesignSpec& spec, Rng& rng) {
  validate(spec, pop);
  DrawnSample s;
  s.design = spec;
  std::vector<std::size_t> idx;
  std::span<const double> sizes;
  if (pop.has_size_measure()) sizes = pop.size_measure();

  switch (spec.kind) {
    case DesignKind::kSrsWr:
    case DesignKind::kSrsWor:
    case DesignKind::kPpsWr:
    case DesignKind::kPpsWor: {
      std::vector<std::size_t> all(pop.size());
      std::iota(all.begin(), all.end(), 0);
      draw_elements(spec.kind, spec.n, all, sizes, rng, idx, s.base_weight);
      break;
    }
    case DesignKind::kStratified: {
      const auto& strata = pop.strata();
      const auto members = strata.members();
      for (std::size_t h = 0; h < strata.n_levels(); ++h) {
        const std::size_t n_h = spec.allocation.at(strata.names[h]);
        const std::size_t before = idx.size();
        draw_elements(spec.within_stratum_kind, n_h, members[h], sizes, rng, idx, s.base_weight);
        s.stratum_of.insert(s.stratum_of.end(), idx.size() - before, static_cast<int>(h));
      }
      break;
    }
    case DesignKind::kCluster: {
      const auto& clusters = pop.clusters();
      const auto members = clusters.members();
      const std::size_t K = clusters.n_levels();
      std::vector<std::size_t> order(K);
      std::iota(order.begin(), order.end(), 0);
      const double cluster_weight = static_cast<double>(K) / static_cast<double>(spec.n);
      for (std::size_t i = 0; i < spec.n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(K - i));
        std::swap(order[i], order[j]);
        const auto c = order[i];
        const auto& units = members[c];
        if (spec.within_cluster_n == 0 || spec.within_cluster_n >= units.size()) {
          for (auto u : units) {
            idx.push_back(u);
            s.base_weight.push_back(cluster_weight);
          }
        } else {
          std::vector<double> w;
          const std::size_t before = idx.size();
          draw_elements(DesignKind::kSrsWor, spec.within_cluster_n, units, sizes, rng, idx, w);
          for (std::size_t k = before; k < idx.size(); ++k)
            s.base_weight.push_back(cluster_weight * w[k - before]);
        }
        s.cluster_of.resize(idx.size(), static_cast<int>(c));
      }
      break;
    }
  }
  s.unit_ids.reserve(idx.size());
  for (auto i : idx) s.unit_ids.push_back(i + 1);
  return s;
}

DrawnSample draw(const FinitePopulation& pop, const DesignSpec& spec) {
  Rng rng(derive_seed(spec.seed, Stream::kDraw, 0));
  return draw(pop, spec, rng);
}

std::vector<double> population_weights(const FinitePopulation& pop, const DesignSpec& spec) {
  validate(spec, pop);
  const std::size_t N = pop.size();
  std::vector<double> w(N);
  auto element_weights = [&](DesignKind kind, std::size_t n, std::span<const std::size_t> members) {
    const double dn = static_cast<double>(n);
    if (kind == DesignKind::kPpsWr || kind == DesignKind::kPpsWor) {
      const auto sizes = pop.size_measure();
      double total = 0.0;
      for (auto i : members) total += sizes[i];
      for (auto i : members) w[i] = total / (dn * sizes[i]);
    } else {
      for (auto i : members) w[i] = static_cast<double>(members.size()) / dn;
    }
  };
  switch (spec.kind) {
    case DesignKind::kStratified: {
      const auto& strata = pop.strata();
      const auto members = strata.members();
      for (std::size_t h = 0; h < strata.n_levels(); ++h)
        element_weights(spec.within_stratum_kind, spec.allocation.at(strata.names[h]), members[h]);
      break;
    }
    case DesignKind::kCluster: {
      const auto members = pop.clusters().members();
      const double cw = static_cast<double>(members.size()) / static_cast<double>(spec.n);
      for (const auto& units : members) {
        const double inner = (spec.within_cluster_n == 0 || spec.within_cluster_n >= units.size())
                                 ? 1.0
                                 : static_cast<double>(units.size()) / static_cast<double>(spec.within_cluster_n);
        for (auto u : units) w[u] = cw * inner;
      }
      break;
    }
    default: {
      std::vector<std::size_t> all(N);
      std::iota(all.begin(), all.end(), 0);
      element_weights(spec.kind, spec.n, all);
    }
  }
  return w;
}

namespace {

std::size_t train_count(std::size_t n, double frac) {
  auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
  if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
  return std::min(k, n);
}

// Shuffles `items` and moves the first train_count of them into `train`.
template <typename T>
void split_items(std::vector<T> items, double frac, Rng& rng, std::vector<T>& train, std::vector<T>& calib) {
  shuffle(items, rng);
  const std::size_t k = train_count(items.size(), frac);
  train.insert(train.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k));
  calib.insert(calib.end(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end());
}

}  // namespace

SplitResult design_split(const DrawnSample& sample, double frac_train, Rng& rng) {
  require(!sample.empty(), "cannot split an empty sample");
  require(frac_train > 0.0 && frac_train < 1.0, "split fraction must lie in (0,1)");

  // Group draws into the blocks the split must respect: strata (split within),
  // and clusters (never split).
  std::map<int, std::vector<std::size_t>> by_stratum;
  for (std::size_t i = 0; i < sample.size(); ++i)
    by_stratum[sample.stratified() ? sample.stratum_of[i] : 0].push_back(i);

  std::vector<std::size_t> train_pos, calib_pos;
  SplitResult result;
  for (auto& [h, positions] : by_stratum) {
    if (sample.clustered()) {
      std::map<int, std::vector<std::size_t>> by_cluster;
      for (auto p : positions) by_cluster[sample.cluster_of[p]].push_back(p);
      std::vector<int> ids;
      for (const auto& kv : by_cluster) ids.push_back(kv.first);
      if (ids.size() < 2) {
        train_pos.insert(train_pos.end(), positions.begin(), positions.end());
        if (sample.stratified()) result.flagged_strata.push_back(h);
        continue;
      }
      std::vector<int> tr, ca;
      split_items(ids, frac_train, rng, tr, ca);
      for (int c : tr) train_pos.insert(train_pos.end(), by_cluster[c].begin(), by_cluster[c].end());
      for (int c : ca) calib_pos.insert(calib_pos.end(), by_cluster[c].begin(), by_cluster[c].end());
    } else {
      if (positions.size() < 2) {
        train_pos.insert(train_pos.end(), positions.begin(), positions.end());
        if (sample.stratified()) result.flagged_strata.push_back(h);
        continue;
      }
      split_items(positions, frac_train, rng, train_pos, calib_pos);
    }
  }
  std::sort(train_pos.begin(), train_pos.end());
  std::sort(calib_pos.begin(), calib_pos.end());
  result.train = sample.subset(train_pos);
  result.calibration = sample.subset(calib_pos);
  for (int h : result.flagged_strata)
    result.train.flags.push_back("stratum code " + std::to_string(h) +
                                 " has fewer than 2 sampled units; assigned wholly to training");
  return result;
}

}  // namespace svyconform
