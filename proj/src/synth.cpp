#include <algorithm>

#include "tkgd/data.hpp"

namespace tkgd {

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_entities < 2 || spec.num_relations < 1 || spec.num_times < 1 ||
      spec.num_clusters < 2 || spec.num_clusters > spec.num_entities)
    throw std::invalid_argument("generate_synthetic: invalid sizes");
  Rng rng(spec.seed);

  std::vector<EntityId> entity_ids(spec.num_entities);
  for (std::size_t i = 0; i < entity_ids.size(); ++i) entity_ids[i] = static_cast<EntityId>(i);
  rng.shuffle(entity_ids);
  std::vector<std::vector<EntityId>> clusters(spec.num_clusters);
  std::vector<std::size_t> cluster_of(spec.num_entities);
  for (std::size_t i = 0; i < entity_ids.size(); ++i) {
    clusters[i % spec.num_clusters].push_back(entity_ids[i]);
    cluster_of[static_cast<std::size_t>(entity_ids[i])] = i % spec.num_clusters;
  }

  std::vector<std::size_t> period(spec.num_relations);
  std::vector<std::vector<std::size_t>> subject_cluster(spec.num_relations), object_cluster(spec.num_relations);
  for (std::size_t r = 0; r < spec.num_relations; ++r) {
    period[r] = 2 + static_cast<std::size_t>(rng.below(4));
    for (std::size_t ph = 0; ph < period[r]; ++ph) {
      subject_cluster[r].push_back(static_cast<std::size_t>(rng.below(spec.num_clusters)));
      object_cluster[r].push_back(static_cast<std::size_t>(rng.below(spec.num_clusters)));
    }
  }

  // Within a cluster, member j is drawn with weight 1 / (j + 1).
  auto draw = [&](const std::vector<EntityId>& members) {
    double total = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j) total += 1.0 / static_cast<double>(j + 1);
    double u = rng.uniform() * total;
    for (std::size_t j = 0; j < members.size(); ++j) {
      u -= 1.0 / static_cast<double>(j + 1);
      if (u < 0.0) return members[j];
    }
    return members.back();
  };

  std::vector<Quadruple> all;
  std::unordered_set<Quadruple, QuadrupleHash> seen;
  for (std::size_t t = 0; t < spec.num_times; ++t)
    for (std::size_t r = 0; r < spec.num_relations; ++r) {
      const std::size_t ph = t % period[r];
      for (std::size_t k = 0; k < spec.facts_per_slot; ++k) {
        const EntityId s = draw(clusters[subject_cluster[r][ph]]);
        const EntityId o = draw(clusters[object_cluster[r][ph]]);
        Quadruple q{s, static_cast<RelationId>(r), o, static_cast<TimeId>(t)};
        if (seen.insert(q).second) all.push_back(q);
      }
    }
  rng.shuffle(all);

  Dataset data;
  for (std::size_t e = 0; e < spec.num_entities; ++e) data.vocab.entities.intern("e" + std::to_string(e));
  for (std::size_t r = 0; r < spec.num_relations; ++r) data.vocab.relations.intern("r" + std::to_string(r));
  for (std::size_t t = 0; t < spec.num_times; ++t) {
    TimeKey k;
    k.known = true;
    k.year = 2000 + static_cast<std::int64_t>(t);
    data.vocab.time_bins.push_back(k);
  }
  const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(all.size()));
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(all.size()));
  data.facts.valid.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_valid));
  data.facts.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_valid),
                         all.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test));
  data.facts.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test), all.end());
  data.facts.rebuild_known();
  return data;
}

}  // namespace tkgd
