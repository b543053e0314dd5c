#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cooc/retrieval.hpp"

namespace cooc {

enum class Difficulty { Easy, Medium, Hard };

struct QueryGroundTruth {
  std::string query;                  // query name, e.g. "all_souls_1"
  std::string image;                  // image id of the query
  std::set<std::string> positives;    // good + ok
  std::set<std::string> junk;
  std::array<double, 4> bbox{};       // x1 y1 x2 y2, unused by scoring
  std::optional<Difficulty> difficulty;
};

enum class ApProtocol {
  // Trapezoid between consecutive positive hits: each hit adds
  // (precision at previous hit + precision at this hit) / 2 / #positives,
  // with precision 1 before the first hit.
  HitTrapezoid,
  // Oxford compute_ap: trapezoid over every non-junk rank, so precision
  // drops between hits are included.
  Philbin,
};

/// Average precision of a ranked id list with junk ids removed. Returns
/// nullopt (with a warning) when the query has no positives.
std::optional<double> average_precision(std::span<const std::string> ranked_ids,
                                        const QueryGroundTruth& gt,
                                        ApProtocol protocol = ApProtocol::HitTrapezoid);

template <typename Scalar>
std::optional<double> average_precision(const RankedList<Scalar>& ranked,
                                        const QueryGroundTruth& gt,
                                        ApProtocol protocol = ApProtocol::HitTrapezoid) {
  std::vector<std::string> ids;
  ids.reserve(ranked.size());
  for (const auto& n : ranked) ids.push_back(n.id);
  return average_precision(std::span<const std::string>(ids), gt, protocol);
}

/// Mean over scoreable queries (nullopt entries are skipped). Throws
/// DomainError when nothing is scoreable.
double mean_ap(std::span<const std::optional<double>> aps);

/// Loads Oxford-style ground truth: for every <q>_query.txt in `dir`, the
/// sibling <q>_good.txt, <q>_ok.txt and <q>_junk.txt. Queries are returned
/// sorted by name.
std::vector<QueryGroundTruth> load_groundtruth(const std::filesystem::path& dir,
                                               std::optional<Difficulty> difficulty = {});

}  // namespace cooc
