#include "cooc/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cooc {

std::optional<double> average_precision(std::span<const std::string> ranked_ids,
                                        const QueryGroundTruth& gt, ApProtocol protocol) {
  if (gt.positives.empty()) {
    warn("query '" + gt.query + "' has no positives; skipped");
    return std::nullopt;
  }
  const double step = 1.0 / double(gt.positives.size());
  double ap = 0.0;
  double previous_precision = 1.0;
  std::size_t hits = 0;
  std::size_t seen = 0;
  for (const auto& id : ranked_ids) {
    if (gt.junk.count(id)) continue;
    ++seen;
    const bool hit = gt.positives.count(id) > 0;
    if (hit) ++hits;
    const double precision = double(hits) / double(seen);
    if (hit) ap += step * (previous_precision + precision) / 2.0;
    if (hit || protocol == ApProtocol::Philbin) previous_precision = precision;
    if (hits == gt.positives.size()) break;
  }
  return ap;
}

double mean_ap(std::span<const std::optional<double>> aps) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ap : aps) {
    if (!ap) continue;
    sum += *ap;
    ++count;
  }
  if (count == 0) throw DomainError("no scoreable queries");
  return sum / double(count);
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ground-truth file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string strip_query_prefix(std::string id) {
  // Oxford query files name images as "oxc1_<id>".
  constexpr std::string_view prefix = "oxc1_";
  if (id.rfind(prefix, 0) == 0) id.erase(0, prefix.size());
  return id;
}

}  // namespace

std::vector<QueryGroundTruth> load_groundtruth(const std::filesystem::path& dir,
                                               std::optional<Difficulty> difficulty) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("ground-truth directory not found: " + dir.string());
  constexpr std::string_view suffix = "_query.txt";
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    if (file.size() > suffix.size() && file.ends_with(suffix))
      names.push_back(file.substr(0, file.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());

  std::vector<QueryGroundTruth> out;
  for (const auto& name : names) {
    QueryGroundTruth gt;
    gt.query = name;
    gt.difficulty = difficulty;
    const auto query_lines = read_lines(dir / (name + "_query.txt"));
    if (query_lines.empty()) throw ValidationError("empty query file for '" + name + "'");
    std::istringstream is(query_lines.front());
    std::string image;
    is >> image;
    gt.image = strip_query_prefix(image);
    for (auto& v : gt.bbox) is >> v;

    for (const char* kind : {"_good.txt", "_ok.txt"}) {
      for (auto& id : read_lines(dir / (name + kind))) gt.positives.insert(std::move(id));
    }
    for (auto& id : read_lines(dir / (name + "_junk.txt"))) gt.junk.insert(std::move(id));
    for (const auto& id : gt.junk) {
      if (gt.positives.count(id))
        throw ValidationError("query '" + name + "': id '" + id + "' is both positive and junk");
    }
    out.push_back(std::move(gt));
  }
  return out;
}

}  // namespace cooc
