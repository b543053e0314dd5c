#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cooc/eval.hpp"
#include "cooc/pipeline.hpp"
#include "cooc/trainer.hpp"

namespace cooc::cli {

namespace fs = std::filesystem;

struct QeOptions {
  std::optional<Index> aqe;                          // --aqe N
  std::optional<std::pair<Index, double>> alphaqe;  // --alphaqe N,ALPHA
};

struct AggregateArgs {
  fs::path input;
  fs::path output;
  std::string pool = "chco-sct";
  std::string mask = "none";
  std::string threshold = "mean";
  std::optional<fs::path> filter;
  AggregateOptions options;
};

struct WhitenFitArgs {
  fs::path input;
  fs::path output;
  Index dim = 0;
  bool multiscale = false;
};

struct WhitenApplyArgs {
  fs::path model;
  fs::path input;
  fs::path output;
};

struct IndexArgs {
  fs::path input;
  fs::path output;
  std::optional<fs::path> whiten;
  bool multiscale = false;
};

struct QueryArgs {
  fs::path index;
  fs::path query;
  std::optional<fs::path> whiten;
  std::size_t top = 20;
  QeOptions qe;
};

struct EvalArgs {
  fs::path index;
  std::optional<fs::path> queries;
  fs::path groundtruth;
  fs::path output;
  std::optional<fs::path> whiten;
  bool multiscale = false;
  std::string protocol = "trapezoid";
  QeOptions qe;
};

struct BenchArgs {
  std::vector<std::string> shapes{"32x24x512", "32x24x32"};
  Index radius = 4;
  std::size_t reps = 50;
  std::uint64_t seed = 0;
  std::optional<fs::path> output;
};

struct InspectArgs {
  std::vector<fs::path> inputs;
  fs::path output;
  Index radius = 4;
  double diag = 0.0;
  double a = 2.0;
  double b = 2.0;
};

struct TrainArgs {
  fs::path pairs;
  fs::path output;
  std::optional<fs::path> loss_csv;
  std::optional<fs::path> init;
  TrainConfig config;
};

// Each returns the process exit code (0 success, 1 runtime failure).
int run_aggregate(const AggregateArgs& args);
int run_whiten_fit(const WhitenFitArgs& args);
int run_whiten_apply(const WhitenApplyArgs& args);
int run_index(const IndexArgs& args);
int run_query(const QueryArgs& args);
int run_eval(const EvalArgs& args);
int run_bench(const BenchArgs& args);
int run_inspect(const InspectArgs& args);
int run_train(const TrainArgs& args);

Shape parse_shape(const std::string& s);
std::pair<Index, double> parse_alphaqe(const std::string& s);

}  // namespace cooc::cli
