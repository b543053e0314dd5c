#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cooc/io.hpp"
#include "cooc/postproc.hpp"
#include "cooc/retrieval.hpp"
#include "json.hpp"

namespace cooc::cli {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::size_t thread_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("COOC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, std::size_t(cap));
  }
  return n;
}

// Runs body(i) for i in [0, n) on up to thread_count() workers.
template <typename Body>
void parallel_for(std::size_t n, Body body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
}

std::vector<fs::path> list_tensors(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cooct") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// "<id>@<scale>" -> (id, scale); a missing suffix means scale 1.
std::pair<std::string, double> split_scale(const std::string& stem) {
  const auto at = stem.rfind('@');
  if (at == std::string::npos) return {stem, 1.0};
  try {
    return {stem.substr(0, at), std::stod(stem.substr(at + 1))};
  } catch (const std::exception&) {
    return {stem, 1.0};
  }
}

void write_manifest(const fs::path& path, json manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest.dump(2) << '\n';
}

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

// l2 -> optional whitening (which re-normalizes).
Descriptor<float> finish(const Descriptor<float>& d, const std::optional<WhiteningModel<float>>& w) {
  Descriptor<float> out = l2norm(d);
  if (w) out = apply_whitening(*w, out);
  return out;
}

// Loads a directory of descriptor files keyed by image id. With `multiscale`
// every "<id>@<scale>" file of an id is finished and fused; otherwise only the
// scale-1 file is used.
std::vector<std::pair<std::string, Descriptor<float>>> load_descriptor_set(
    const fs::path& dir, bool multiscale, const std::optional<WhiteningModel<float>>& whitening) {
  std::map<std::string, std::vector<Descriptor<float>>> groups;
  for (const auto& path : list_tensors(dir)) {
    const auto [id, scale] = split_scale(path.stem().string());
    if (!multiscale && scale != 1.0) continue;
    groups[id].push_back(finish(load_descriptor(path), whitening));
  }
  std::vector<std::pair<std::string, Descriptor<float>>> out;
  for (auto& [id, descs] : groups) {
    if (descs.size() > 1 && !multiscale)
      throw ValidationError("several scale-1 descriptors for id '" + id + "'");
    out.emplace_back(id, multiscale ? multiscale_aggregate<float>(descs) : descs.front());
  }
  return out;
}

std::optional<WhiteningModel<float>> maybe_whitening(const std::optional<fs::path>& path) {
  if (!path) return std::nullopt;
  return load_whitening(*path);
}

json qe_json(const QeOptions& qe) {
  json j = json::object();
  if (qe.aqe) j["aqe"] = *qe.aqe;
  if (qe.alphaqe) j["alphaqe"] = {{"n", qe.alphaqe->first}, {"alpha", qe.alphaqe->second}};
  return j;
}

RankedList<float> ranked_with_qe(const DescriptorIndex<float>& idx, const Descriptor<float>& q,
                                 const QeOptions& qe) {
  RankedList<float> ranked = query(idx, q);
  if (qe.aqe) return query(idx, average_qe(idx, q, ranked, *qe.aqe));
  if (qe.alphaqe)
    return query(idx, alpha_qe(idx, q, ranked, qe.alphaqe->first, float(qe.alphaqe->second)));
  return ranked;
}

json options_json(const AggregateOptions& o) {
  json j = {{"pool", to_string(o.pool)},   {"mask", to_string(o.mask)},
            {"radius", o.radius},          {"diag", o.diag},
            {"a", o.a},                    {"b", o.b},
            {"eps", o.eps},                {"sketch_dim", o.sketch_dim},
            {"seed", o.seed},              {"signed_sqrt", o.signed_sqrt}};
  j["threshold"] = o.threshold ? json(*o.threshold) : json("mean");
  return j;
}

}  // namespace

Shape parse_shape(const std::string& s) {
  Shape shape;
  char x1 = 0, x2 = 0;
  std::istringstream is(s);
  if (!(is >> shape.rows >> x1 >> shape.cols >> x2 >> shape.depth) || x1 != 'x' || x2 != 'x' ||
      shape.rows < 1 || shape.cols < 1 || shape.depth < 2 || is.peek() != EOF)
    throw DomainError("bad shape '" + s + "', expected MxNxD with D >= 2");
  return shape;
}

std::pair<Index, double> parse_alphaqe(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const long n = std::stol(s.substr(0, comma), &used);
    const double alpha = std::stod(s.substr(comma + 1));
    if (n < 1 || alpha < 0) throw std::invalid_argument(s);
    return {Index(n), alpha};
  } catch (const std::exception&) {
    throw DomainError("bad --alphaqe value '" + s + "', expected N,ALPHA");
  }
}

int run_aggregate(const AggregateArgs& args) {
  const auto start = Clock::now();
  AggregateOptions options = args.options;
  options.pool = parse_pool_mode(args.pool);
  options.mask = parse_mask_mode(args.mask);
  if (args.threshold != "mean") options.threshold = std::stod(args.threshold);

  const auto inputs = list_tensors(args.input);
  if (inputs.empty()) throw IoError("no .cooct tensors in " + args.input.string());
  std::optional<CoocFilter<float>> filter;
  if (args.filter) filter = load_filter(*args.filter);

  // Depth of the run comes from the first readable tensor.
  std::optional<Index> depth;
  for (const auto& p : inputs) {
    try {
      depth = load_tensor(p).depth();
      break;
    } catch (const Error&) {
    }
  }
  if (!depth) throw IoError("no readable tensors in " + args.input.string());
  const Aggregator aggregate(options, *depth, filter);

  fs::create_directories(args.output);
  std::mutex failures_mutex;
  std::vector<std::string> failures;
  parallel_for(inputs.size(), [&](std::size_t i) {
    try {
      const auto d = aggregate(load_tensor(inputs[i]));
      save_descriptor(d, args.output / inputs[i].filename());
    } catch (const std::exception& e) {
      std::lock_guard lock(failures_mutex);
      failures.push_back(e.what());
    }
  });
  std::sort(failures.begin(), failures.end());
  for (const auto& f : failures) std::cerr << "error: " << f << '\n';

  json params = options_json(options);
  params["filter"] = args.filter ? json(args.filter->string()) : json(nullptr);
  write_manifest(args.output / "manifest.json",
                 {{"command", "aggregate"},
                  {"parameters", params},
                  {"inputs", path_strings(inputs)},
                  {"outputs", args.output.string()},
                  {"failed", failures.size()},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  std::cout << "aggregated " << inputs.size() - failures.size() << "/" << inputs.size()
            << " tensors into " << args.output.string() << '\n';
  return failures.empty() ? 0 : 1;
}

int run_whiten_fit(const WhitenFitArgs& args) {
  const auto start = Clock::now();
  const auto set = load_descriptor_set(args.input, args.multiscale, std::nullopt);
  std::vector<Descriptor<float>> descs;
  for (const auto& [id, d] : set) descs.push_back(d);
  const auto model = fit_whitening<float>(descs, args.dim);
  save_whitening(model, args.output);
  write_manifest(fs::path(args.output.string() + ".manifest.json"),
                 {{"command", "whiten-fit"},
                  {"parameters",
                   {{"dim", args.dim}, {"ms", args.multiscale}, {"kept", model.output_dim()}}},
                  {"inputs", args.input.string()},
                  {"outputs", args.output.string()},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  std::cout << "whitening " << model.input_dim() << " -> " << model.output_dim() << " fitted on "
            << descs.size() << " descriptors\n";
  return 0;
}

int run_whiten_apply(const WhitenApplyArgs& args) {
  const auto start = Clock::now();
  const auto model = load_whitening(args.model);
  const auto inputs = list_tensors(args.input);
  fs::create_directories(args.output);
  for (const auto& p : inputs)
    save_descriptor(apply_whitening(model, l2norm(load_descriptor(p))), args.output / p.filename());
  write_manifest(args.output / "manifest.json",
                 {{"command", "whiten-apply"},
                  {"parameters", {{"model", args.model.string()}}},
                  {"inputs", path_strings(inputs)},
                  {"outputs", args.output.string()},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  return 0;
}

int run_index(const IndexArgs& args) {
  const auto start = Clock::now();
  const auto set = load_descriptor_set(args.input, args.multiscale, maybe_whitening(args.whiten));
  const auto idx = build_index<float>(set);
  save_index(idx, args.output);
  write_manifest(fs::path(args.output.string() + ".manifest.json"),
                 {{"command", "index"},
                  {"parameters",
                   {{"whiten", args.whiten ? json(args.whiten->string()) : json(nullptr)},
                    {"ms", args.multiscale}}},
                  {"inputs", args.input.string()},
                  {"outputs", args.output.string()},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  std::cout << "indexed " << idx.size() << " descriptors of dim " << idx.dim() << '\n';
  return 0;
}

int run_query(const QueryArgs& args) {
  const auto idx = load_index(args.index);
  const auto q = finish(load_descriptor(args.query), maybe_whitening(args.whiten));
  const auto ranked = ranked_with_qe(idx, q, args.qe);
  const std::size_t n = std::min(args.top, ranked.size());
  std::cout << std::setprecision(6) << "rank\tid\tdistance\n";
  for (std::size_t i = 0; i < n; ++i)
    std::cout << i + 1 << '\t' << ranked[i].id << '\t' << ranked[i].distance << '\n';
  return 0;
}

int run_eval(const EvalArgs& args) {
  const auto start = Clock::now();
  const auto idx = load_index(args.index);
  const auto gts = load_groundtruth(args.groundtruth);
  if (gts.empty()) throw IoError("no queries in ground truth " + args.groundtruth.string());
  const ApProtocol protocol =
      args.protocol == "philbin" ? ApProtocol::Philbin : ApProtocol::HitTrapezoid;

  std::map<std::string, Descriptor<float>> queries;
  if (args.queries) {
    for (auto& [id, d] : load_descriptor_set(*args.queries, args.multiscale,
                                             maybe_whitening(args.whiten)))
      queries.emplace(id, std::move(d));
  } else {
    for (Index r = 0; r < idx.size(); ++r)
      queries.emplace(idx.ids()[std::size_t(r)], idx.row(r).transpose());
  }
  for (const auto& gt : gts) {
    if (!queries.count(gt.image))
      throw IoError("no descriptor for query image '" + gt.image + "' (" + gt.query + ")");
  }

  std::vector<std::optional<double>> aps(gts.size());
  parallel_for(gts.size(), [&](std::size_t i) {
    QueryGroundTruth gt = gts[i];
    RankedList<float> ranked = ranked_with_qe(idx, queries.at(gt.image), args.qe);
    // The query image itself is neither retrieved nor counted as a positive.
    std::erase_if(ranked, [&](const auto& n) { return n.id == gt.image; });
    gt.positives.erase(gt.image);
    aps[i] = average_precision(ranked, gt, protocol);
  });
  const double map = mean_ap(aps);

  std::ofstream csv(args.output);
  if (!csv) throw IoError("cannot write " + args.output.string());
  csv << std::setprecision(std::numeric_limits<double>::max_digits10) << "query,ap\n";
  for (std::size_t i = 0; i < gts.size(); ++i) {
    csv << gts[i].query << ',';
    if (aps[i]) {
      csv << *aps[i];
    } else {
      csv << "skipped";
    }
    csv << '\n';
  }
  csv << "mAP," << map << '\n';

  write_manifest(fs::path(args.output.string() + ".manifest.json"),
                 {{"command", "eval"},
                  {"parameters",
                   {{"ms", args.multiscale},
                    {"protocol", args.protocol},
                    {"whiten", args.whiten ? json(args.whiten->string()) : json(nullptr)},
                    {"qe", qe_json(args.qe)}}},
                  {"inputs",
                   {{"index", args.index.string()},
                    {"queries", args.queries ? json(args.queries->string()) : json(nullptr)},
                    {"groundtruth", args.groundtruth.string()}}},
                  {"outputs", args.output.string()},
                  {"mAP", map},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  std::cout << std::fixed << std::setprecision(4) << "mAP " << map << '\n';
  return 0;
}

int run_bench(const BenchArgs& args) {
  const auto start = Clock::now();
  json rows = json::array();
  std::cout << std::left << std::setw(14) << "shape" << std::right << std::setw(14) << "conv ms"
            << std::setw(14) << "shih ms" << std::setw(12) << "speedup" << '\n';
  std::ostringstream csv;
  csv << std::setprecision(std::numeric_limits<double>::max_digits10)
      << "shape,radius,reps,conv_ms,shih_ms,speedup,conv_checksum,shih_checksum\n";
  for (const auto& s : args.shapes) {
    const Shape shape = parse_shape(s);
    const BenchResult r = bench_cooc(shape, args.radius, args.reps, args.seed);
    std::cout << std::left << std::setw(14) << s << std::right << std::fixed
              << std::setprecision(3) << std::setw(14) << r.conv_ms << std::setw(14) << r.shih_ms
              << std::setw(11) << std::setprecision(1) << r.speedup() << "x\n";
    csv << s << ',' << r.radius << ',' << r.reps << ',' << r.conv_ms << ',' << r.shih_ms << ','
        << r.speedup() << ',' << r.conv_checksum << ',' << r.shih_checksum << '\n';
    rows.push_back({{"shape", s},
                    {"conv_ms", r.conv_ms},
                    {"shih_ms", r.shih_ms},
                    {"speedup", r.speedup()},
                    {"conv_checksum", r.conv_checksum},
                    {"shih_checksum", r.shih_checksum}});
  }
  if (args.output) {
    std::ofstream out(*args.output);
    if (!out) throw IoError("cannot write " + args.output->string());
    out << csv.str();
    write_manifest(fs::path(args.output->string() + ".manifest.json"),
                   {{"command", "bench"},
                    {"parameters",
                     {{"shapes", args.shapes},
                      {"radius", args.radius},
                      {"reps", args.reps},
                      {"seed", args.seed}}},
                    {"outputs", args.output->string()},
                    {"results", rows},
                    {"timings_ms", {{"total", elapsed_ms(start)}}}});
  }
  return 0;
}

int run_inspect(const InspectArgs& args) {
  const auto start = Clock::now();
  std::vector<fs::path> files;
  for (const auto& in : args.inputs) {
    if (fs::is_directory(in)) {
      for (auto& p : list_tensors(in)) files.push_back(std::move(p));
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw IoError("no tensors to inspect");
  fs::create_directories(args.output);

  std::vector<Vector<float>> channel_vectors;
  std::vector<std::string> outputs;
  for (const auto& path : files) {
    const Tensor<float> t = load_tensor(path);
    const auto c = cooc_conv(t, make_filter<float>(t.depth(), args.radius, float(args.diag)));
    const auto alpha = spatial_cooc_weights(c, float(args.a), float(args.b));
    const Eigen::MatrixXd heat = alpha.cast<double>();
    const std::string stem = path.stem().string();
    write_csv(heat, args.output / (stem + "_alpha.csv"));
    write_pgm(heat, args.output / (stem + "_alpha.pgm"));
    outputs.push_back(stem + "_alpha.csv");
    outputs.push_back(stem + "_alpha.pgm");
    channel_vectors.push_back(channel_cooc_vector(c));
  }
  if (channel_vectors.size() >= 2) {
    const auto corr = cooc_correlation_matrix<float>(channel_vectors);
    write_csv(corr.cast<double>(), args.output / "cv_correlation.csv");
    std::ofstream order(args.output / "cv_order.txt");
    for (const auto& p : files) order << p.stem().string() << '\n';
    outputs.push_back("cv_correlation.csv");
    outputs.push_back("cv_order.txt");
  }
  write_manifest(args.output / "manifest.json",
                 {{"command", "inspect"},
                  {"parameters",
                   {{"radius", args.radius}, {"diag", args.diag}, {"a", args.a}, {"b", args.b}}},
                  {"inputs", path_strings(files)},
                  {"outputs", outputs},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  return 0;
}

int run_train(const TrainArgs& args) {
  const auto start = Clock::now();
  std::ifstream in(args.pairs);
  if (!in) throw IoError("cannot open pair list " + args.pairs.string());
  const fs::path base = args.pairs.parent_path();
  std::map<fs::path, Tensor<double>> cache;
  auto tensor = [&](const std::string& name) -> const Tensor<double>& {
    fs::path p(name);
    if (p.is_relative()) p = base / p;
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, load_tensor(p).cast<double>()).first;
    return it->second;
  };

  std::vector<PairSample<double>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string a, b, label;
    if (!std::getline(is, a, '\t') || !std::getline(is, b, '\t') || !std::getline(is, label) ||
        (label != "0" && label != "1"))
      throw ValidationError(args.pairs.string() + ":" + std::to_string(line_no) +
                            ": expected path_a<TAB>path_b<TAB>{0,1}");
    pairs.push_back({tensor(a), tensor(b), label == "1" ? 1 : 0});
  }
  if (pairs.empty()) throw ValidationError("pair list " + args.pairs.string() + " is empty");

  const Index depth = pairs.front().a.depth();
  CoocFilter<double> initial =
      args.init ? load_filter(*args.init).cast<double>()
                : make_filter<double>(depth, args.config.radius, args.config.diag_init);
  TrainConfig cfg = args.config;
  cfg.radius = initial.radius();
  const auto result = train<double>(pairs, cfg, std::move(initial));
  save_filter(result.filter.cast<float>(), args.output);

  if (args.loss_csv) {
    std::ofstream csv(*args.loss_csv);
    if (!csv) throw IoError("cannot write " + args.loss_csv->string());
    csv << std::setprecision(std::numeric_limits<double>::max_digits10)
        << "epoch,train_loss,validation_loss\n";
    for (const auto& s : result.history) {
      csv << s.epoch << ',' << s.train_loss << ',';
      if (s.validation_loss) csv << *s.validation_loss;
      csv << '\n';
    }
  }
  const auto& c = args.config;
  write_manifest(fs::path(args.output.string() + ".manifest.json"),
                 {{"command", "train"},
                  {"parameters",
                   {{"tau", c.tau},
                    {"lr", c.learning_rate},
                    {"beta1", c.beta1},
                    {"beta2", c.beta2},
                    {"adam_eps", c.adam_eps},
                    {"batch", c.batch_size},
                    {"epochs", c.epochs},
                    {"seed", c.seed},
                    {"val_frac", c.validation_fraction},
                    {"radius", cfg.radius},
                    {"sketch_dim", c.sketch_dim},
                    {"diag", c.diag_init},
                    {"init", args.init ? json(args.init->string()) : json(nullptr)}}},
                  {"inputs", args.pairs.string()},
                  {"outputs",
                   {args.output.string(), args.loss_csv ? args.loss_csv->string() : ""}},
                  {"best_epoch", result.best_epoch},
                  {"timings_ms", {{"total", elapsed_ms(start)}}}});
  std::cout << "trained " << result.history.size() - 1 << " epochs on " << pairs.size()
            << " pairs; best epoch " << result.best_epoch << '\n';
  return 0;
}

}  // namespace cooc::cli
