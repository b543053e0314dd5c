// cooc: co-occurrence descriptors for image retrieval.

#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using namespace cooc::cli;

void add_qe_flags(CLI::App* cmd, QeOptions& qe, std::string& alphaqe_raw) {
  cmd->add_option("--aqe", qe.aqe, "Average query expansion over the top N")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--alphaqe", alphaqe_raw, "Alpha query expansion: N,ALPHA")
      ->excludes("--aqe");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-occurrence descriptors for image retrieval"};
  app.require_subcommand(1);
  std::function<int()> run;

  const std::vector<std::string> pools{"ucrow", "chco-sct", "bp", "cbp"};
  const std::vector<std::string> masks{"none", "topdown", "center"};

  AggregateArgs agg;
  auto* c_agg = app.add_subcommand("aggregate", "Pool activation tensors into descriptors");
  c_agg->add_option("--in", agg.input, "Directory of .cooct tensors")->required();
  c_agg->add_option("--out", agg.output, "Output directory")->required();
  c_agg->add_option("--pool", agg.pool, "ucrow | chco-sct | bp | cbp")
      ->check(CLI::IsMember(pools))
      ->capture_default_str();
  c_agg->add_option("--mask", agg.mask, "none | topdown | center")
      ->check(CLI::IsMember(masks))
      ->capture_default_str();
  c_agg->add_option("--radius", agg.options.radius, "Co-occurrence radius r")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_agg->add_option("--diag", agg.options.diag, "Self-channel filter weight")->capture_default_str();
  c_agg->add_option("--thr", agg.threshold, "Activation threshold, or 'mean'")
      ->capture_default_str();
  c_agg->add_option("--a", agg.options.a, "Spatial power-normalization a")->capture_default_str();
  c_agg->add_option("--b", agg.options.b, "Spatial power-normalization b")->capture_default_str();
  c_agg->add_option("--eps", agg.options.eps, "Channel-weight epsilon")->capture_default_str();
  c_agg->add_option("--sketch-dim", agg.options.sketch_dim, "Compact bilinear output dim")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_agg->add_option("--seed", agg.options.seed, "Sketch seed")->capture_default_str();
  c_agg->add_option("--filter", agg.filter, "Trained .coof filter");
  c_agg->add_flag("--signed-sqrt", agg.options.signed_sqrt, "Signed square root before output");
  c_agg->callback([&] {
    if (agg.threshold != "mean") {
      try {
        std::stod(agg.threshold);
      } catch (const std::exception&) {
        throw CLI::ValidationError("--thr", "expected a number or 'mean'");
      }
    }
    run = [&] { return run_aggregate(agg); };
  });

  WhitenFitArgs wfit;
  auto* c_wfit = app.add_subcommand("whiten-fit", "Learn PCA whitening from descriptors");
  c_wfit->add_option("--in", wfit.input, "Directory of descriptors")->required();
  c_wfit->add_option("--out", wfit.output, "Output .coow model")->required();
  c_wfit->add_option("--dim", wfit.dim, "Output dimension")->required()->check(CLI::PositiveNumber);
  c_wfit->add_flag("--ms", wfit.multiscale, "Fuse <id>@<scale> descriptors first");
  c_wfit->callback([&] { run = [&] { return run_whiten_fit(wfit); }; });

  WhitenApplyArgs wapp;
  auto* c_wapp = app.add_subcommand("whiten-apply", "Whiten a directory of descriptors");
  c_wapp->add_option("--model", wapp.model, ".coow model")->required();
  c_wapp->add_option("--in", wapp.input, "Directory of descriptors")->required();
  c_wapp->add_option("--out", wapp.output, "Output directory")->required();
  c_wapp->callback([&] { run = [&] { return run_whiten_apply(wapp); }; });

  IndexArgs idx;
  auto* c_idx = app.add_subcommand("index", "Build a descriptor index");
  c_idx->add_option("--in", idx.input, "Directory of descriptors")->required();
  c_idx->add_option("--out", idx.output, "Output .cooi index")->required();
  c_idx->add_option("--whiten", idx.whiten, ".coow model applied before indexing");
  c_idx->add_flag("--ms", idx.multiscale, "Fuse <id>@<scale> descriptors");
  c_idx->callback([&] { run = [&] { return run_index(idx); }; });

  QueryArgs qry;
  std::string qry_alphaqe;
  auto* c_qry = app.add_subcommand("query", "Rank an index against one descriptor");
  c_qry->add_option("--index", qry.index, ".cooi index")->required();
  c_qry->add_option("--query", qry.query, "Query descriptor file")->required();
  c_qry->add_option("--whiten", qry.whiten, ".coow model");
  c_qry->add_option("--top", qry.top, "Results to print")->capture_default_str();
  add_qe_flags(c_qry, qry.qe, qry_alphaqe);
  c_qry->callback([&] {
    if (!qry_alphaqe.empty()) qry.qe.alphaqe = parse_alphaqe(qry_alphaqe);
    run = [&] { return run_query(qry); };
  });

  EvalArgs ev;
  std::string ev_alphaqe;
  auto* c_ev = app.add_subcommand("eval", "Mean average precision over a query set");
  c_ev->add_option("--index", ev.index, ".cooi index")->required();
  c_ev->add_option("--queries", ev.queries, "Directory of query descriptors (default: index rows)");
  c_ev->add_option("--gt", ev.groundtruth, "Ground-truth directory")->required();
  c_ev->add_option("--out", ev.output, "Per-query AP CSV")->required();
  c_ev->add_option("--whiten", ev.whiten, ".coow model applied to query descriptors");
  c_ev->add_flag("--ms", ev.multiscale, "Fuse multiscale query descriptors");
  c_ev->add_option("--ap-protocol", ev.protocol, "trapezoid | philbin")
      ->check(CLI::IsMember({"trapezoid", "philbin"}))
      ->capture_default_str();
  add_qe_flags(c_ev, ev.qe, ev_alphaqe);
  c_ev->callback([&] {
    if (!ev_alphaqe.empty()) ev.qe.alphaqe = parse_alphaqe(ev_alphaqe);
    run = [&] { return run_eval(ev); };
  });

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time convolution vs max-correlation co-occurrence");
  c_bench->add_option("--shapes", bench.shapes, "Comma-separated MxNxD shapes")
      ->delimiter(',')
      ->check([](const std::string& s) {
        try {
          parse_shape(s);
          return std::string();
        } catch (const std::exception& e) {
          return std::string(e.what());
        }
      })
      ->capture_default_str();
  c_bench->add_option("--radius", bench.radius, "Co-occurrence radius")->capture_default_str();
  c_bench->add_option("--reps", bench.reps, "Repetitions per shape")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_bench->add_option("--seed", bench.seed, "Tensor seed")->capture_default_str();
  c_bench->add_option("--out", bench.output, "CSV report");
  c_bench->callback([&] { run = [&] { return run_bench(bench); }; });

  InspectArgs insp;
  auto* c_insp = app.add_subcommand("inspect", "Spatial weight heatmaps and C_V correlations");
  c_insp->add_option("--in", insp.inputs, "Tensor files or directories")->required();
  c_insp->add_option("--out", insp.output, "Output directory")->required();
  c_insp->add_option("--radius", insp.radius, "Co-occurrence radius")->capture_default_str();
  c_insp->add_option("--diag", insp.diag, "Self-channel filter weight")->capture_default_str();
  c_insp->add_option("--a", insp.a, "Spatial power-normalization a")->capture_default_str();
  c_insp->add_option("--b", insp.b, "Spatial power-normalization b")->capture_default_str();
  c_insp->callback([&] { run = [&] { return run_inspect(insp); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the co-occurrence filter on labeled pairs");
  c_tr->add_option("--pairs", tr.pairs, "Pair list: path_a<TAB>path_b<TAB>label")->required();
  c_tr->add_option("--out", tr.output, "Output .coof filter")->required();
  c_tr->add_option("--loss-csv", tr.loss_csv, "Per-epoch loss curve");
  c_tr->add_option("--init", tr.init, "Initial .coof filter");
  c_tr->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
  c_tr->add_option("--tau", tr.config.tau, "Contrastive margin")->capture_default_str();
  c_tr->add_option("--batch", tr.config.batch_size, "Pairs per batch")->capture_default_str();
  c_tr->add_option("--epochs", tr.config.epochs, "Epochs")->capture_default_str();
  c_tr->add_option("--beta1", tr.config.beta1, "Adam beta1")->capture_default_str();
  c_tr->add_option("--beta2", tr.config.beta2, "Adam beta2")->capture_default_str();
  c_tr->add_option("--radius", tr.config.radius, "Filter radius")->capture_default_str();
  c_tr->add_option("--diag", tr.config.diag_init, "Initial self-channel weight")
      ->capture_default_str();
  c_tr->add_option("--sketch-dim", tr.config.sketch_dim, "Compact bilinear dim")
      ->capture_default_str();
  c_tr->add_option("--seed", tr.config.seed, "Shuffle and sketch seed")->capture_default_str();
  c_tr->add_option("--val-frac", tr.config.validation_fraction, "Held-out pair fraction")
      ->capture_default_str();
  c_tr->callback([&] { run = [&] { return run_train(tr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const cooc::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    return run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
