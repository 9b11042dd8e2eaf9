// npi: command-line front end for the NPI workbench.
//
// Every subcommand resolves its options as flag > --config file > profile >
// built-in default and writes the resolved values to a run manifest next to
// its output. Failures print one line
//
//   error kind=<kind> exit=<code> message="<text>"
//
// and exit with a code specific to the error kind.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npi/npi.hpp"

namespace fs = std::filesystem;
using namespace npi;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::shape_mismatch: return 3;
    case ErrorKind::validation: return 4;
    case ErrorKind::io: return 5;
    case ErrorKind::divergence: return 6;
  }
  return 1;
}

int report_error(std::string_view kind, int code, const std::string& message) {
  std::string escaped;
  for (char c : message) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += (c == '\n') ? ' ' : c;
  }
  std::cerr << "error kind=" << kind << " exit=" << code << " message=\"" << escaped << "\"\n";
  return code;
}

// One subcommand: its CLI11 parser plus the Settings its options feed.
struct Command {
  CLI::App* app = nullptr;
  Settings settings;
  std::map<std::string, std::string> values;
  std::map<std::string, std::vector<std::string>> multi;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  Command(CLI::App& parent, const std::string& name, const std::string& help)
      : app(parent.add_subcommand(name, help)), settings(name) {
    app->add_option("--config", config_path, "flat key = value file; command-line flags take precedence");
    option("seed", "0", "random seed");
  }

  void option(const std::string& key, const std::string& def, const std::string& help) {
    settings.declare(key, def);
    options[key] = app->add_option("--" + key, values[key], help + (def.empty() ? "" : " [" + def + "]"));
  }

  // A flag that takes several values; stored comma-joined.
  void option_list(const std::string& key, const std::string& def, const std::string& help, int count = -1) {
    settings.declare(key, def);
    auto* opt = app->add_option("--" + key, multi[key], help);
    if (count > 0) opt->expected(count);
    options[key] = opt;
  }

  void flag(const std::string& key, const std::string& help) {
    settings.declare(key, "false");
    options[key] = app->add_flag("--" + key, flags[key], help);
  }

  // Moves parsed flags into the settings and applies the config file.
  void resolve() {
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (multi.count(key)) {
        std::string joined;
        for (const auto& v : multi[key]) joined += (joined.empty() ? "" : ",") + v;
        settings.set_cli(key, joined);
      } else if (flags.count(key)) {
        settings.set_cli(key, flags[key] ? "true" : "false");
      } else {
        settings.set_cli(key, values[key]);
      }
    }
    if (!config_path.empty()) settings.apply_config(load_config(config_path));
  }

  const std::string& required(const std::string& key) const {
    require(settings.has_value(key), ErrorKind::invalid_argument, settings.command() + ": --" + key + " is required");
    return settings.str(key);
  }

  fs::path input(const std::string& key) const {
    const fs::path p = required(key);
    require(fs::exists(p), ErrorKind::io, settings.command() + ": --" + key + " " + p.string() + " does not exist");
    return p;
  }

  std::uint64_t seed() const { return settings.integer("seed"); }
};

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && p == text.data() + text.size() && !text.empty(), ErrorKind::invalid_argument,
          what + ": '" + text + "' is not a non-negative integer");
  return v;
}

double parse_real(const std::string& text, const std::string& what) {
  double v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && p == text.data() + text.size() && !text.empty(), ErrorKind::invalid_argument,
          what + ": '" + text + "' is not a number");
  return v;
}

ModelKind model_kind(const std::string& name) {
  for (auto k : {ModelKind::cnn, ModelKind::rnn, ModelKind::lstm, ModelKind::gru, ModelKind::transformer})
    if (to_string(k) == name) return k;
  fail(ErrorKind::invalid_argument, "unknown model '" + name + "' (expected cnn, rnn, lstm, gru or transformer)");
}

ECMode inference_mode(const std::string& name) {
  const auto m = parse_ec_mode(name);
  require(m != ECMode::ground_truth, ErrorKind::invalid_argument, "perturbation mode must be generative or direct");
  return m;
}

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest"); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Loads an EC tensor, or an n×n matrix CSV as a single-step tensor.
ECTensor load_ec_or_matrix(const fs::path& p) {
  if (p.extension() == ".csv") {
    const auto m = load_matrix_csv(p);
    ECTensor ec(1, static_cast<std::size_t>(m.rows()));
    for (std::size_t b = 0; b < ec.n; ++b)
      for (std::size_t a = 0; a < ec.n; ++a) ec.at(0, b, a) = m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a));
    return ec;
  }
  return load_ec(p);
}

TrainConfig train_config(const Settings& s) {
  TrainConfig tc;
  tc.lr0 = s.real("lr");
  tc.batch_size = s.size("batch");
  tc.max_epochs = s.size("epochs");
  tc.early_stop = s.size("early-stop");
  tc.scheduler.patience = s.size("patience");
  tc.scheduler.factor = s.real("factor");
  tc.scheduler.min_lr = s.real("min-lr");
  tc.seed = s.integer("seed");
  return tc;
}

void declare_training(Command& c) {
  c.option("epochs", "100", "maximum training epochs");
  c.option("batch", "30", "mini-batch size");
  c.option("lr", "1e-4", "initial learning rate");
  c.option("patience", "10", "plateau epochs before the learning rate decays");
  c.option("factor", "0.1", "learning-rate decay factor");
  c.option("min-lr", "1e-7", "learning-rate floor");
  c.option("early-stop", "25", "stop after this many epochs without validation improvement");
}

// ---------------------------------------------------------------------------

void cmd_gen_sc(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  const int sources = s.flag("three-node") + s.has_value("random") + s.has_value("load");
  require(sources == 1, ErrorKind::invalid_argument, "gen-sc: give exactly one of --three-node, --random, --load");
  SCMatrix sc;
  if (s.flag("three-node")) {
    sc = three_node_sc();
  } else if (s.has_value("random")) {
    const auto parts = s.list("random");
    require(parts.size() == 3, ErrorKind::invalid_argument, "gen-sc: --random takes n density seed");
    sc = random_sc(parse_size(parts[0], "--random n"), parse_real(parts[1], "--random density"),
                   parse_size(parts[2], "--random seed"));
  } else {
    sc = load_sc(c.input("load"));
  }
  ensure_parent(out);
  save_sc(sc, out);
  s.write_manifest(manifest_for_file(out));
  std::cout << "wrote " << sc.n << "-region connectome (" << sc.nonzeros() << " edges) to " << out.string() << '\n';
}

void cmd_simulate(Command& c) {
  const auto& s = c.settings;
  const auto sc = load_sc(c.input("sc"));
  const fs::path out = c.required("out");
  std::vector<PerturbationSpec> kicks;
  const auto var = parse_state_var(s.str("variable"));
  for (const auto& spec : s.list("perturb")) {
    const auto parts = split_on(spec, ':');
    require(parts.size() == 3, ErrorKind::invalid_argument, "--perturb expects region:step:delta, got '" + spec + "'");
    PerturbationSpec k;
    k.region = parse_size(parts[0], "--perturb region");
    k.step_index = parse_size(parts[1], "--perturb step");
    k.magnitude = parse_real(parts[2], "--perturb delta");
    k.variable = var;
    kicks.push_back(k);
  }
  const auto ts = simulate(JRParams{}, sc, s.size("steps"), c.seed(), kicks, s.size("period"));
  ensure_parent(out);
  save_timeseries(ts, out);
  if (s.has_value("csv")) export_timeseries_csv(ts, s.str("csv"));
  s.write_manifest(manifest_for_file(out));
  std::cout << "wrote " << ts.steps() << " samples x " << ts.n_channels << " channels at " << ts.rate << " Hz to "
            << out.string() << '\n';
}

void cmd_make_dataset(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  DatasetFiles files;
  files.series = load_timeseries(c.input("ts"));
  const auto parts = split_on(s.str("spec"), ':');
  require(parts.size() == 3, ErrorKind::invalid_argument, "--spec expects context:horizon:stride");
  files.spec.context_len = parse_size(parts[0], "--spec context");
  files.spec.horizon = parse_size(parts[1], "--spec horizon");
  files.spec.stride = parse_size(parts[2], "--spec stride");
  files.spec.total_len = files.spec.context_len + files.spec.horizon;
  files.train_frac = s.real("split");
  auto [train, val] = split(make_windows(files.series, files.spec), files.train_frac);
  if (s.flag("normalize")) files.normalization = fit_normalization(train);
  save_dataset_dir(files, out);
  s.write_manifest(out / "manifest.conf");
  std::cout << "wrote dataset of " << train.size() + val.size() << " windows (" << train.size() << " train, "
            << val.size() << " validation) to " << out.string() << '\n';
}

void cmd_train(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  ForecasterConfig mc;
  mc.kind = model_kind(s.str("model"));
  const auto tc = train_config(s);
  const auto files = load_dataset_dir(c.input("data"));
  const auto [train_ds, val_ds] = training_split(files);
  mc.hidden = s.size("hidden");
  mc.layers = s.size("layers");
  mc.kernel = s.size("kernel");
  mc.heads = s.size("heads");
  mc.n_channels = files.series.n_channels;
  mc.context_len = files.spec.context_len;
  mc.horizon = files.spec.horizon;
  mc.seed = c.seed();
  Forecaster<float> model(mc);
  std::cout << to_string(mc.kind) << " hidden=" << mc.hidden << ": " << model.parameter_count() << " parameters, "
            << train_ds.size() << " training windows\n";
  const auto rep = train(model, train_ds, val_ds, tc, [](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " train_mse=" << format_report_value(e.train_mse)
              << " val_mse=" << format_report_value(e.val_mse) << " lr=" << e.lr << '\n';
  });
  ensure_parent(out);
  save_checkpoint(model, files.normalization, out);
  save_train_report_csv(rep, fs::path(out.string() + ".train.csv"));
  s.write_manifest(manifest_for_file(out));
  std::cout << "best epoch " << rep.best_epoch << " val_mse=" << format_report_value(rep.best_val_loss) << "; wrote "
            << out.string() << '\n';
}

void cmd_ground_truth(Command& c) {
  const auto& s = c.settings;
  const auto sc = load_sc(c.input("sc"));
  const fs::path out = c.required("out");
  PerturbationSpec kick;
  kick.magnitude = s.real("delta");
  kick.step_index = s.size("step");
  kick.variable = parse_state_var(s.str("variable"));
  const auto gt = generate_twins(JRParams{}, sc, s.size("samples"), kick, c.seed(), s.size("window"));
  ensure_parent(out);
  save_ec(gt.ec, out);
  if (s.has_value("pairs")) save_twins_dir(gt.twins, s.str("pairs"));
  s.write_manifest(manifest_for_file(out));
  std::cout << "ground-truth EC over " << gt.ec.samples << " windows (" << gt.ec.horizon << " steps, " << gt.ec.n
            << " regions) written to " << out.string() << '\n';
}

void cmd_perturb(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  InferOptions opt;
  opt.mode = inference_mode(s.str("mode"));
  const auto ck = load_checkpoint(c.input("ckpt"));
  const auto pairs = load_twins_dir(c.input("pairs"));
  opt.direct_delta = s.real("delta");
  opt.normalization = ck.normalization;
  opt.batch = s.size("batch");
  const auto ec = infer_ec(ck.model, pairs, opt);
  ensure_parent(out);
  save_ec(ec, out);
  s.write_manifest(manifest_for_file(out));
  std::cout << to_string(opt.mode) << " EC over " << ec.samples << " windows written to " << out.string() << '\n';
}

void cmd_granger(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  const auto y = to_matrix(load_timeseries(c.input("ts")));
  const std::size_t p = s.size("lag") > 0 ? s.size("lag") : select_order(y, s.size("maxlag"));
  const auto gc = gc_matrix(y, p);
  ensure_parent(out);
  export_matrix_csv(gc, out);
  s.write_manifest(manifest_for_file(out));
  std::cout << "VAR order " << p << (s.size("lag") > 0 ? " (fixed)" : " (BIC)") << "; Granger matrix written to "
            << out.string() << '\n';
}

void cmd_evaluate(Command& c) {
  const auto& s = c.settings;
  const fs::path out = c.required("out");
  const auto real = load_ec(c.input("real"));
  const fs::path est_path = c.input("est");
  ReportRow row;
  if (est_path.extension() == ".csv") {
    row = compare_matrix(load_matrix_csv(est_path), real);
  } else {
    row = compare_ec(load_ec(est_path), real);
  }
  row.model = s.str("model");
  row.hidden = s.str("hidden");
  if (s.has_value("ckpt") || s.has_value("data")) {
    const auto ck = load_checkpoint(c.input("ckpt"));
    const auto [train_ds, val_ds] = training_split(load_dataset_dir(c.input("data")));
    row.prediction_mse = evaluate(ck.model, val_ds);
  }
  ensure_parent(out);
  write_report_csv({row}, out);
  s.write_manifest(manifest_for_file(out));
  std::cout << "ec_correlation_pooled=" << format_report_value(row.ec_correlation_pooled);
  if (row.prediction_mse) std::cout << " prediction_mse=" << format_report_value(*row.prediction_mse);
  std::cout << '\n';
}

void cmd_export_plot(Command& c) {
  const auto& s = c.settings;
  require(s.has_value("svg") || s.has_value("csv"), ErrorKind::invalid_argument, "export-plot: give --svg and/or --csv");
  const auto ec = load_ec_or_matrix(c.input("in"));
  const std::size_t k = s.size("tstep");
  const auto m = k == 0 ? ec_summary(ec) : ec_summary(ec, k);
  std::string title = s.str("title");
  if (title.empty()) title = k == 0 ? "peak response" : "response at step " + std::to_string(k);
  fs::path first;
  if (s.has_value("svg")) {
    first = s.str("svg");
    ensure_parent(first);
    export_heatmap_svg(m, first, title);
  }
  if (s.has_value("csv")) {
    const fs::path p = s.str("csv");
    ensure_parent(p);
    export_matrix_csv(m, p);
    if (first.empty()) first = p;
  }
  s.write_manifest(manifest_for_file(first));
  std::cout << "exported " << m.rows() << "x" << m.cols() << " matrix\n";
}

void cmd_benchmark(Command& c) {
  auto& s = c.settings;
  if (s.flag("desk")) {
    s.set_profile("n", "10");
    s.set_profile("train-points", "90000");
  }
  const fs::path out = c.required("out");
  BenchmarkConfig cfg;
  if (s.has_value("sc")) {
    cfg.sc = load_sc(c.input("sc"));
  } else {
    const std::size_t n = s.size("n");
    cfg.sc = n == 3 ? three_node_sc() : random_sc(n, s.real("density"), c.seed());
  }
  cfg.train_points = s.size("train-points");
  cfg.samples = s.size("samples");
  cfg.delta = s.real("delta");
  cfg.models.clear();
  for (const auto& m : s.list("models")) cfg.models.push_back(model_kind(m));
  cfg.hidden.clear();
  for (const auto& h : s.list("hidden")) cfg.hidden.push_back(parse_size(h, "--hidden"));
  cfg.train = train_config(s);
  cfg.normalize = s.flag("normalize");
  cfg.mode = inference_mode(s.str("mode"));
  cfg.granger = !s.flag("no-granger");
  cfg.max_lag = s.size("maxlag");
  cfg.jobs = s.size("jobs");
  cfg.seed = c.seed();
  fs::create_directories(out);
  s.write_manifest(out / "manifest.conf");
  const auto res = run_benchmark(cfg, out, [](const std::string& msg) { std::cout << msg << std::endl; });
  std::cout << "report with " << res.rows.size() << " rows written to " << (out / "report.csv").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural perturbational inference workbench"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> cmds;
  auto add = [&](const std::string& name, const std::string& help, void (*run)(Command&)) {
    cmds.push_back(std::make_unique<Command>(app, name, help));
    auto* cmd = cmds.back().get();
    cmd->app->callback([cmd, run] {
      cmd->resolve();
      run(*cmd);
    });
    return cmd;
  };

  auto* gen = add("gen-sc", "write a structural connectome CSV", cmd_gen_sc);
  gen->flag("three-node", "region 0 drives regions 1 and 2");
  gen->option_list("random", "", "random connectome: n density seed", 3);
  gen->option("load", "", "validate and copy an existing CSV");
  gen->option("out", "", "output CSV");

  auto* sim = add("simulate", "integrate the Jansen-Rit network", cmd_simulate);
  sim->option("sc", "", "connectome CSV");
  sim->option("steps", "9000000", "Euler steps at 1 kHz before downsampling");
  sim->option_list("perturb", "", "region:step:delta kick repeated every --period samples");
  sim->option("period", "100", "samples between repeated kicks");
  sim->option("variable", "x1", "state component the kick is added to");
  sim->option("out", "", "output series (.bin)");
  sim->option("csv", "", "also export the series as CSV");

  auto* mk = add("make-dataset", "cut a series into context/horizon windows", cmd_make_dataset);
  mk->option("ts", "", "input series (.bin)");
  mk->option("spec", "76:24:100", "context:horizon:stride");
  mk->option("split", "0.7", "fraction of windows used for training");
  mk->flag("normalize", "z-score channels with training statistics");
  mk->option("out", "", "output dataset directory");

  auto* tr = add("train", "train one forecaster", cmd_train);
  tr->option("model", "cnn", "cnn, rnn, lstm, gru or transformer");
  tr->option("hidden", "128", "hidden width");
  tr->option("layers", "2", "stacked layers or blocks");
  tr->option("kernel", "5", "cnn kernel width");
  tr->option("heads", "1", "transformer attention heads");
  tr->option("data", "", "dataset directory");
  declare_training(*tr);
  tr->option("out", "", "output checkpoint (.npic)");

  auto* gt = add("ground-truth-ec", "twin-simulation effective connectivity", cmd_ground_truth);
  gt->option("sc", "", "connectome CSV");
  gt->option("samples", "1000", "twin windows to average");
  gt->option("delta", "0.1", "kick size in mV");
  gt->option("step", "76", "1-based step of the kick inside each window");
  gt->option("window", "100", "window length");
  gt->option("variable", "x1", "state component the kick is added to");
  gt->option("pairs", "", "also write the clean/perturbed windows to this directory");
  gt->option("out", "", "output EC tensor (.ec)");

  auto* pt = add("perturb", "effective connectivity of a trained forecaster", cmd_perturb);
  pt->option("ckpt", "", "checkpoint (.npic)");
  pt->option("mode", "generative", "generative or direct");
  pt->option("pairs", "", "twin windows written by ground-truth-ec --pairs");
  pt->option("delta", "0.1", "direct mode: value added to the source channel");
  pt->option("batch", "64", "inference batch size");
  pt->option("out", "", "output EC tensor (.ec)");

  auto* gr = add("granger", "VAR Granger-causality baseline", cmd_granger);
  gr->option("ts", "", "input series (.bin)");
  gr->option("maxlag", "12", "largest lag considered by BIC");
  gr->option("lag", "0", "fixed lag order; 0 selects by BIC");
  gr->option("out", "", "output matrix CSV");

  auto* ev = add("evaluate", "compare an estimate with ground truth", cmd_evaluate);
  ev->option("est", "", "estimated EC (.ec) or matrix CSV");
  ev->option("real", "", "ground-truth EC (.ec)");
  ev->option("model", "", "label for the report row");
  ev->option("hidden", "", "hidden size for the report row");
  ev->option("ckpt", "", "checkpoint used for prediction_mse");
  ev->option("data", "", "dataset whose validation split gives prediction_mse");
  ev->option("out", "", "output report CSV");

  auto* ex = add("export-plot", "heatmap SVG and matrix CSV of an EC slice", cmd_export_plot);
  ex->option("in", "", "EC tensor (.ec) or matrix CSV");
  ex->option("tstep", "0", "1-based horizon step; 0 takes the peak response");
  ex->option("svg", "", "output SVG");
  ex->option("csv", "", "output CSV");
  ex->option("title", "", "heatmap title");

  auto* bm = add("benchmark", "full sweep: simulate, train, perturb, compare", cmd_benchmark);
  bm->flag("desk", "desk-scale profile: 10 regions, 90,000 training points");
  bm->option("n", "3", "regions (3 uses the fixed three-node connectome)");
  bm->option("density", "0.3", "edge density of random connectomes");
  bm->option("sc", "", "connectome CSV instead of a generated one");
  bm->option("train-points", "900000", "training series length after downsampling");
  bm->option("samples", "1000", "ground-truth twin windows");
  bm->option("delta", "0.1", "kick size in mV");
  bm->option("models", "cnn,rnn,lstm,gru,transformer", "comma-separated model kinds");
  bm->option("hidden", "8,32,128,512", "comma-separated hidden widths");
  declare_training(*bm);
  bm->flag("normalize", "z-score channels with training statistics");
  bm->option("mode", "generative", "generative or direct perturbation");
  bm->flag("no-granger", "skip the Granger baseline row");
  bm->option("maxlag", "12", "largest Granger lag considered by BIC");
  bm->option("jobs", "1", "parallel training jobs");
  bm->option("out", "", "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("invalid_argument", exit_code(ErrorKind::invalid_argument), e.what());
  } catch (const npi::Error& e) {
    return report_error(to_string(e.kind()), exit_code(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error("io", exit_code(ErrorKind::io), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, e.what());
  }
  return 0;
}
