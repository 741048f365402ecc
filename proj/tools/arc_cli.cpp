// arc: gradient checks, equivalence proofs, overhead tables, training, evaluation and ablations.
//
// Exit codes: 0 success, 2 a checked property failed, 64 usage / input error, 1 anything else.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "arc/analyzer.hpp"
#include "arc/experiments.hpp"
#include "arc/harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arc;

namespace {

constexpr int kOk = 0, kFailed = 2, kUsage = 64;

// Options shared by every subcommand.
struct Common {
  std::string config_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct Run {
  std::string subcommand;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  fs::path dir;

  fs::path artifact(const std::string& name) {
    fs::create_directories(dir);
    artifacts.push_back((dir / name).string());
    return dir / name;
  }
};

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_manifest(const Run& run, int status, const std::vector<std::string>& argv) {
  json m = {{"subcommand", run.subcommand}, {"config", run.config},       {"seed", run.seed},
            {"artifacts", run.artifacts},   {"exit_status", status},      {"argv", argv}};
  write_atomic(run.dir / "manifest.json", m.dump(2) + "\n");
}

// A config file may be a bare config or a previous run's manifest.
json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  if (j.contains("config") && j.contains("subcommand")) return j["config"];
  return j;
}

template <class T>
void apply(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

json section(const json& file, const char* key) { return file.contains(key) ? file[key] : json::object(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// model / train / task flags, resolved as preset < config file < flags

struct ModelFlags {
  std::string preset = "tiny";
  std::optional<std::string> stages;
  std::optional<std::size_t> n, frames, res, classes;
  std::optional<std::string> interaction, aggregation;
  bool no_tsm = false;

  void add(CLI::App* app, bool training) {
    app->add_option("--model", preset, "Model preset")->check(CLI::IsMember({"tiny", "resnet18", "resnet50"}));
    app->add_option("--stages", stages, "ARC stages, comma separated (e.g. res3,res4,res5; 'none' for none)");
    app->add_option("--n", n, "Recursive steps")->check(CLI::PositiveNumber);
    app->add_option("--interaction", interaction, "ARU interaction")->check(CLI::IsMember({"additive", "multiplicative"}));
    app->add_option("--agg", aggregation, "Attention aggregation")
        ->check(CLI::IsMember({"s", "t", "st", "s+t"}, CLI::ignore_case));
    if (training) {
      app->add_flag("--no-tsm", no_tsm, "Disable the temporal shift");
    } else {
      app->add_option("--frames", frames, "Frames T")->check(CLI::PositiveNumber);
      app->add_option("--res", res, "Square input resolution")->check(CLI::PositiveNumber);
      app->add_option("--classes", classes, "Number of classes")->check(CLI::PositiveNumber);
    }
  }

  ModelConfig resolve(const json& file) const {
    ModelConfig c = model_config_from_json(section(file, "model"), ModelConfig::preset(preset));
    if (stages) c.augmented_stages = *stages == "none" ? std::set<std::string>{} : parse_stage_list(*stages);
    apply(c.arc.n, n);
    apply(c.frames, frames);
    if (res) c.height = c.width = *res;
    apply(c.num_classes, classes);
    if (interaction) c.arc.interaction = parse_interaction(*interaction);
    if (aggregation) c.arc.aggregation = parse_aggregation(*aggregation);
    if (no_tsm) c.tsm_fold_div.reset();
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::optional<std::size_t> epochs, batch, warmup;
  std::optional<double> lr, momentum, weight_decay, dropout;
  std::optional<std::string> schedule;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    app->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Initial learning rate")->check(CLI::NonNegativeNumber);
    app->add_option("--momentum", momentum, "SGD momentum");
    app->add_option("--weight-decay", weight_decay, "Weight decay");
    app->add_option("--dropout", dropout, "Head dropout rate");
    app->add_option("--warmup", warmup, "Warm-up epochs");
    app->add_option("--schedule", schedule, "Learning-rate schedule")->check(CLI::IsMember({"cosine", "multistep"}));
  }

  TrainConfig resolve(const json& file, std::uint64_t seed) const {
    TrainConfig c = train_config_from_json(section(file, "train"));
    c.seed = seed;
    apply(c.epochs, epochs);
    apply(c.batch_size, batch);
    apply(c.warmup_epochs, warmup);
    if (!warmup && c.warmup_epochs > c.epochs) c.warmup_epochs = c.epochs;  // short runs keep a full warm-up
    apply(c.lr, lr);
    apply(c.momentum, momentum);
    apply(c.weight_decay, weight_decay);
    apply(c.dropout_rate, dropout);
    if (schedule) c.schedule = *schedule == "cosine" ? Schedule::cosine : Schedule::multistep;
    c.validate();
    return c;
  }
};

struct TaskFlags {
  std::optional<std::size_t> per_class, val_per_class;
  std::optional<std::uint64_t> data_seed;
  std::optional<double> noise;
  std::string data_dir;

  void add(CLI::App* app, bool with_val) {
    app->add_option("--samples-per-class", per_class, "Clips per class")->check(CLI::PositiveNumber);
    if (with_val) app->add_option("--val-per-class", val_per_class, "Validation clips per class")->check(CLI::PositiveNumber);
    app->add_option("--data-seed", data_seed, "Dataset seed (validation uses seed + 1)");
    app->add_option("--noise", noise, "Pixel noise sigma")->check(CLI::NonNegativeNumber);
    app->add_option("--data", data_dir, "Load a saved dataset directory instead of generating");
  }

  SyntheticTask resolve(const json& file, SyntheticTask base) const {
    SyntheticTask t = synthetic_task_from_json(section(file, "task"), base);
    apply(t.samples_per_class, per_class);
    apply(t.seed, data_seed);
    apply(t.noise, noise);
    t.validate();
    return t;
  }

  // Validation split: the training task on seed + 1 unless the file pins it; flags win either way.
  SyntheticTask resolve_val(const json& file, const SyntheticTask& train) const {
    SyntheticTask v = train;
    v.seed = train.seed + 1;
    v.samples_per_class = desk_val_task().samples_per_class;
    v = synthetic_task_from_json(section(file, "val_task"), v);
    if (data_seed) v.seed = *data_seed + 1;
    apply(v.noise, noise);
    apply(v.samples_per_class, val_per_class);
    v.validate();
    return v;
  }
};

void check_task_fits(const SyntheticTask& t, const ModelConfig& m) {
  if (m.input_channels != 1 || m.height != t.resolution || m.width != t.resolution || m.frames != t.frames)
    throw ConfigError("model input " + m.clip_shape().str() + " does not match " + std::to_string(t.frames) + " frames of " +
                      std::to_string(t.resolution) + "x" + std::to_string(t.resolution) + " synthetic clips");
  if (m.num_classes != kMotionClasses) throw ConfigError("the synthetic task has 5 classes; model has " + std::to_string(m.num_classes));
}

std::vector<std::string> class_names() {
  std::vector<std::string> n;
  for (std::size_t c = 0; c < kMotionClasses; ++c) n.push_back(to_string(static_cast<MotionClass>(c)));
  return n;
}

template <class S>
struct Trained {
  TrainResult result;
  EvalResult eval;
  double seconds = 0;
};

template <class S>
Trained<S> train_and_eval(const ModelConfig& mc, const TrainConfig& tc, const Dataset& tr, const Dataset& va,
                          std::uint64_t seed, const fs::path& ckdir) {
  Trained<S> out;
  auto model = build_model<S>(mc, seed);
  const auto t0 = std::chrono::steady_clock::now();
  out.result = train(model, tr, va, tc, ckdir);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.eval = evaluate(model, va);
  return out;
}

// ---------------------------------------------------------------------------------------------

struct GradcheckCmd {
  std::string preset;
  double eps = 1e-5, tol = 1e-4;

  int run(Run& r) {
    GradCheckOptions o;
    o.eps = eps;
    o.tolerance = tol;
    r.config = {{"preset", preset}, {"eps", eps}, {"tolerance", tol}};
    const auto reports = gradcheck_suite(preset, o, r.seed);
    const json j = to_json(reports);
    write_atomic(r.artifact("gradcheck.json"), j.dump(2) + "\n");
    const GradReport* worst = nullptr;
    for (const auto& g : reports) {
      std::cout << (g.passed ? "ok   " : "FAIL ") << std::left << std::setw(40) << g.label << " max rel "
                << std::scientific << std::setprecision(2) << g.max_rel_error() << std::defaultfloat << "\n";
      if (!worst || g.max_rel_error() > worst->max_rel_error()) worst = &g;
    }
    if (j["passed"]) {
      std::cout << reports.size() << " checks passed (eps " << eps << ")\n";
      return kOk;
    }
    std::cerr << "gradient check failed; worst offender " << worst->worst() << " rel " << worst->max_rel_error() << "\n";
    return kFailed;
  }
};

struct EquivalenceCmd {
  std::string model = "tiny";
  std::size_t n = 4, clips = 50;
  double fault = 0;
  std::optional<std::string> stages;

  int run(Run& r) {
    EquivalenceOptions o;
    o.model = model;
    o.n = n;
    o.clips = clips;
    o.fault = fault;
    o.seed = r.seed;
    if (stages) o.stages = parse_stage_list(*stages);
    const auto rep = run_equivalence(o);
    r.config = rep.to_json();
    r.config.erase("max_abs_diff_f32");
    r.config.erase("max_abs_diff_f64");
    r.config.erase("passed");
    write_atomic(r.artifact("equivalence.json"), rep.to_json().dump(2) + "\n");
    std::cout << model << " n=" << n << " clips=" << clips << " arc_layers=" << rep.arc_layers << "\n"
              << "max |dlogit| f32 " << rep.max_diff_f32 << " (tol " << rep.tol_f32 << "), f64 " << rep.max_diff_f64
              << " (tol " << rep.tol_f64 << ")\n";
    if (rep.passed()) return kOk;
    std::cerr << "equivalence violated\n";
    return kFailed;
  }
};

struct OverheadCmd {
  ModelFlags mf;
  std::string out;

  int run(Run& r, const json& file) {
    mf.stages = mf.stages.value_or("none");
    const ModelConfig mc = mf.resolve(file);
    r.config = {{"model", to_json(mc)}};
    const auto rep = network_overhead(mc);
    const fs::path csv = out.empty() ? r.artifact("overhead.csv") : fs::path(out);
    if (!out.empty()) r.artifacts.push_back(csv.string());
    std::ostringstream os;
    rep.write_csv(os);
    write_atomic(csv, os.str());
    fs::path js = csv;
    js.replace_extension(".json");
    write_atomic(js, rep.to_json().dump(2) + "\n");
    r.artifacts.push_back(js.string());
    std::cout << mc.name << " stages {";
    for (const auto& s : mc.augmented_stages) std::cout << ' ' << s;
    std::cout << " } n=" << mc.arc.n << " T=" << mc.frames << " " << mc.height << "x" << mc.width << "\n"
              << "FLOPs  " << fmt(rep.total_flops_counted / 1e9, 3) << " G\n"
              << "params " << fmt(rep.total_params_counted / 1e6, 3) << " M\n";
    // The closed form assumes stride 1 and C_in == C_out; elsewhere it only serves as a reference column.
    std::size_t agree = 0;
    for (const auto& row : rep.rows) agree += row.flops_formula == row.flops_counted;
    std::cout << "closed-form FLOPs agree with the count on " << agree << " of " << rep.rows.size() << " layers\n";
    return kOk;
  }
};

struct TrainCmd {
  ModelFlags mf;
  TrainFlags tf;
  TaskFlags kf;
  std::string precision = "f32";

  template <class S>
  int go(Run& r, const ModelConfig& mc, const TrainConfig& tc, const Dataset& tr, const Dataset& va) {
    const auto t = train_and_eval<S>(mc, tc, tr, va, r.seed, r.dir);
    r.artifacts.push_back(t.result.checkpoint.string());
    std::ostringstream h, c;
    write_history_csv(h, t.result.history);
    write_atomic(r.artifact("history.csv"), h.str());
    write_confusion_csv(c, t.eval, class_names());
    write_atomic(r.artifact("confusion.csv"), c.str());
    std::cout << "first-step loss " << fmt(t.result.first_step_loss) << ", final train loss "
              << fmt(t.result.history.back().train_loss) << "\n"
              << "val accuracy " << fmt(t.eval.accuracy) << ", order-pair accuracy "
              << fmt(t.eval.subset_accuracy(kOrderPair)) << " (" << fmt(t.seconds, 1) << " s)\n";
    return kOk;
  }

  int run(Run& r, const json& file) {
    if (!mf.stages && !file.contains("model")) mf.stages = "none";
    const ModelConfig mc = mf.resolve(file);
    const TrainConfig tc = tf.resolve(file, r.seed);
    Dataset tr, va;
    if (!kf.data_dir.empty()) {
      tr = load_dataset(fs::path(kf.data_dir) / "train");
      va = load_dataset(fs::path(kf.data_dir) / "val");
    } else {
      const SyntheticTask tt = kf.resolve(file, desk_train_task());
      const SyntheticTask vt = kf.resolve_val(file, tt);
      tr = generate_dataset(tt);
      va = generate_dataset(vt);
    }
    check_task_fits(tr.task, mc);
    r.config = {{"model", to_json(mc)}, {"train", to_json(tc)}, {"task", to_json(tr.task)},
                {"val_task", to_json(va.task)}, {"precision", precision}};
    return precision == "f64" ? go<double>(r, mc, tc, tr, va) : go<float>(r, mc, tc, tr, va);
  }
};

struct EvalCmd {
  std::string checkpoint;
  TaskFlags kf;
  std::string precision = "f32";

  template <class S>
  int go(Run& r, const Checkpoint& ck, const Dataset& data) {
    auto model = Model<S>::layout(ck.config);
    load_into(model, ck);
    check_task_fits(data.task, model.config());
    const auto e = evaluate(model, data);
    std::ostringstream c;
    write_confusion_csv(c, e, class_names());
    write_atomic(r.artifact("confusion.csv"), c.str());
    write_atomic(r.artifact("eval.json"),
                 json{{"accuracy", e.accuracy}, {"order_pair_accuracy", e.subset_accuracy(kOrderPair)}, {"confusion", e.confusion}}
                         .dump(2) +
                     "\n");
    std::cout << "accuracy " << fmt(e.accuracy) << ", order-pair accuracy " << fmt(e.subset_accuracy(kOrderPair)) << " on "
              << data.size() << " clips\n";
    return kOk;
  }

  int run(Run& r, const json& file) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    Dataset data;
    if (!kf.data_dir.empty()) {
      data = load_dataset(kf.data_dir);
    } else {
      data = generate_dataset(kf.resolve(file, desk_val_task(r.seed)));
    }
    r.config = {{"checkpoint", checkpoint}, {"task", to_json(data.task)}, {"model", to_json(ck.config)}, {"precision", precision}};
    return precision == "f64" ? go<double>(r, ck, data) : go<float>(r, ck, data);
  }
};

struct AblateCmd {
  ModelFlags mf;
  TrainFlags tf;
  TaskFlags kf;

  int run(Run& r, const json& file) {
    std::vector<Interaction> ins{Interaction::additive, Interaction::multiplicative};
    std::vector<Aggregation> ags{Aggregation::spatial, Aggregation::temporal, Aggregation::global,
                                 Aggregation::spatial_plus_temporal};
    if (mf.interaction) ins = {parse_interaction(*mf.interaction)};
    if (mf.aggregation) ags = {parse_aggregation(*mf.aggregation)};
    mf.interaction.reset();
    mf.aggregation.reset();
    if (!mf.stages && !file.contains("model")) mf.stages = "res3";
    const ModelConfig base = mf.resolve(file);
    if (!base.has_arc()) throw ConfigError("ablation needs at least one ARC stage");
    const TrainConfig tc = tf.resolve(file, r.seed);
    const SyntheticTask tt = kf.resolve(file, desk_train_task());
    const SyntheticTask vt = kf.resolve_val(file, tt);
    const Dataset tr = generate_dataset(tt), va = generate_dataset(vt);
    check_task_fits(tt, base);

    std::ostringstream csv;
    csv << "interaction,aggregation,accuracy,order_pair_accuracy,final_train_loss,flops,params\n";
    json rows = json::array();
    double best_mult = -1, add_st = -1;
    for (auto in : ins)
      for (auto ag : ags) {
        ModelConfig mc = base;
        mc.arc.interaction = in;
        mc.arc.aggregation = ag;
        const auto t = train_and_eval<float>(mc, tc, tr, va, r.seed, {});
        const auto cost = network_overhead(mc);
        csv << to_string(in) << ',' << to_string(ag) << ',' << t.eval.accuracy << ',' << t.eval.subset_accuracy(kOrderPair)
            << ',' << t.result.history.back().train_loss << ',' << cost.total_flops_counted << ','
            << cost.total_params_counted << '\n';
        rows.push_back({{"model", to_json(mc)}, {"accuracy", t.eval.accuracy}});
        std::cout << std::left << std::setw(15) << to_string(in) << std::setw(5) << to_string(ag) << " acc "
                  << fmt(t.eval.accuracy) << " pair " << fmt(t.eval.subset_accuracy(kOrderPair)) << "\n";
        if (in == Interaction::multiplicative) best_mult = std::max(best_mult, t.eval.accuracy);
        if (in == Interaction::additive && ag == Aggregation::spatial_plus_temporal) add_st = t.eval.accuracy;
      }
    write_atomic(r.artifact("ablation.csv"), csv.str());
    r.config = {{"train", to_json(tc)}, {"task", to_json(tt)}, {"val_task", to_json(vt)}, {"rows", rows}};
    if (add_st >= 0 && best_mult >= 0 && add_st < best_mult)
      std::cerr << "warning: additive s+t (" << fmt(add_st) << ") ranks below the best multiplicative variant ("
                << fmt(best_mult) << ")\n";
    return kOk;
  }
};

struct DataCmd {
  TaskFlags kf;
  int run(Run& r, const json& file) {
    const SyntheticTask tt = kf.resolve(file, desk_train_task(r.seed));
    const SyntheticTask vt = kf.resolve_val(file, tt);
    save_dataset(r.dir / "train", generate_dataset(tt));
    save_dataset(r.dir / "val", generate_dataset(vt));
    r.artifacts = {(r.dir / "train").string(), (r.dir / "val").string()};
    r.config = {{"task", to_json(tt)}, {"val_task", to_json(vt)}};
    std::cout << "wrote " << tt.samples_per_class * kMotionClasses << " + " << vt.samples_per_class * kMotionClasses
              << " clips to " << r.dir.string() << "\n";
    return kOk;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "JSON config (or a previous manifest.json)");
  app->add_option("--out-dir", c.out_dir, "Directory for artifacts and manifest.json");
  app->add_option("--seed", c.seed, "Seed");
}

void cap_threads() {
  if (const char* env = std::getenv("ARC_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end || n <= 0) throw ConfigError(std::string("ARC_THREADS must be a positive integer, got '") + env + "'");
    omp_set_num_threads(static_cast<int>(n));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARC layer toolkit: gradient checks, equivalence, overhead, training, ablations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "arc 1.0");

  Common common;
  GradcheckCmd gc;
  EquivalenceCmd eq;
  OverheadCmd ov;
  TrainCmd tr;
  EvalCmd ev;
  AblateCmd ab;
  DataCmd dc;

  auto* s_gc = app.add_subcommand("gradcheck", "Central-difference gradient checks (64-bit)");
  s_gc->add_option("--preset", gc.preset, "tiny or layer")->required()->check(CLI::IsMember({"tiny", "layer"}));
  s_gc->add_option("--eps", gc.eps, "Finite-difference step")->check(CLI::PositiveNumber);
  s_gc->add_option("--tol", gc.tol, "Relative-error tolerance")->check(CLI::PositiveNumber);

  auto* s_eq = app.add_subcommand("equivalence", "Zero-init ARC conversion vs baseline logits");
  s_eq->add_option("--model", eq.model, "Model preset")->check(CLI::IsMember({"tiny", "resnet18", "resnet50"}));
  s_eq->add_option("--n", eq.n, "Recursive steps")->check(CLI::PositiveNumber);
  s_eq->add_option("--clips", eq.clips, "Seeded clips")->check(CLI::PositiveNumber);
  s_eq->add_option("--fault", eq.fault, "Add this to one W_e entry after conversion");
  s_eq->add_option("--stages", eq.stages, "Stages to convert (default: all)");

  auto* s_ov = app.add_subcommand("overhead", "Per-layer and total FLOPs / parameters / memory");
  ov.mf.add(s_ov, false);
  s_ov->add_option("--out", ov.out, "CSV path (JSON written alongside)");

  auto* s_tr = app.add_subcommand("train", "Train on the synthetic motion task");
  tr.mf.add(s_tr, true);
  tr.tf.add(s_tr);
  tr.kf.add(s_tr, true);
  s_tr->add_option("--precision", tr.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* s_ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  s_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  ev.kf.add(s_ev, false);
  s_ev->add_option("--precision", ev.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* s_ab = app.add_subcommand("ablate", "Sweep interaction x aggregation");
  ab.mf.add(s_ab, true);
  ab.tf.add(s_ab);
  ab.kf.add(s_ab, true);

  auto* s_dc = app.add_subcommand("data", "Generate and save the synthetic dataset");
  dc.kf.add(s_dc, true);

  for (auto* s : {s_gc, s_eq, s_ov, s_tr, s_ev, s_ab, s_dc}) add_common(s, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Run run;
  run.subcommand = app.get_subcommands().front()->get_name();
  run.dir = common.out_dir.empty() ? fs::path("runs") / run.subcommand : fs::path(common.out_dir);
  const std::vector<std::string> args(argv, argv + argc);
  int status = 1;
  try {
    cap_threads();
    const json file = load_config_file(common.config_file);
    run.seed = common.seed.value_or(file.value("seed", std::uint64_t{run.subcommand == "equivalence" ? 0u : 7u}));
    if (run.subcommand == "gradcheck") {
      run.seed = common.seed.value_or(file.value("seed", std::uint64_t{0}));
      status = gc.run(run);
    } else if (run.subcommand == "equivalence") {
      status = eq.run(run);
    } else if (run.subcommand == "overhead") {
      status = ov.run(run, file);
    } else if (run.subcommand == "train") {
      status = tr.run(run, file);
    } else if (run.subcommand == "eval") {
      status = ev.run(run, file);
    } else if (run.subcommand == "ablate") {
      status = ab.run(run, file);
    } else {
      status = dc.run(run, file);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << " (last good checkpoint: " << e.checkpoint() << ")\n";
    status = kFailed;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    status = kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = 1;
  }
  run.config["seed"] = run.seed;
  try {
    write_manifest(run, status, args);
  } catch (const std::exception& e) {
    std::cerr << "warning: manifest not written: " << e.what() << "\n";
  }
  return status;
}
