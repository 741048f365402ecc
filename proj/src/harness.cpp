#include "arc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "arc/serialize.hpp"

namespace arc {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

int draw(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) { return mix(a, b); }

std::string to_string(MotionClass c) {
  switch (c) {
    case MotionClass::move_then_return: return "move-then-return";
    case MotionClass::move_and_stay: return "move-and-stay";
    case MotionClass::two_objects_opposite: return "two-objects-opposite";
    case MotionClass::two_objects_same: return "two-objects-same";
    case MotionClass::static_jitter: return "static-jitter";
  }
  return "?";
}

void SyntheticTask::validate() const {
  if (resolution < 8) throw ConfigError("synthetic task resolution must be >= 8");
  if (frames < 4) throw ConfigError("synthetic task needs at least 4 frames");
  if (samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
  if (!(noise >= 0)) throw ConfigError("noise level must be non-negative");
  if (object_size == 0 || 2 * object_size > resolution)
    throw ConfigError("object of size " + std::to_string(object_size) + " does not fit twice in a " +
                      std::to_string(resolution) + "-pixel frame");
  if (object_size + frames - 1 > resolution)
    throw ConfigError("a " + std::to_string(object_size) + "-pixel object cannot travel " + std::to_string(frames - 1) +
                      " pixels inside a " + std::to_string(resolution) + "-pixel frame");
}

json to_json(const SyntheticTask& t) {
  return {{"resolution", t.resolution}, {"frames", t.frames}, {"samples_per_class", t.samples_per_class},
          {"seed", t.seed},             {"noise", t.noise},   {"object_size", t.object_size},
          {"flip", t.flip}};
}

SyntheticTask synthetic_task_from_json(const json& j, SyntheticTask t) {
  try {
    if (j.contains("resolution")) t.resolution = j.at("resolution").get<std::size_t>();
    if (j.contains("frames")) t.frames = j.at("frames").get<std::size_t>();
    if (j.contains("samples_per_class")) t.samples_per_class = j.at("samples_per_class").get<std::size_t>();
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("noise")) t.noise = j.at("noise").get<double>();
    if (j.contains("object_size")) t.object_size = j.at("object_size").get<std::size_t>();
    if (j.contains("flip")) t.flip = j.at("flip").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad task config: ") + e.what());
  }
  return t;
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> h(kMotionClasses, 0);
  for (const auto& s : samples) h.at(s.label)++;
  return h;
}

namespace {

// Object tracks for one sample, before rendering.
std::vector<std::vector<Position>> make_tracks(MotionClass c, const SyntheticTask& task, std::mt19937_64& rng) {
  const int R = static_cast<int>(task.resolution), T = static_cast<int>(task.frames), s = static_cast<int>(task.object_size);
  std::vector<std::vector<Position>> tracks;
  switch (c) {
    case MotionClass::move_then_return:
    case MotionClass::move_and_stay: {
      // Both classes draw (speed, start, row) identically and visit the same multiset of positions.
      const int half = (T - 1) / 2;
      const int max_speed = (R - s) / half >= 2 ? 2 : 1;
      const int d = draw(rng, 1, max_speed);
      const int x0 = draw(rng, 0, R - s - d * half), y = draw(rng, 0, R - s);
      std::vector<int> off(T);
      for (int t = 0; t < T; ++t) off[t] = d * std::min(t, T - 1 - t);
      if (c == MotionClass::move_and_stay) std::sort(off.begin(), off.end());
      std::vector<Position> tr;
      for (int t = 0; t < T; ++t) tr.push_back({x0 + off[t], y});
      tracks.push_back(tr);
      break;
    }
    case MotionClass::two_objects_opposite:
    case MotionClass::two_objects_same: {
      const int dir_a = draw(rng, 0, 1) ? 1 : -1;
      const int dir_b = c == MotionClass::two_objects_same ? dir_a : -dir_a;
      const int ya = draw(rng, 0, R / 2 - s), yb = draw(rng, R / 2, R - s);
      for (auto [dir, y] : {std::pair{dir_a, ya}, std::pair{dir_b, yb}}) {
        const int x0 = dir > 0 ? draw(rng, 0, R - s - (T - 1)) : draw(rng, T - 1, R - s);
        std::vector<Position> tr;
        for (int t = 0; t < T; ++t) tr.push_back({x0 + dir * t, y});
        tracks.push_back(tr);
      }
      break;
    }
    case MotionClass::static_jitter: {
      const int x = draw(rng, 1, R - s - 1), y = draw(rng, 1, R - s - 1);
      std::vector<Position> tr;
      for (int t = 0; t < T; ++t) tr.push_back({x + draw(rng, -1, 1), y + draw(rng, -1, 1)});
      tracks.push_back(tr);
      break;
    }
  }
  return tracks;
}

}  // namespace

Dataset generate_dataset(const SyntheticTask& task) {
  task.validate();
  Dataset data;
  data.task = task;
  const std::size_t total = task.samples_per_class * kMotionClasses;
  data.samples.resize(total);
  const int R = static_cast<int>(task.resolution), s = static_cast<int>(task.object_size);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < total; ++i) {
    std::mt19937_64 rng(mix(task.seed, i));
    const auto c = static_cast<MotionClass>(i % kMotionClasses);
    auto tracks = make_tracks(c, task, rng);
    const bool flip_ok = c != MotionClass::move_then_return && c != MotionClass::move_and_stay;
    if (task.flip && flip_ok && draw(rng, 0, 1))
      for (auto& tr : tracks)
        for (auto& p : tr) p.x = R - s - p.x;
    Tensor<float> clip(Shape{1, task.frames, task.resolution, task.resolution});
    for (const auto& tr : tracks)
      for (std::size_t t = 0; t < task.frames; ++t)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx) clip(0, t, tr[t].y + dy, tr[t].x + dx) = 1.0f;
    if (task.noise > 0) {
      std::normal_distribution<double> noise(0.0, task.noise);
      for (auto& v : clip.span()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
    }
    data.samples[i] = {std::move(clip), static_cast<std::size_t>(c), std::move(tracks)};
  }
  return data;
}

std::vector<std::array<double, 2>> centroid_track(const Tensor<float>& clip) {
  const Shape& sh = clip.shape();
  if (sh.c != 1) throw ShapeError("centroid_track expects a single-channel clip, got " + sh.str());
  std::vector<std::array<double, 2>> out;
  for (std::size_t t = 0; t < sh.t; ++t) {
    double m = 0, mx = 0, my = 0;
    for (std::size_t y = 0; y < sh.h; ++y)
      for (std::size_t x = 0; x < sh.w; ++x) {
        const double v = clip(0, t, y, x);
        m += v;
        mx += v * static_cast<double>(x);
        my += v * static_cast<double>(y);
      }
    if (m == 0) throw ShapeError("empty frame " + std::to_string(t));
    out.push_back({mx / m, my / m});
  }
  return out;
}

bool is_move_then_return(const std::vector<double>& xs) {
  const std::size_t T = xs.size();
  if (T < 3) return false;
  for (std::size_t t = 0; t < T; ++t)
    if (std::abs(xs[t] - xs[T - 1 - t]) > 1e-6) return false;
  for (std::size_t t = 0; t < (T - 1) / 2; ++t)
    if (!(xs[t + 1] > xs[t] + 1e-6)) return false;
  return true;
}

bool is_move_and_stay(const std::vector<double>& xs) {
  if (xs.size() < 2) return false;
  for (std::size_t t = 1; t < xs.size(); ++t)
    if (xs[t] < xs[t - 1] - 1e-6) return false;
  return xs.back() > xs.front() + 1e-6;
}

Tensor<float> reverse_time(const Tensor<float>& clip) {
  const Shape& s = clip.shape();
  Tensor<float> out(s);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) out(c, s.t - 1 - t, y, x) = clip(c, t, y, x);
  return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  json files = json::array(), labels = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%05zu.arct", i);
    save_tensor(dir / name, data.samples[i].clip);
    files.push_back(name);
    labels.push_back(data.samples[i].label);
  }
  json manifest = {{"task", to_json(data.task)}, {"seed", data.task.seed}, {"labels", labels}, {"files", files}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no manifest.json in " + dir.string());
  Dataset data;
  try {
    const json m = json::parse(in);
    data.task = synthetic_task_from_json(m.at("task"));
    const auto& files = m.at("files");
    const auto& labels = m.at("labels");
    if (files.size() != labels.size()) throw FormatError("manifest files and labels differ in length");
    for (std::size_t i = 0; i < files.size(); ++i)
      data.samples.push_back({load_tensor<float>(dir / files[i].get<std::string>()), labels[i].get<std::size_t>(), {}});
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt dataset manifest: ") + e.what());
  }
  return data;
}

// ---------------------------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(lr >= 0) || !(momentum >= 0 && momentum < 1) || !(weight_decay >= 0))
    throw ConfigError("lr, weight_decay must be >= 0 and momentum in [0, 1)");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (warmup_epochs > epochs) throw ConfigError("warm-up cannot exceed the number of epochs");
}

double TrainConfig::lr_at(std::size_t epoch, std::size_t step, std::size_t steps_per_epoch) const {
  const double spe = static_cast<double>(steps_per_epoch);
  const double progress = static_cast<double>(epoch) + static_cast<double>(step) / spe;
  if (epoch < warmup_epochs) return lr * (progress + 1.0 / spe) / static_cast<double>(warmup_epochs);
  if (schedule == Schedule::cosine) {
    const double span = static_cast<double>(epochs - warmup_epochs);
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (progress - static_cast<double>(warmup_epochs)) / span));
  }
  double r = lr;
  for (auto m : milestones)
    if (epoch >= m) r *= factor;
  return r;
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"schedule", c.schedule == Schedule::cosine ? "cosine" : "multistep"},
          {"milestones", c.milestones},
          {"factor", c.factor},
          {"warmup_epochs", c.warmup_epochs},
          {"dropout_rate", c.dropout_rate},
          {"seed", c.seed},
          {"check_invariants", c.check_invariants}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("schedule")) {
      const auto s = j.at("schedule").get<std::string>();
      if (s != "cosine" && s != "multistep") throw ConfigError("schedule must be cosine or multistep, got " + s);
      c.schedule = s == "cosine" ? Schedule::cosine : Schedule::multistep;
    }
    if (j.contains("milestones")) c.milestones = j.at("milestones").get<std::vector<std::size_t>>();
    if (j.contains("factor")) c.factor = j.at("factor").get<double>();
    if (j.contains("warmup_epochs")) c.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("check_invariants")) c.check_invariants = j.at("check_invariants").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,lr,train_loss,val_acc\n";
  out.precision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_acc << '\n';
}

template <class S>
double sample_loss(const Model<S>& model, const Sample& s, const ForwardOptions& opts, std::vector<Tensor<S>>* grads) {
  Tape<S> tape(grads != nullptr);
  const auto pv = model.bind(tape, grads != nullptr);
  const Tensor<S> clip = s.clip.template cast<S>();
  const Var logits = model.forward(tape, tape.borrow(clip, false), pv, opts);
  const Var loss = ag::softmax_cross_entropy(tape, logits, s.label);
  const double value = static_cast<double>(tape.value(loss)[0]);
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const Var v : pv) grads->push_back(tape.grad(v));
  }
  return value;
}

namespace {

void check_data(const ModelConfig& cfg, const Dataset& data, const char* what) {
  for (const auto& s : data.samples) {
    if (s.clip.shape() != cfg.clip_shape())
      throw ShapeError(std::string(what) + " clip " + s.clip.shape().str() + " does not match model input " +
                       cfg.clip_shape().str());
    if (s.label >= cfg.num_classes)
      throw ConfigError(std::string(what) + " label " + std::to_string(s.label) + " exceeds the model's classes");
  }
}

template <class S>
std::vector<NamedTensor<S>> name_like(const Model<S>& model, const std::vector<Tensor<S>>& ts, const std::string& prefix) {
  std::vector<NamedTensor<S>> out;
  for (std::size_t i = 0; i < ts.size(); ++i) out.push_back({prefix + model.parameters()[i].name, ts[i]});
  return out;
}

}  // namespace

template <class S>
TrainResult train(Model<S>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir) {
  cfg.validate();
  check_data(model.config(), train_set, "training");
  check_data(model.config(), val_set, "validation");
  if (train_set.size() == 0) throw ConfigError("empty training set");

  auto& params = model.parameters();
  std::vector<Tensor<S>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.value.shape());

  TrainResult result;
  std::filesystem::path last_good;
  auto snapshot = [&](std::size_t epoch) {
    if (checkpoint_dir.empty()) return;
    std::filesystem::create_directories(checkpoint_dir);
    const auto path = checkpoint_dir / "last.arck";
    const auto opt = name_like(model, velocity, "momentum.");
    save_checkpoint(path, model, cfg.seed, &opt, {{"epoch", epoch}, {"train", to_json(cfg)}});
    last_good = path;
  };
  snapshot(0);

  const std::size_t N = train_set.size();
  const std::size_t steps = (N + cfg.batch_size - 1) / cfg.batch_size;
  std::mt19937_64 order_rng(mix(cfg.seed, 0x5eed));
  std::vector<std::size_t> order(N);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0;
    const double epoch_lr = cfg.lr_at(epoch, 0, steps);
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t begin = step * cfg.batch_size, count = std::min(cfg.batch_size, N - begin);
      std::vector<std::vector<Tensor<S>>> grads(count);
      std::vector<double> losses(count);
      std::exception_ptr failure;
#pragma omp parallel for schedule(static)
      for (std::size_t b = 0; b < count; ++b) {
        try {
          const std::size_t idx = order[begin + b];
          ForwardOptions opts;
          opts.training = true;
          opts.dropout_rate = cfg.dropout_rate;
          opts.dropout_seed = mix(mix(cfg.seed, epoch), idx);
          opts.check_invariants = cfg.check_invariants;
          losses[b] = sample_loss(model, train_set.samples[idx], opts, &grads[b]);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);

      double batch_loss = 0;
      for (double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(count);
      if (!std::isfinite(batch_loss))
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step + 1) +
                                " (loss " + std::to_string(batch_loss) + ")",
                            last_good.string());
      if (epoch == 0 && step == 0) result.first_step_loss = batch_loss;
      loss_sum += batch_loss * static_cast<double>(count);

      const S lr = static_cast<S>(cfg.lr_at(epoch, step, steps));
      const S mu = static_cast<S>(cfg.momentum), wd = static_cast<S>(cfg.weight_decay);
      const S inv = S(1) / static_cast<S>(count);
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<S>& g = grads[0][i];
        for (std::size_t b = 1; b < count; ++b) {
          const Tensor<S>& gb = grads[b][i];
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += gb[j];
        }
        Tensor<S>& p = params[i].value;
        Tensor<S>& v = velocity[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
          v[j] = mu * v[j] + (g[j] * inv + wd * p[j]);
          p[j] -= lr * v[j];
        }
        if (!p.all_finite())
          throw TrainingError("parameter " + params[i].name + " became non-finite at epoch " + std::to_string(epoch + 1),
                              last_good.string());
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = epoch_lr;
    rec.train_loss = loss_sum / static_cast<double>(N);
    rec.val_acc = val_set.size() ? evaluate(model, val_set).accuracy : 0.0;
    result.history.push_back(rec);
    snapshot(epoch + 1);
  }
  result.checkpoint = last_good;
  return result;
}

// ---------------------------------------------------------------------------------------------

double EvalResult::subset_accuracy(const std::vector<std::size_t>& classes) const {
  std::size_t total = 0, hit = 0;
  for (auto c : classes) {
    for (auto n : confusion.at(c)) total += n;
    hit += confusion.at(c).at(c);
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::size_t EvalResult::subset_errors(const std::vector<std::size_t>& classes) const {
  std::size_t errors = 0;
  for (auto r : classes)
    for (auto c : classes)
      if (r != c) errors += confusion.at(r).at(c);
  return errors;
}

EvalResult score(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions,
                 std::size_t num_classes) {
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ in length");
  EvalResult r;
  r.predictions = predictions;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) throw ConfigError("class index out of range");
    r.confusion[labels[i]][predictions[i]]++;
    hit += labels[i] == predictions[i];
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
  return r;
}

template <class S>
EvalResult evaluate(const Model<S>& model, const Dataset& data) {
  check_data(model.config(), data, "evaluation");
  std::vector<std::size_t> labels(data.size()), preds(data.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      const auto logits = forward_classify(model, data.samples[i].clip.template cast<S>());
      preds[i] = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      labels[i] = data.samples[i].label;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return score(labels, preds, model.config().num_classes);
}

void write_confusion_csv(std::ostream& out, const EvalResult& r, const std::vector<std::string>& names) {
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  out << "true\\predicted";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) out << ',' << name(c);
  out << '\n';
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out << name(t);
    for (auto n : r.confusion[t]) out << ',' << n;
    out << '\n';
  }
}

#define ARC_HARNESS_INSTANTIATE(S)                                                                                 \
  template TrainResult train(Model<S>&, const Dataset&, const Dataset&, const TrainConfig&,                        \
                             const std::filesystem::path&);                                                        \
  template double sample_loss(const Model<S>&, const Sample&, const ForwardOptions&, std::vector<Tensor<S>>*);    \
  template EvalResult evaluate(const Model<S>&, const Dataset&);

ARC_HARNESS_INSTANTIATE(float)
ARC_HARNESS_INSTANTIATE(double)

}  // namespace arc
