#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "arc/model.hpp"
#include "json.hpp"

namespace arc {

/// Order-sensitive seed combiner (splitmix64 based).
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b);

// ---------------------------------------------------------------------------------------------
// synthetic motion task

enum class MotionClass : std::size_t {
  move_then_return = 0,  // out along +x and back to the start
  move_and_stay = 1,     // same positions in sorted order: ends displaced
  two_objects_opposite = 2,
  two_objects_same = 3,
  static_jitter = 4,
};
inline constexpr std::size_t kMotionClasses = 5;
std::string to_string(MotionClass c);

struct SyntheticTask {
  std::size_t resolution = 16;
  std::size_t frames = 8;
  std::size_t samples_per_class = 400;
  std::uint64_t seed = 7;
  double noise = 0.05;
  std::size_t object_size = 3;
  /// Random horizontal flip for the classes whose label survives it (two-object and static).
  bool flip = true;

  void validate() const;
  friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

nlohmann::json to_json(const SyntheticTask& t);
SyntheticTask synthetic_task_from_json(const nlohmann::json& j, SyntheticTask base = {});

/// Top-left corner of one object in one frame.
struct Position {
  int x = 0, y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

struct Sample {
  Tensor<float> clip;  // (1, T, H, W), values in [0, 1]
  std::size_t label = 0;
  std::vector<std::vector<Position>> tracks;  // per object, per frame
};

struct Dataset {
  SyntheticTask task;
  std::vector<Sample> samples;
  std::size_t size() const noexcept { return samples.size(); }
  std::vector<std::size_t> class_histogram() const;
};

/// Balanced, deterministic in `task.seed`; sample i has label i mod 5.
Dataset generate_dataset(const SyntheticTask& task);

/// Intensity-weighted centroid of every frame of a single-channel clip (x, y per frame).
std::vector<std::array<double, 2>> centroid_track(const Tensor<float>& clip);
/// Trajectory predicates on the horizontal coordinate of a single object.
bool is_move_then_return(const std::vector<double>& xs);
bool is_move_and_stay(const std::vector<double>& xs);
Tensor<float> reverse_time(const Tensor<float>& clip);

void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------------------------
// training

enum class Schedule { multistep, cosine };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Schedule schedule = Schedule::cosine;
  std::vector<std::size_t> milestones = {20, 25};
  double factor = 0.1;
  std::size_t warmup_epochs = 5;
  double dropout_rate = 0.5;
  std::uint64_t seed = 7;
  /// Assert layer invariants on every training forward pass.
  bool check_invariants = true;

  void validate() const;
  /// Learning rate for iteration `step` of `steps_per_epoch` (linear warm-up, then the schedule).
  double lr_at(std::size_t epoch, std::size_t step, std::size_t steps_per_epoch) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_acc = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double first_step_loss = 0;
  std::filesystem::path checkpoint;  // empty when no directory was given
};

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

/// Mini-batch SGD with momentum on softmax cross-entropy. Each sample runs on its own tape and
/// gradients are summed in sample order, so results do not depend on the thread count.
/// With `checkpoint_dir` set, the model is saved there after every epoch (last.arck).
template <class S>
TrainResult train(Model<S>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir = {});

/// Loss and parameter gradients of one sample; used by train and by the descent tests.
template <class S>
double sample_loss(const Model<S>& model, const Sample& s, const ForwardOptions& opts, std::vector<Tensor<S>>* grads);

// ---------------------------------------------------------------------------------------------
// evaluation

struct EvalResult {
  double accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> predictions;

  /// Accuracy restricted to samples whose true label is in `classes`.
  double subset_accuracy(const std::vector<std::size_t>& classes) const;
  /// Off-diagonal mass of the confusion submatrix on `classes`.
  std::size_t subset_errors(const std::vector<std::size_t>& classes) const;
};

EvalResult score(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions,
                 std::size_t num_classes);
template <class S>
EvalResult evaluate(const Model<S>& model, const Dataset& data);
void write_confusion_csv(std::ostream& out, const EvalResult& r, const std::vector<std::string>& class_names);

}  // namespace arc
