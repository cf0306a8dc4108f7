#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "egoact/featurize.hpp"
#include "egoact/model.hpp"

namespace egoact {

// Which reading of "sequence cropping" the augmentation uses.
enum class CropMode { Spatial, Temporal };

CropMode parse_crop_mode(const std::string& s);
std::string crop_mode_name(CropMode mode);

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  double augment_hflip_p = 0.5;
  double augment_crop_p = 0.5;
  CropMode crop_mode = CropMode::Spatial;
  double crop_min_scale = 0.7;
  MaskConfig mask;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// First-order moment estimates for every parameter, in Model::parameters()
// order, plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

AdamState make_adam_state(const std::vector<nn::TensorPtr>& params);

// One optimizer step over params[i]->grad with bias correction:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
// Any non-finite gradient aborts the step before touching parameters.
void adam_step(const std::vector<nn::TensorPtr>& params, AdamState& state, const TrainConfig& cfg,
               std::int64_t t);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  std::vector<EpochStats> history;
  // Deep copy of the weights at the best validation accuracy; only set
  // when a validation split exists.
  std::optional<Model> best;
};

// Seed stream tags keeping the model-init rng, the epoch shuffle rng, and
// the per-sample rngs (seed, epoch, index) in disjoint sequences.
inline constexpr std::uint64_t kModelInitStream = 0x494e4954;  // "INIT"
inline constexpr std::uint64_t kShuffleStream = 0x53485546;    // "SHUF"

// Trains in place. Per epoch: seeded shuffle, then per sample: augmentation
// (hflip / one shared crop window), random-mode frame sampling, masking,
// forward, mean cross-entropy over the batch, backward, one Adam step per
// batch. History records the mean train loss and, when a val split exists,
// the val accuracy under cfg.mask. One progress line per epoch when
// `progress` is given.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  int num_object_classes, std::ostream* progress = nullptr);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [actual][predicted]
  std::vector<double> per_class_accuracy;
  std::int64_t n_samples = 0;
};

// Equal-mode sampling, no augmentation, dropout off; argmax predictions
// (lowest index wins ties) against the true action ids.
EvalReport evaluate(const Model& model, const Dataset& data, Split split, const MaskConfig& mask,
                    int num_object_classes);

// Mean Euclidean distance over the 21 joints, in pixels.
double epe(const HandPose2D& pred, const HandPose2D& gt);

// CSV `epoch,train_loss,val_accuracy`; the last field is empty when no
// validation split was available.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);
std::string history_csv_string(const std::vector<EpochStats>& history);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
std::string eval_report_string(const EvalReport& report);

}  // namespace egoact
