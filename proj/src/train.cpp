#include "egoact/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace egoact {

namespace {

// Shortest representation that parses back to the identical double.
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

CropMode parse_crop_mode(const std::string& s) {
  if (s == "spatial") return CropMode::Spatial;
  if (s == "temporal") return CropMode::Temporal;
  throw ConfigError("unknown crop mode \"" + s + "\" (expected spatial or temporal)");
}

std::string crop_mode_name(CropMode mode) {
  return mode == CropMode::Spatial ? "spatial" : "temporal";
}

void TrainConfig::validate() const {
  // lr == 0 is legal: a null-update run is the cheapest way to check
  // that the optimizer, and nothing else, moves the weights.
  if (!(lr >= 0.0)) throw ConfigError("train config: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train config: eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (!(augment_hflip_p >= 0.0 && augment_hflip_p <= 1.0) ||
      !(augment_crop_p >= 0.0 && augment_crop_p <= 1.0)) {
    throw ConfigError("train config: augmentation probabilities must be in [0, 1]");
  }
  if (!(crop_min_scale > 0.0 && crop_min_scale <= 1.0)) {
    throw ConfigError("train config: crop_min_scale must be in (0, 1]");
  }
}

AdamState make_adam_state(const std::vector<nn::TensorPtr>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const nn::TensorPtr& p : params) {
    state.m.emplace_back(p->size(), 0.0);
    state.v.emplace_back(p->size(), 0.0);
  }
  return state;
}

void adam_step(const std::vector<nn::TensorPtr>& params, AdamState& state, const TrainConfig& cfg,
               std::int64_t t) {
  if (t < 1) throw ConfigError("adam_step: step index must be >= 1");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameter list");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const nn::Tensor& p = *params[i];
    if (p.grad.size() != p.data.size() || state.m[i].size() != p.data.size()) {
      throw ShapeError("adam_step: gradient/state size mismatch for parameter " +
                       std::to_string(i));
    }
    for (double g : p.grad) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                           ", step aborted");
      }
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    nn::Tensor& p = *params[i];
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      const double g = p.grad[j] + cfg.weight_decay * p.data[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.data[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

namespace {

SequenceRecord augment_record(const SequenceRecord& rec, const TrainConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SequenceRecord out = rec;
  if (u01(rng) < cfg.augment_hflip_p) out = hflip(out);
  if (u01(rng) < cfg.augment_crop_p) {
    out = cfg.crop_mode == CropMode::Spatial ? random_crop(out, rng, cfg.crop_min_scale)
                                             : temporal_crop(out, rng, cfg.crop_min_scale);
  }
  return out;
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  int num_object_classes, std::ostream* progress) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("train: dataset has no training records");
  if (num_object_classes < 1) throw ConfigError("train: num_object_classes must be >= 1");

  const std::vector<nn::TensorPtr> params = model.parameter_tensors();
  AdamState state = make_adam_state(params);
  const bool has_val = !data.val.empty();

  TrainResult result;
  result.history.reserve(static_cast<size_t>(cfg.epochs));
  double best_acc = -1.0;

  std::vector<size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      for (size_t k = start; k < end; ++k) {
        const size_t idx = order[k];
        Rng sample_rng =
            make_rng(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx));
        SequenceRecord rec = augment_record(data.train[idx], cfg, sample_rng);
        std::vector<int> indices = sample_indices(static_cast<int>(rec.frames.size()),
                                                  kSequenceLength, SampleMode::Random, sample_rng);
        SequenceTensor seq = build_sequence_tensor(rec, indices, cfg.mask, num_object_classes);
        if (seq.action_id < 0 || seq.action_id >= model.cfg.num_classes) {
          throw ConfigError("train: action id " + std::to_string(seq.action_id) +
                            " outside model's " + std::to_string(model.cfg.num_classes) +
                            " classes");
        }
        nn::Tape tape;
        nn::TensorPtr logits = forward_logits(tape, model, sequence_input(seq), true, &sample_rng);
        nn::TensorPtr loss = tape.cross_entropy(logits, seq.action_id);
        loss_sum += loss->data[0];
        tape.backward(loss, inv_batch);
      }
      adam_step(params, state, cfg, ++state.t);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    if (has_val) {
      EvalReport report = evaluate(model, data, Split::Val, cfg.mask, num_object_classes);
      stats.val_accuracy = report.accuracy;
      if (report.accuracy > best_acc) {
        best_acc = report.accuracy;
        result.best = clone_model(model);
      }
    }
    if (progress != nullptr) {
      *progress << "epoch " << epoch << "/" << cfg.epochs << "  train_loss " << stats.train_loss;
      if (stats.val_accuracy) *progress << "  val_accuracy " << *stats.val_accuracy;
      *progress << "\n" << std::flush;
    }
    result.history.push_back(std::move(stats));
  }
  return result;
}

EvalReport evaluate(const Model& model, const Dataset& data, Split split, const MaskConfig& mask,
                    int num_object_classes) {
  const std::vector<SequenceRecord>& records = data.split(split);
  if (records.empty()) {
    throw ConfigError("evaluate: split \"" + split_name(split) + "\" is empty");
  }
  if (num_object_classes < 1) throw ConfigError("evaluate: num_object_classes must be >= 1");

  const int C = model.cfg.num_classes;
  EvalReport report;
  report.confusion.assign(static_cast<size_t>(C), std::vector<std::int64_t>(C, 0));
  Rng unused = make_rng(0);  // equal mode draws nothing
  std::int64_t correct = 0;
  for (const SequenceRecord& rec : records) {
    if (rec.action_id < 0 || rec.action_id >= C) {
      throw ConfigError("evaluate: action id " + std::to_string(rec.action_id) +
                        " outside model's " + std::to_string(C) + " classes");
    }
    std::vector<int> indices = sample_indices(static_cast<int>(rec.frames.size()), kSequenceLength,
                                              SampleMode::Equal, unused);
    SequenceTensor seq = build_sequence_tensor(rec, indices, mask, num_object_classes);
    const Prediction pred = predict(model, seq);
    report.confusion[static_cast<size_t>(rec.action_id)][static_cast<size_t>(pred.class_id)]++;
    if (pred.class_id == rec.action_id) ++correct;
  }
  report.n_samples = static_cast<std::int64_t>(records.size());
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_samples);
  report.per_class_accuracy.resize(static_cast<size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    const auto& row = report.confusion[static_cast<size_t>(c)];
    const std::int64_t total = std::accumulate(row.begin(), row.end(), std::int64_t{0});
    report.per_class_accuracy[static_cast<size_t>(c)] =
        total == 0 ? 0.0
                   : static_cast<double>(row[static_cast<size_t>(c)]) / static_cast<double>(total);
  }
  return report;
}

double epe(const HandPose2D& pred, const HandPose2D& gt) {
  if (!pred.valid || !gt.valid) {
    throw GeometryError("epe: undefined for an invalid hand pose");
  }
  double sum = 0.0;
  for (int j = 0; j < kHandJointCount; ++j) {
    const double dx = pred.joints[static_cast<size_t>(j)].x - gt.joints[static_cast<size_t>(j)].x;
    const double dy = pred.joints[static_cast<size_t>(j)].y - gt.joints[static_cast<size_t>(j)].y;
    sum += std::hypot(dx, dy);
  }
  return sum / kHandJointCount;
}

std::string history_csv_string(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_accuracy\n";
  for (const EpochStats& row : history) {
    out << row.epoch << ',' << format_double(row.train_loss) << ',';
    if (row.val_accuracy) out << format_double(*row.val_accuracy);
    out << '\n';
  }
  return out.str();
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open history file for writing: " + path.string());
  out << history_csv_string(history);
  if (!out) throw IoError("failed writing history file: " + path.string());
}

std::string eval_report_string(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["n_samples"] = report.n_samples;
  j["per_class_accuracy"] = report.per_class_accuracy;
  j["confusion"] = report.confusion;
  return j.dump(2) + "\n";
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open eval report for writing: " + path.string());
  out << eval_report_string(report);
  if (!out) throw IoError("failed writing eval report: " + path.string());
}

}  // namespace egoact
