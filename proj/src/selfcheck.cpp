#include "egoact/selfcheck.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "egoact/featurize.hpp"
#include "egoact/ingest.hpp"
#include "egoact/model.hpp"
#include "egoact/train.hpp"

namespace egoact {

namespace {

using nn::Tape;
using nn::TensorPtr;

TensorPtr random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad,
                        double spread = 1.0) {
  TensorPtr t = nn::make_tensor(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, spread);
  for (double& v : t->data) v = dist(rng);
  return t;
}

// Reduces with fixed non-uniform weights so a wrong gradient cannot hide
// behind a symmetric sum.
TensorPtr weighted_sum(Tape& tape, const TensorPtr& x) {
  TensorPtr w = nn::make_tensor(x->shape);
  for (size_t i = 0; i < w->data.size(); ++i) {
    w->data[i] = 0.25 + 0.5 * static_cast<double>(i % 7);
  }
  return tape.sum(tape.mul(x, w));
}

struct PrimitiveCheck {
  std::string name;
  std::vector<TensorPtr> params;
  nn::LossFn loss;
};

std::vector<PrimitiveCheck> primitive_checks() {
  std::vector<PrimitiveCheck> checks;
  Rng rng = make_rng(20240913);

  {
    TensorPtr a = random_tensor({3, 4}, rng, true);
    TensorPtr b = random_tensor({4, 2}, rng, true);
    checks.push_back({"matmul",
                      {a, b},
                      [a, b](Tape& t) { return weighted_sum(t, t.matmul(a, b)); }});
  }
  {
    TensorPtr a = random_tensor({3, 4}, rng, true);
    TensorPtr b = random_tensor({4}, rng, true);
    checks.push_back({"add_broadcast",
                      {a, b},
                      [a, b](Tape& t) { return weighted_sum(t, t.add(a, b)); }});
  }
  {
    TensorPtr a = random_tensor({3, 3}, rng, true);
    TensorPtr b = random_tensor({3, 3}, rng, true);
    checks.push_back({"mul", {a, b}, [a, b](Tape& t) { return weighted_sum(t, t.mul(a, b)); }});
  }
  {
    TensorPtr a = random_tensor({2, 5}, rng, true);
    checks.push_back({"scale", {a}, [a](Tape& t) { return weighted_sum(t, t.scale(a, 1.7)); }});
  }
  {
    TensorPtr a = random_tensor({3, 6}, rng, true);
    TensorPtr gain = random_tensor({6}, rng, true, 0.5);
    TensorPtr bias = random_tensor({6}, rng, true, 0.5);
    checks.push_back({"layer_norm",
                      {a, gain, bias},
                      [a, gain, bias](Tape& t) {
                        return weighted_sum(t, t.layer_norm(a, gain, bias, 1e-5));
                      }});
  }
  {
    TensorPtr a = random_tensor({3, 5}, rng, true);
    checks.push_back(
        {"softmax_lastdim", {a}, [a](Tape& t) { return weighted_sum(t, t.softmax_lastdim(a)); }});
  }
  {
    TensorPtr a = random_tensor({2, 7}, rng, true);
    checks.push_back({"gelu", {a}, [a](Tape& t) { return weighted_sum(t, t.gelu(a)); }});
  }
  {
    // Keep values away from the kink at zero, where finite differences
    // are meaningless.
    TensorPtr a = random_tensor({2, 7}, rng, true);
    for (double& v : a->data) {
      if (std::abs(v) < 0.2) v = v < 0 ? v - 0.2 : v + 0.2;
    }
    checks.push_back({"relu", {a}, [a](Tape& t) { return weighted_sum(t, t.relu(a)); }});
  }
  {
    TensorPtr table = random_tensor({5, 4}, rng, true);
    checks.push_back({"embedding_select",
                      {table},
                      [table](Tape& t) {
                        // Repeated index exercises gradient accumulation.
                        return weighted_sum(t, t.embedding_select(table, {3, 0, 3}));
                      }});
  }
  {
    TensorPtr a = random_tensor({2, 3}, rng, true);
    TensorPtr b = random_tensor({1, 3}, rng, true);
    checks.push_back({"concat_rows",
                      {a, b},
                      [a, b](Tape& t) { return weighted_sum(t, t.concat_rows({a, b})); }});
  }
  {
    TensorPtr a = random_tensor({2, 2}, rng, true);
    TensorPtr b = random_tensor({2, 3}, rng, true);
    checks.push_back({"concat_cols",
                      {a, b},
                      [a, b](Tape& t) { return weighted_sum(t, t.concat_cols({a, b})); }});
  }
  {
    TensorPtr a = random_tensor({4, 5}, rng, true);
    checks.push_back(
        {"slice_rows", {a}, [a](Tape& t) { return weighted_sum(t, t.slice_rows(a, 1, 3)); }});
    checks.push_back(
        {"slice_cols", {a}, [a](Tape& t) { return weighted_sum(t, t.slice_cols(a, 2, 5)); }});
  }
  {
    TensorPtr a = random_tensor({3, 4}, rng, true);
    checks.push_back(
        {"transpose_last2", {a}, [a](Tape& t) { return weighted_sum(t, t.transpose_last2(a)); }});
  }
  {
    TensorPtr a = random_tensor({3, 4}, rng, true);
    checks.push_back({"dropout",
                      {a},
                      [a](Tape& t) {
                        // Same seed every call, so the mask is fixed and
                        // the function stays deterministic.
                        Rng mask_rng = make_rng(77);
                        return weighted_sum(t, t.dropout(a, 0.35, mask_rng, true));
                      }});
  }
  {
    TensorPtr logits = random_tensor({1, 4}, rng, true);
    checks.push_back(
        {"cross_entropy", {logits}, [logits](Tape& t) { return t.cross_entropy(logits, 2); }});
  }
  {
    TensorPtr x = random_tensor({5, 4}, rng, false);
    TensorPtr w = random_tensor({4, 3}, rng, true);
    checks.push_back({"linear_cross_entropy",
                      {w},
                      [x, w](Tape& t) {
                        return t.cross_entropy(t.slice_rows(t.matmul(x, w), 2, 3), 1);
                      }});
  }
  return checks;
}

double model_gradcheck() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_mlp = 16;
  cfg.dropout = 0.0;
  cfg.seq_len = 5;
  cfg.input_dim = kFeatureDim;
  cfg.num_classes = 3;

  Rng rng = make_rng(4711);
  Model model = init_model(cfg, rng);
  TensorPtr input = random_tensor({cfg.seq_len, cfg.input_dim}, rng, false, 0.5);
  for (double& v : input->data) v = std::abs(v) / 2.0;  // feature-like range

  std::vector<TensorPtr> params = model.parameter_tensors();
  nn::LossFn loss = [&model, input](Tape& t) {
    return t.cross_entropy(forward_logits(t, model, input, false, nullptr), 1);
  };
  return nn::gradcheck(loss, params);
}

// ---- selftest -------------------------------------------------------

using CheckFn = std::function<std::optional<std::string>()>;

std::optional<std::string> expect(bool ok, const std::string& detail) {
  if (ok) return std::nullopt;
  return detail;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

SequenceRecord demo_record(int num_frames) {
  SequenceRecord rec;
  rec.action_id = 2;
  for (int t = 0; t < num_frames; ++t) {
    FramePose frame;
    frame.width = 1280;
    frame.height = 720;
    frame.left.valid = true;
    for (int j = 0; j < kHandJointCount; ++j) {
      frame.left.joints[static_cast<size_t>(j)] = {100.0 + 3.0 * j + t, 200.0 + 2.0 * j};
    }
    frame.right.valid = false;
    frame.object.label = 3;
    frame.object.corners = {Vec2{300.0 + t, 50.0}, Vec2{500.0 + t, 50.0}, Vec2{500.0 + t, 200.0},
                            Vec2{300.0 + t, 200.0}};
    rec.frames.push_back(frame);
  }
  return rec;
}

std::vector<std::pair<std::string, CheckFn>> selftest_checks() {
  std::vector<std::pair<std::string, CheckFn>> checks;

  checks.emplace_back("projection_midpoint", [] {
    CameraIntrinsics cam{1000.0, 1000.0, 640.0, 360.0, 1280, 720};
    Vec2 p = project_point({0.0, 0.0, 2.0}, cam);
    if (p.x != 640.0 || p.y != 360.0) return expect(false, "center ray missed principal point");
    Vec2 q1 = project_point({0.5, -0.25, 2.0}, cam);
    Vec2 q2 = project_point({1.0, -0.5, 4.0}, cam);
    return expect(q1 == q2, "projection not scale-invariant along the ray");
  });

  checks.emplace_back("bbox_canonical_order", [] {
    std::array<Vec2, kBoxCornerCount3D> pts{};
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> d(0.0, 500.0);
    for (Vec2& p : pts) p = {d(rng), d(rng)};
    ObjectPose2D box = bbox_from_corners(pts, 1);
    const auto& c = box.corners;
    bool ok = c[0].x <= c[1].x && c[0].y == c[1].y && c[3].y == c[2].y && c[0].x == c[3].x &&
              c[1].x == c[2].x && c[0].y <= c[3].y;
    return expect(ok, "hull corners are not in TL,TR,BR,BL order");
  });

  checks.emplace_back("hflip_involution", [] {
    SequenceRecord rec = demo_record(6);
    SequenceRecord once = hflip(rec);
    if (!(once.frames[0].left.valid == false && once.frames[0].right.valid == true)) {
      return expect(false, "hflip did not swap hand validity");
    }
    return expect(hflip(once) == rec, "hflip(hflip(rec)) != rec");
  });

  checks.emplace_back("feature_layout", [] {
    if (kFeatureDim != 93 || kSequenceLength != 40) {
      return expect(false, "feature constants drifted");
    }
    FramePose frame;
    frame.width = 1280;
    frame.height = 720;
    frame.object.label = 0;
    frame.object.corners = {Vec2{0, 0}, Vec2{1280, 0}, Vec2{1280, 720}, Vec2{0, 720}};
    FrameFeature f = embed_frame(frame, 8);
    for (int i = 0; i < 84; ++i) {
      if (f.values[static_cast<size_t>(i)] != 0.0) return expect(false, "hand block not zero");
    }
    const std::array<double, 9> tail{0, 0, 1, 0, 1, 1, 0, 1, 0};
    for (int i = 0; i < 9; ++i) {
      if (f.values[static_cast<size_t>(84 + i)] != tail[static_cast<size_t>(i)]) {
        return expect(false, "full-frame box block mismatch at offset " + std::to_string(84 + i));
      }
    }
    return expect(true, "");
  });

  checks.emplace_back("equal_sampling_formula", [] {
    Rng rng = make_rng(0);
    std::vector<int> s80 = sample_indices(80, 40, SampleMode::Equal, rng);
    std::vector<int> s40 = sample_indices(40, 40, SampleMode::Equal, rng);
    std::vector<int> s20 = sample_indices(20, 40, SampleMode::Equal, rng);
    for (int i = 0; i < 40; ++i) {
      if (s80[static_cast<size_t>(i)] != 2 * i) return expect(false, "T=80 is not stride 2");
      if (s40[static_cast<size_t>(i)] != i) return expect(false, "T=40 is not identity");
      if (s20[static_cast<size_t>(i)] != i / 2) return expect(false, "T=20 is not pairs");
    }
    return expect(true, "");
  });

  checks.emplace_back("mask_identity_and_idempotence", [] {
    SequenceRecord rec = demo_record(40);
    Rng rng = make_rng(0);
    std::vector<int> idx = sample_indices(40, 40, SampleMode::Equal, rng);
    SequenceTensor full = build_sequence_tensor(rec, idx, MaskConfig{}, 8);
    MaskConfig right_only{false, true, true, true};
    SequenceTensor masked = build_sequence_tensor(rec, idx, right_only, 8);
    SequenceTensor twice = masked;
    mask_apply(twice, right_only);
    if (!(twice.values == masked.values)) return expect(false, "mask is not idempotent");
    SequenceTensor identity = full;
    mask_apply(identity, MaskConfig{});
    return expect(identity.values == full.values, "all-true mask is not the identity");
  });

  checks.emplace_back("embed_hflip_mirror", [] {
    SequenceRecord rec = demo_record(1);
    rec.frames[0].right.valid = true;
    for (int j = 0; j < kHandJointCount; ++j) {
      rec.frames[0].right.joints[static_cast<size_t>(j)] = {700.0 + 2.0 * j, 300.0 + 1.0 * j};
    }
    FrameFeature orig = embed_frame(rec.frames[0], 8);
    FrameFeature flip = embed_frame(hflip(rec).frames[0], 8);
    for (int k = 0; k < kHandJointCount; ++k) {
      const double fx = flip.values[static_cast<size_t>(kLeftOffset + 2 * k)];
      const double fy = flip.values[static_cast<size_t>(kLeftOffset + 2 * k + 1)];
      const double ox = orig.values[static_cast<size_t>(kRightOffset + 2 * k)];
      const double oy = orig.values[static_cast<size_t>(kRightOffset + 2 * k + 1)];
      if (std::abs(fx - (1.0 - ox)) > 1e-15 || fy != oy) {
        return expect(false, "flipped left block is not the mirror of the right block");
      }
    }
    return expect(true, "");
  });

  checks.emplace_back("softmax_row_sums", [] {
    Rng rng = make_rng(99);
    std::uniform_real_distribution<double> d(-300.0, 300.0);
    nn::TensorPtr a = nn::make_tensor({4, 7});
    for (double& v : a->data) v = d(rng);
    Tape tape;
    nn::TensorPtr s = tape.softmax_lastdim(a);
    for (int r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 7; ++c) {
        const double v = s->data[static_cast<size_t>(r * 7 + c)];
        if (v < 0.0) return expect(false, "negative softmax entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        return expect(false, "row sum off by " + fmt(sum - 1.0));
      }
    }
    return expect(true, "");
  });

  checks.emplace_back("layer_norm_moments", [] {
    Rng rng = make_rng(123);
    nn::TensorPtr a = random_tensor({3, 8}, rng, false, 3.0);
    nn::TensorPtr gain = nn::make_tensor({8}, std::vector<double>(8, 1.0));
    nn::TensorPtr bias = nn::make_tensor({8}, std::vector<double>(8, 0.0));
    Tape tape;
    nn::TensorPtr out = tape.layer_norm(a, gain, bias, 1e-12);
    for (int r = 0; r < 3; ++r) {
      double mean = 0.0, var = 0.0;
      for (int c = 0; c < 8; ++c) mean += out->data[static_cast<size_t>(r * 8 + c)];
      mean /= 8.0;
      for (int c = 0; c < 8; ++c) {
        const double d = out->data[static_cast<size_t>(r * 8 + c)] - mean;
        var += d * d;
      }
      var /= 8.0;
      if (std::abs(mean) > 1e-10) return expect(false, "row mean " + fmt(mean));
      if (std::abs(var - 1.0) > 1e-8) return expect(false, "row variance " + fmt(var));
    }
    return expect(true, "");
  });

  checks.emplace_back("gradient_accumulation", [] {
    nn::TensorPtr x = nn::make_tensor({4}, {1.0, -2.0, 3.0, 0.5}, true);
    {
      Tape tape;
      tape.backward(tape.sum(tape.add(x, x)));
    }
    std::vector<double> via_add = x->grad;
    x->zero_grad();
    {
      Tape tape;
      tape.backward(tape.sum(tape.scale(x, 2.0)));
    }
    const bool same = via_add == x->grad;
    x->zero_grad();
    return expect(same, "x + x and 2x disagree on the gradient");
  });

  checks.emplace_back("cross_entropy_closed_form", [] {
    nn::TensorPtr logits = nn::make_tensor({1, 2}, {10.0, -10.0});
    Tape tape;
    const double got = tape.cross_entropy(logits, 0)->data[0];
    const double want = std::log1p(std::exp(-20.0));
    // The stabilized log-sum-exp path rounds at ~1e-15 absolute.
    return expect(std::abs(got - want) <= 1e-14,
                  "cross entropy " + fmt(got) + " != " + fmt(want));
  });

  checks.emplace_back("adam_null_and_unit_step", [] {
    TrainConfig cfg;
    nn::TensorPtr theta = nn::make_tensor({1}, {0.0}, true);
    theta->ensure_grad();
    AdamState state = make_adam_state({theta});
    adam_step({theta}, state, cfg, 1);
    if (theta->data[0] != 0.0) return expect(false, "zero gradient moved the parameter");
    theta->grad[0] = 1.0;
    state = make_adam_state({theta});
    adam_step({theta}, state, cfg, 1);
    const double want = -(cfg.lr / (1.0 + cfg.eps));
    return expect(theta->data[0] == want,
                  "unit-gradient step gave " + fmt(theta->data[0]) + ", want " + fmt(want));
  });

  checks.emplace_back("checkpoint_roundtrip", [] {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_mlp = 16;
    cfg.seq_len = 5;
    cfg.num_classes = 3;
    Rng rng = make_rng(31337);
    Model model = init_model(cfg, rng);
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "egoact_selftest.ckpt";
    save_checkpoint(model, 8, path);
    LoadedCheckpoint loaded = load_checkpoint(path);
    std::filesystem::remove(path);
    if (loaded.num_object_classes != 8) return expect(false, "num_object_classes changed");
    if (!(loaded.model.cfg == cfg)) return expect(false, "config changed in round-trip");
    auto a = model.parameters();
    auto b = loaded.model.parameters();
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i].second->data != b[i].second->data) {
        return expect(false, "parameter " + a[i].first + " not bitwise identical");
      }
    }
    return expect(true, "");
  });

  checks.emplace_back("epe_cases", [] {
    HandPose2D a;
    a.valid = true;
    for (int j = 0; j < kHandJointCount; ++j) {
      a.joints[static_cast<size_t>(j)] = {static_cast<double>(j), 2.0 * j};
    }
    if (epe(a, a) != 0.0) return expect(false, "identical poses have nonzero error");
    HandPose2D zero;
    zero.valid = true;
    HandPose2D offset;
    offset.valid = true;
    for (auto& j : offset.joints) j = {3.0, 4.0};
    return expect(epe(offset, zero) == 5.0, "3-4-5 case is not exactly 5");
  });

  checks.emplace_back("eseq_roundtrip", [] {
    SequenceRecord rec = demo_record(4);
    std::ostringstream out;
    write_sequence_2d(out, rec);
    std::istringstream in(out.str());
    SequenceRecord back = parse_sequence_2d(in);
    back.action_id = rec.action_id;  // carried by the manifest, not the file
    return expect(back == rec, "2d sequence round-trip mismatch");
  });

  checks.emplace_back("dropout_identity", [] {
    Rng rng = make_rng(1);
    nn::TensorPtr a = random_tensor({3, 3}, rng, false);
    Tape tape;
    nn::TensorPtr off = tape.dropout(a, 0.0, rng, true);
    nn::TensorPtr eval_mode = tape.dropout(a, 0.5, rng, false);
    return expect(off->data == a->data && eval_mode->data == a->data,
                  "dropout is not the identity when disabled");
  });

  checks.emplace_back("sequence_tensor_shape", [] {
    SequenceRecord rec = demo_record(3);
    Rng rng = make_rng(0);
    std::vector<int> idx =
        sample_indices(static_cast<int>(rec.frames.size()), 40, SampleMode::Equal, rng);
    SequenceTensor seq = build_sequence_tensor(rec, idx, MaskConfig{}, 8);
    if (seq.values.size() != static_cast<size_t>(40 * 93)) {
      return expect(false, "tensor is not 40x93");
    }
    for (double v : seq.values) {
      if (!(v >= 0.0 && v <= 1.0)) return expect(false, "feature value outside [0,1]");
    }
    return expect(true, "");
  });

  return checks;
}

}  // namespace

GradcheckReport run_gradcheck(std::ostream& log) {
  GradcheckReport report;
  for (PrimitiveCheck& check : primitive_checks()) {
    const double err = nn::gradcheck(check.loss, check.params);
    report.primitives.emplace_back(check.name, err);
    report.primitive_max = std::max(report.primitive_max, err);
    log << "  primitive " << check.name << ": max rel err " << err << "\n";
  }
  report.model_max = model_gradcheck();
  log << "  full model (tiny config): max rel err " << report.model_max << "\n";
  report.pass = report.primitive_max < 1e-6 && report.model_max < 1e-4;
  return report;
}

int run_selftest(std::ostream& log) {
  int failures = 0;
  for (auto& [name, fn] : selftest_checks()) {
    std::optional<std::string> error;
    try {
      error = fn();
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    if (error) {
      ++failures;
      log << "[FAIL] " << name << ": " << *error << "\n";
    } else {
      log << "[ok]   " << name << "\n";
    }
  }
  return failures;
}

}  // namespace egoact
