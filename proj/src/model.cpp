#include "egoact/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace egoact {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr char kMagic[4] = {'E', 'A', 'R', '1'};

using ojson = nlohmann::ordered_json;

void append_le_bytes(std::string& buf, const double* values, size_t count) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    buf.append(reinterpret_cast<const char*>(values), count * sizeof(double));
  } else {
    for (size_t i = 0; i < count; ++i) {
      char b[8];
      std::memcpy(b, &values[i], 8);
      std::reverse(b, b + 8);
      buf.append(b, 8);
    }
  }
}

void read_le_bytes(std::istream& in, double* values, size_t count, const std::string& name) {
  in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(double)) {
    throw FormatError("checkpoint: truncated data for parameter " + name);
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (size_t i = 0; i < count; ++i) {
      char b[8];
      std::memcpy(b, &values[i], 8);
      std::reverse(b, b + 8);
      std::memcpy(&values[i], b, 8);
    }
  }
}

ojson config_json(const ModelConfig& cfg) {
  ojson j;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["n_layers"] = cfg.n_layers;
  j["d_mlp"] = cfg.d_mlp;
  j["dropout"] = cfg.dropout;
  j["seq_len"] = cfg.seq_len;
  j["input_dim"] = cfg.input_dim;
  j["num_classes"] = cfg.num_classes;
  return j;
}

ModelConfig config_from_json(const ojson& j) {
  ModelConfig cfg;
  try {
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.d_mlp = j.at("d_mlp").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.seq_len = j.at("seq_len").get<int>();
    cfg.input_dim = j.at("input_dim").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
  } catch (const ojson::exception& e) {
    throw FormatError(std::string("checkpoint: bad config header: ") + e.what());
  }
  return cfg;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_mlp <= 0 || seq_len <= 0 ||
      input_dim <= 0 || num_classes <= 0) {
    throw ConfigError("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model=" + std::to_string(d_model) +
                      " is not divisible by n_heads=" + std::to_string(n_heads));
  }
  if (!(dropout >= 0.0) || dropout >= 1.0) {
    throw ConfigError("model config: dropout must be in [0, 1)");
  }
}

std::vector<std::pair<std::string, nn::TensorPtr>> Model::parameters() const {
  std::vector<std::pair<std::string, nn::TensorPtr>> out;
  out.emplace_back("token_proj.weight", token_w);
  out.emplace_back("token_proj.bias", token_b);
  out.emplace_back("cls_token", cls_token);
  out.emplace_back("pos_embed", pos_embed);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "blocks." + std::to_string(i) + ".";
    const EncoderBlock& b = blocks[i];
    out.emplace_back(prefix + "ln1.gain", b.ln1_gain);
    out.emplace_back(prefix + "ln1.bias", b.ln1_bias);
    out.emplace_back(prefix + "attn.wq", b.wq);
    out.emplace_back(prefix + "attn.wk", b.wk);
    out.emplace_back(prefix + "attn.wv", b.wv);
    out.emplace_back(prefix + "attn.wo", b.wo);
    out.emplace_back(prefix + "ln2.gain", b.ln2_gain);
    out.emplace_back(prefix + "ln2.bias", b.ln2_bias);
    out.emplace_back(prefix + "mlp.w1", b.mlp_w1);
    out.emplace_back(prefix + "mlp.b1", b.mlp_b1);
    out.emplace_back(prefix + "mlp.w2", b.mlp_w2);
    out.emplace_back(prefix + "mlp.b2", b.mlp_b2);
  }
  out.emplace_back("final_ln.gain", final_gain);
  out.emplace_back("final_ln.bias", final_bias);
  out.emplace_back("head.weight", head_w);
  out.emplace_back("head.bias", head_b);
  return out;
}

std::vector<nn::TensorPtr> Model::parameter_tensors() const {
  std::vector<nn::TensorPtr> out;
  for (auto& [name, t] : parameters()) out.push_back(t);
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (auto& [name, t] : parameters()) n += static_cast<std::int64_t>(t->size());
  return n;
}

Model init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const int d = cfg.d_model;
  auto param = [](std::vector<int> shape) { return nn::make_tensor(std::move(shape), true); };
  m.token_w = param({cfg.input_dim, d});
  m.token_b = param({d});
  m.cls_token = param({1, d});
  m.pos_embed = param({cfg.seq_len + 1, d});
  m.blocks.resize(static_cast<size_t>(cfg.n_layers));
  for (EncoderBlock& b : m.blocks) {
    b.ln1_gain = param({d});
    b.ln1_bias = param({d});
    b.wq = param({d, d});
    b.wk = param({d, d});
    b.wv = param({d, d});
    b.wo = param({d, d});
    b.ln2_gain = param({d});
    b.ln2_bias = param({d});
    b.mlp_w1 = param({d, cfg.d_mlp});
    b.mlp_b1 = param({cfg.d_mlp});
    b.mlp_w2 = param({cfg.d_mlp, d});
    b.mlp_b2 = param({d});
  }
  m.final_gain = param({d});
  m.final_bias = param({d});
  m.head_w = param({d, cfg.num_classes});
  m.head_b = param({cfg.num_classes});

  std::normal_distribution<double> weight_init(0.0, 0.02);
  for (auto& [name, t] : m.parameters()) {
    if (name.ends_with("gain")) {
      std::fill(t->data.begin(), t->data.end(), 1.0);
    } else if (name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2")) {
      std::fill(t->data.begin(), t->data.end(), 0.0);
    } else {
      for (double& v : t->data) v = weight_init(rng);
    }
  }
  return m;
}

Model clone_model(const Model& m) {
  Rng zero = make_rng(0);
  Model copy = init_model(m.cfg, zero);
  auto src = m.parameters();
  auto dst = copy.parameters();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i].second->data = src[i].second->data;
  }
  return copy;
}

nn::TensorPtr attention(nn::Tape& tape, const EncoderBlock& block, const nn::TensorPtr& x,
                        const ModelConfig& cfg, bool train_flag, Rng* rng) {
  const int dh = cfg.head_dim();
  const bool drop = train_flag && cfg.dropout > 0.0;
  if (drop && rng == nullptr) {
    throw Error("attention: training with dropout requires an rng");
  }
  nn::TensorPtr q = tape.matmul(x, block.wq);
  nn::TensorPtr k = tape.matmul(x, block.wk);
  nn::TensorPtr v = tape.matmul(x, block.wv);
  std::vector<nn::TensorPtr> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < cfg.n_heads; ++h) {
    nn::TensorPtr qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    nn::TensorPtr kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    nn::TensorPtr vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    nn::TensorPtr scores = tape.scale(tape.matmul(qh, tape.transpose_last2(kh)), inv_sqrt_dh);
    nn::TensorPtr probs = tape.softmax_lastdim(scores);
    if (drop) probs = tape.dropout(probs, cfg.dropout, *rng, true);
    heads.push_back(tape.matmul(probs, vh));
  }
  nn::TensorPtr merged = cfg.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
  nn::TensorPtr out = tape.matmul(merged, block.wo);
  if (drop) out = tape.dropout(out, cfg.dropout, *rng, true);
  return out;
}

nn::TensorPtr forward_logits(nn::Tape& tape, const Model& m, const nn::TensorPtr& input,
                             bool train_flag, Rng* rng) {
  const ModelConfig& cfg = m.cfg;
  if (input->shape != std::vector<int>{cfg.seq_len, cfg.input_dim}) {
    throw ShapeError("forward: expected input [" + std::to_string(cfg.seq_len) + "x" +
                     std::to_string(cfg.input_dim) + "], got " + nn::shape_string(*input));
  }
  const bool drop = train_flag && cfg.dropout > 0.0;
  nn::TensorPtr tokens = tape.add(tape.matmul(input, m.token_w), m.token_b);
  nn::TensorPtr x = tape.concat_rows({m.cls_token, tokens});
  x = tape.add(x, m.pos_embed);
  if (drop) x = tape.dropout(x, cfg.dropout, *rng, true);
  for (const EncoderBlock& b : m.blocks) {
    nn::TensorPtr normed = tape.layer_norm(x, b.ln1_gain, b.ln1_bias, kLayerNormEps);
    x = tape.add(x, attention(tape, b, normed, cfg, train_flag, rng));
    nn::TensorPtr normed2 = tape.layer_norm(x, b.ln2_gain, b.ln2_bias, kLayerNormEps);
    nn::TensorPtr hidden = tape.gelu(tape.add(tape.matmul(normed2, b.mlp_w1), b.mlp_b1));
    nn::TensorPtr mlp_out = tape.add(tape.matmul(hidden, b.mlp_w2), b.mlp_b2);
    if (drop) mlp_out = tape.dropout(mlp_out, cfg.dropout, *rng, true);
    x = tape.add(x, mlp_out);
  }
  x = tape.layer_norm(x, m.final_gain, m.final_bias, kLayerNormEps);
  nn::TensorPtr cls = tape.slice_rows(x, 0, 1);
  return tape.add(tape.matmul(cls, m.head_w), m.head_b);
}

nn::TensorPtr sequence_input(const SequenceTensor& seq) {
  if (seq.values.size() != static_cast<size_t>(kSequenceLength) * kFeatureDim) {
    throw ShapeError("sequence tensor has " + std::to_string(seq.values.size()) +
                     " values, expected " + std::to_string(kSequenceLength * kFeatureDim));
  }
  return nn::make_tensor({kSequenceLength, kFeatureDim}, seq.values);
}

std::vector<double> forward(const Model& m, const SequenceTensor& seq) {
  nn::Tape tape;
  nn::TensorPtr logits = forward_logits(tape, m, sequence_input(seq), false, nullptr);
  return logits->data;
}

Prediction predict(const Model& m, const SequenceTensor& seq) {
  std::vector<double> logits = forward(m, seq);
  Prediction p;
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  p.probabilities.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    p.probabilities[i] = std::exp(logits[i] - mx);
    sum += p.probabilities[i];
  }
  for (double& v : p.probabilities) v /= sum;
  p.class_id = 0;
  for (size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<size_t>(p.class_id)]) p.class_id = static_cast<int>(i);
  }
  return p;
}

void save_checkpoint(const Model& m, int num_object_classes, const std::filesystem::path& path) {
  ojson header;
  header["config"] = config_json(m.cfg);
  header["num_object_classes"] = num_object_classes;
  ojson manifest = ojson::array();
  for (auto& [name, t] : m.parameters()) {
    manifest.push_back(ojson::array({name, t->shape}));
  }
  header["manifest"] = manifest;
  const std::string header_str = header.dump();

  std::string payload;
  payload.reserve(16 + header_str.size());
  payload.append(kMagic, 4);
  const std::uint64_t len = header_str.size();
  for (int i = 0; i < 8; ++i) payload.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  payload += header_str;
  for (auto& [name, t] : m.parameters()) {
    append_le_bytes(payload, t->data.data(), t->size());
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic bytes in " + path.string());
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    int c = in.get();
    if (c == EOF) throw FormatError("checkpoint: truncated header length");
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  if (len == 0 || len > (1ull << 24)) {
    throw FormatError("checkpoint: implausible header length " + std::to_string(len));
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw FormatError("checkpoint: truncated header");
  }
  ojson header = ojson::parse(header_str, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw FormatError("checkpoint: header is not valid JSON");
  }
  if (!header.contains("config") || !header.contains("manifest") ||
      !header.contains("num_object_classes")) {
    throw FormatError("checkpoint: header missing config/manifest/num_object_classes");
  }
  ModelConfig cfg = config_from_json(header.at("config"));
  cfg.validate();
  int num_object_classes = header.at("num_object_classes").get<int>();
  if (num_object_classes <= 0) {
    throw FormatError("checkpoint: num_object_classes must be positive");
  }

  Rng zero = make_rng(0);
  LoadedCheckpoint loaded{init_model(cfg, zero), num_object_classes};
  auto params = loaded.model.parameters();
  const ojson& manifest = header.at("manifest");
  if (!manifest.is_array() || manifest.size() != params.size()) {
    throw FormatError("checkpoint: manifest lists " + std::to_string(manifest.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const ojson& entry = manifest[i];
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string()) {
      throw FormatError("checkpoint: malformed manifest entry " + std::to_string(i));
    }
    if (entry[0].get<std::string>() != params[i].first) {
      throw FormatError("checkpoint: manifest entry \"" + entry[0].get<std::string>() +
                        "\" does not match expected parameter \"" + params[i].first + "\"");
    }
    std::vector<int> shape = entry[1].get<std::vector<int>>();
    if (shape != params[i].second->shape) {
      throw FormatError("checkpoint: shape mismatch for parameter " + params[i].first);
    }
  }
  for (auto& [name, t] : params) {
    read_le_bytes(in, t->data.data(), t->size(), name);
  }
  if (in.peek() != EOF) {
    throw FormatError("checkpoint: trailing bytes after parameter data");
  }
  return loaded;
}

}  // namespace egoact
