#include "egoact/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace egoact {

namespace {

using ojson = nlohmann::ordered_json;

void require_known_keys(const ojson& obj, const std::set<std::string>& allowed,
                        const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + context);
    }
  }
}

const ojson* find(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

int as_int(const ojson& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const ojson& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError(name + " must be a non-negative integer");
  if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
    throw ConfigError(name + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const ojson& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError(name + " must be a number");
  return v.get<double>();
}

std::string as_string(const ojson& v, const std::string& name) {
  if (!v.is_string()) throw ConfigError(name + " must be a string");
  return v.get<std::string>();
}

ojson parse_json_object(const std::string& text, const std::string& what) {
  ojson j = ojson::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(what + ": not valid JSON");
  if (!j.is_object()) throw ConfigError(what + ": top level must be a JSON object");
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// --set values arrive as bare strings; parse them with full-consumption
// checks so "12x" is an error rather than 12.
int parse_int_value(const std::string& s, const std::string& key) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("--set " + key + ": \"" + s + "\" is not an integer");
  }
  return out;
}

std::uint64_t parse_u64_value(const std::string& s, const std::string& key) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("--set " + key + ": \"" + s + "\" is not a non-negative integer");
  }
  return out;
}

double parse_double_value(const std::string& s, const std::string& key) {
  double out = 0.0;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("--set " + key + ": \"" + s + "\" is not a number");
  }
  if (pos != s.size()) {
    throw ConfigError("--set " + key + ": \"" + s + "\" is not a number");
  }
  return out;
}

void parse_model_section(const ojson& j, ModelConfig& model) {
  require_known_keys(j, {"d_model", "n_heads", "n_layers", "d_mlp", "dropout", "num_classes"},
                     "model");
  if (const ojson* v = find(j, "d_model")) model.d_model = as_int(*v, "model.d_model");
  if (const ojson* v = find(j, "n_heads")) model.n_heads = as_int(*v, "model.n_heads");
  if (const ojson* v = find(j, "n_layers")) model.n_layers = as_int(*v, "model.n_layers");
  if (const ojson* v = find(j, "d_mlp")) model.d_mlp = as_int(*v, "model.d_mlp");
  if (const ojson* v = find(j, "dropout")) model.dropout = as_double(*v, "model.dropout");
  if (const ojson* v = find(j, "num_classes")) model.num_classes = as_int(*v, "model.num_classes");
}

void parse_train_section(const ojson& j, TrainConfig& train) {
  require_known_keys(j,
                     {"lr", "beta1", "beta2", "eps", "weight_decay", "batch_size", "epochs",
                      "seed", "augment_hflip_p", "augment_crop_p", "crop_mode", "crop_min_scale",
                      "mask"},
                     "train");
  if (const ojson* v = find(j, "lr")) train.lr = as_double(*v, "train.lr");
  if (const ojson* v = find(j, "beta1")) train.beta1 = as_double(*v, "train.beta1");
  if (const ojson* v = find(j, "beta2")) train.beta2 = as_double(*v, "train.beta2");
  if (const ojson* v = find(j, "eps")) train.eps = as_double(*v, "train.eps");
  if (const ojson* v = find(j, "weight_decay")) {
    train.weight_decay = as_double(*v, "train.weight_decay");
  }
  if (const ojson* v = find(j, "batch_size")) train.batch_size = as_int(*v, "train.batch_size");
  if (const ojson* v = find(j, "epochs")) train.epochs = as_int(*v, "train.epochs");
  if (const ojson* v = find(j, "seed")) train.seed = as_u64(*v, "train.seed");
  if (const ojson* v = find(j, "augment_hflip_p")) {
    train.augment_hflip_p = as_double(*v, "train.augment_hflip_p");
  }
  if (const ojson* v = find(j, "augment_crop_p")) {
    train.augment_crop_p = as_double(*v, "train.augment_crop_p");
  }
  if (const ojson* v = find(j, "crop_mode")) {
    train.crop_mode = parse_crop_mode(as_string(*v, "train.crop_mode"));
  }
  if (const ojson* v = find(j, "crop_min_scale")) {
    train.crop_min_scale = as_double(*v, "train.crop_min_scale");
  }
  if (const ojson* v = find(j, "mask")) {
    train.mask = parse_mask_spec(as_string(*v, "train.mask"));
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  ojson j = parse_json_object(text, "run config");
  require_known_keys(j, {"data", "model", "train", "output_dir"}, "run config");

  RunConfig cfg;
  cfg.model.num_classes = -1;  // unresolved until a dataset is seen

  const ojson* data = find(j, "data");
  if (data == nullptr || !data->is_object()) {
    throw ConfigError("run config: missing \"data\" section");
  }
  require_known_keys(*data, {"manifest", "root", "num_object_classes", "num_classes"}, "data");
  if (const ojson* v = find(*data, "manifest")) cfg.data.manifest = as_string(*v, "data.manifest");
  if (cfg.data.manifest.empty()) throw ConfigError("run config: data.manifest is required");
  if (const ojson* v = find(*data, "root")) cfg.data.root = as_string(*v, "data.root");
  if (const ojson* v = find(*data, "num_object_classes")) {
    cfg.data.num_object_classes = as_int(*v, "data.num_object_classes");
  }
  if (const ojson* v = find(*data, "num_classes")) {
    cfg.data.num_classes = as_int(*v, "data.num_classes");
  }

  if (const ojson* model = find(j, "model")) {
    if (!model->is_object()) throw ConfigError("run config: \"model\" must be an object");
    parse_model_section(*model, cfg.model);
  }
  if (const ojson* train = find(j, "train")) {
    if (!train->is_object()) throw ConfigError("run config: \"train\" must be an object");
    parse_train_section(*train, cfg.train);
  }
  if (const ojson* v = find(j, "output_dir")) cfg.output_dir = as_string(*v, "output_dir");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_run_override(RunConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  if (key == "data.manifest") cfg.data.manifest = value;
  else if (key == "data.root") cfg.data.root = value;
  else if (key == "data.num_object_classes") {
    cfg.data.num_object_classes = parse_int_value(value, key);
  } else if (key == "data.num_classes") cfg.data.num_classes = parse_int_value(value, key);
  else if (key == "model.d_model") cfg.model.d_model = parse_int_value(value, key);
  else if (key == "model.n_heads") cfg.model.n_heads = parse_int_value(value, key);
  else if (key == "model.n_layers") cfg.model.n_layers = parse_int_value(value, key);
  else if (key == "model.d_mlp") cfg.model.d_mlp = parse_int_value(value, key);
  else if (key == "model.dropout") cfg.model.dropout = parse_double_value(value, key);
  else if (key == "model.num_classes") cfg.model.num_classes = parse_int_value(value, key);
  else if (key == "train.lr") cfg.train.lr = parse_double_value(value, key);
  else if (key == "train.beta1") cfg.train.beta1 = parse_double_value(value, key);
  else if (key == "train.beta2") cfg.train.beta2 = parse_double_value(value, key);
  else if (key == "train.eps") cfg.train.eps = parse_double_value(value, key);
  else if (key == "train.weight_decay") cfg.train.weight_decay = parse_double_value(value, key);
  else if (key == "train.batch_size") cfg.train.batch_size = parse_int_value(value, key);
  else if (key == "train.epochs") cfg.train.epochs = parse_int_value(value, key);
  else if (key == "train.seed") cfg.train.seed = parse_u64_value(value, key);
  else if (key == "train.augment_hflip_p") {
    cfg.train.augment_hflip_p = parse_double_value(value, key);
  } else if (key == "train.augment_crop_p") {
    cfg.train.augment_crop_p = parse_double_value(value, key);
  } else if (key == "train.crop_mode") cfg.train.crop_mode = parse_crop_mode(value);
  else if (key == "train.crop_min_scale") {
    cfg.train.crop_min_scale = parse_double_value(value, key);
  } else if (key == "train.mask") cfg.train.mask = parse_mask_spec(value);
  else if (key == "output_dir") cfg.output_dir = value;
  else throw ConfigError("--set: unknown key \"" + key + "\"");
}

std::string run_config_json(const RunConfig& cfg) {
  ojson j;
  j["data"]["manifest"] = cfg.data.manifest;
  j["data"]["root"] = cfg.data.root;
  j["data"]["num_object_classes"] = cfg.data.num_object_classes;
  if (cfg.data.num_classes) j["data"]["num_classes"] = *cfg.data.num_classes;
  j["model"]["d_model"] = cfg.model.d_model;
  j["model"]["n_heads"] = cfg.model.n_heads;
  j["model"]["n_layers"] = cfg.model.n_layers;
  j["model"]["d_mlp"] = cfg.model.d_mlp;
  j["model"]["dropout"] = cfg.model.dropout;
  j["model"]["num_classes"] = cfg.model.num_classes;
  j["train"]["lr"] = cfg.train.lr;
  j["train"]["beta1"] = cfg.train.beta1;
  j["train"]["beta2"] = cfg.train.beta2;
  j["train"]["eps"] = cfg.train.eps;
  j["train"]["weight_decay"] = cfg.train.weight_decay;
  j["train"]["batch_size"] = cfg.train.batch_size;
  j["train"]["epochs"] = cfg.train.epochs;
  j["train"]["seed"] = cfg.train.seed;
  j["train"]["augment_hflip_p"] = cfg.train.augment_hflip_p;
  j["train"]["augment_crop_p"] = cfg.train.augment_crop_p;
  j["train"]["crop_mode"] = crop_mode_name(cfg.train.crop_mode);
  j["train"]["crop_min_scale"] = cfg.train.crop_min_scale;
  j["train"]["mask"] = mask_spec_string(cfg.train.mask);
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

SynthConfig parse_synth_config(const std::string& text) {
  ojson j = parse_json_object(text, "synth config");
  require_known_keys(j,
                     {"num_classes", "per_class_train", "per_class_val", "per_class_test",
                      "min_frames", "max_frames", "signal_source", "noise_sigma", "width",
                      "height", "num_object_classes", "seed"},
                     "synth config");
  SynthConfig cfg;
  if (const ojson* v = find(j, "num_classes")) cfg.num_classes = as_int(*v, "num_classes");
  if (const ojson* v = find(j, "per_class_train")) {
    cfg.per_class_train = as_int(*v, "per_class_train");
  }
  if (const ojson* v = find(j, "per_class_val")) cfg.per_class_val = as_int(*v, "per_class_val");
  if (const ojson* v = find(j, "per_class_test")) {
    cfg.per_class_test = as_int(*v, "per_class_test");
  }
  if (const ojson* v = find(j, "min_frames")) cfg.min_frames = as_int(*v, "min_frames");
  if (const ojson* v = find(j, "max_frames")) cfg.max_frames = as_int(*v, "max_frames");
  if (const ojson* v = find(j, "signal_source")) {
    cfg.signal_source = parse_signal_source(as_string(*v, "signal_source"));
  }
  if (const ojson* v = find(j, "noise_sigma")) cfg.noise_sigma = as_double(*v, "noise_sigma");
  if (const ojson* v = find(j, "width")) cfg.width = as_int(*v, "width");
  if (const ojson* v = find(j, "height")) cfg.height = as_int(*v, "height");
  if (const ojson* v = find(j, "num_object_classes")) {
    cfg.num_object_classes = as_int(*v, "num_object_classes");
  }
  if (const ojson* v = find(j, "seed")) cfg.seed = as_u64(*v, "seed");
  return cfg;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  try {
    return parse_synth_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_synth_override(SynthConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  if (key == "num_classes") cfg.num_classes = parse_int_value(value, key);
  else if (key == "per_class_train") cfg.per_class_train = parse_int_value(value, key);
  else if (key == "per_class_val") cfg.per_class_val = parse_int_value(value, key);
  else if (key == "per_class_test") cfg.per_class_test = parse_int_value(value, key);
  else if (key == "min_frames") cfg.min_frames = parse_int_value(value, key);
  else if (key == "max_frames") cfg.max_frames = parse_int_value(value, key);
  else if (key == "signal_source") cfg.signal_source = parse_signal_source(value);
  else if (key == "noise_sigma") cfg.noise_sigma = parse_double_value(value, key);
  else if (key == "width") cfg.width = parse_int_value(value, key);
  else if (key == "height") cfg.height = parse_int_value(value, key);
  else if (key == "num_object_classes") cfg.num_object_classes = parse_int_value(value, key);
  else if (key == "seed") cfg.seed = parse_u64_value(value, key);
  else throw ConfigError("--set: unknown key \"" + key + "\"");
}

std::string synth_config_json(const SynthConfig& cfg) {
  ojson j;
  j["num_classes"] = cfg.num_classes;
  j["per_class_train"] = cfg.per_class_train;
  j["per_class_val"] = cfg.per_class_val;
  j["per_class_test"] = cfg.per_class_test;
  j["min_frames"] = cfg.min_frames;
  j["max_frames"] = cfg.max_frames;
  j["signal_source"] = signal_source_name(cfg.signal_source);
  j["noise_sigma"] = cfg.noise_sigma;
  j["width"] = cfg.width;
  j["height"] = cfg.height;
  j["num_object_classes"] = cfg.num_object_classes;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

}  // namespace egoact
