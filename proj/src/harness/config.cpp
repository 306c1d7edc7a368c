#include "emoflow/harness/config.hpp"

#include <fstream>
#include <sstream>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/rng.hpp"

namespace emoflow::harness {

namespace {

// One traversal drives both directions so the JSON keys cannot drift from
// the struct fields.
template <class V>
void visit(V& v, RunConfig& c) {
  v("name", c.name);
  v("preset", c.preset);
  v.block("data", [&] {
    v("sequences", c.data.sequences);
    v("heldout", c.data.heldout);
    v("length", c.data.length);
    v("coeff_dim", c.data.coeff_dim);
    v("pose_dim", c.data.pose_dim);
    v("noise", c.data.noise);
    v("seed", c.data.seed);
  });
  v.block("flow", [&] {
    v("K", c.flow.steps);
    v("tau", c.flow.tau);
    v("dropout", c.flow.dropout);
    v("lambda_con", c.flow.lambda_con);
    v("hidden", c.flow.hidden);
    v("linear_init", c.flow.linear_init);
  });
  v.block("encoders", [&] {
    v("window_radius", c.encoders.window_radius);
    v("source_features", c.encoders.source_features);
    v("audio_hidden", c.encoders.audio_hidden);
    v("audio_features", c.encoders.audio_features);
    v("history_features", c.encoders.history_features);
    v("emotion_features", c.encoders.emotion_features);
  });
  v.block("smm", [&] {
    v("C", c.smm.classes);
    v("nu", c.smm.dof);
    v("freeze_means", c.smm.freeze_means);
  });
  v.block("projection", [&] {
    v("enabled", c.projection.enabled);
    v("K_proj", c.projection.k_proj);
    v("ridge", c.projection.ridge);
  });
  v.block("pose", [&] {
    v("K", c.pose.steps);
    v("hidden", c.pose.hidden);
    v("dropout", c.pose.dropout);
  });
  v.block("vq", [&] {
    v("H", c.vq.resolution);
    v("m", c.vq.m);
    v("n", c.vq.n);
    v("d", c.vq.code_dim);
    v("N", c.vq.codes);
    v("lambda_adv", c.vq.lambda_adv);
    v("lambda_feat", c.vq.lambda_feat);
    v("widths", c.vq.widths);
    v("perceptual", c.vq.perceptual);
    v("patches", c.vq.patches);
    v("heldout_patches", c.vq.heldout_patches);
  });
  v.block("vqig", [&] {
    v("motion_dim", c.vqig.motion_dim);
    v("mapper_hidden", c.vqig.mapper_hidden);
    v("warp_grid", c.vqig.warp_grid);
    v("max_displacement", c.vqig.max_displacement);
    v("fuse_hidden", c.vqig.fuse_hidden);
    v("heads", c.vqig.heads);
    v("layers", c.vqig.layers);
    v("ff_hidden", c.vqig.ff_hidden);
    v("pairs", c.vqig.pairs);
    v("heldout_pairs", c.vqig.heldout_pairs);
    v("image_weight", c.vqig.image_weight);
    v("warmup", c.vqig.warmup);
  });
  v.block("training", [&] {
    v("lr", c.training.lr);
    v("batch", c.training.batch);
    v("consistency_batch", c.training.consistency_batch);
    v("steps", c.training.steps);
    v("seed", c.training.seed);
  });
  for (auto [key, block] : {std::pair{"pose_training", &c.pose_training}, std::pair{"codebook_training", &c.codebook_training},
                            std::pair{"vqig_training", &c.vqig_training}}) {
    v.block(key, [&] {
      v("lr", block->lr);
      v("batch", block->batch);
      v("steps", block->steps);
    });
  }
  v.block("eval", [&] {
    v("seeds", c.eval.seeds);
    v("contexts", c.eval.contexts);
    v("oracle_steps", c.eval.oracle_steps);
  });
}

class Writer {
 public:
  json out = json::object();

  template <class T>
  void operator()(const char* key, const T& value) {
    (*cur_)[key] = value;
  }
  template <class F>
  void block(const char* key, F&& body) {
    json* outer = cur_;
    (*cur_)[key] = json::object();
    cur_ = &(*cur_)[key];
    body();
    cur_ = outer;
  }

 private:
  json* cur_ = &out;
};

class Reader {
 public:
  explicit Reader(const json& j) : cur_(&j) {}

  void operator()(const char* key, std::string& value) {
    const json& v = field(key);
    if (!v.is_string()) fail(key, "a string");
    value = v.get<std::string>();
  }
  void operator()(const char* key, bool& value) {
    const json& v = field(key);
    if (!v.is_boolean()) fail(key, "a boolean");
    value = v.get<bool>();
  }
  void operator()(const char* key, double& value) {
    const json& v = field(key);
    if (!v.is_number()) fail(key, "a number");
    value = v.get<double>();
  }
  void operator()(const char* key, int& value) {
    const json& v = field(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "a 32-bit integer");
    value = static_cast<int>(x);
  }
  void operator()(const char* key, std::uint64_t& value) {
    const json& v = field(key);
    // Parsed text yields unsigned numbers; documents built in code may carry
    // signed ones, so accept either when nonnegative.
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(key, "a nonnegative integer");
    value = v.get<std::uint64_t>();
  }
  void operator()(const char* key, std::vector<int>& value) {
    const json& v = field(key);
    if (!v.is_array()) fail(key, "an array of integers");
    value.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      value.push_back(e.get<int>());
    }
  }
  template <class F>
  void block(const char* key, F&& body) {
    const json& v = field(key);
    if (!v.is_object()) fail(key, "an object");
    const json* outer = cur_;
    const std::string outer_path = path_;
    path_ += std::string(key) + ".";
    cur_ = &v;
    body();
    cur_ = outer;
    path_ = outer_path;
  }

 private:
  const json& field(const char* key) {
    auto it = cur_->find(key);
    if (it == cur_->end()) throw ConfigError("config: missing key '" + path_ + key + "'");
    return *it;
  }
  [[noreturn]] void fail(const char* key, const std::string& what) {
    throw ConfigError("config: '" + path_ + key + "' must be " + what);
  }

  const json* cur_;
  std::string path_;
};

/// Recursive overlay; only keys already present in `base` are accepted.
void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    auto slot = base.find(it.key());
    if (slot == base.end()) throw ConfigError("config: unknown key '" + key + "'");
    if (slot->is_object())
      merge_strict(*slot, it.value(), key);
    else
      *slot = it.value();  // types are checked when the merged document is read back
  }
}

bool valid_name(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) return false;
  return true;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

std::vector<std::string> preset_names() { return {"desk", "full-scale"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "full-scale") {
    // Full-size image constants; everything else stays at desk values.
    c.name = c.preset = "full-scale";
    c.vq.resolution = 512;
    c.vq.m = c.vq.n = 16;
    c.vq.code_dim = 256;
    c.vq.codes = 1024;
    c.vq.lambda_adv = 0.8;
    c.vq.lambda_feat = 0.25;
    c.vq.widths = {64, 128, 256, 256, 256};
    c.vq.perceptual = "random_conv";
    return c;
  }
  throw ConfigError("config: unknown preset '" + name + "'");
}

json to_json(const RunConfig& c) {
  RunConfig copy = c;
  Writer w;
  visit(w, copy);
  return w.out;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
  // Unknown keys are found by overlaying onto a complete document.
  json probe = to_json(RunConfig{});
  merge_strict(probe, j, "");
  RunConfig c;
  Reader r(j);
  visit(r, c);
  return c;
}

RunConfig resolve_config(const json& user, const std::optional<std::string>& preset_override) {
  if (!user.is_object()) throw ConfigError("config: document must be a JSON object");
  std::string name = "desk";
  if (auto it = user.find("preset"); it != user.end()) {
    if (!it->is_string()) throw ConfigError("config: 'preset' must be a string");
    name = it->get<std::string>();
  }
  if (preset_override) name = *preset_override;
  json merged = to_json(preset(name));
  merge_strict(merged, user, "");
  merged["preset"] = name;
  if (!user.contains("name")) merged["name"] = name;
  RunConfig c = from_json(merged);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path, const std::optional<std::string>& preset_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return resolve_config(j, preset_override);
}

void RunConfig::validate() const {
  require(valid_name(name), "name must be non-empty and use only letters, digits, '-', '_' and '.'");
  require(data.sequences >= smm.classes, "data.sequences must cover every class");
  require(data.heldout >= 1, "data.heldout >= 1 required");
  require(smm.classes >= 1 && smm.dof > 0, "smm.C >= 1 and smm.nu > 0 required");
  require(flow.linear_init == "rotation" || flow.linear_init == "identity",
          "flow.linear_init must be 'rotation' or 'identity'");
  require(flow.dropout >= 0 && flow.dropout <= 1 && pose.dropout >= 0 && pose.dropout <= 1,
          "dropout probabilities must lie in [0, 1]");
  require(flow.lambda_con >= 0, "flow.lambda_con >= 0 required");
  require(flow.steps >= 1 && flow.hidden >= 1 && pose.steps >= 1 && pose.hidden >= 1,
          "flow and pose K and hidden must be positive");
  require(projection.k_proj >= 1 && projection.ridge >= 0, "projection.K_proj >= 1 and ridge >= 0 required");
  require(vq.m == vq.n, "vq.m and vq.n must be equal (square token grids)");
  require(vq.perceptual == "identity" || vq.perceptual == "random_conv",
          "vq.perceptual must be 'identity' or 'random_conv'");
  require(vq.patches >= 1 && vq.heldout_patches >= 1, "vq patch counts must be positive");
  require(vqig.pairs >= 1 && vqig.heldout_pairs >= 1, "vqig pair counts must be positive");
  require(vqig.image_weight >= 0 && vqig.warmup >= 0, "vqig.image_weight and warmup must be nonnegative");
  require(training.consistency_batch >= 0, "training.consistency_batch >= 0 required");
  for (const auto* t : {&pose_training, &codebook_training, &vqig_training})
    require(t->lr > 0 && t->batch >= 1 && t->steps >= 0, "stage training needs lr > 0, batch >= 1, steps >= 0");
  require(training.lr > 0 && training.batch >= 1 && training.steps >= 0,
          "training needs lr > 0, batch >= 1, steps >= 0");
  require(eval.seeds >= 2 && eval.contexts >= 1 && eval.oracle_steps >= 1,
          "eval.seeds >= 2, eval.contexts >= 1 and eval.oracle_steps >= 1 required");

  scene_spec(*this).validate();
  expflow_config(*this).encoders.validate();
  poseflow_config(*this).encoders.validate();
  const vq::VqConfig v = vq_config(*this);
  v.validate();
  vqig_config(*this).validate(v);
}

std::uint64_t stage_seed(const RunConfig& c, Stage stage) {
  return numerics::mix_seed(c.training.seed, static_cast<std::uint64_t>(stage));
}

context::SceneSpec scene_spec(const RunConfig& c) {
  context::SceneSpec s = context::SceneSpec::make_default(c.data.seed, c.smm.classes, 1.0, c.data.coeff_dim);
  s.pose_dim = c.data.pose_dim;
  s.length = c.data.length;
  s.noise = c.data.noise;
  return s;
}

namespace {

context::EncoderConfig encoder_config(const RunConfig& c) {
  context::EncoderConfig e;
  e.coeff_dim = c.data.coeff_dim;
  e.pose_dim = c.data.pose_dim;
  e.classes = c.smm.classes;
  e.window_radius = c.encoders.window_radius;
  e.history = c.flow.tau;
  e.source_features = c.encoders.source_features;
  e.audio_hidden = c.encoders.audio_hidden;
  e.audio_features = c.encoders.audio_features;
  e.history_features = c.encoders.history_features;
  e.emotion_features = c.encoders.emotion_features;
  return e;
}

flow::InvLinear::Init linear_init(const std::string& s) {
  return s == "identity" ? flow::InvLinear::Init::Identity : flow::InvLinear::Init::Rotation;
}

vq::PerceptualKind perceptual(const std::string& s) {
  return s == "random_conv" ? vq::PerceptualKind::RandomConv : vq::PerceptualKind::Identity;
}

}  // namespace

gen::ExpFlowConfig expflow_config(const RunConfig& c) {
  gen::ExpFlowConfig m;
  m.dim = c.data.coeff_dim;
  m.classes = c.smm.classes;
  m.steps = c.flow.steps;
  m.hidden = c.flow.hidden;
  m.dof = c.smm.dof;
  m.freeze_means = c.smm.freeze_means;
  m.dropout = c.flow.dropout;
  m.lambda_con = c.flow.lambda_con;
  m.linear_init = linear_init(c.flow.linear_init);
  m.encoders = encoder_config(c);
  return m;
}

gen::TrainConfig expflow_train_config(const RunConfig& c) {
  gen::TrainConfig t;
  t.steps = c.training.steps;
  t.batch = c.training.batch;
  t.consistency_batch = c.training.consistency_batch;
  t.learning_rate = c.training.lr;
  t.seed = numerics::mix_seed(stage_seed(c, Stage::ExpFlow), 1);
  return t;
}

gen::PoseFlowConfig poseflow_config(const RunConfig& c) {
  gen::PoseFlowConfig m;
  m.dim = c.data.pose_dim;
  m.steps = c.pose.steps;
  m.hidden = c.pose.hidden;
  m.dropout = c.pose.dropout;
  m.linear_init = linear_init(c.flow.linear_init);
  context::EncoderConfig e = encoder_config(c);
  e.history_kind = context::EncoderKind::Identity;
  m.encoders = e;
  return m;
}

gen::TrainConfig poseflow_train_config(const RunConfig& c) {
  gen::TrainConfig t;
  t.steps = c.pose_training.steps;
  t.batch = c.pose_training.batch;
  t.consistency_batch = 0;
  t.learning_rate = c.pose_training.lr;
  t.seed = numerics::mix_seed(stage_seed(c, Stage::PoseFlow), 1);
  return t;
}

vq::VqConfig vq_config(const RunConfig& c) {
  vq::VqConfig v;
  v.image = vq::ImageShape{3, c.vq.resolution, c.vq.resolution};
  v.grid = c.vq.m;
  v.code_dim = c.vq.code_dim;
  v.codes = c.vq.codes;
  v.widths = c.vq.widths;
  return v;
}

vq::CodebookTrainConfig codebook_train_config(const RunConfig& c) {
  vq::CodebookTrainConfig t;
  t.steps = c.codebook_training.steps;
  t.batch = c.codebook_training.batch;
  t.learning_rate = c.codebook_training.lr;
  t.lambda_adv = c.vq.lambda_adv;
  t.lambda_feat = c.vq.lambda_feat;
  t.perceptual = perceptual(c.vq.perceptual);
  t.seed = numerics::mix_seed(stage_seed(c, Stage::Codebook), 1);
  return t;
}

vqig::VqigConfig vqig_config(const RunConfig& c) {
  vqig::VqigConfig v;
  v.coeff_dim = c.data.coeff_dim;
  v.pose_dim = c.data.pose_dim;
  v.motion_dim = c.vqig.motion_dim;
  v.mapper_hidden = c.vqig.mapper_hidden;
  v.warp_grid = c.vqig.warp_grid;
  v.max_displacement = c.vqig.max_displacement;
  v.fuse_hidden = c.vqig.fuse_hidden;
  v.heads = c.vqig.heads;
  v.layers = c.vqig.layers;
  v.ff_hidden = c.vqig.ff_hidden;
  return v;
}

vqig::VqigTrainConfig vqig_train_config(const RunConfig& c) {
  vqig::VqigTrainConfig t;
  t.steps = c.vqig_training.steps;
  t.batch = c.vqig_training.batch;
  t.learning_rate = c.vqig_training.lr;
  t.lambda_feat = c.vq.lambda_feat;
  t.image_weight = c.vqig.image_weight;
  t.warmup = c.vqig.warmup;
  t.lambda_adv = c.vq.lambda_adv;
  t.perceptual = perceptual(c.vq.perceptual);
  t.seed = numerics::mix_seed(stage_seed(c, Stage::Vqig), 1);
  return t;
}

}  // namespace emoflow::harness
