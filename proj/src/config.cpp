#include "stllm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "stllm/errors.hpp"

namespace stllm {

namespace pt = boost::property_tree;

std::string to_string(AdapterKind kind) { return kind == AdapterKind::CtcCollapse ? "ctc_collapse" : "conv5x5"; }

namespace {

AdapterKind parse_kind(const std::string& s) {
  if (s == "ctc_collapse") return AdapterKind::CtcCollapse;
  if (s == "conv5x5") return AdapterKind::Conv5x5;
  throw ConfigError("adapter.kind must be ctc_collapse or conv5x5, got '" + s + "'");
}

LabelSource parse_labels(const std::string& s) {
  if (s == "manifest") return LabelSource::Manifest;
  if (s == "classifier") return LabelSource::Classifier;
  throw ConfigError("adapter.labels must be manifest or classifier, got '" + s + "'");
}

std::set<std::string> parse_targets(const std::string& s) {
  std::set<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.insert(item.substr(b, e - b + 1));
  }
  return out;
}

std::string join_targets(const std::set<std::string>& targets) {
  std::string out;
  for (const auto& t : targets) out += (out.empty() ? "" : ",") + t;
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      return parse_bool(*node);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return *node;
    } else {
      std::istringstream in(*node);
      T v;
      in >> v;
      if (!in || !(in >> std::ws).eof()) throw ConfigError("");
      return v;
    }
  } catch (const ConfigError&) {
    throw ConfigError("config: bad value '" + *node + "' for " + key);
  }
}

const std::set<std::string> kKnownKeys = {
    "model.precision",       "model.feature_dim",     "model.d_model",        "model.layers",
    "model.heads",           "model.d_ff",            "model.max_positions",  "model.tied_head",
    "model.embedding_std",   "model.head_std",        "model.init_seed",      "adapter.kind",
    "adapter.keep_blanks",   "adapter.blank_id",      "adapter.conv_d_out",   "adapter.labels",
    "adapter.classifier_steps", "adapter.classifier_lr", "lora.enabled",      "lora.rank",
    "lora.alpha",            "lora.targets",          "lora.init_std",        "lora.freeze_all",
    "train.peak_lr",         "train.warmup_steps",
    "train.total_steps",     "train.beta1",           "train.beta2",          "train.eps",
    "train.weight_decay",    "train.batch_size",      "train.seed",           "decode.beam",
    "decode.max_len",        "decode.length_penalty"};

PipelineConfig from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body)
      if (!kKnownKeys.contains(section + "." + key)) throw ConfigError("config: unknown key " + section + "." + key);
  }
  PipelineConfig c;
  c.precision = get(tree, "model.precision", c.precision);
  c.feature_dim = get(tree, "model.feature_dim", c.feature_dim);
  c.lm.d_model = get(tree, "model.d_model", c.lm.d_model);
  c.lm.n_layers = get(tree, "model.layers", c.lm.n_layers);
  c.lm.n_heads = get(tree, "model.heads", c.lm.n_heads);
  c.lm.d_ff = get(tree, "model.d_ff", c.lm.d_ff);
  c.lm.max_positions = get(tree, "model.max_positions", c.lm.max_positions);
  c.lm.tied_head = get(tree, "model.tied_head", c.lm.tied_head);
  c.init.embedding_std = get(tree, "model.embedding_std", c.init.embedding_std);
  c.init.head_std = get(tree, "model.head_std", c.init.head_std);
  c.init_seed = get(tree, "model.init_seed", c.init_seed);

  c.adapter.kind = parse_kind(get(tree, "adapter.kind", to_string(c.adapter.kind)));
  c.adapter.keep_blanks = get(tree, "adapter.keep_blanks", c.adapter.keep_blanks);
  c.adapter.blank_id = get(tree, "adapter.blank_id", c.adapter.blank_id);
  c.adapter.conv_d_out = get(tree, "adapter.conv_d_out", c.adapter.conv_d_out);
  c.adapter.labels = parse_labels(get(tree, "adapter.labels", std::string("manifest")));
  c.adapter.classifier_steps = get(tree, "adapter.classifier_steps", c.adapter.classifier_steps);
  c.adapter.classifier_lr = get(tree, "adapter.classifier_lr", c.adapter.classifier_lr);

  c.lora.enabled = get(tree, "lora.enabled", c.lora.enabled);
  c.lora.rank = get(tree, "lora.rank", c.lora.rank);
  c.lora.alpha = get(tree, "lora.alpha", c.lora.alpha);
  c.lora.init_std = get(tree, "lora.init_std", c.lora.init_std);
  c.lora.freeze_all = get(tree, "lora.freeze_all", c.lora.freeze_all);
  if (tree.get_optional<std::string>("lora.targets")) c.lora.targets = parse_targets(tree.get<std::string>("lora.targets"));

  c.train.peak_lr = get(tree, "train.peak_lr", c.train.peak_lr);
  c.train.warmup_steps = get(tree, "train.warmup_steps", c.train.warmup_steps);
  c.train.total_steps = get(tree, "train.total_steps", c.train.total_steps);
  c.train.beta1 = get(tree, "train.beta1", c.train.beta1);
  c.train.beta2 = get(tree, "train.beta2", c.train.beta2);
  c.train.eps = get(tree, "train.eps", c.train.eps);
  c.train.weight_decay = get(tree, "train.weight_decay", c.train.weight_decay);
  c.train.batch_size = get(tree, "train.batch_size", c.train.batch_size);
  c.train.seed = get(tree, "train.seed", c.train.seed);

  c.decode.beam = get(tree, "decode.beam", c.decode.beam);
  c.decode.max_len = get(tree, "decode.max_len", c.decode.max_len);
  c.decode.length_penalty = get(tree, "decode.length_penalty", c.decode.length_penalty);
  return c;
}

}  // namespace

void PipelineConfig::validate() const {
  if (precision != 32 && precision != 64) throw ConfigError("model.precision must be 32 or 64");
  if (feature_dim < 0) throw ConfigError("model.feature_dim must be >= 0");
  if (lm.d_model < 1 || lm.n_heads < 1 || lm.d_model % lm.n_heads != 0)
    throw ConfigError("model.d_model must be a positive multiple of model.heads");
  if (lm.n_layers < 0 || lm.n_layers > 4) throw ConfigError("model.layers must be in [0, 4]");
  if (lm.d_ff < 1 || lm.max_positions < 4) throw ConfigError("model.d_ff / model.max_positions too small");
  if (adapter.conv_d_out < 0) throw ConfigError("adapter.conv_d_out must be >= 0");
  if (adapter.blank_id < 0) throw ConfigError("adapter.blank_id must be >= 0");
  if (adapter.classifier_steps < 0) throw ConfigError("adapter.classifier_steps must be >= 0");
  if (lora.rank < 1) throw ConfigError("lora.rank must be >= 1");
  if (!(lora.init_std >= 0)) throw ConfigError("lora.init_std must be >= 0");
  for (const auto& t : lora.targets)
    if (t != "wq" && t != "wk" && t != "wv" && t != "wo" && t != "w1" && t != "w2")
      throw ConfigError("lora.targets: unknown matrix '" + t + "'");
  train.validate();
  if (decode.beam < 1) throw ConfigError("decode.beam must be >= 1");
  if (decode.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
}

PipelineConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const PipelineConfig c = from_tree(tree);
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_ini(const PipelineConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[model]\n"
    << "precision = " << c.precision << "\n"
    << "feature_dim = " << c.feature_dim << "\n"
    << "d_model = " << c.lm.d_model << "\n"
    << "layers = " << c.lm.n_layers << "\n"
    << "heads = " << c.lm.n_heads << "\n"
    << "d_ff = " << c.lm.d_ff << "\n"
    << "max_positions = " << c.lm.max_positions << "\n"
    << "tied_head = " << b(c.lm.tied_head) << "\n"
    << "embedding_std = " << num(c.init.embedding_std) << "\n"
    << "head_std = " << num(c.init.head_std) << "\n"
    << "init_seed = " << c.init_seed << "\n\n"
    << "[adapter]\n"
    << "kind = " << to_string(c.adapter.kind) << "\n"
    << "keep_blanks = " << b(c.adapter.keep_blanks) << "\n"
    << "blank_id = " << c.adapter.blank_id << "\n"
    << "conv_d_out = " << c.adapter.conv_d_out << "\n"
    << "labels = " << (c.adapter.labels == LabelSource::Manifest ? "manifest" : "classifier") << "\n"
    << "classifier_steps = " << c.adapter.classifier_steps << "\n"
    << "classifier_lr = " << num(c.adapter.classifier_lr) << "\n\n"
    << "[lora]\n"
    << "enabled = " << b(c.lora.enabled) << "\n"
    << "rank = " << c.lora.rank << "\n"
    << "alpha = " << num(c.lora.alpha) << "\n"
    << "targets = " << join_targets(c.lora.targets) << "\n"
    << "init_std = " << num(c.lora.init_std) << "\n"
    << "freeze_all = " << b(c.lora.freeze_all) << "\n\n"
    << "[train]\n"
    << "peak_lr = " << num(c.train.peak_lr) << "\n"
    << "warmup_steps = " << c.train.warmup_steps << "\n"
    << "total_steps = " << c.train.total_steps << "\n"
    << "beta1 = " << num(c.train.beta1) << "\n"
    << "beta2 = " << num(c.train.beta2) << "\n"
    << "eps = " << num(c.train.eps) << "\n"
    << "weight_decay = " << num(c.train.weight_decay) << "\n"
    << "batch_size = " << c.train.batch_size << "\n"
    << "seed = " << c.train.seed << "\n\n"
    << "[decode]\n"
    << "beam = " << c.decode.beam << "\n"
    << "max_len = " << c.decode.max_len << "\n"
    << "length_penalty = " << num(c.decode.length_penalty) << "\n";
  return o.str();
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  pt::ptree tree;
  std::istringstream in(to_ini(cfg));
  pt::read_ini(in, tree);
  tree.put(assignment.substr(0, eq), assignment.substr(eq + 1));
  cfg = from_tree(tree);
}

std::uint64_t architecture_hash(const PipelineConfig& c) {
  std::ostringstream o;
  o << c.precision << '|' << c.feature_dim << '|' << c.lm.d_model << '|' << c.lm.n_layers << '|' << c.lm.n_heads
    << '|' << c.lm.d_ff << '|' << c.lm.max_positions << '|' << c.lm.tied_head << '|' << to_string(c.adapter.kind)
    << '|' << c.adapter.conv_d_out << '|' << c.lora.enabled << '|' << c.lora.rank << '|' << num(c.lora.alpha) << '|'
    << join_targets(c.lora.targets);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : o.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace stllm
