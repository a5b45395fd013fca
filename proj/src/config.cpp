#include "freqlens/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "freqlens/io.hpp"
#include "freqlens/quant.hpp"

namespace freqlens {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int64_t parse_int(const std::string& s) {
  size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  std::string v = s;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

struct Pending {
  std::optional<std::vector<std::string>> attacks;
  float epsilon = 8.0f / 255.0f;
  float alpha = 2.0f / 255.0f;
  float sigma = 0.1f;
  float kappa = 0.0f;
  std::optional<uint64_t> data_seed;
};

using Setter = std::function<void(ExperimentConfig&, Pending&, const std::string&)>;

void attack_keys(std::map<std::string, Setter>& s, const std::string& section, AttackSpec TrainConfig::*member) {
  s[section + ".kind"] = [member](auto& c, auto&, const auto& v) { (c.train.*member).kind = attack_kind_from_string(v); };
  s[section + ".epsilon"] = [member](auto& c, auto&, const auto& v) {
    (c.train.*member).epsilon = static_cast<float>(parse_number(v));
  };
  s[section + ".alpha"] = [member](auto& c, auto&, const auto& v) {
    (c.train.*member).alpha = static_cast<float>(parse_number(v));
  };
  s[section + ".steps"] = [member](auto& c, auto&, const auto& v) {
    (c.train.*member).steps = static_cast<int>(parse_int(v));
  };
  s[section + ".random_start"] = [member](auto& c, auto&, const auto& v) {
    (c.train.*member).random_start = parse_bool(v);
  };
}

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["run.name"] = [](auto& c, auto&, const auto& v) { c.name = v; };
    s["run.seed"] = [](auto& c, auto&, const auto& v) { c.seed = static_cast<uint64_t>(parse_int(v)); };
    s["run.output_dir"] = [](auto& c, auto&, const auto& v) { c.output_dir = v; };
    s["run.mode"] = [](auto& c, auto&, const auto& v) {
      if (v != "natural" && v != "adversarial") throw std::invalid_argument("mode must be natural or adversarial");
      c.train.adversarial = v == "adversarial";
    };

    s["data.source"] = [](auto& c, auto&, const auto& v) {
      if (v != "synth" && v != "cifar10") throw std::invalid_argument("source must be synth or cifar10");
      c.data.source = v;
    };
    s["data.cifar_dir"] = [](auto& c, auto&, const auto& v) { c.data.cifar_dir = v; };
    s["data.classes"] = [](auto& c, auto&, const auto& v) { c.data.classes = static_cast<int>(parse_int(v)); };
    s["data.train_limit"] = [](auto& c, auto&, const auto& v) { c.data.train_limit = parse_int(v); };
    s["data.test_limit"] = [](auto& c, auto&, const auto& v) { c.data.test_limit = parse_int(v); };
    s["data.seed"] = [](auto&, auto& p, const auto& v) { p.data_seed = static_cast<uint64_t>(parse_int(v)); };
    s["data.n_per_class"] = [](auto& c, auto&, const auto& v) { c.data.synth.n_per_class = static_cast<int>(parse_int(v)); };
    s["data.test_per_class"] = [](auto& c, auto&, const auto& v) {
      c.data.synth.test_per_class = static_cast<int>(parse_int(v));
    };
    s["data.size"] = [](auto& c, auto&, const auto& v) { c.data.synth.size = static_cast<int>(parse_int(v)); };
    s["data.channels"] = [](auto& c, auto&, const auto& v) { c.data.synth.channels = static_cast<int>(parse_int(v)); };
    s["data.lf_amplitude"] = [](auto& c, auto&, const auto& v) { c.data.synth.lf_amplitude = static_cast<float>(parse_number(v)); };
    s["data.nuisance_amplitude"] = [](auto& c, auto&, const auto& v) {
      c.data.synth.nuisance_amplitude = static_cast<float>(parse_number(v));
    };
    s["data.hf_amplitude"] = [](auto& c, auto&, const auto& v) { c.data.synth.hf_amplitude = static_cast<float>(parse_number(v)); };
    s["data.noise_sigma"] = [](auto& c, auto&, const auto& v) { c.data.synth.noise_sigma = static_cast<float>(parse_number(v)); };

    s["model.depth_blocks"] = [](auto& c, auto&, const auto& v) { c.model.depth_blocks = static_cast<int>(parse_int(v)); };
    s["model.width"] = [](auto& c, auto&, const auto& v) { c.model.width = static_cast<int>(parse_int(v)); };
    s["model.quant_bits"] = [](auto& c, auto&, const auto& v) { c.model.quant_bits = static_cast<int>(parse_int(v)); };
    s["model.fat"] = [](auto& c, auto&, const auto& v) { c.model.fat = parse_bool(v); };

    s["train.epochs"] = [](auto& c, auto&, const auto& v) { c.train.epochs = static_cast<int>(parse_int(v)); };
    s["train.batch_size"] = [](auto& c, auto&, const auto& v) { c.train.batch_size = parse_int(v); };
    s["train.lr"] = [](auto& c, auto&, const auto& v) { c.train.lr = static_cast<float>(parse_number(v)); };
    s["train.momentum"] = [](auto& c, auto&, const auto& v) { c.train.momentum = static_cast<float>(parse_number(v)); };
    s["train.weight_decay"] = [](auto& c, auto&, const auto& v) { c.train.weight_decay = static_cast<float>(parse_number(v)); };
    s["train.lr_decay"] = [](auto& c, auto&, const auto& v) { c.train.lr_decay = parse_lr_decay(v); };
    s["train.augmentation"] = [](auto& c, auto&, const auto& v) { c.train.augmentation = aug_mode_from_string(v); };
    s["train.beta_a"] = [](auto& c, auto&, const auto& v) { c.train.beta_a = parse_number(v); };
    s["train.beta_b"] = [](auto& c, auto&, const auto& v) { c.train.beta_b = parse_number(v); };
    s["train.probe_ratio"] = [](auto& c, auto&, const auto& v) { c.train.probe_ratio = parse_bool(v); };
    s["train.probe_size"] = [](auto& c, auto&, const auto& v) { c.train.probe_size = parse_int(v); };
    s["train.crop_pad"] = [](auto& c, auto&, const auto& v) { c.train.crop_pad = static_cast<int>(parse_int(v)); };
    s["train.hflip"] = [](auto& c, auto&, const auto& v) { c.train.hflip = parse_bool(v); };
    s["train.holdout"] = [](auto& c, auto&, const auto& v) { c.train.holdout = parse_int(v); };
    attack_keys(s, "inner_attack", &TrainConfig::inner_attack);
    attack_keys(s, "holdout_attack", &TrainConfig::holdout_attack);

    s["eval.attacks"] = [](auto&, auto& p, const auto& v) { p.attacks = split_list(v); };
    s["eval.epsilon"] = [](auto&, auto& p, const auto& v) { p.epsilon = static_cast<float>(parse_number(v)); };
    s["eval.alpha"] = [](auto&, auto& p, const auto& v) { p.alpha = static_cast<float>(parse_number(v)); };
    s["eval.gn_sigma"] = [](auto&, auto& p, const auto& v) { p.sigma = static_cast<float>(parse_number(v)); };
    s["eval.kappa"] = [](auto&, auto& p, const auto& v) { p.kappa = static_cast<float>(parse_number(v)); };
    s["eval.lpf_degree"] = [](auto& c, auto&, const auto& v) {
      if (v == "none") {
        c.eval.lpf_degree.reset();
      } else {
        c.eval.lpf_degree = static_cast<int>(parse_int(v));
      }
    };
    s["eval.oblivious_attacker"] = [](auto& c, auto&, const auto& v) { c.eval.oblivious_attacker = parse_bool(v); };
    s["eval.examples"] = [](auto& c, auto&, const auto& v) { c.eval.examples = parse_int(v); };
    s["eval.batch_size"] = [](auto& c, auto&, const auto& v) { c.eval.batch_size = parse_int(v); };
    s["eval.cka_examples"] = [](auto& c, auto&, const auto& v) { c.eval.cka_examples = parse_int(v); };

    s["sweep.axis"] = [](auto& c, auto&, const auto& v) {
      if (v != "lpf_degree" && v != "batch_size" && v != "quant_bits" && v != "augmentation") {
        throw std::invalid_argument("sweep axis must be lpf_degree, batch_size, quant_bits or augmentation");
      }
      c.sweep.axis = v;
    };
    s["sweep.values"] = [](auto& c, auto&, const auto& v) { c.sweep.values = split_list(v); };
    return s;
  }();
  return table;
}

struct Located {
  std::string value;
  int line = 0;
  std::string origin;
};

ExperimentConfig resolve(const std::map<std::string, Located>& raw) {
  ExperimentConfig cfg;
  Pending pending;
  const auto& table = schema();
  for (const auto& [key, loc] : raw) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(loc.origin, loc.line, "unknown key '" + key + "'");
    try {
      it->second(cfg, pending, loc.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(loc.origin, loc.line, key + ": " + e.what());
    }
    cfg.assignments[key] = loc.value;
  }
  auto fail_at = [&raw](const std::string& key, const std::string& msg) {
    auto it = raw.find(key);
    if (it != raw.end()) throw ConfigError(it->second.origin, it->second.line, key + ": " + msg);
    throw ConfigError("<config>", 0, msg);
  };

  cfg.train.seed = cfg.seed;
  cfg.data.synth.seed = pending.data_seed.value_or(cfg.seed);
  cfg.data.synth.classes = cfg.data.classes;
  cfg.model.num_classes = cfg.data.classes;
  if (cfg.data.source == "synth") {
    cfg.model.in_channels = cfg.data.synth.channels;
    cfg.model.image_size = cfg.data.synth.size;
  } else {
    cfg.model.in_channels = 3;
    cfg.model.image_size = 32;
    if (cfg.data.cifar_dir.empty()) fail_at("data.source", "cifar10 source requires data.cifar_dir");
  }
  if (cfg.data.classes < 2) fail_at("data.classes", "at least 2 classes are required");

  try {
    if (pending.attacks) {
      cfg.eval.attacks.clear();
      for (const auto& tok : *pending.attacks) {
        cfg.eval.attacks.push_back(parse_attack_token(tok, pending.epsilon, pending.alpha, pending.sigma, pending.kappa));
      }
    } else {
      cfg.eval.attacks = standard_attack_suite(pending.sigma);
      for (auto& a : cfg.eval.attacks) {
        if (a.kind == AttackKind::GN) continue;
        a.epsilon = pending.epsilon;
        a.alpha = a.kind == AttackKind::FGSM ? pending.epsilon : pending.alpha;
        a.kappa = pending.kappa;
      }
    }
    for (const auto& a : cfg.eval.attacks) a.validate();
  } catch (const std::exception& e) {
    fail_at("eval.attacks", e.what());
  }
  cfg.train.eval_attacks = cfg.eval.attacks;
  cfg.train.eval_examples = cfg.eval.examples;

  try {
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError("<config>", 0, e.what());
  }
  if (!valid_quant_bits(cfg.model.quant_bits)) fail_at("model.quant_bits", "must be one of 2, 4, 8, 32");
  if (cfg.model.depth_blocks < 1 || cfg.model.width < 1) fail_at("model.depth_blocks", "depth and width must be >= 1");
  if (cfg.eval.batch_size < 1) fail_at("eval.batch_size", "must be >= 1");
  if (cfg.eval.cka_examples < 2) fail_at("eval.cka_examples", "must be >= 2");
  return cfg;
}

std::map<std::string, Located> parse_raw(const std::string& text, const std::string& origin) {
  std::map<std::string, Located> raw;
  std::istringstream in(text);
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(origin, n, "malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(origin, n, "expected 'key = value', got '" + t + "'");
    if (section.empty()) throw ConfigError(origin, n, "key outside of any [section]");
    const std::string key = section + "." + trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    if (!schema().count(key)) throw ConfigError(origin, n, "unknown key '" + key + "'");
    if (raw.count(key)) throw ConfigError(origin, n, "duplicate key '" + key + "'");
    raw[key] = Located{value, n, origin};
  }
  return raw;
}

}  // namespace

double parse_number(const std::string& text) {
  const std::string t = trim(text);
  const auto slash = t.find('/');
  size_t used = 0;
  if (slash != std::string::npos) {
    const std::string a = trim(t.substr(0, slash)), b = trim(t.substr(slash + 1));
    const double num = std::stod(a, &used);
    if (used != a.size()) throw std::invalid_argument("bad number '" + text + "'");
    const double den = std::stod(b, &used);
    if (used != b.size() || den == 0.0) throw std::invalid_argument("bad number '" + text + "'");
    return num / den;
  }
  const double v = std::stod(t, &used);
  if (used != t.size()) throw std::invalid_argument("bad number '" + text + "'");
  return v;
}

AttackSpec parse_attack_token(const std::string& token, float epsilon, float alpha, float sigma, float kappa) {
  const auto dash = token.find('-');
  const AttackKind kind = attack_kind_from_string(token.substr(0, dash));
  int steps = 20;
  if (dash != std::string::npos) steps = static_cast<int>(parse_int(token.substr(dash + 1)));
  switch (kind) {
    case AttackKind::GN: return AttackSpec::gn(sigma);
    case AttackKind::FGSM: return AttackSpec::fgsm(epsilon);
    case AttackKind::PGD: return AttackSpec::pgd(steps, epsilon, alpha);
    case AttackKind::BIM: return AttackSpec::bim(steps, epsilon, alpha);
    case AttackKind::TPGD: return AttackSpec::tpgd(steps, epsilon, alpha);
    case AttackKind::CW: return AttackSpec::cw(steps, epsilon, alpha, kappa);
  }
  throw std::invalid_argument("unknown attack '" + token + "'");
}

std::vector<LrStep> parse_lr_decay(const std::string& text) {
  std::vector<LrStep> out;
  if (trim(text) == "none") return out;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("lr_decay entries are epoch:factor, got '" + item + "'");
    out.push_back({static_cast<int>(parse_int(trim(item.substr(0, colon)))),
                   static_cast<float>(parse_number(item.substr(colon + 1)))});
  }
  return out;
}

std::string ExperimentConfig::canonical_text() const {
  std::string out, section;
  for (const auto& [key, value] : assignments) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical_text())); }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  return resolve(parse_raw(text, origin));
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return;
  std::map<std::string, Located> raw;
  for (const auto& [k, v] : cfg.assignments) raw[k] = Located{v, 0, "<config>"};
  int n = 0;
  for (const auto& o : overrides) {
    ++n;
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set", n, "expected section.key=value, got '" + o + "'");
    const std::string key = trim(o.substr(0, eq));
    if (!schema().count(key)) throw ConfigError("--set", n, "unknown key '" + key + "'");
    raw[key] = Located{trim(o.substr(eq + 1)), n, "--set"};
  }
  cfg = resolve(raw);
}

}  // namespace freqlens
