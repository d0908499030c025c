#include "calimatch/config.hpp"

#include <algorithm>
#include <functional>

#include "calimatch/error.hpp"
#include "calimatch/io.hpp"

namespace calimatch {

using nlohmann::json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

namespace {

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

struct Field {
  std::string name;
  std::string type;  // JSON schema type
  std::string help;
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;  // throws ConfigError on bad input
};

template <typename T>
Field scalar(std::string name, T TrainConfig::*member, std::string help) {
  std::string type;
  if constexpr (std::is_same_v<T, bool>) {
    type = "boolean";
  } else if constexpr (std::is_integral_v<T>) {
    type = "integer";
  } else {
    type = "number";
  }
  return Field{
      name, type, std::move(help), [member](const TrainConfig& c) { return json(c.*member); },
      [member, name, type](TrainConfig& c, const json& j) {
        if constexpr (std::is_same_v<T, bool>) {
          if (!j.is_boolean()) throw ConfigError(name + ": expected boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
          if (!j.is_number_unsigned()) throw ConfigError(name + ": expected non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
          if (!j.is_number_integer()) throw ConfigError(name + ": expected integer");
        } else {
          if (!j.is_number()) throw ConfigError(name + ": expected number");
        }
        c.*member = j.get<T>();
      }};
}

template <typename E>
Field enumeration(std::string name, E TrainConfig::*member, std::string help,
                  std::function<E(const std::string&)> parse) {
  return Field{name, "string", std::move(help),
               [member](const TrainConfig& c) { return json(to_string(c.*member)); },
               [member, name, parse](TrainConfig& c, const json& j) {
                 if (!j.is_string()) throw ConfigError(name + ": expected string");
                 try {
                   c.*member = parse(j.get<std::string>());
                 } catch (const ConfigError& e) {
                   throw ConfigError(name + ": " + e.what());
                 }
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(scalar("epochs", &TrainConfig::epochs, "number of epochs E_max"));
    f.push_back(scalar("iterations_per_epoch", &TrainConfig::iterations_per_epoch,
                       "iterations per epoch; 0 = ceil(n_unlabeled / batch_size_unlabeled)"));
    f.push_back(scalar("warmup_epochs", &TrainConfig::warmup_epochs,
                       "1-based epoch from which calibration and pseudo-label terms are active"));
    f.push_back(scalar("learning_rate", &TrainConfig::learning_rate, "initial learning rate"));
    f.push_back(scalar("lr_decay_factor", &TrainConfig::lr_decay_factor,
                       "multiplier applied to the learning rate at the decay point"));
    f.push_back(scalar("lr_decay_iteration", &TrainConfig::lr_decay_iteration,
                       "iteration of the learning-rate decay; 0 = 80% of all iterations"));
    f.push_back(enumeration<OptimizerKind>("optimizer", &TrainConfig::optimizer,
                                           "adam or sgd", optimizer_from_string));
    f.push_back(scalar("batch_size_labeled", &TrainConfig::batch_size_labeled, "labeled batch size"));
    f.push_back(scalar("batch_size_unlabeled", &TrainConfig::batch_size_unlabeled,
                       "unlabeled batch size"));
    f.push_back(scalar("lambda_o", &TrainConfig::lambda_o, "weight of the OvR detector loss"));
    f.push_back(scalar("lambda_ocal", &TrainConfig::lambda_ocal,
                       "weight of the OvR calibration loss"));
    f.push_back(scalar("lambda_s", &TrainConfig::lambda_s, "weight of the soft consistency loss"));
    f.push_back(scalar("tau1", &TrainConfig::tau1, "seen-class score threshold, in (0, 1)"));
    f.push_back(scalar("tau2", &TrainConfig::tau2, "confidence threshold, in (0, 1)"));
    f.push_back(scalar("bins", &TrainConfig::bins, "bins M of the reference tables"));
    f.push_back(scalar("ece_bins", &TrainConfig::ece_bins, "bins of the reported ECE"));
    f.push_back(scalar("seed", &TrainConfig::seed, "seed for initialization, sampling, augmentation"));
    f.push_back(scalar("disable_mcal", &TrainConfig::disable_mcal,
                       "drop the classifier calibration loss"));
    f.push_back(scalar("disable_ocal", &TrainConfig::disable_ocal,
                       "drop the OvR calibration loss"));
    f.push_back(scalar("disable_ood_head", &TrainConfig::disable_ood_head,
                       "drop every OvR loss and the seen-class gate"));
    f.push_back(scalar("disable_fix", &TrainConfig::disable_fix,
                       "drop the pseudo-label loss (no unlabeled data is used)"));
    f.push_back(enumeration<OcalMinMode>("ocal_min_mode", &TrainConfig::ocal_min_mode,
                                         "verbatim or hard_negative", ocal_min_mode_from_string));
    f.push_back(enumeration<Reduction>("reduction", &TrainConfig::reduction,
                                       "batch reduction of every loss: mean or sum",
                                       reduction_from_string));
    f.push_back(Field{"hidden_dims", "array", "encoder layer widths",
                      [](const TrainConfig& c) { return json(c.hidden_dims); },
                      [](TrainConfig& c, const json& j) {
                        if (!j.is_array()) throw ConfigError("hidden_dims: expected array");
                        std::vector<int> dims;
                        for (const auto& v : j) {
                          if (!v.is_number_integer())
                            throw ConfigError("hidden_dims: expected integers");
                          dims.push_back(v.get<int>());
                        }
                        c.hidden_dims = std::move(dims);
                      }});
    f.push_back(enumeration<Activation>("activation", &TrainConfig::activation, "relu or tanh",
                                        activation_from_string));
    f.push_back(scalar("sigma_weak", &TrainConfig::sigma_weak, "weak augmentation jitter"));
    f.push_back(scalar("sigma_strong", &TrainConfig::sigma_strong, "strong augmentation jitter"));
    f.push_back(scalar("dropout", &TrainConfig::dropout,
                       "strong augmentation coordinate dropout rate, in [0, 1)"));
    f.push_back(scalar("eval_period", &TrainConfig::eval_period,
                       "epochs between validation evaluations"));
    return f;
  }();
  return all;
}

std::vector<std::string> problems_of(const TrainConfig& c) {
  std::vector<std::string> p;
  auto need = [&p](bool ok, const std::string& msg) {
    if (!ok) p.push_back(msg);
  };
  need(c.epochs >= 1, "epochs: must be at least 1");
  need(c.iterations_per_epoch >= 0, "iterations_per_epoch: must be non-negative");
  need(c.warmup_epochs >= 1, "warmup_epochs: must be at least 1");
  need(c.warmup_epochs <= c.epochs, "warmup_epochs: must not exceed epochs");
  need(c.disable_mcal && c.disable_ocal ? true : c.warmup_epochs >= 2,
       "warmup_epochs: calibration losses need tables from a finished epoch, use >= 2");
  need(c.learning_rate > 0.0, "learning_rate: must be positive");
  need(c.lr_decay_factor > 0.0 && c.lr_decay_factor <= 1.0, "lr_decay_factor: must lie in (0, 1]");
  need(c.lr_decay_iteration >= 0, "lr_decay_iteration: must be non-negative");
  need(c.batch_size_labeled >= 1, "batch_size_labeled: must be at least 1");
  need(c.batch_size_unlabeled >= 1, "batch_size_unlabeled: must be at least 1");
  need(c.lambda_o >= 0.0, "lambda_o: must be non-negative");
  need(c.lambda_ocal >= 0.0, "lambda_ocal: must be non-negative");
  need(c.lambda_s >= 0.0, "lambda_s: must be non-negative");
  need(c.tau1 > 0.0 && c.tau1 < 1.0, "tau1: must lie in (0, 1)");
  need(c.tau2 > 0.0 && c.tau2 < 1.0, "tau2: must lie in (0, 1)");
  need(c.bins >= 1, "bins: must be at least 1");
  need(c.ece_bins >= 1, "ece_bins: must be at least 1");
  need(!c.hidden_dims.empty(), "hidden_dims: must be nonempty");
  need(std::all_of(c.hidden_dims.begin(), c.hidden_dims.end(), [](int w) { return w >= 1; }),
       "hidden_dims: widths must be positive");
  need(c.sigma_weak >= 0.0, "sigma_weak: must be non-negative");
  need(c.sigma_strong >= 0.0, "sigma_strong: must be non-negative");
  need(c.dropout >= 0.0 && c.dropout < 1.0, "dropout: must lie in [0, 1)");
  need(c.eval_period >= 1, "eval_period: must be at least 1");
  return p;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_schema() {
  static const std::vector<std::pair<std::string, std::string>> schema = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.name, f.help);
    return out;
  }();
  return schema;
}

json to_json(const TrainConfig& config) {
  json doc = json::object();
  for (const auto& f : fields()) doc[f.name] = f.get(config);
  return doc;
}

TrainConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError({"config: expected a JSON object"});
  TrainConfig config;
  std::vector<std::string> problems;
  for (const auto& [key, value] : doc.items()) {
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const Field& f) { return f.name == key; });
    if (it == fields().end()) {
      problems.push_back(key + ": unknown key");
      continue;
    }
    try {
      it->set(config, value);
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    } catch (const json::exception& e) {
      problems.push_back(key + ": " + e.what());
    }
  }
  // Fields that failed to parse keep their valid defaults, so range checks add no noise.
  for (auto& p : problems_of(config)) problems.push_back(std::move(p));
  if (!problems.empty()) throw SchemaError(std::move(problems));
  return config;
}

void validate(const TrainConfig& config) {
  auto problems = problems_of(config);
  if (!problems.empty()) throw SchemaError(std::move(problems));
}

std::string config_hash(const TrainConfig& config) {
  const std::string text = to_json(config).dump();
  return hex64(fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()}));
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"calimatch", "openmatch", "fixmatch", "supervised"};
  return names;
}

void apply_preset(TrainConfig& config, const std::string& preset) {
  if (preset == "calimatch") {
    config.disable_mcal = config.disable_ocal = config.disable_ood_head = config.disable_fix = false;
  } else if (preset == "openmatch") {
    config.disable_mcal = config.disable_ocal = true;
    config.disable_ood_head = config.disable_fix = false;
  } else if (preset == "fixmatch") {
    config.disable_mcal = config.disable_ocal = config.disable_ood_head = true;
    config.disable_fix = false;
  } else if (preset == "supervised") {
    config.disable_mcal = config.disable_ocal = config.disable_ood_head = config.disable_fix = true;
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + preset + "' (valid presets: " + valid + ")");
  }
}

json config_json_schema() {
  json props = json::object();
  for (const auto& f : fields()) {
    json p{{"type", f.type}, {"description", f.help}};
    if (f.type == "array") p["items"] = {{"type", "integer"}, {"minimum", 1}};
    props[f.name] = p;
  }
  props["optimizer"]["enum"] = {"adam", "sgd"};
  props["ocal_min_mode"]["enum"] = {"verbatim", "hard_negative"};
  props["reduction"]["enum"] = {"mean", "sum"};
  props["activation"]["enum"] = {"relu", "tanh"};
  return json{{"$schema", "http://json-schema.org/draft-07/schema#"},
              {"title", "calimatch training configuration"},
              {"type", "object"},
              {"additionalProperties", false},
              {"properties", props}};
}

}  // namespace calimatch
