// Copyright 2026 The asyncdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asyncdyna/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace asyncdyna::harness {

namespace {

std::string trim(const std::string& s) {
  const size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

double parse_double(const std::string& where, const std::string& value) {
  try {
    size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos != value.size()) fail(where, "trailing characters in '" + value + "'");
    return d;
  } catch (const std::invalid_argument&) {
    fail(where, "expected a number, got '" + value + "'");
  } catch (const std::out_of_range&) {
    fail(where, "number out of range: '" + value + "'");
  }
}

int64_t parse_int(const std::string& where, const std::string& value) {
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    fail(where, "expected an integer, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& where, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  fail(where, "expected true|false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& where, const std::string& value) {
  std::vector<int> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(where, "empty list element");
    out.push_back(static_cast<int>(parse_int(where, item)));
  }
  if (out.empty()) fail(where, "empty list");
  return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& where, const std::string& value) {
  std::vector<uint64_t> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(where, "empty list element");
    const int64_t v = parse_int(where, item);
    if (v < 0) fail(where, "seeds must be non-negative");
    out.push_back(static_cast<uint64_t>(v));
  }
  if (out.empty()) fail(where, "seeds must be nonempty");
  return out;
}

nn::Activation parse_activation(const std::string& where, const std::string& value) {
  if (value == "tanh") return nn::Activation::kTanh;
  if (value == "relu") return nn::Activation::kRelu;
  fail(where, "expected tanh|relu, got '" + value + "'");
}

const char* activation_name(nn::Activation act) {
  return act == nn::Activation::kTanh ? "tanh" : "relu";
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_seeds(const std::vector<uint64_t>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Applies one key within a section; `where` is "section.key (line N)".
void set_key(ExperimentConfig* c, const std::string& section, const std::string& key,
             const std::string& value, const std::string& where) {
  auto num = [&] { return parse_double(where, value); };
  auto integer = [&] { return parse_int(where, value); };

  if (section == "experiment") {
    if (key == "env") {
      if (value != "pendulum" && value != "reacher" && value != "point_mass") {
        fail(where, "expected pendulum|reacher|point_mass, got '" + value + "'");
      }
      c->env = value;
    } else if (key == "mode") {
      try {
        c->mode = workers::run_mode_from_name(value);
      } catch (const std::invalid_argument& e) {
        fail(where, e.what());
      }
    } else if (key == "max_trajectories") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->max_trajectories = static_cast<uint64_t>(v);
    } else if (key == "seeds") {
      c->seeds = parse_seed_list(where, value);
    } else if (key == "eval_every") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->eval_every = static_cast<int>(v);
    } else if (key == "eval_episodes") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->eval_episodes = static_cast<int>(v);
    } else if (key == "out_dir") {
      c->out_dir = value;
    } else if (key == "name") {
      c->name = value;
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "env") {
    if (key == "horizon") {
      const int64_t v = integer();
      if (v < 0) fail(where, "must be >= 0");
      c->horizon = static_cast<int>(v);
    } else if (key == "dt") {
      const double v = num();
      if (v < 0.0) fail(where, "must be >= 0");
      c->dt = v;
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "policy") {
    if (key == "hidden") {
      c->policy_hidden = parse_int_list(where, value);
    } else if (key == "activation") {
      c->policy_activation = parse_activation(where, value);
    } else if (key == "log_std_init") {
      c->log_std_init = num();
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "train") {
    if (key == "gamma") {
      const double v = num();
      if (v <= 0.0 || v > 1.0) fail(where, "gamma must be in (0, 1]");
      c->gamma = v;
    } else if (key == "gae_lambda") {
      const double v = num();
      if (v < 0.0 || v > 1.0) fail(where, "gae_lambda must be in [0, 1]");
      c->gae_lambda = v;
    } else if (key == "clip") {
      const double v = num();
      if (v <= 0.0) fail(where, "clip must be > 0");
      c->clip = v;
    } else if (key == "imagined_horizon") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->imagined_horizon = static_cast<int>(v);
    } else if (key == "imagined_paths") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->imagined_paths = static_cast<int>(v);
    } else if (key == "policy_lr") {
      c->policy_lr = num();
    } else if (key == "value_lr") {
      c->value_lr = num();
    } else if (key == "entropy_coef") {
      c->entropy_coef = num();
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "ensemble") {
    if (key == "k") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->ensemble_k = static_cast<int>(v);
    } else if (key == "hidden") {
      c->ensemble_hidden = parse_int_list(where, value);
    } else if (key == "activation") {
      c->ensemble_activation = parse_activation(where, value);
    } else if (key == "lr") {
      c->ensemble_lr = num();
    } else if (key == "minibatch") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->minibatch = static_cast<int>(v);
    } else if (key == "capacity_trajectories") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->capacity_trajectories = static_cast<int>(v);
    } else if (key == "validation_fraction") {
      const double v = num();
      if (v <= 0.0 || v >= 1.0) fail(where, "must be in (0, 1)");
      c->validation_fraction = v;
    } else if (key == "beta_ema") {
      const double v = num();
      if (v < 0.0 || v >= 1.0) fail(where, "must be in [0, 1)");
      c->beta_ema = v;
    } else if (key == "early_stopping") {
      c->early_stopping = parse_bool(where, value);
    } else if (key == "max_epochs_per_iteration") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->max_epochs_per_iteration = static_cast<int>(v);
    } else if (key == "log_std_init") {
      c->model_log_std_init = num();
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "ablation") {
    if (key == "rollouts_per_phase") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->rollouts_per_phase = static_cast<int>(v);
    } else if (key == "model_epochs") {
      const int64_t v = integer();
      if (v < 1) fail(where, "must be >= 1");
      c->model_epochs = static_cast<int>(v);
    } else if (key == "policy_steps") {
      const int64_t v = integer();
      if (v < 0) fail(where, "must be >= 0");
      c->policy_steps = static_cast<int>(v);
    } else if (key == "initial_rollouts") {
      const int64_t v = integer();
      if (v < 0) fail(where, "must be >= 0");
      c->initial_rollouts = static_cast<int>(v);
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "pacing") {
    if (key == "speed") {
      const double v = num();
      if (v <= 0.0) fail(where, "must be > 0");
      c->speed = v;
    } else {
      fail(where, "unknown key");
    }
  } else if (section == "cost") {
    if (key == "rollout_duration") {
      const double v = num();
      if (v < 0.0) fail(where, "must be >= 0 (0 derives horizon*dt/speed)");
      c->rollout_duration = v;
    } else if (key == "epoch_duration") {
      const double v = num();
      if (v <= 0.0) fail(where, "must be > 0");
      c->epoch_duration = v;
    } else if (key == "grad_step_duration") {
      const double v = num();
      if (v <= 0.0) fail(where, "must be > 0");
      c->grad_step_duration = v;
    } else {
      fail(where, "unknown key");
    }
  } else {
    fail(where, "unknown section");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::stringstream stream(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, line)) {
    line_no += 1;
    const size_t comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        fail("line " + std::to_string(line_no), "malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail("line " + std::to_string(line_no), "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      fail("line " + std::to_string(line_no), "key '" + key + "' outside any section");
    }
    if (key.empty()) fail("line " + std::to_string(line_no), "empty key");
    set_key(&config, section, key,
            value, section + "." + key + " (line " + std::to_string(line_no) + ")");
  }
  return config;
}

std::string ExperimentConfig::run_name() const {
  if (!name.empty()) return name;
  return env + "_" + workers::run_mode_name(mode);
}

workers::RunConfig ExperimentConfig::to_run_config(uint64_t seed) const {
  workers::RunConfig rc;
  rc.env_name = env;
  rc.horizon = horizon;
  rc.dt = dt;
  rc.mode = mode;
  rc.max_trajectories = max_trajectories;
  rc.seed = seed;
  rc.policy.hidden = policy_hidden;
  rc.policy.activation = policy_activation;
  rc.policy.log_std_init = log_std_init;
  rc.train.gamma = gamma;
  rc.train.gae_lambda = gae_lambda;
  rc.train.clip = clip;
  rc.train.imagined_horizon = imagined_horizon;
  rc.train.imagined_paths = imagined_paths;
  rc.train.policy_lr = policy_lr;
  rc.train.value_lr = value_lr;
  rc.train.entropy_coef = entropy_coef;
  rc.ensemble.k = ensemble_k;
  rc.ensemble.hidden = ensemble_hidden;
  rc.ensemble.activation = ensemble_activation;
  rc.ensemble.lr = ensemble_lr;
  rc.ensemble.minibatch = minibatch;
  rc.ensemble.log_std_init = model_log_std_init;
  rc.buffer_capacity_trajectories = static_cast<size_t>(capacity_trajectories);
  rc.validation_fraction = validation_fraction;
  rc.beta_ema = beta_ema;
  rc.early_stopping = early_stopping;
  rc.max_model_epochs_per_iteration = max_epochs_per_iteration;
  rc.ablation.rollouts_per_phase = rollouts_per_phase;
  rc.ablation.model_epochs = model_epochs;
  rc.ablation.policy_steps = policy_steps;
  rc.ablation.initial_rollouts = initial_rollouts;
  rc.speed_multiplier = speed;
  rc.cost.rollout_duration = rollout_duration;
  rc.cost.epoch_duration = epoch_duration;
  rc.cost.grad_step_duration = grad_step_duration;
  rc.eval_every = eval_every;
  rc.eval_episodes = eval_episodes;
  return rc;
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "env = " << c.env << "\n";
  out << "mode = " << workers::run_mode_name(c.mode) << "\n";
  out << "max_trajectories = " << c.max_trajectories << "\n";
  out << "seeds = " << join_seeds(c.seeds) << "\n";
  out << "eval_every = " << c.eval_every << "\n";
  out << "eval_episodes = " << c.eval_episodes << "\n";
  out << "out_dir = " << c.out_dir << "\n";
  if (!c.name.empty()) out << "name = " << c.name << "\n";
  out << "\n[env]\n";
  out << "horizon = " << c.horizon << "\n";
  out << "dt = " << format_double(c.dt) << "\n";
  out << "\n[policy]\n";
  out << "hidden = " << join_ints(c.policy_hidden) << "\n";
  out << "activation = " << activation_name(c.policy_activation) << "\n";
  out << "log_std_init = " << format_double(c.log_std_init) << "\n";
  out << "\n[train]\n";
  out << "gamma = " << format_double(c.gamma) << "\n";
  out << "gae_lambda = " << format_double(c.gae_lambda) << "\n";
  out << "clip = " << format_double(c.clip) << "\n";
  out << "imagined_horizon = " << c.imagined_horizon << "\n";
  out << "imagined_paths = " << c.imagined_paths << "\n";
  out << "policy_lr = " << format_double(c.policy_lr) << "\n";
  out << "value_lr = " << format_double(c.value_lr) << "\n";
  out << "entropy_coef = " << format_double(c.entropy_coef) << "\n";
  out << "\n[ensemble]\n";
  out << "k = " << c.ensemble_k << "\n";
  out << "hidden = " << join_ints(c.ensemble_hidden) << "\n";
  out << "activation = " << activation_name(c.ensemble_activation) << "\n";
  out << "lr = " << format_double(c.ensemble_lr) << "\n";
  out << "minibatch = " << c.minibatch << "\n";
  out << "capacity_trajectories = " << c.capacity_trajectories << "\n";
  out << "validation_fraction = " << format_double(c.validation_fraction) << "\n";
  out << "beta_ema = " << format_double(c.beta_ema) << "\n";
  out << "early_stopping = " << (c.early_stopping ? "true" : "false") << "\n";
  out << "max_epochs_per_iteration = " << c.max_epochs_per_iteration << "\n";
  out << "log_std_init = " << format_double(c.model_log_std_init) << "\n";
  out << "\n[ablation]\n";
  out << "rollouts_per_phase = " << c.rollouts_per_phase << "\n";
  out << "model_epochs = " << c.model_epochs << "\n";
  out << "policy_steps = " << c.policy_steps << "\n";
  out << "initial_rollouts = " << c.initial_rollouts << "\n";
  out << "\n[pacing]\n";
  out << "speed = " << format_double(c.speed) << "\n";
  out << "\n[cost]\n";
  out << "rollout_duration = " << format_double(c.rollout_duration) << "\n";
  out << "epoch_duration = " << format_double(c.epoch_duration) << "\n";
  out << "grad_step_duration = " << format_double(c.grad_step_duration) << "\n";
  return out.str();
}

void apply_override(ExperimentConfig* config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    fail(assignment, "override must look like section.key=value");
  }
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const size_t dot = path.find('.');
  if (dot == std::string::npos) {
    fail(assignment, "override key must be section.key");
  }
  set_key(config, path.substr(0, dot), path.substr(dot + 1), value,
          "override " + path);
}

}  // namespace asyncdyna::harness
