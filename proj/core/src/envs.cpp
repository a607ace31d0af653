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

#include "asyncdyna/envs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "asyncdyna/error.hpp"
#include "asyncdyna/nn.hpp"

namespace asyncdyna::envs {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double theta) {
  // Wraps to (-pi, pi].
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

void check_action(const std::vector<double>& action, const EnvSpec& spec) {
  if (static_cast<int>(action.size()) != spec.act_dim) {
    throw std::invalid_argument("env step: action dimension mismatch");
  }
  for (double a : action) {
    if (!std::isfinite(a)) throw NumericError("env step: non-finite action");
  }
}

}  // namespace

double lorentzian_reward(double d, const RewardParams& rp) {
  return -rp.omega * d * d - rp.v * std::log(d * d + rp.alpha);
}

void Env::override_spec(int horizon, double dt) {
  if (horizon < 0 || dt < 0.0) {
    throw std::invalid_argument("env overrides must be non-negative");
  }
  if (horizon > 0) spec_.horizon = horizon;
  if (dt > 0.0) spec_.dt = dt;
}

std::vector<double> Env::clip_action(const std::vector<double>& action) const {
  std::vector<double> clipped(action.size());
  for (size_t i = 0; i < action.size(); ++i) {
    clipped[i] = std::clamp(action[i], spec_.action_low[i], spec_.action_high[i]);
  }
  return clipped;
}

// -- pendulum -----------------------------------------------------------------

PendulumEnv::PendulumEnv() {
  spec_.obs_dim = 3;
  spec_.act_dim = 1;
  spec_.horizon = 200;
  spec_.dt = 0.05;
  spec_.action_low = {-kMaxTorque};
  spec_.action_high = {kMaxTorque};
}

std::vector<double> PendulumEnv::observe() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

std::vector<double> PendulumEnv::reset(uint64_t seed) {
  Rng rng(seed);
  theta_ = rng.uniform(-kPi, kPi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  step_count_ = 0;
  return observe();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
  step_count_ = 0;
}

double PendulumEnv::energy() const {
  const double inertia = kMass * kLength * kLength / 3.0;
  return 0.5 * inertia * theta_dot_ * theta_dot_ +
         kMass * kGravity * (kLength / 2.0) * std::cos(theta_);
}

StepResult PendulumEnv::step(const std::vector<double>& action) {
  check_action(action, spec_);
  const double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  const double r = reward(observe(), action);

  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + accel * spec_.dt, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * spec_.dt;

  step_count_ += 1;
  return {observe(), r, step_count_ >= spec_.horizon};
}

double PendulumEnv::reward(const std::vector<double>& obs,
                           const std::vector<double>& action) const {
  const double th = wrap_angle(std::atan2(obs[1], obs[0]));
  const double thdot = obs[2];
  const double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  return -(th * th + 0.1 * thdot * thdot + 0.001 * u * u);
}

std::unique_ptr<Env> PendulumEnv::clone() const {
  return std::make_unique<PendulumEnv>(*this);
}

// -- reacher ------------------------------------------------------------------

ReacherEnv::ReacherEnv() {
  spec_.obs_dim = 6;
  spec_.act_dim = 2;
  spec_.horizon = 200;
  spec_.dt = 0.05;
  spec_.action_low = {-1.0, -1.0};
  spec_.action_high = {1.0, 1.0};
}

std::pair<double, double> ReacherEnv::fingertip(double q1, double q2) {
  return {kLink1 * std::cos(q1) + kLink2 * std::cos(q1 + q2),
          kLink1 * std::sin(q1) + kLink2 * std::sin(q1 + q2)};
}

std::vector<double> ReacherEnv::observe() const {
  auto [fx, fy] = fingertip(q_[0], q_[1]);
  return {q_[0], q_[1], qd_[0], qd_[1], fx, fy};
}

std::vector<double> ReacherEnv::reset(uint64_t seed) {
  Rng rng(seed);
  q_[0] = rng.uniform(-kPi, kPi);
  q_[1] = rng.uniform(-kPi / 2.0, kPi / 2.0);
  qd_[0] = rng.uniform(-0.1, 0.1);
  qd_[1] = rng.uniform(-0.1, 0.1);
  step_count_ = 0;
  return observe();
}

void ReacherEnv::set_state(std::span<const double> q, std::span<const double> qd) {
  q_[0] = q[0];
  q_[1] = q[1];
  qd_[0] = qd[0];
  qd_[1] = qd[1];
  step_count_ = 0;
}

StepResult ReacherEnv::step(const std::vector<double>& action) {
  check_action(action, spec_);
  const std::vector<double> u = clip_action(action);
  const double r = reward(observe(), action);

  for (int i = 0; i < 2; ++i) {
    const double accel = u[i] - kDamping * qd_[i];
    qd_[i] = std::clamp(qd_[i] + accel * spec_.dt, -kMaxJointSpeed, kMaxJointSpeed);
    q_[i] += qd_[i] * spec_.dt;
  }

  step_count_ += 1;
  return {observe(), r, step_count_ >= spec_.horizon};
}

double ReacherEnv::reward(const std::vector<double>& obs,
                          const std::vector<double>& action) const {
  std::vector<double> u(action.size());
  for (size_t i = 0; i < action.size(); ++i) {
    u[i] = std::clamp(action[i], spec_.action_low[i], spec_.action_high[i]);
  }
  const double dx = obs[4] - kTargetX;
  const double dy = obs[5] - kTargetY;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double ctrl = u[0] * u[0] + u[1] * u[1];
  const double vel = obs[2] * obs[2] + obs[3] * obs[3];
  return lorentzian_reward(d, reward_params_) - reward_params_.ctrl_penalty * ctrl -
         reward_params_.vel_penalty * vel;
}

std::unique_ptr<Env> ReacherEnv::clone() const {
  return std::make_unique<ReacherEnv>(*this);
}

// -- point mass ----------------------------------------------------------------

PointMassEnv::PointMassEnv() {
  spec_.obs_dim = 4;
  spec_.act_dim = 2;
  spec_.horizon = 200;
  spec_.dt = 0.05;
  spec_.action_low = {-1.0, -1.0};
  spec_.action_high = {1.0, 1.0};
}

std::vector<double> PointMassEnv::observe() const {
  return {p_[0], p_[1], v_[0], v_[1]};
}

std::vector<double> PointMassEnv::reset(uint64_t seed) {
  Rng rng(seed);
  p_[0] = rng.uniform(-0.5, 0.5);
  p_[1] = rng.uniform(-0.5, 0.5);
  v_[0] = 0.0;
  v_[1] = 0.0;
  step_count_ = 0;
  return observe();
}

void PointMassEnv::set_state(std::span<const double> pos, std::span<const double> vel) {
  p_[0] = pos[0];
  p_[1] = pos[1];
  v_[0] = vel[0];
  v_[1] = vel[1];
  step_count_ = 0;
}

StepResult PointMassEnv::step(const std::vector<double>& action) {
  check_action(action, spec_);
  const std::vector<double> u = clip_action(action);
  const double r = reward(observe(), action);

  for (int i = 0; i < 2; ++i) {
    v_[i] = std::clamp(v_[i] + u[i] * spec_.dt, -kMaxSpeed, kMaxSpeed);
    p_[i] += v_[i] * spec_.dt;
  }

  step_count_ += 1;
  return {observe(), r, step_count_ >= spec_.horizon};
}

double PointMassEnv::reward(const std::vector<double>& obs,
                            const std::vector<double>& action) const {
  std::vector<double> u(action.size());
  for (size_t i = 0; i < action.size(); ++i) {
    u[i] = std::clamp(action[i], spec_.action_low[i], spec_.action_high[i]);
  }
  const double dx = obs[0] - kGoalX;
  const double dy = obs[1] - kGoalY;
  return -(dx * dx + dy * dy + 0.01 * (u[0] * u[0] + u[1] * u[1]));
}

std::unique_ptr<Env> PointMassEnv::clone() const {
  return std::make_unique<PointMassEnv>(*this);
}

// -- factory ------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name, int horizon, double dt) {
  std::unique_ptr<Env> env;
  if (name == "pendulum") {
    env = std::make_unique<PendulumEnv>();
  } else if (name == "reacher") {
    env = std::make_unique<ReacherEnv>();
  } else if (name == "point_mass") {
    env = std::make_unique<PointMassEnv>();
  } else {
    throw std::invalid_argument("unknown environment: " + name);
  }
  env->override_spec(horizon, dt);
  return env;
}

double rollout_virtual_duration(const EnvSpec& spec, double speed_multiplier) {
  if (speed_multiplier <= 0.0) {
    throw std::invalid_argument("speed multiplier must be positive");
  }
  return spec.horizon * spec.dt / speed_multiplier;
}

Trajectory collect_rollout(Env& env, const PolicyFn& policy, const Pacing& pacing,
                           uint64_t env_seed) {
  const auto start = std::chrono::steady_clock::now();
  Trajectory traj;
  traj.env_seed = env_seed;

  const EnvSpec& spec = env.spec();
  std::vector<double> obs = env.reset(env_seed);
  bool done = false;
  int t = 0;
  while (!done) {
    std::vector<double> action = policy(obs);
    if (!nn::all_finite(action)) {
      throw NumericError("collect_rollout: policy produced a non-finite action");
    }
    // Record the executed action: out-of-bounds commands are clipped by the
    // actuator, and the dynamics model must train on what actually happened.
    for (size_t d = 0; d < action.size(); ++d) {
      action[d] = std::clamp(action[d], spec.action_low[d], spec.action_high[d]);
    }
    StepResult result = env.step(action);
    traj.transitions.push_back(
        {obs, std::move(action), result.obs, result.reward, t});
    traj.return_undiscounted += result.reward;
    obs = std::move(result.obs);
    done = result.done;
    t += 1;
  }

  if (pacing.mode == PacingMode::kRealtime) {
    const double duration = rollout_virtual_duration(env.spec(), pacing.speed_multiplier);
    std::this_thread::sleep_until(
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(duration)));
  }
  return traj;
}

// -- serialization -------------------------------------------------------------

namespace {

template <typename T>
void put(std::vector<uint8_t>* out, const T& value) {
  const size_t base = out->size();
  out->resize(base + sizeof(T));
  std::memcpy(out->data() + base, &value, sizeof(T));
}

template <typename T>
T get(std::span<const uint8_t> bytes, size_t* offset) {
  if (*offset + sizeof(T) > bytes.size()) {
    throw std::invalid_argument("deserialize_trajectory: truncated input");
  }
  T value;
  std::memcpy(&value, bytes.data() + *offset, sizeof(T));
  *offset += sizeof(T);
  return value;
}

void put_doubles(std::vector<uint8_t>* out, std::span<const double> values) {
  const size_t base = out->size();
  out->resize(base + sizeof(double) * values.size());
  std::memcpy(out->data() + base, values.data(), sizeof(double) * values.size());
}

std::vector<double> get_doubles(std::span<const uint8_t> bytes, size_t* offset, size_t n) {
  if (*offset + sizeof(double) * n > bytes.size()) {
    throw std::invalid_argument("deserialize_trajectory: truncated input");
  }
  std::vector<double> values(n);
  std::memcpy(values.data(), bytes.data() + *offset, sizeof(double) * n);
  *offset += sizeof(double) * n;
  return values;
}

}  // namespace

void serialize_trajectory(const Trajectory& traj, std::vector<uint8_t>* out) {
  const uint32_t obs_dim =
      traj.transitions.empty() ? 0 : static_cast<uint32_t>(traj.transitions[0].s.size());
  const uint32_t act_dim =
      traj.transitions.empty() ? 0 : static_cast<uint32_t>(traj.transitions[0].a.size());
  put<uint32_t>(out, obs_dim);
  put<uint32_t>(out, act_dim);
  put<uint32_t>(out, static_cast<uint32_t>(traj.transitions.size()));
  put<uint64_t>(out, traj.env_seed);
  put<double>(out, traj.return_undiscounted);
  for (const Transition& tr : traj.transitions) {
    put_doubles(out, tr.s);
    put_doubles(out, tr.a);
    put_doubles(out, tr.s_next);
    put<double>(out, tr.r);
    put<uint32_t>(out, static_cast<uint32_t>(tr.t));
  }
}

Trajectory deserialize_trajectory(std::span<const uint8_t> bytes, size_t* offset) {
  const uint32_t obs_dim = get<uint32_t>(bytes, offset);
  const uint32_t act_dim = get<uint32_t>(bytes, offset);
  const uint32_t count = get<uint32_t>(bytes, offset);
  Trajectory traj;
  traj.env_seed = get<uint64_t>(bytes, offset);
  traj.return_undiscounted = get<double>(bytes, offset);
  traj.transitions.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Transition tr;
    tr.s = get_doubles(bytes, offset, obs_dim);
    tr.a = get_doubles(bytes, offset, act_dim);
    tr.s_next = get_doubles(bytes, offset, obs_dim);
    tr.r = get<double>(bytes, offset);
    tr.t = static_cast<int>(get<uint32_t>(bytes, offset));
    traj.transitions.push_back(std::move(tr));
  }
  return traj;
}

}  // namespace asyncdyna::envs
