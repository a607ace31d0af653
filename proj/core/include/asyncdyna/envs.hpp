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

#ifndef ASYNCDYNA_ENVS_HPP_
#define ASYNCDYNA_ENVS_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asyncdyna/rng.hpp"

namespace asyncdyna::envs {

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 0;
  int horizon = 200;
  double dt = 0.05;  // control period, seconds per step
  std::vector<double> action_low;
  std::vector<double> action_high;
};

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
  double r = 0.0;
  int t = 0;
};

struct Trajectory {
  std::vector<Transition> transitions;
  double return_undiscounted = 0.0;
  uint64_t env_seed = 0;

  int length() const { return static_cast<int>(transitions.size()); }
};

// Parameters of the distance-based reward r(d) = -omega*d^2 - v*log(d^2 + alpha),
// plus the two scaled quadratic penalties used by the reacher.
struct RewardParams {
  double omega = 1.0;
  double v = 1.0;
  double alpha = 1e-5;
  double ctrl_penalty = 1e-3;
  double vel_penalty = 1e-3;
};

double lorentzian_reward(double d, const RewardParams& rp);

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
};

// A self-contained continuous-control environment with exactly documented
// dynamics. Rewards are pure functions of (observation, action) so the same
// function can score model-predicted states during imagined rollouts.
// Out-of-bounds actions are clipped, never rejected; done fires only at the
// horizon.
class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }
  virtual const char* name() const = 0;

  // Draws an initial state from the documented p0; deterministic per seed.
  virtual std::vector<double> reset(uint64_t seed) = 0;
  virtual StepResult step(const std::vector<double>& action) = 0;
  virtual double reward(const std::vector<double>& obs,
                        const std::vector<double>& action) const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  // Overrides horizon and/or control period; zero keeps the default.
  void override_spec(int horizon, double dt);

  int steps_taken() const { return step_count_; }

 protected:
  std::vector<double> clip_action(const std::vector<double>& action) const;

  EnvSpec spec_;
  int step_count_ = 0;
};

// Pendulum swing-up. theta = 0 is upright; internal state (theta, theta_dot).
//   obs = (cos theta, sin theta, theta_dot), act = 1-d torque in [-2, 2]
//   dynamics: theta_dot += (3g/(2l) sin(theta) + 3/(m l^2) u) * dt, clipped
//   to +-8, then theta += theta_dot * dt (semi-implicit Euler);
//   g = 10, m = 1, l = 1, dt = 0.05
//   reward = -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2), wrap to (-pi, pi]
//   p0: theta ~ U(-pi, pi), theta_dot ~ U(-1, 1)
class PendulumEnv : public Env {
 public:
  PendulumEnv();
  const char* name() const override { return "pendulum"; }
  std::vector<double> reset(uint64_t seed) override;
  StepResult step(const std::vector<double>& action) override;
  double reward(const std::vector<double>& obs,
                const std::vector<double>& action) const override;
  std::unique_ptr<Env> clone() const override;

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  // Total mechanical energy of the free pendulum (rod about its end):
  // 0.5*(m l^2/3) theta_dot^2 + m g (l/2) cos(theta).
  double energy() const;

  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

 private:
  std::vector<double> observe() const;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

// Planar two-link reacher with decoupled damped joint dynamics.
//   obs = (q1, q2, qd1, qd2, fx, fy), act = 2 torques in [-1, 1]
//   dynamics per joint: qdd_i = u_i - damping * qd_i (unit inertia), then
//   qd_i += qdd_i * dt (clipped to +-10), q_i += qd_i * dt; damping = 0.1
//   fingertip: f = l1 (cos q1, sin q1) + l2 (cos(q1+q2), sin(q1+q2)),
//   l1 = l2 = 0.5; target fixed at (0.5, 0.5)
//   reward = lorentzian_reward(|f - target|) - ctrl_penalty*|u|^2
//            - vel_penalty*|qd|^2
//   p0: q1 ~ U(-pi, pi), q2 ~ U(-pi/2, pi/2), qd ~ U(-0.1, 0.1)
class ReacherEnv : public Env {
 public:
  ReacherEnv();
  const char* name() const override { return "reacher"; }
  std::vector<double> reset(uint64_t seed) override;
  StepResult step(const std::vector<double>& action) override;
  double reward(const std::vector<double>& obs,
                const std::vector<double>& action) const override;
  std::unique_ptr<Env> clone() const override;

  void set_state(std::span<const double> q, std::span<const double> qd);
  const RewardParams& reward_params() const { return reward_params_; }
  static std::pair<double, double> fingertip(double q1, double q2);

  static constexpr double kLink1 = 0.5;
  static constexpr double kLink2 = 0.5;
  static constexpr double kDamping = 0.1;
  static constexpr double kMaxJointSpeed = 10.0;
  static constexpr double kTargetX = 0.5;
  static constexpr double kTargetY = 0.5;

 private:
  std::vector<double> observe() const;
  double q_[2] = {0.0, 0.0};
  double qd_[2] = {0.0, 0.0};
  RewardParams reward_params_;
};

// Planar double integrator driving a point to a fixed goal.
//   obs = (px, py, vx, vy), act = accelerations in [-1, 1]
//   dynamics: v += a * dt (clipped to +-5), p += v * dt
//   reward = -(|p - goal|^2 + 0.01 |a|^2), goal = (1, 0)
//   p0: p ~ U(-0.5, 0.5)^2, v = 0
class PointMassEnv : public Env {
 public:
  PointMassEnv();
  const char* name() const override { return "point_mass"; }
  std::vector<double> reset(uint64_t seed) override;
  StepResult step(const std::vector<double>& action) override;
  double reward(const std::vector<double>& obs,
                const std::vector<double>& action) const override;
  std::unique_ptr<Env> clone() const override;

  void set_state(std::span<const double> pos, std::span<const double> vel);

  static constexpr double kMaxSpeed = 5.0;
  static constexpr double kGoalX = 1.0;
  static constexpr double kGoalY = 0.0;

 private:
  std::vector<double> observe() const;
  double p_[2] = {0.0, 0.0};
  double v_[2] = {0.0, 0.0};
};

// Creates an environment by name ("pendulum" | "reacher" | "point_mass").
// horizon/dt override the defaults when positive. Unknown names throw.
std::unique_ptr<Env> make_env(const std::string& name, int horizon = 0, double dt = 0.0);

enum class PacingMode { kUnpaced, kRealtime };

struct Pacing {
  PacingMode mode = PacingMode::kUnpaced;
  double speed_multiplier = 1.0;
};

using PolicyFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Virtual duration of one full rollout: horizon * dt / speed.
double rollout_virtual_duration(const EnvSpec& spec, double speed_multiplier);

// Runs one full-horizon rollout of `policy` in `env` from a seeded reset.
// Under realtime pacing the call blocks until horizon*dt/speed wall-clock
// seconds have elapsed since the rollout started, simulating real-robot
// data-collection speed. Throws NumericError if the policy emits a
// non-finite action.
Trajectory collect_rollout(Env& env, const PolicyFn& policy, const Pacing& pacing,
                           uint64_t env_seed);

// -- wire format -------------------------------------------------------------
// Length-prefixed sequence of transitions, little-endian doubles throughout:
// u32 obs_dim, u32 act_dim, u32 count, u64 env_seed, f64 return, then per
// transition: s, a, s_next, r (f64), t (u32).

void serialize_trajectory(const Trajectory& traj, std::vector<uint8_t>* out);
Trajectory deserialize_trajectory(std::span<const uint8_t> bytes, size_t* offset);

}  // namespace asyncdyna::envs

#endif  // ASYNCDYNA_ENVS_HPP_
