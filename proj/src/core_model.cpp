#include "event_net/core_model.hpp"

#include "event_net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace event_net {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_symmetric_psd(const Matrix& m, const std::string& name) {
  require(m.rows() == m.cols(), name + " must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale, name + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues().minCoeff() >= -1e-9 * scale,
          name + " must be positive semi-definite");
}

}  // namespace

Matrix deadbeat_gain(const Matrix& A, const Matrix& B) {
  return B.completeOrthogonalDecomposition().pseudoInverse() * A;
}

PlantModel PlantModel::scalar(double a, double b, double rw, double r0) {
  PlantModel p;
  p.A = Matrix::Constant(1, 1, a);
  p.B = Matrix::Constant(1, 1, b);
  p.Rw = Matrix::Constant(1, 1, rw);
  p.R0 = Matrix::Constant(1, 1, r0);
  p.L = deadbeat_gain(p.A, p.B);
  return p;
}

void validate(const PlantModel& model) {
  const auto n = model.A.rows();
  require(n > 0, "A must be non-empty");
  require(model.A.cols() == n, "A must be square");
  require(model.B.rows() == n && model.B.cols() > 0, "B must have as many rows as A");
  const auto m = model.B.cols();
  require(model.L.rows() == m && model.L.cols() == n, "L must be (inputs x states)");
  require(model.Rw.rows() == n, "Rw must match the state dimension");
  require(model.R0.rows() == n, "R0 must match the state dimension");
  require_symmetric_psd(model.Rw, "Rw");
  require_symmetric_psd(model.R0, "R0");
}

TriggerPolicy TriggerPolicy::uniform_threshold(int memory, double delta) {
  TriggerPolicy p;
  p.memory = memory;
  p.mode = TriggerMode::kThreshold;
  p.thresholds.assign(static_cast<std::size_t>(memory) + 1, delta);
  return p;
}

TriggerPolicy TriggerPolicy::probabilities(std::vector<double> probs) {
  TriggerPolicy p;
  p.memory = static_cast<int>(probs.size()) - 1;
  p.mode = TriggerMode::kProbability;
  p.event_probs = std::move(probs);
  return p;
}

void validate(const TriggerPolicy& policy) {
  require(policy.memory >= 1, "memory limit F must be >= 1");
  const auto expected = static_cast<std::size_t>(policy.memory) + 1;
  if (policy.mode == TriggerMode::kThreshold) {
    require(policy.thresholds.size() == expected, "thresholds must have F+1 entries");
    for (double t : policy.thresholds)
      require(std::isfinite(t) && t >= 0.0, "thresholds must be finite and >= 0");
  } else {
    require(policy.event_probs.size() == expected, "event_probs must have F+1 entries");
  }
  if (!policy.event_probs.empty()) {
    for (double p : policy.event_probs)
      require(p >= 0.0 && p <= 1.0, "event probabilities must lie in [0,1]");
  }
}

CostConfig CostConfig::state_only(std::size_t state_dim, std::size_t input_dim) {
  const auto n = static_cast<Eigen::Index>(state_dim);
  const auto m = static_cast<Eigen::Index>(input_dim);
  return {Matrix::Identity(n, n), Matrix::Zero(m, m)};
}

void validate(const CostConfig& cost, const PlantModel& model) {
  require(cost.Q1.rows() == model.A.rows(), "Q1 must match the state dimension");
  require(cost.Q2.rows() == model.B.cols(), "Q2 must match the input dimension");
  require_symmetric_psd(cost.Q1, "Q1");
  require_symmetric_psd(cost.Q2, "Q2");
}

void SensorWindow::push(const Vector& x, const Vector& u) {
  states_[next_] = x;
  controls_[next_] = u;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::size_t SensorWindow::slot_for_age(std::size_t age) const {
  if (age == 0 || age > size_) throw InternalError("sensor window underflow");
  return (next_ + capacity_ - age) % capacity_;
}

const Vector& SensorWindow::state_at_age(std::size_t age) const {
  return states_[slot_for_age(age)];
}

const Vector& SensorWindow::control_at_age(std::size_t age) const {
  return controls_[slot_for_age(age)];
}

LoopState LoopState::initial(const PlantModel& model, const Vector& x0, int memory) {
  LoopState s;
  s.x = x0;
  s.xhat_c = Vector::Zero(model.A.rows());
  s.u_prev = Vector::Zero(model.B.cols());
  s.window = SensorWindow(static_cast<std::size_t>(memory));
  return s;
}

void advance_plant(LoopState& state, const Vector& u, const Vector& w, const PlantModel& model) {
  if (state.x.size() != model.A.cols() || u.size() != model.B.cols() ||
      w.size() != model.A.rows())
    throw ConfigError("plant_step: dimension mismatch");
  state.window.push(state.x, u);
  state.x = model.A * state.x + model.B * u + w;
  state.u_prev = u;
  ++state.k;
}

LoopState plant_step(const LoopState& state, const Vector& u, const Vector& w,
                     const PlantModel& model) {
  LoopState next = state;
  advance_plant(next, u, w, model);
  return next;
}

Vector predicted_estimate(const LoopState& state, const PlantModel& model) {
  const auto memory = static_cast<long>(state.window.capacity());
  if (state.d < memory) return model.A * state.xhat_c + model.B * state.u_prev;

  // Anchor at x_{k-F} and roll forward with the applied controls.
  const auto f = static_cast<std::size_t>(memory);
  Vector xhat = state.window.state_at_age(f);
  for (std::size_t age = f; age >= 1; --age)
    xhat = model.A * xhat + model.B * state.window.control_at_age(age);
  return xhat;
}

bool trigger_decide(const Vector& x, const Vector& xhat_f, int m, const TriggerPolicy& policy) {
  return (x - xhat_f).squaredNorm() > policy.thresholds.at(static_cast<std::size_t>(m));
}

void apply_observation(LoopState& state, bool delivered, const PlantModel& model) {
  if (delivered) {
    state.xhat_c = state.x;
    state.d = 0;
    state.tau = state.k;
  } else {
    Vector propagated = model.A * state.xhat_c + model.B * state.u_prev;
    state.xhat_c.swap(propagated);
    ++state.d;
  }
  state.m = static_cast<int>(std::min(state.d, static_cast<long>(state.window.capacity())));
}

LoopState observer_update(const LoopState& state, const std::optional<Vector>& received,
                          const Vector& u_prev, const PlantModel& model) {
  LoopState next = state;
  if (received) {
    next.xhat_c = *received;
    next.d = 0;
    next.tau = state.k;
  } else {
    next.xhat_c = model.A * state.xhat_c + model.B * u_prev;
    next.d = state.d + 1;
  }
  next.m = static_cast<int>(std::min(next.d, static_cast<long>(state.window.capacity())));
  return next;
}

Vector control_law(const Vector& xhat_c, const PlantModel& model) { return -model.L * xhat_c; }

double stage_cost(const Vector& x, const Vector& u, const CostConfig& cost) {
  return x.dot(cost.Q1 * x) + u.dot(cost.Q2 * u);
}

}  // namespace event_net
