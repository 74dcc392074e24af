#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

namespace event_net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-loop LTI plant x' = A x + B u + w with static feedback u = -L xhat.
struct PlantModel {
  Matrix A;
  Matrix B;
  Matrix Rw;  // process-noise covariance
  Matrix R0;  // initial-state covariance
  Matrix L;   // controller gain

  std::size_t state_dim() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(B.cols()); }

  // Scalar plant with the deadbeat gain L = A/B.
  static PlantModel scalar(double a, double b, double rw, double r0);
};

// L minimising |A - B L| in the least-squares sense; equals A/B for scalars.
Matrix deadbeat_gain(const Matrix& A, const Matrix& B);

// Throws ConfigError on inconsistent dimensions or non-PSD covariances.
void validate(const PlantModel& model);

enum class TriggerMode { kThreshold, kProbability };

// Event-trigger policy over memory states m = 0..F. Both tables are indexed
// by m: entry m < F applies when the delay d_{k-1} equals m, entry F applies
// once d_{k-1} >= F. In probability form, entry m is p_{gamma,m+1}, the last
// entry is p_{gamma,f}.
struct TriggerPolicy {
  int memory = 1;  // F
  TriggerMode mode = TriggerMode::kThreshold;
  std::vector<double> thresholds;   // Delta(0..F)
  std::vector<double> event_probs;  // p_{gamma,1..F}, p_{gamma,f}

  static TriggerPolicy uniform_threshold(int memory, double delta);
  static TriggerPolicy probabilities(std::vector<double> probs);

  int memory_index(long delay) const { return delay < memory ? static_cast<int>(delay) : memory; }
};

void validate(const TriggerPolicy& policy);

struct CostConfig {
  Matrix Q1;
  Matrix Q2;

  static CostConfig state_only(std::size_t state_dim, std::size_t input_dim);
};

void validate(const CostConfig& cost, const PlantModel& model);

// Ring buffer holding the last F (state, control) pairs.
class SensorWindow {
 public:
  explicit SensorWindow(std::size_t capacity = 1)
      : capacity_(capacity), states_(capacity), controls_(capacity) {}

  void push(const Vector& x, const Vector& u);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  // age 1 is the most recent entry (time k-1), age F the oldest (time k-F).
  const Vector& state_at_age(std::size_t age) const;
  const Vector& control_at_age(std::size_t age) const;

 private:
  std::size_t slot_for_age(std::size_t age) const;

  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::vector<Vector> states_;
  std::vector<Vector> controls_;
};

// State of one loop at the start of sampling period k, before triggering.
struct LoopState {
  long k = 0;
  Vector x;       // x_k
  Vector xhat_c;  // controller estimate xhat^c_{k-1|k-1}
  Vector u_prev;  // u_{k-1}
  SensorWindow window;
  long d = 0;     // d_{k-1}
  long tau = -1;  // tau_{k-1}
  int m = 0;      // min(d, F)

  static LoopState initial(const PlantModel& model, const Vector& x0, int memory);
};

struct StepOutcome {
  bool gamma = false;
  std::vector<bool> alpha;  // per stage, true when the node transmitted
  bool delta = false;
  std::optional<int> success_stage;  // 1-based
};

// x' = A x + B u + w. Pushes the pre-step (x, u) into the sensor window and
// advances k; d, tau and the estimate are left to observer_update.
LoopState plant_step(const LoopState& state, const Vector& u, const Vector& w,
                     const PlantModel& model);

// Memory-limited sensor prediction of x_k. With d_{k-1} < F this is the
// controller's open-loop prediction from the last received state; otherwise
// the state F steps back is taken as the anchor.
Vector predicted_estimate(const LoopState& state, const PlantModel& model);

bool trigger_decide(const Vector& x, const Vector& xhat_f, int m, const TriggerPolicy& policy);

// Applies the channel outcome of period k. `received` is x_k on delivery,
// empty on erasure.
LoopState observer_update(const LoopState& state, const std::optional<Vector>& received,
                          const Vector& u_prev, const PlantModel& model);

Vector control_law(const Vector& xhat_c, const PlantModel& model);

// In-place forms of plant_step and observer_update for the simulation loop.
void advance_plant(LoopState& state, const Vector& u, const Vector& w, const PlantModel& model);
void apply_observation(LoopState& state, bool delivered, const PlantModel& model);

double stage_cost(const Vector& x, const Vector& u, const CostConfig& cost);

}  // namespace event_net
