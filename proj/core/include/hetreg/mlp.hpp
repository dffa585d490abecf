#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetreg/datagen.hpp"
#include "hetreg/energy.hpp"
#include "hetreg/solver.hpp"

namespace hetreg {

constexpr double kLeakySlope = 0.01;

inline double leaky_relu(double z) { return z >= 0.0 ? z : kLeakySlope * z; }

enum class Head { identity, softplus };

// Fully connected network with leaky-ReLU hidden layers. All weights and
// biases live in one flat vector so optimizers can treat them uniformly.
class MLP {
 public:
  MLP() = default;

  // Fan-in scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MLP init(std::size_t input_dim, const std::vector<std::size_t>& hidden, Head head,
                  std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  Head head() const { return head_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  // 1 for every parameter counted in the weight penalty: all weights, hidden
  // biases when `include_hidden_biases`, never the output bias.
  Eigen::VectorXd penalty_mask(bool include_hidden_biases) const;

  double forward(const Eigen::VectorXd& x) const;
  // x: n x input_dim (one sample per row). Returns one output per row.
  Eigen::VectorXd forward_batch(const Eigen::MatrixXd& x) const;

  // Pre-head outputs plus cached activations, for reverse mode.
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // a_0 = x^T, a_1..a_L (hidden), each width x n
    std::vector<Eigen::MatrixXd> preacts;      // z_1..z_{L+1}
  };
  Eigen::VectorXd forward_tape(const Eigen::MatrixXd& x, Tape& tape) const;  // returns z_out (pre-head)
  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(z_out).
  void backward(const Tape& tape, const Eigen::VectorXd& dz_out, Eigen::VectorXd& grad) const;

  nlohmann::json to_json() const;
  static MLP from_json(const nlohmann::json& j);

  friend bool operator==(const MLP& a, const MLP& b) {
    return a.input_dim_ == b.input_dim_ && a.hidden_ == b.hidden_ && a.head_ == b.head_ &&
           a.params_ == b.params_;
  }

 private:
  struct LayerLayout {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };
  void build_layout();

  std::size_t input_dim_ = 0;
  std::vector<std::size_t> hidden_;
  Head head_ = Head::identity;
  std::vector<LayerLayout> layers_;
  Eigen::VectorXd params_;
};

struct LossGrad {
  double loss = 0.0;
  double data = 0.0;  // mean heteroskedastic NLL term (before weighting)
  Eigen::VectorXd grad_theta;
  Eigen::VectorXd grad_phi;
};

// rho * mean_i[1/2 lam_i r_i^2 - 1/2 log lam_i] + rho_bar (gamma |theta|^2 + gamma_bar |phi|^2)
// (or any other TermWeights), with exact reverse-mode gradients.
LossGrad loss_and_grads(const MLP& mean_net, const MLP& precision_net, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, const TermWeights& w, bool penalize_hidden_biases = true);
LossGrad loss_and_grads(const MLP& mean_net, const MLP& precision_net, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, const RegPair& reg, bool penalize_hidden_biases = true);

struct TrainConfig {
  long long epochs = 600000;
  double warmup_fraction = 0.5;
  std::vector<std::size_t> hidden = {128, 128, 128};
  CyclicLRConfig lr{1e-4, 1e-2, 50000, 0.5};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1000.0;
  std::size_t batch_size = 1000;            // used only when n > minibatch_threshold
  std::size_t minibatch_threshold = 5000;
  bool penalize_hidden_biases = true;
  std::uint64_t seed = 0;
  long long trace_every = 100;

  // Shorter budget with ten learning-rate cycles over the run.
  static TrainConfig desk(long long epochs, std::vector<std::size_t> hidden, std::uint64_t seed);
  void validate() const;
};

struct TrainResult {
  MLP mean_net;
  MLP precision_net;
  std::vector<double> loss_trace;  // full objective every trace_every epochs
  RegPair reg = RegPair::make(0.5, 0.5);
  long long epochs = 0;
  std::uint64_t seed = 0;
};

TrainResult train_heteroskedastic(const Dataset& train, const RegPair& reg, const TrainConfig& config);

struct Prediction {
  Eigen::VectorXd mu;
  Eigen::VectorXd lam;
};
Prediction predict(const TrainResult& model, const Eigen::MatrixXd& x);

// Checkpoint {widths, weights, biases, reg, seed, epochs} for both networks.
nlohmann::json to_json(const TrainResult& model);
TrainResult train_result_from_json(const nlohmann::json& j);

}  // namespace hetreg
