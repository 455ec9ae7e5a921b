#pragma once

// Hybrid Bayesian MLP: dense layers that are either deterministic (point
// weights) or variational (factorized Gaussian posterior per scalar
// parameter, sampled by reparameterization w = mu + softplus(rho) * eps,
// with one trainable Gaussian prior per layer).
//
// All trainable values live in one flat parameter vector so the optimizer,
// checkpoints and gradient checks see a single contiguous array. Weight
// blocks are stored column-major as (fan_in x width).

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vtec/dataset.hpp"
#include "vtec/rng.hpp"

namespace vtec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LayerKind { Deterministic, Variational };
enum class Activation { Relu, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Deterministic;
  int width = 1;
  Activation activation = Activation::Linear;

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  int input_dim = 0;
  std::vector<LayerSpec> layers;

  /// "V64-D32-D16-D1" form.
  std::string architecture() const;
  /// Throws ConfigError on empty layers, non-positive widths, a head wider
  /// than 1 or a non-linear head.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Tokens `V<n>` / `D<n>` joined by '-'; hidden layers get ReLU, the last one linear.
NetworkSpec parse_architecture(std::string_view text, int input_dim);

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

struct GaussianParam {
  double mu = 0.0;
  double rho = 0.0;  // sigma = softplus(rho)

  double sigma() const { return softplus(rho); }
};

/// KL(q || p) for univariate Gaussians.
double kl_gaussian(const GaussianParam& q, const GaussianParam& p);

/// Offsets of one layer's blocks inside the flat parameter vector.
struct LayerLayout {
  LayerSpec spec;
  int fan_in = 0;
  std::size_t weight = 0;  // deterministic weights or posterior mu
  std::size_t bias = 0;
  std::size_t weight_rho = 0;  // variational only
  std::size_t bias_rho = 0;
  std::size_t prior = 0;  // prior mu at `prior`, prior rho at `prior + 1`

  bool variational() const { return spec.kind == LayerKind::Variational; }
  std::size_t weight_count() const { return std::size_t(fan_in) * std::size_t(spec.width); }
};

class Network {
 public:
  /// All parameters zero.
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerLayout>& layers() const { return layers_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t input_dim() const { return std::size_t(spec_.input_dim); }
  bool has_variational() const;

  Eigen::Map<Matrix> weight(std::size_t l);
  Eigen::Map<const Matrix> weight(std::size_t l) const;
  Eigen::Map<Vector> bias(std::size_t l);
  Eigen::Map<const Vector> bias(std::size_t l) const;
  Eigen::Map<Matrix> weight_rho(std::size_t l);
  Eigen::Map<const Matrix> weight_rho(std::size_t l) const;
  Eigen::Map<Vector> bias_rho(std::size_t l);
  Eigen::Map<const Vector> bias_rho(std::size_t l) const;
  GaussianParam prior(std::size_t l) const;
  void set_prior(std::size_t l, const GaussianParam& p);

  /// Sets every posterior rho of every variational layer.
  void set_posterior_rho(double rho);

 private:
  NetworkSpec spec_;
  std::vector<LayerLayout> layers_;
  std::vector<double> params_;
};

inline constexpr double kInitialPosteriorRho = -5.0;

/// Fan-in uniform weights (He-uniform for ReLU layers, LeCun-uniform for the
/// linear head), zero biases; variational layers get the same draws as their
/// posterior means, rho = -5 and a N(0, 1) prior.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Standard-normal noise per variational scalar parameter; empty blocks for
/// deterministic layers.
struct EpsilonDraw {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

EpsilonDraw draw_epsilon(const Network& net, Rng& rng);
EpsilonDraw zero_epsilon(const Network& net);

/// Everything backprop needs from one forward pass over a batch.
struct Tape {
  EpsilonDraw eps;
  std::vector<Matrix> inputs;   // layer inputs, batch x fan_in
  std::vector<Matrix> pre;      // pre-activations, batch x width
  std::vector<Matrix> weights;  // realized weights
  Matrix output;                // batch x 1
};

/// Batch forward pass with the given noise. Throws NumericError naming the
/// layer when an activation becomes non-finite.
Tape forward(const Network& net, const Matrix& x, const EpsilonDraw& eps);

struct SampledOutput {
  double y = 0.0;
  Tape tape;
};

/// One draw of every variational parameter, then a forward pass.
SampledOutput forward_sample(const Network& net, std::span<const double> x, Rng& rng);
/// Forward pass with eps = 0 (posterior means).
double forward_mean(const Network& net, std::span<const double> x);

/// Repeated single-input sampling with cached posterior spreads and no
/// per-call tape. Consumes the RNG exactly like forward_sample.
class PosteriorSampler {
 public:
  explicit PosteriorSampler(const Network& net);

  double sample(std::span<const double> x, Rng& rng);
  double mean(std::span<const double> x);

 private:
  double run(std::span<const double> x, Rng* rng);

  const Network* net_;
  std::vector<Matrix> sigma_w_;
  std::vector<Vector> sigma_b_;
  std::vector<Matrix> w_;
  std::vector<Vector> b_;
  std::vector<Vector> act_;
  Vector in_;
};

/// Sum of KL(posterior || layer prior) over every variational scalar.
double network_kl(const Network& net);

/// A normalized minibatch.
struct BatchData {
  Matrix x;  // batch x input_dim
  Vector y;
  Vector w;
};

BatchData gather_batch(const SampleSet& set, std::span<const std::size_t> indices);
BatchData gather_batch(const SampleSet& set);

struct LossAndGrads {
  double loss = 0.0;
  double data_loss = 0.0;
  double kl = 0.0;
  std::vector<double> grads;  // same layout as Network::params()
};

/// loss = sum_i w_i (y_i - yhat_i)^2 / sum_i w_i + kl_weight * network_kl.
/// Throws NumericError on a non-finite loss.
LossAndGrads loss_and_grads(const Network& net, const BatchData& batch, const EpsilonDraw& eps, double kl_weight);
LossAndGrads loss_and_grads(const Network& net, const BatchData& batch, Rng& rng, double kl_weight);
/// Loss only, for finite-difference checks.
double loss_value(const Network& net, const BatchData& batch, const EpsilonDraw& eps, double kl_weight);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

enum class KlScaleMode {
  BatchOverN,  // kl_weight = batch_size / N_train
  Constant,    // kl_weight = TrainConfig::kl_weight
};

struct TrainConfig {
  std::size_t batch_size = 128;
  int epochs = 8;
  AdamConfig adam{};
  KlScaleMode kl_scale_mode = KlScaleMode::BatchOverN;
  double kl_weight = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  double effective_kl_weight(std::size_t n_train) const;
};

struct TrainHistory {
  std::vector<double> train_loss;      // mean batch loss per epoch
  std::vector<double> validation_mse;  // posterior-mean MSE per epoch (normalized units), NaN without a validation set
  std::vector<double> step_loss;       // every optimizer step
};

/// Minibatch Adam on normalized samples. Deterministic for a given seed;
/// throws NumericError naming epoch and batch on divergence.
TrainHistory train(Network& net, const SampleSet& train_set, const TrainConfig& config,
                   const SampleSet* validation = nullptr);

/// Posterior-mean predictions in normalized units for a whole set.
Vector predict_mean(const Network& net, const Matrix& x);

}  // namespace vtec
