#include "vtec/bnn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <boost/random/normal_distribution.hpp>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix realized_weight(const Network& net, std::size_t l, const EpsilonDraw& eps) {
  const auto& layer = net.layers()[l];
  if (!layer.variational()) return net.weight(l);
  return net.weight(l) + net.weight_rho(l).unaryExpr([](double r) { return softplus(r); }).cwiseProduct(eps.weight[l]);
}

Vector realized_bias(const Network& net, std::size_t l, const EpsilonDraw& eps) {
  const auto& layer = net.layers()[l];
  if (!layer.variational()) return net.bias(l);
  return net.bias(l) + net.bias_rho(l).unaryExpr([](double r) { return softplus(r); }).cwiseProduct(eps.bias[l]);
}

// KL of one posterior block against its layer prior, with optional gradient accumulation.
double block_kl(const double* mu, const double* rho, std::size_t n, const GaussianParam& prior, double scale,
                double* g_mu, double* g_rho, double* g_prior_mu, double* g_prior_rho) {
  const double sp = prior.sigma();
  const double sp2 = sp * sp;
  const double dsp = sigmoid(prior.rho);
  double kl = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double sq = softplus(rho[k]);
    const double d = mu[k] - prior.mu;
    const double second = sq * sq + d * d;
    kl += std::log(sp) - std::log(sq) + second / (2.0 * sp2) - 0.5;
    if (g_mu) {
      g_mu[k] += scale * d / sp2;
      g_rho[k] += scale * (-1.0 / sq + sq / sp2) * sigmoid(rho[k]);
      *g_prior_mu -= scale * d / sp2;
      *g_prior_rho += scale * (1.0 / sp - second / (sp2 * sp)) * dsp;
    }
  }
  return kl;
}

double kl_and_grads(const Network& net, double scale, std::vector<double>* grads) {
  const auto& p = net.params();
  double total = 0.0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& L = net.layers()[l];
    if (!L.variational()) continue;
    const GaussianParam prior = net.prior(l);
    double* g = grads ? grads->data() : nullptr;
    const std::size_t nw = L.weight_count();
    const std::size_t nb = std::size_t(L.spec.width);
    total += block_kl(&p[L.weight], &p[L.weight_rho], nw, prior, scale, g ? g + L.weight : nullptr,
                      g ? g + L.weight_rho : nullptr, g ? g + L.prior : nullptr, g ? g + L.prior + 1 : nullptr);
    total += block_kl(&p[L.bias], &p[L.bias_rho], nb, prior, scale, g ? g + L.bias : nullptr,
                      g ? g + L.bias_rho : nullptr, g ? g + L.prior : nullptr, g ? g + L.prior + 1 : nullptr);
  }
  return total;
}

}  // namespace

std::string NetworkSpec::architecture() const {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += '-';
    out += layers[i].kind == LayerKind::Variational ? 'V' : 'D';
    out += std::to_string(layers[i].width);
  }
  return out;
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (layers.empty()) throw ConfigError("network needs at least one layer");
  for (const auto& l : layers)
    if (l.width < 1) throw ConfigError("layer width must be >= 1");
  if (layers.back().width != 1) throw ConfigError("output layer width must be 1, got " + std::to_string(layers.back().width));
  if (layers.back().activation != Activation::Linear) throw ConfigError("output layer must be linear");
}

NetworkSpec parse_architecture(std::string_view text, int input_dim) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dash = std::min(text.find('-', pos), text.size());
    const std::string_view token = text.substr(pos, dash - pos);
    if (token.size() < 2 || (token[0] != 'V' && token[0] != 'D'))
      throw ConfigError("bad architecture token '" + std::string(token) + "'");
    int width = 0;
    const auto [ptr, ec] = std::from_chars(token.data() + 1, token.data() + token.size(), width);
    if (ec != std::errc{} || ptr != token.data() + token.size() || width < 1)
      throw ConfigError("bad architecture token '" + std::string(token) + "'");
    spec.layers.push_back({token[0] == 'V' ? LayerKind::Variational : LayerKind::Deterministic, width, Activation::Relu});
    pos = dash + 1;
  }
  spec.layers.back().activation = Activation::Linear;
  spec.validate();
  return spec;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ConfigError("softplus_inverse needs a positive argument");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double kl_gaussian(const GaussianParam& q, const GaussianParam& p) {
  const double sq = q.sigma();
  const double sp = p.sigma();
  const double d = q.mu - p.mu;
  return std::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  int fan_in = spec_.input_dim;
  for (const auto& ls : spec_.layers) {
    LayerLayout L;
    L.spec = ls;
    L.fan_in = fan_in;
    L.weight = offset;
    offset += L.weight_count();
    L.bias = offset;
    offset += std::size_t(ls.width);
    if (L.variational()) {
      L.weight_rho = offset;
      offset += L.weight_count();
      L.bias_rho = offset;
      offset += std::size_t(ls.width);
      L.prior = offset;
      offset += 2;
    }
    layers_.push_back(L);
    fan_in = ls.width;
  }
  params_.assign(offset, 0.0);
}

bool Network::has_variational() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const LayerLayout& l) { return l.variational(); });
}

Eigen::Map<Matrix> Network::weight(std::size_t l) {
  return {params_.data() + layers_[l].weight, layers_[l].fan_in, layers_[l].spec.width};
}
Eigen::Map<const Matrix> Network::weight(std::size_t l) const {
  return {params_.data() + layers_[l].weight, layers_[l].fan_in, layers_[l].spec.width};
}
Eigen::Map<Vector> Network::bias(std::size_t l) { return {params_.data() + layers_[l].bias, layers_[l].spec.width}; }
Eigen::Map<const Vector> Network::bias(std::size_t l) const {
  return {params_.data() + layers_[l].bias, layers_[l].spec.width};
}
Eigen::Map<Matrix> Network::weight_rho(std::size_t l) {
  if (!layers_[l].variational()) throw ConfigError("layer has no posterior spread");
  return {params_.data() + layers_[l].weight_rho, layers_[l].fan_in, layers_[l].spec.width};
}
Eigen::Map<const Matrix> Network::weight_rho(std::size_t l) const {
  if (!layers_[l].variational()) throw ConfigError("layer has no posterior spread");
  return {params_.data() + layers_[l].weight_rho, layers_[l].fan_in, layers_[l].spec.width};
}
Eigen::Map<Vector> Network::bias_rho(std::size_t l) {
  if (!layers_[l].variational()) throw ConfigError("layer has no posterior spread");
  return {params_.data() + layers_[l].bias_rho, layers_[l].spec.width};
}
Eigen::Map<const Vector> Network::bias_rho(std::size_t l) const {
  if (!layers_[l].variational()) throw ConfigError("layer has no posterior spread");
  return {params_.data() + layers_[l].bias_rho, layers_[l].spec.width};
}

GaussianParam Network::prior(std::size_t l) const {
  if (!layers_[l].variational()) throw ConfigError("layer has no prior");
  return {params_[layers_[l].prior], params_[layers_[l].prior + 1]};
}

void Network::set_prior(std::size_t l, const GaussianParam& p) {
  if (!layers_[l].variational()) throw ConfigError("layer has no prior");
  params_[layers_[l].prior] = p.mu;
  params_[layers_[l].prior + 1] = p.rho;
}

void Network::set_posterior_rho(double rho) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!layers_[l].variational()) continue;
    weight_rho(l).setConstant(rho);
    bias_rho(l).setConstant(rho);
  }
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec);
  Rng rng = make_rng(seed, {0x1417});
  const double unit_prior_rho = softplus_inverse(1.0);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& L = net.layers()[l];
    const double gain = L.spec.activation == Activation::Relu ? 6.0 : 3.0;
    std::uniform_real_distribution<double> u(-std::sqrt(gain / L.fan_in), std::sqrt(gain / L.fan_in));
    auto w = net.weight(l);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
    net.bias(l).setZero();
    if (L.variational()) {
      net.weight_rho(l).setConstant(kInitialPosteriorRho);
      net.bias_rho(l).setConstant(kInitialPosteriorRho);
      net.set_prior(l, {0.0, unit_prior_rho});
    }
  }
  return net;
}

EpsilonDraw draw_epsilon(const Network& net, Rng& rng) {
  EpsilonDraw eps;
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& L : net.layers()) {
    if (!L.variational()) {
      eps.weight.emplace_back();
      eps.bias.emplace_back();
      continue;
    }
    Matrix w(L.fan_in, L.spec.width);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = normal(rng);
    Vector b(L.spec.width);
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = normal(rng);
    eps.weight.push_back(std::move(w));
    eps.bias.push_back(std::move(b));
  }
  return eps;
}

EpsilonDraw zero_epsilon(const Network& net) {
  EpsilonDraw eps;
  for (const auto& L : net.layers()) {
    eps.weight.push_back(L.variational() ? Matrix::Zero(L.fan_in, L.spec.width) : Matrix());
    eps.bias.push_back(L.variational() ? Vector::Zero(L.spec.width) : Vector());
  }
  return eps;
}

Tape forward(const Network& net, const Matrix& x, const EpsilonDraw& eps) {
  if (x.cols() != Eigen::Index(net.input_dim()))
    throw ConfigError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                      std::to_string(net.input_dim()));
  Tape tape;
  tape.eps = eps;
  Matrix a = x;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& L = net.layers()[l];
    Matrix w = realized_weight(net, l, eps);
    const Vector b = realized_bias(net, l, eps);
    Matrix z = a * w;
    z.rowwise() += b.transpose();
    if (!all_finite(z)) throw NumericError("non-finite activation in layer " + std::to_string(l));
    tape.inputs.push_back(std::move(a));
    a = L.spec.activation == Activation::Relu ? Matrix(z.cwiseMax(0.0)) : z;
    tape.pre.push_back(std::move(z));
    tape.weights.push_back(std::move(w));
  }
  tape.output = std::move(a);
  return tape;
}

SampledOutput forward_sample(const Network& net, std::span<const double> x, Rng& rng) {
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, Eigen::Index(x.size()));
  SampledOutput out;
  out.tape = forward(net, row, draw_epsilon(net, rng));
  out.y = out.tape.output(0, 0);
  return out;
}

double forward_mean(const Network& net, std::span<const double> x) {
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, Eigen::Index(x.size()));
  return forward(net, row, zero_epsilon(net)).output(0, 0);
}

PosteriorSampler::PosteriorSampler(const Network& net) : net_(&net) {
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& L = net.layers()[l];
    if (L.variational()) {
      sigma_w_.push_back(net.weight_rho(l).unaryExpr([](double r) { return softplus(r); }));
      sigma_b_.push_back(net.bias_rho(l).unaryExpr([](double r) { return softplus(r); }));
    } else {
      sigma_w_.emplace_back();
      sigma_b_.emplace_back();
    }
    w_.emplace_back(L.fan_in, L.spec.width);
    b_.emplace_back(L.spec.width);
    act_.emplace_back(L.spec.width);
  }
}

double PosteriorSampler::sample(std::span<const double> x, Rng& rng) { return run(x, &rng); }
double PosteriorSampler::mean(std::span<const double> x) { return run(x, nullptr); }

double PosteriorSampler::run(std::span<const double> x, Rng* rng) {
  const Network& net = *net_;
  if (x.size() != net.input_dim()) throw ConfigError("input dimension mismatch");
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  // Same draw order as draw_epsilon: per variational layer, weights column-major then biases.
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    if (!net.layers()[l].variational() || !rng) continue;
    const auto mu_w = net.weight(l);
    for (Eigen::Index k = 0; k < mu_w.size(); ++k) w_[l].data()[k] = mu_w.data()[k] + sigma_w_[l].data()[k] * normal(*rng);
    const auto mu_b = net.bias(l);
    for (Eigen::Index k = 0; k < mu_b.size(); ++k) b_[l][k] = mu_b[k] + sigma_b_[l][k] * normal(*rng);
  }
  in_ = Eigen::Map<const Vector>(x.data(), Eigen::Index(x.size()));
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& L = net.layers()[l];
    const bool sampled = L.variational() && rng;
    const Vector& prev = l == 0 ? in_ : act_[l - 1];
    if (sampled)
      act_[l].noalias() = w_[l].transpose() * prev + b_[l];
    else
      act_[l].noalias() = net.weight(l).transpose() * prev + net.bias(l);
    if (!act_[l].allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(l));
    if (L.spec.activation == Activation::Relu) act_[l] = act_[l].cwiseMax(0.0);
  }
  return act_.back()[0];
}

double network_kl(const Network& net) { return kl_and_grads(net, 1.0, nullptr); }

BatchData gather_batch(const SampleSet& set, std::span<const std::size_t> indices) {
  BatchData b;
  const Eigen::Index n = Eigen::Index(indices.size());
  b.x.resize(n, Eigen::Index(kEncodedDim));
  b.y.resize(n);
  b.w.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Sample& s = set.samples[indices[std::size_t(r)]];
    for (std::size_t c = 0; c < kEncodedDim; ++c) b.x(r, Eigen::Index(c)) = s.encoded[c];
    b.y[r] = s.target;
    b.w[r] = s.weight;
  }
  return b;
}

BatchData gather_batch(const SampleSet& set) {
  std::vector<std::size_t> all(set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return gather_batch(set, all);
}

double loss_value(const Network& net, const BatchData& batch, const EpsilonDraw& eps, double kl_weight) {
  const Tape tape = forward(net, batch.x, eps);
  const Vector r = batch.y - tape.output.col(0);
  const double data = batch.w.dot(r.cwiseProduct(r)) / batch.w.sum();
  return data + (kl_weight != 0.0 ? kl_weight * network_kl(net) : 0.0);
}

LossAndGrads loss_and_grads(const Network& net, const BatchData& batch, const EpsilonDraw& eps, double kl_weight) {
  if (batch.x.rows() == 0) throw ConfigError("empty batch");
  const double wsum = batch.w.sum();
  if (!(wsum > 0.0)) throw ConfigError("batch weights sum to zero");

  const Tape tape = forward(net, batch.x, eps);
  const Vector r = batch.y - tape.output.col(0);

  LossAndGrads out;
  out.grads.assign(net.params().size(), 0.0);
  out.data_loss = batch.w.dot(r.cwiseProduct(r)) / wsum;

  Matrix upstream = (-2.0 / wsum) * batch.w.cwiseProduct(r);  // d loss / d output, batch x 1
  for (std::size_t li = net.layers().size(); li-- > 0;) {
    const auto& L = net.layers()[li];
    Matrix dz = std::move(upstream);
    if (L.spec.activation == Activation::Relu) dz = dz.cwiseProduct((tape.pre[li].array() > 0.0).cast<double>().matrix());
    const Matrix dw = tape.inputs[li].transpose() * dz;
    const Vector db = dz.colwise().sum().transpose();
    if (li > 0) upstream = dz * tape.weights[li].transpose();

    Eigen::Map<Matrix> gw(out.grads.data() + L.weight, L.fan_in, L.spec.width);
    Eigen::Map<Vector> gb(out.grads.data() + L.bias, L.spec.width);
    gw += dw;
    gb += db;
    if (L.variational()) {
      // dw/drho = eps * sigmoid(rho)
      Eigen::Map<Matrix> gwr(out.grads.data() + L.weight_rho, L.fan_in, L.spec.width);
      Eigen::Map<Vector> gbr(out.grads.data() + L.bias_rho, L.spec.width);
      gwr += dw.cwiseProduct(eps.weight[li]).cwiseProduct(net.weight_rho(li).unaryExpr([](double v) { return sigmoid(v); }));
      gbr += db.cwiseProduct(eps.bias[li]).cwiseProduct(net.bias_rho(li).unaryExpr([](double v) { return sigmoid(v); }));
    }
  }

  out.kl = net.has_variational() ? kl_and_grads(net, kl_weight, &out.grads) : 0.0;
  out.loss = out.data_loss + kl_weight * out.kl;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

LossAndGrads loss_and_grads(const Network& net, const BatchData& batch, Rng& rng, double kl_weight) {
  return loss_and_grads(net, batch, draw_epsilon(net, rng), kl_weight);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ConfigError("adam_step: size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (kl_scale_mode == KlScaleMode::Constant && !(kl_weight >= 0.0)) throw ConfigError("kl_weight must be >= 0");
}

double TrainConfig::effective_kl_weight(std::size_t n_train) const {
  if (kl_scale_mode == KlScaleMode::Constant) return kl_weight;
  return double(batch_size) / double(n_train);
}

Vector predict_mean(const Network& net, const Matrix& x) {
  const EpsilonDraw zero = zero_epsilon(net);
  Vector out(x.rows());
  constexpr Eigen::Index chunk = 4096;
  for (Eigen::Index r = 0; r < x.rows(); r += chunk) {
    const Eigen::Index n = std::min(chunk, x.rows() - r);
    out.segment(r, n) = forward(net, x.middleRows(r, n), zero).output.col(0);
  }
  return out;
}

TrainHistory train(Network& net, const SampleSet& train_set, const TrainConfig& config, const SampleSet* validation) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  const double kl_weight = config.effective_kl_weight(train_set.size());
  AdamState state(net.params().size());
  Rng eps_rng = make_rng(config.seed, {0xe95});

  BatchData val;
  if (validation && !validation->empty()) val = gather_batch(*validation);

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const BatchPlan plan = batches(train_set, config.batch_size, derive_seed(config.seed, {std::uint64_t(epoch)}));
    double sum = 0.0;
    for (std::size_t b = 0; b < plan.count(); ++b) {
      const BatchData batch = gather_batch(train_set, plan.batch(b));
      LossAndGrads lg;
      try {
        lg = loss_and_grads(net, batch, eps_rng, kl_weight);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": " + e.what());
      }
      adam_step(net.params(), lg.grads, state, config.adam);
      sum += lg.loss;
      history.step_loss.push_back(lg.loss);
    }
    history.train_loss.push_back(sum / double(plan.count()));
    if (val.x.rows() > 0) {
      const Vector r = val.y - predict_mean(net, val.x);
      history.validation_mse.push_back(r.squaredNorm() / double(r.size()));
    } else {
      history.validation_mse.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return history;
}

}  // namespace vtec
