#include "hetreg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

Eigen::MatrixXd leaky(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return leaky_relu(v); });
}

Eigen::MatrixXd leaky_grad(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : kLeakySlope; });
}

}  // namespace

void MLP::build_layout() {
  layers_.clear();
  std::size_t offset = 0;
  std::size_t in = input_dim_;
  std::vector<std::size_t> outs = hidden_;
  outs.push_back(1);
  for (std::size_t out : outs) {
    LayerLayout l;
    l.rows = out;
    l.cols = in;
    l.weight_offset = offset;
    offset += out * in;
    l.bias_offset = offset;
    offset += out;
    layers_.push_back(l);
    in = out;
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

MLP MLP::init(std::size_t input_dim, const std::vector<std::size_t>& hidden, Head head, std::uint64_t seed) {
  if (input_dim == 0) throw DimensionError("MLP: input dimension must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw DimensionError("MLP: hidden widths must be positive");
  }
  MLP net;
  net.input_dim_ = input_dim;
  net.hidden_ = hidden;
  net.head_ = head;
  net.build_layout();

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layers_[l].cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto W = net.weight(l);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
    }
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
  }
  return net;
}

Eigen::Map<Eigen::MatrixXd> MLP::weight(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return {params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.rows), static_cast<Eigen::Index>(l.cols)};
}

Eigen::Map<const Eigen::MatrixXd> MLP::weight(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return {params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.rows), static_cast<Eigen::Index>(l.cols)};
}

Eigen::Map<Eigen::VectorXd> MLP::bias(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return {params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.rows)};
}

Eigen::Map<const Eigen::VectorXd> MLP::bias(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return {params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.rows)};
}

Eigen::VectorXd MLP::penalty_mask(bool include_hidden_biases) const {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(params_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    mask.segment(static_cast<Eigen::Index>(L.weight_offset), static_cast<Eigen::Index>(L.rows * L.cols)).setOnes();
    const bool output_layer = l + 1 == layers_.size();
    if (include_hidden_biases && !output_layer) {
      mask.segment(static_cast<Eigen::Index>(L.bias_offset), static_cast<Eigen::Index>(L.rows)).setOnes();
    }
  }
  return mask;
}

Eigen::VectorXd MLP::forward_tape(const Eigen::MatrixXd& x, Tape& tape) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim_) {
    throw DimensionError("MLP: input has " + std::to_string(x.cols()) + " features, network expects " +
                         std::to_string(input_dim_));
  }
  tape.activations.clear();
  tape.preacts.clear();
  tape.activations.push_back(x.transpose());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weight(l) * tape.activations.back();
    z.colwise() += bias(l);
    const bool output_layer = l + 1 == layers_.size();
    if (!output_layer) tape.activations.push_back(leaky(z));
    tape.preacts.push_back(std::move(z));
  }
  return tape.preacts.back().row(0).transpose();
}

void MLP::backward(const Tape& tape, const Eigen::VectorXd& dz_out, Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = dz_out.transpose();  // 1 x n
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    const auto& a_in = tape.activations[l];
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + L.weight_offset, static_cast<Eigen::Index>(L.rows),
                                   static_cast<Eigen::Index>(L.cols));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + L.bias_offset, static_cast<Eigen::Index>(L.rows));
    gW.noalias() += delta * a_in.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd da = weight(l).transpose() * delta;
      delta = da.cwiseProduct(leaky_grad(tape.preacts[l - 1]));
    }
  }
}

double MLP::forward(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd row = x.transpose();
  return forward_batch(row)(0);
}

Eigen::VectorXd MLP::forward_batch(const Eigen::MatrixXd& x) const {
  Tape tape;
  Eigen::VectorXd z = forward_tape(x, tape);
  if (head_ == Head::softplus) z = z.unaryExpr([](double v) { return softplus(v); });
  return z;
}

nlohmann::json MLP::to_json() const {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto W = weight(l);
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(W.cols()));
      for (Eigen::Index j = 0; j < W.cols(); ++j) r[static_cast<std::size_t>(j)] = W(i, j);
      rows.push_back(std::move(r));
    }
    weights.push_back(std::move(rows));
    const auto b = bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  std::vector<std::size_t> widths{input_dim_};
  widths.insert(widths.end(), hidden_.begin(), hidden_.end());
  widths.push_back(1);
  return {{"widths", widths},
          {"head", head_ == Head::softplus ? "softplus" : "identity"},
          {"weights", std::move(weights)},
          {"biases", std::move(biases)}};
}

MLP MLP::from_json(const nlohmann::json& j) {
  try {
    const auto widths = j.at("widths").get<std::vector<std::size_t>>();
    if (widths.size() < 2 || widths.back() != 1) throw SchemaError("MLP JSON: widths must end with 1");
    MLP net;
    net.input_dim_ = widths.front();
    net.hidden_.assign(widths.begin() + 1, widths.end() - 1);
    net.head_ = j.at("head").get<std::string>() == "softplus" ? Head::softplus : Head::identity;
    net.build_layout();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.layers_.size() || biases.size() != net.layers_.size()) {
      throw SchemaError("MLP JSON: layer count mismatch");
    }
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      auto W = net.weight(l);
      const auto& rows = weights.at(l);
      if (static_cast<Eigen::Index>(rows.size()) != W.rows()) throw SchemaError("MLP JSON: weight shape mismatch");
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        const auto r = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != W.cols()) throw SchemaError("MLP JSON: weight shape mismatch");
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(i, c) = r[static_cast<std::size_t>(c)];
      }
      const auto b = biases.at(l).get<std::vector<double>>();
      auto B = net.bias(l);
      if (static_cast<Eigen::Index>(b.size()) != B.size()) throw SchemaError("MLP JSON: bias shape mismatch");
      for (Eigen::Index i = 0; i < B.size(); ++i) B(i) = b[static_cast<std::size_t>(i)];
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("MLP JSON: ") + e.what());
  }
}

namespace {

LossGrad loss_and_grads_impl(const MLP& mean_net, const MLP& precision_net, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& y, const TermWeights& w, bool penalize_hidden_biases,
                             bool need_phi) {
  if (x.rows() == 0) throw DimensionError("loss_and_grads: empty batch");
  if (x.rows() != y.size()) throw DimensionError("loss_and_grads: x and y row counts differ");
  const double n = static_cast<double>(x.rows());

  MLP::Tape tmu;
  MLP::Tape tlam;
  const Eigen::VectorXd mu = mean_net.forward_tape(x, tmu);
  const Eigen::VectorXd zlam = precision_net.forward_tape(x, tlam);

  LossGrad out;
  Eigen::VectorXd dmu(mu.size());
  Eigen::VectorXd dzlam(mu.size());
  double data = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double lam = softplus(zlam(i));
    const double r = mu(i) - y(i);
    data += 0.5 * lam * r * r - 0.5 * std::log(lam);
    dmu(i) = w.data * lam * r / n;
    dzlam(i) = w.data * 0.5 * (r * r - 1.0 / lam) * sigmoid(zlam(i)) / n;
  }
  data /= n;
  out.data = data;

  const Eigen::VectorXd mask_theta = mean_net.penalty_mask(penalize_hidden_biases);
  const Eigen::VectorXd mask_phi = precision_net.penalty_mask(penalize_hidden_biases);
  const Eigen::VectorXd theta_pen = mean_net.params().cwiseProduct(mask_theta);
  const Eigen::VectorXd phi_pen = precision_net.params().cwiseProduct(mask_phi);

  out.loss = w.data * data + w.mean_penalty * theta_pen.squaredNorm() +
             w.precision_penalty * phi_pen.squaredNorm();

  out.grad_theta = 2.0 * w.mean_penalty * theta_pen;
  mean_net.backward(tmu, dmu, out.grad_theta);
  if (need_phi) {
    out.grad_phi = 2.0 * w.precision_penalty * phi_pen;
    precision_net.backward(tlam, dzlam, out.grad_phi);
  }
  return out;
}

}  // namespace

LossGrad loss_and_grads(const MLP& mean_net, const MLP& precision_net, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, const TermWeights& w, bool penalize_hidden_biases) {
  return loss_and_grads_impl(mean_net, precision_net, x, y, w, penalize_hidden_biases, true);
}

LossGrad loss_and_grads(const MLP& mean_net, const MLP& precision_net, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, const RegPair& reg, bool penalize_hidden_biases) {
  return loss_and_grads_impl(mean_net, precision_net, x, y, TermWeights::from(reg), penalize_hidden_biases, true);
}

TrainConfig TrainConfig::desk(long long epochs, std::vector<std::size_t> hidden, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = epochs;
  c.hidden = std::move(hidden);
  c.seed = seed;
  c.lr.cycle_len = std::max<long long>(2, epochs / 10);
  c.trace_every = std::max<long long>(1, epochs / 1000);
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("train config: epochs must be >= 1");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw DomainError("train config: warmup_fraction must lie in (0, 1)");
  }
  if (!(grad_clip > 0.0)) throw DomainError("train config: grad_clip must be positive");
  if (batch_size == 0) throw DomainError("train config: batch_size must be positive");
  if (trace_every < 1) throw DomainError("train config: trace_every must be >= 1");
  lr.validate();
}

TrainResult train_heteroskedastic(const Dataset& train, const RegPair& reg, const TrainConfig& config) {
  config.validate();
  if (train.rows() == 0) throw DimensionError("train_heteroskedastic: empty dataset");

  TrainResult res;
  res.reg = reg;
  res.seed = config.seed;
  res.epochs = config.epochs;
  res.mean_net = MLP::init(train.dims(), config.hidden, Head::identity, derive_seed(config.seed, 100));
  res.precision_net = MLP::init(train.dims(), config.hidden, Head::softplus, derive_seed(config.seed, 101));

  const TermWeights w = TermWeights::from(reg);
  AdamState adam_theta(res.mean_net.num_params());
  AdamState adam_phi(res.precision_net.num_params());
  for (AdamState* a : {&adam_theta, &adam_phi}) {
    a->beta1 = config.beta1;
    a->beta2 = config.beta2;
    a->eps = config.eps;
  }

  const auto warmup_epochs = static_cast<long long>(std::llround(config.warmup_fraction * static_cast<double>(config.epochs)));
  const std::size_t n = train.rows();
  const bool minibatch = n > config.minibatch_threshold;
  const std::size_t batch = minibatch ? std::min(config.batch_size, n) : n;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(config.seed, 102));

  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  Eigen::VectorXd theta_step;
  Eigen::VectorXd phi_step;

  for (long long epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cyclic_lr(epoch, config.lr);
    const bool joint = epoch >= warmup_epochs;
    if (minibatch) std::shuffle(order.begin(), order.end(), rng);

    double last_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const Eigen::MatrixXd* xp = &train.x;
      const Eigen::VectorXd* yp = &train.y;
      if (minibatch) {
        const auto m = static_cast<Eigen::Index>(stop - start);
        xb.resize(m, train.x.cols());
        yb.resize(m);
        for (Eigen::Index i = 0; i < m; ++i) {
          const Eigen::Index src = order[start + static_cast<std::size_t>(i)];
          xb.row(i) = train.x.row(src);
          yb(i) = train.y(src);
        }
        xp = &xb;
        yp = &yb;
      }

      LossGrad lg = loss_and_grads_impl(res.mean_net, res.precision_net, *xp, *yp, w,
                                        config.penalize_hidden_biases, joint);
      if (!std::isfinite(lg.loss)) {
        throw DivergedError("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
      }
      last_loss = lg.loss;

      double sq = lg.grad_theta.squaredNorm();
      if (joint) sq += lg.grad_phi.squaredNorm();
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) {
        throw DivergedError("non-finite gradient at epoch " + std::to_string(epoch), epoch);
      }
      if (norm > config.grad_clip) {
        const double s = config.grad_clip / norm;
        lg.grad_theta *= s;
        if (joint) lg.grad_phi *= s;
      }
      adam_step({res.mean_net.params().data(), res.mean_net.num_params()},
                {lg.grad_theta.data(), res.mean_net.num_params()}, adam_theta, lr);
      if (joint) {
        adam_step({res.precision_net.params().data(), res.precision_net.num_params()},
                  {lg.grad_phi.data(), res.precision_net.num_params()}, adam_phi, lr);
      }
    }
    if (epoch % config.trace_every == 0 || epoch + 1 == config.epochs) res.loss_trace.push_back(last_loss);
  }
  return res;
}

Prediction predict(const TrainResult& model, const Eigen::MatrixXd& x) {
  return {model.mean_net.forward_batch(x), model.precision_net.forward_batch(x)};
}

nlohmann::json to_json(const TrainResult& model) {
  return {{"mean_net", model.mean_net.to_json()},
          {"precision_net", model.precision_net.to_json()},
          {"rho", model.reg.rho()},
          {"gamma", model.reg.gamma()},
          {"seed", model.seed},
          {"epochs", model.epochs},
          {"loss_trace", model.loss_trace}};
}

TrainResult train_result_from_json(const nlohmann::json& j) {
  TrainResult r;
  r.mean_net = MLP::from_json(j.at("mean_net"));
  r.precision_net = MLP::from_json(j.at("precision_net"));
  r.reg = RegPair::make(j.at("rho").get<double>(), j.at("gamma").get<double>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epochs = j.at("epochs").get<long long>();
  r.loss_trace = j.value("loss_trace", std::vector<double>{});
  return r;
}

}  // namespace hetreg
