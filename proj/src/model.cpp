#include "pirank/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pirank/kernels.hpp"
#include "pirank/rng.hpp"
#include "omp.hpp"

namespace pirank::model {

namespace {

constexpr char kMagic[9] = {'P', 'I', 'R', 'A', 'N', 'K', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("checkpoint: unexpected end of file");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void put_doubles(std::ostream& out, const Tensor& t) {
  for (double v : t.values()) put_le(out, std::bit_cast<std::uint64_t>(v));
}

void get_doubles(std::istream& in, Tensor& t) {
  for (double& v : t.data()) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
}

double tensor_norm_sq(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s;
}

std::vector<double> masked(std::span<const double> values, std::span<const std::uint8_t> mask) {
  std::vector<double> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask.empty() || mask[i]) out.push_back(values[i]);
  }
  return out;
}

}  // namespace

Mlp::Mlp(const MlpConfig& cfg, std::uint64_t seed) {
  if (cfg.input_width == 0) throw std::invalid_argument("MLP input width must be positive");
  Rng rng(seed);
  std::size_t fan_in = cfg.input_width;
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(1);
  for (std::size_t fan_out : widths) {
    if (fan_out == 0) throw std::invalid_argument("MLP layer width must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Layer layer{Tensor({fan_in, fan_out}), Tensor({1, fan_out})};
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    layers_.push_back(std::move(layer));
    fan_in = fan_out;
  }
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("MLP needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 2 || l.bias.dim(0) != 1 ||
        l.bias.dim(1) != l.weight.dim(1)) {
      throw std::invalid_argument("MLP layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && l.weight.dim(0) != layers_[i - 1].weight.dim(1)) {
      throw std::invalid_argument("MLP layer " + std::to_string(i) + " does not chain");
    }
  }
  if (layers_.back().weight.dim(1) != 1) throw std::invalid_argument("MLP output width must be 1");
}

std::size_t Mlp::input_width() const {
  return layers_.empty() ? 0 : layers_.front().weight.dim(0);
}

std::vector<std::size_t> Mlp::hidden_sizes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) out.push_back(layers_[i].weight.dim(1));
  return out;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Var> Mlp::bind(Graph& graph) const {
  std::vector<Var> out;
  for (const Tensor* p : parameters()) out.push_back(graph.leaf(*p));
  return out;
}

Var Mlp::score(Graph& graph, const std::vector<Var>& params, const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != input_width()) {
    throw std::invalid_argument("feature width " +
                                (features.rank() == 2 ? std::to_string(features.dim(1)) : "?") +
                                " does not match model input width " +
                                std::to_string(input_width()));
  }
  if (params.size() != 2 * layers_.size()) throw std::invalid_argument("parameter count mismatch");
  const std::size_t rows = features.dim(0);
  Var ones = graph.constant(Tensor({rows, 1}, 1.0));
  Var h = graph.constant(features);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = add(matmul(h, params[2 * i]), matmul(ones, params[2 * i + 1]));
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return reshape(h, {rows});
}

std::vector<double> Mlp::predict(const Tensor& features) const {
  Graph graph;
  std::vector<Var> params;
  for (const Tensor* p : parameters()) params.push_back(graph.constant(*p));
  return score(graph, params, features).value().values();
}

void Mlp::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (const Layer& l : layers_) {
    put_le<std::uint64_t>(out, l.weight.dim(0));
    put_le<std::uint64_t>(out, l.weight.dim(1));
  }
  for (const Layer& l : layers_) {
    put_doubles(out, l.weight);
    put_doubles(out, l.bias);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Mlp Mlp::read(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in);
  if (count == 0 || count > 4096) throw std::runtime_error("checkpoint: bad layer count");
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto fan_in = get_le<std::uint64_t>(in);
    const auto fan_out = get_le<std::uint64_t>(in);
    if (fan_in == 0 || fan_out == 0 || fan_in > (1u << 24) || fan_out > (1u << 24)) {
      throw std::runtime_error("checkpoint: bad layer shape");
    }
    layers.push_back({Tensor({fan_in, fan_out}), Tensor({1, fan_out})});
  }
  for (Layer& l : layers) {
    get_doubles(in, l.weight);
    get_doubles(in, l.bias);
  }
  try {
    return Mlp(std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

void Mlp::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out);
}

Mlp Mlp::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (!(a.layers_[i].weight == b.layers_[i].weight) || !(a.layers_[i].bias == b.layers_[i].bias)) {
      return false;
    }
  }
  return true;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != m_[i].shape()) {
      throw std::invalid_argument("Adam: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

double TemperatureSchedule::at(std::size_t epoch) const {
  return std::max(std::min(floor, tau), tau * std::pow(decay, static_cast<double>(epoch)));
}

BatchResult batch_gradient(const Mlp& mlp, const std::vector<const data::QueryGroup*>& batch,
                           const losses::LossConfig& loss) {
  const std::size_t n = batch.size();
  std::vector<double> values(n, 0.0);
  std::vector<std::vector<Tensor>> grads(n);
  std::vector<std::uint8_t> skipped(n, 0);
  std::vector<std::exception_ptr> errors(n);

  const long count = static_cast<long>(n);
  PIRANK_OMP(parallel for schedule(dynamic) num_threads(num_threads()))
  for (long q = 0; q < count; ++q) {
    try {
      const data::QueryGroup& group = *batch[q];
      Graph graph;
      std::vector<Var> params = mlp.bind(graph);
      Var scores = mlp.score(graph, params, group.features);
      losses::QueryLoss ql = losses::build_loss(loss, group.labels, group.mask, scores);
      if (ql.skipped) {
        skipped[q] = 1;
        continue;
      }
      values[q] = ql.value.value().item();
      Gradients g = graph.backward(ql.value);
      for (Var p : params) grads[q].push_back(g[p]);
    } catch (...) {
      errors[q] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchResult out;
  for (const Tensor* p : mlp.parameters()) out.grads.emplace_back(p->shape());
  std::size_t used = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (skipped[q]) {
      ++out.skipped;
      continue;
    }
    ++used;
    out.loss += values[q];
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
      auto dst = out.grads[i].data();
      auto src = grads[q][i].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  if (used > 0) {
    const double inv = 1.0 / static_cast<double>(used);
    out.loss *= inv;
    for (Tensor& g : out.grads) {
      for (double& v : g.data()) v *= inv;
    }
  }
  return out;
}

double dataset_loss(const Mlp& mlp, const data::Dataset& data, const losses::LossConfig& loss) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& group : data.groups) {
    Graph graph;
    std::vector<Var> params;
    for (const Tensor* p : mlp.parameters()) params.push_back(graph.constant(*p));
    Var scores = mlp.score(graph, params, group.features);
    losses::QueryLoss ql = losses::build_loss(loss, group.labels, group.mask, scores);
    if (ql.skipped) continue;
    total += ql.value.value().item();
    ++used;
  }
  return used > 0 ? total / static_cast<double>(used) : 0.0;
}

std::vector<metrics::QueryMetrics> evaluate(const Mlp& mlp, const data::Dataset& data,
                                            const std::vector<std::size_t>& cutoffs) {
  std::vector<metrics::QueryMetrics> rows;
  rows.reserve(data.groups.size());
  for (const auto& group : data.groups) {
    const std::vector<double> scores = mlp.predict(group.features);
    const std::vector<double> labels = masked(group.labels, group.mask);
    const std::vector<double> kept = masked(scores, group.mask);
    if (labels.empty()) continue;
    rows.push_back(metrics::evaluate_query(labels, kept, cutoffs, group.qid));
  }
  return rows;
}

namespace {

void fill_validation(EpochRecord& rec, const Mlp& mlp, const data::Dataset& valid,
                     const TrainConfig& cfg, double tau) {
  const auto rows = evaluate(mlp, valid, cfg.cutoffs);
  for (std::size_t k : cfg.cutoffs) {
    rec.ndcg.push_back(metrics::mean_metric(rows, "ndcg@" + std::to_string(k)));
  }
  rec.mrr = metrics::mean_metric(rows, "mrr");
  rec.arp = metrics::mean_metric(rows, "rp");
  rec.opa = metrics::mean_metric(rows, "opa");
  losses::LossConfig relaxed = cfg.loss;
  relaxed.tau = tau;
  relaxed.straight_through = false;
  rec.val_loss = dataset_loss(mlp, valid, relaxed);
}

double stop_metric(const Mlp& mlp, const data::Dataset& valid, std::size_t k) {
  const auto rows = evaluate(mlp, valid, {k});
  return metrics::mean_metric(rows, "ndcg@" + std::to_string(k)).value_or(0.0);
}

}  // namespace

TrainResult train(Mlp init, const data::Dataset& train_data, const data::Dataset* valid,
                  const TrainConfig& cfg, std::ostream* diagnostics) {
  if (train_data.groups.empty()) throw std::invalid_argument("training split is empty");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (!(cfg.adam.lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(cfg.tau_decay > 0.0 && cfg.tau_decay <= 1.0)) {
    throw std::invalid_argument("tau decay must be in (0, 1]");
  }
  if (valid != nullptr && valid->groups.empty()) valid = nullptr;

  const TemperatureSchedule schedule{cfg.loss.tau, cfg.tau_decay, cfg.tau_floor};
  TrainResult result;
  Mlp mlp = std::move(init);
  Adam adam(cfg.adam);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_data.groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto record = [&](std::size_t epoch, std::size_t step, double loss, double tau, double gnorm) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.loss = loss;
    rec.tau = tau;
    rec.grad_norm = gnorm;
    if (valid != nullptr && cfg.evaluate_epochs) fill_validation(rec, mlp, *valid, cfg, tau);
    result.log.push_back(std::move(rec));
  };

  {
    losses::LossConfig lc = cfg.loss;
    lc.tau = schedule.at(0);
    const double loss0 = cfg.evaluate_epochs ? dataset_loss(mlp, train_data, lc) : 0.0;
    record(0, 0, loss0, lc.tau, 0.0);
  }

  double best = -1.0;
  Mlp best_model = mlp;
  std::size_t since_best = 0;
  if (valid != nullptr) best = stop_metric(mlp, *valid, cfg.early_stop_k);

  std::size_t step = 0;
  bool capped = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !capped; ++epoch) {
    losses::LossConfig lc = cfg.loss;
    lc.tau = schedule.at(epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double max_norm = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const data::QueryGroup*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&train_data.groups[order[i]]);
      }
      BatchResult br = batch_gradient(mlp, batch, lc);
      double norm_sq = 0.0;
      for (const Tensor& g : br.grads) norm_sq += tensor_norm_sq(g);
      const double norm = std::sqrt(norm_sq);
      if (!std::isfinite(br.loss) || !std::isfinite(norm)) {
        std::ostringstream msg;
        msg << "non-finite " << (std::isfinite(br.loss) ? "gradient" : "loss") << " at epoch "
            << epoch << " step " << step + 1 << " (tau = " << lc.tau
            << "); the temperature is likely too low";
        throw NumericError(msg.str());
      }
      if (norm > cfg.grad_warn) {
        ++result.gradient_warnings;
        if (diagnostics != nullptr) {
          *diagnostics << "warning: gradient norm " << norm << " exceeds " << cfg.grad_warn
                       << " at epoch " << epoch << " step " << step + 1 << " (tau = " << lc.tau
                       << ")\n";
        }
      }
      max_norm = std::max(max_norm, norm);
      adam.step(mlp.parameters(), br.grads);
      loss_sum += br.loss;
      ++batches;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    record(epoch, step, loss_sum / static_cast<double>(batches), lc.tau, max_norm);

    if (valid != nullptr) {
      const double metric = stop_metric(mlp, *valid, cfg.early_stop_k);
      if (metric > best) {
        best = metric;
        best_model = mlp;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }

  if (valid != nullptr) {
    result.model = std::move(best_model);
  } else {
    result.model = std::move(mlp);
    result.best_epoch = result.log.back().epoch;
  }
  return result;
}

void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& log,
                     const std::vector<std::size_t>& cutoffs) {
  out << "epoch,step,loss,tau";
  for (std::size_t k : cutoffs) out << ",ndcg@" << k;
  out << ",mrr,arp,opa,val_loss,grad_norm\n";
  auto opt = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  const auto old_precision = out.precision(17);
  for (const EpochRecord& r : log) {
    out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.tau;
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
      opt(i < r.ndcg.size() ? r.ndcg[i] : std::nullopt);
    }
    opt(r.mrr);
    opt(r.arp);
    opt(r.opa);
    if (r.ndcg.empty() && !r.mrr) {
      out << ',';
    } else {
      out << ',' << r.val_loss;
    }
    out << ',' << r.grad_norm << '\n';
  }
  out.precision(old_precision);
}

}  // namespace pirank::model
