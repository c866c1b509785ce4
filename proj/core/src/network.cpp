#include "metashift/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "metashift/error.hpp"
#include "metashift/rng.hpp"
#include "metashift/textio.hpp"

namespace metashift {

namespace {

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

// Activations kept for the backward pass.
struct ForwardCache {
  std::size_t movements = 0;
  std::size_t phases = 0;
  std::vector<double> x;    // M x 2
  std::vector<double> h;    // M x E, pre-activation
  std::vector<double> e;    // M x E
  std::vector<double> rho;  // P x E
  std::vector<double> z;    // (P*P) x C, pre-activation; diagonal unused
  std::vector<double> c;    // (P*P) x C
  std::vector<double> q;    // P
};

void check_inputs(const QNetworkParams& params, const Observation& obs,
                  const IntersectionConfig& config) {
  if (obs.queue_counts.size() != config.n_movements || obs.green_flags.size() != config.n_movements)
    throw ShapeError(fmt::format("observation has {} movements, config expects {}",
                                 obs.queue_counts.size(), config.n_movements));
  const auto E = params.dims.embed_dim;
  const auto C = params.dims.compete_dim;
  if (params.embed_w.rows != E || params.embed_w.cols != 2 || params.embed_b.size() != E ||
      params.compete_w.rows != C || params.compete_w.cols != 2 * E || params.compete_b.size() != C ||
      params.readout_w.size() != C || params.readout_b.size() != 1)
    throw ShapeError("parameter tensors disagree with their declared dimensions");
  if (config.n_phases() < 2) throw ShapeError("the competition head needs at least two phases");
}

void forward(const QNetworkParams& params, const Observation& obs, const IntersectionConfig& config,
             ForwardCache& cache) {
  check_inputs(params, obs, config);
  const auto M = config.n_movements;
  const auto P = config.n_phases();
  const auto E = params.dims.embed_dim;
  const auto C = params.dims.compete_dim;
  cache.movements = M;
  cache.phases = P;
  cache.x.resize(M * 2);
  cache.h.resize(M * E);
  cache.e.resize(M * E);
  cache.rho.assign(P * E, 0.0);
  cache.z.assign(P * P * C, 0.0);
  cache.c.assign(P * P * C, 0.0);
  cache.q.assign(P, 0.0);

  for (std::size_t i = 0; i < M; ++i) {
    const double x0 = obs.queue_counts[i] * params.dims.demand_scale;
    const double x1 = obs.green_flags[i];
    cache.x[i * 2] = x0;
    cache.x[i * 2 + 1] = x1;
    for (std::size_t k = 0; k < E; ++k) {
      const double h = params.embed_w(k, 0) * x0 + params.embed_w(k, 1) * x1 + params.embed_b.data[k];
      cache.h[i * E + k] = h;
      cache.e[i * E + k] = relu(h);
    }
  }
  for (std::size_t p = 0; p < P; ++p) {
    const auto& members = config.phases[p];
    const double inv = 1.0 / static_cast<double>(members.size());
    for (auto i : members)
      for (std::size_t k = 0; k < E; ++k) cache.rho[p * E + k] += cache.e[i * E + k];
    for (std::size_t k = 0; k < E; ++k) cache.rho[p * E + k] *= inv;
  }
  // z_pq = b + W_left rho_p + W_right rho_q
  std::vector<double> left(P * C, 0.0), right(P * C, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t j = 0; j < C; ++j) {
      double l = 0.0, r = 0.0;
      for (std::size_t k = 0; k < E; ++k) {
        l += params.compete_w(j, k) * cache.rho[p * E + k];
        r += params.compete_w(j, E + k) * cache.rho[p * E + k];
      }
      left[p * C + j] = l;
      right[p * C + j] = r;
    }
  }
  const double b_r = params.readout_b.data[0];
  for (std::size_t p = 0; p < P; ++p) {
    double qp = 0.0;
    for (std::size_t q = 0; q < P; ++q) {
      if (q == p) continue;
      const std::size_t base = (p * P + q) * C;
      double score = b_r;
      for (std::size_t j = 0; j < C; ++j) {
        const double z = params.compete_b.data[j] + left[p * C + j] + right[q * C + j];
        cache.z[base + j] = z;
        const double c = relu(z);
        cache.c[base + j] = c;
        score += params.readout_w.data[j] * c;
      }
      qp += score;
    }
    cache.q[p] = qp;
  }
}

// Accumulates d(sum_p gq[p] * Q(p)) / d(theta) into grads.
void backward(const QNetworkParams& params, const IntersectionConfig& config,
              const ForwardCache& cache, std::span<const double> gq, GradientSet& grads) {
  const auto M = cache.movements;
  const auto P = cache.phases;
  const auto E = params.dims.embed_dim;
  const auto C = params.dims.compete_dim;
  std::vector<double> d_left(P * C, 0.0), d_right(P * C, 0.0);

  for (std::size_t p = 0; p < P; ++p) {
    const double g = gq[p];
    if (g == 0.0) continue;
    for (std::size_t q = 0; q < P; ++q) {
      if (q == p) continue;
      const std::size_t base = (p * P + q) * C;
      grads.readout_b.data[0] += g;
      for (std::size_t j = 0; j < C; ++j) {
        grads.readout_w.data[j] += g * cache.c[base + j];
        if (cache.z[base + j] <= 0.0) continue;
        const double dz = g * params.readout_w.data[j];
        grads.compete_b.data[j] += dz;
        d_left[p * C + j] += dz;
        d_right[q * C + j] += dz;
      }
    }
  }

  std::vector<double> d_rho(P * E, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t j = 0; j < C; ++j) {
      const double dl = d_left[p * C + j];
      const double dr = d_right[p * C + j];
      if (dl == 0.0 && dr == 0.0) continue;
      for (std::size_t k = 0; k < E; ++k) {
        const double rho = cache.rho[p * E + k];
        grads.compete_w(j, k) += dl * rho;
        grads.compete_w(j, E + k) += dr * rho;
        d_rho[p * E + k] += params.compete_w(j, k) * dl + params.compete_w(j, E + k) * dr;
      }
    }
  }

  std::vector<double> d_e(M * E, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    const auto& members = config.phases[p];
    const double inv = 1.0 / static_cast<double>(members.size());
    for (auto i : members)
      for (std::size_t k = 0; k < E; ++k) d_e[i * E + k] += d_rho[p * E + k] * inv;
  }
  for (std::size_t i = 0; i < M; ++i) {
    const double x0 = cache.x[i * 2];
    const double x1 = cache.x[i * 2 + 1];
    for (std::size_t k = 0; k < E; ++k) {
      if (cache.h[i * E + k] <= 0.0) continue;
      const double dh = d_e[i * E + k];
      grads.embed_w(k, 0) += dh * x0;
      grads.embed_w(k, 1) += dh * x1;
      grads.embed_b.data[k] += dh;
    }
  }
}

void fill_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

}  // namespace

// ---- QNetworkParams ----------------------------------------------------------

QNetworkParams QNetworkParams::zeros(const NetworkDims& dims) {
  if (dims.embed_dim == 0 || dims.compete_dim == 0) throw ArgumentError("network dimensions must be positive");
  if (!(dims.demand_scale > 0.0)) throw ArgumentError("demand_scale must be positive");
  QNetworkParams p;
  p.dims = dims;
  p.embed_w = Tensor(dims.embed_dim, 2);
  p.embed_b = Tensor(dims.embed_dim, 1);
  p.compete_w = Tensor(dims.compete_dim, 2 * dims.embed_dim);
  p.compete_b = Tensor(dims.compete_dim, 1);
  p.readout_w = Tensor(1, dims.compete_dim);
  p.readout_b = Tensor(1, 1);
  return p;
}

std::array<Tensor*, kTensorCount> QNetworkParams::tensors() noexcept {
  return {&embed_w, &embed_b, &compete_w, &compete_b, &readout_w, &readout_b};
}

std::array<const Tensor*, kTensorCount> QNetworkParams::tensors() const noexcept {
  return {&embed_w, &embed_b, &compete_w, &compete_b, &readout_w, &readout_b};
}

std::size_t QNetworkParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

bool QNetworkParams::same_shape(const QNetworkParams& other) const noexcept {
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i)
    if (a[i]->rows != b[i]->rows || a[i]->cols != b[i]->cols) return false;
  return true;
}

void QNetworkParams::add_scaled(const QNetworkParams& other, double scale) {
  if (!same_shape(other)) throw ShapeError("parameter shapes differ");
  auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i)
    for (std::size_t k = 0; k < a[i]->data.size(); ++k) a[i]->data[k] += scale * b[i]->data[k];
}

double QNetworkParams::l2_norm() const noexcept {
  double sum = 0.0;
  for (const auto* t : tensors())
    for (double v : t->data) sum += v * v;
  return std::sqrt(sum);
}

std::size_t QValues::argmax() const {
  if (q.empty()) throw ArgumentError("argmax of empty Q-values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

double QValues::max() const { return q[argmax()]; }

// ---- operations --------------------------------------------------------------

QNetworkParams init_params(const NetworkDims& dims, std::uint64_t seed) {
  auto p = QNetworkParams::zeros(dims);
  Rng rng(seed);
  fill_uniform(p.embed_w, 2, rng);
  fill_uniform(p.compete_w, 2 * dims.embed_dim, rng);
  fill_uniform(p.readout_w, dims.compete_dim, rng);
  return p;
}

QValues frap_forward(const QNetworkParams& params, const Observation& obs,
                     const IntersectionConfig& config) {
  ForwardCache cache;
  forward(params, obs, config, cache);
  return {std::move(cache.q)};
}

namespace {

double td_target(const QNetworkParams& target, const Transition& t, double gamma,
                 const IntersectionConfig& config, ForwardCache& cache) {
  forward(target, t.s_next, config, cache);
  return t.r + gamma * *std::max_element(cache.q.begin(), cache.q.end());
}

void check_batch(std::span<const Transition> batch, double gamma, const IntersectionConfig& config) {
  if (batch.empty()) throw ArgumentError("bellman loss needs a non-empty batch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
  for (const auto& t : batch)
    if (t.a >= config.n_phases()) throw ArgumentError("transition action out of range");
}

}  // namespace

LossAndGrads bellman_grads(const QNetworkParams& params, std::span<const Transition> batch,
                           const QNetworkParams& target_params, double gamma,
                           const IntersectionConfig& config) {
  check_batch(batch, gamma, config);
  LossAndGrads out{0.0, QNetworkParams::zeros(params.dims)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  std::vector<double> gq(config.n_phases(), 0.0);
  for (const auto& t : batch) {
    const double y = td_target(target_params, t, gamma, config, cache);
    forward(params, t.s, config, cache);
    const double diff = cache.q[t.a] - y;
    out.loss += diff * diff * inv_n;
    std::fill(gq.begin(), gq.end(), 0.0);
    gq[t.a] = 2.0 * diff * inv_n;
    backward(params, config, cache, gq, out.grads);
  }
  return out;
}

double bellman_loss(const QNetworkParams& params, std::span<const Transition> batch,
                    const QNetworkParams& target_params, double gamma,
                    const IntersectionConfig& config) {
  check_batch(batch, gamma, config);
  double loss = 0.0;
  ForwardCache cache;
  for (const auto& t : batch) {
    const double y = td_target(target_params, t, gamma, config, cache);
    forward(params, t.s, config, cache);
    const double diff = cache.q[t.a] - y;
    loss += diff * diff;
  }
  return loss / static_cast<double>(batch.size());
}

QNetworkParams sgd_step(const QNetworkParams& params, const GradientSet& grads, double lr) {
  QNetworkParams next = params;
  next.add_scaled(grads, -lr);
  return next;
}

GradientSet clip_norm(GradientSet grads, double max_norm) {
  if (max_norm <= 0.0) return grads;
  const double norm = grads.l2_norm();
  if (norm > max_norm) {
    for (auto* t : grads.tensors())
      for (double& v : t->data) v *= max_norm / norm;
  }
  return grads;
}

// ---- checkpoints ---------------------------------------------------------------

void write_params(std::ostream& out, const QNetworkParams& params) {
  out << "metashift-params 1\n";
  out << fmt::format("dims {} {} {:a}\n", params.dims.embed_dim, params.dims.compete_dim,
                     params.dims.demand_scale);
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const auto& t = *tensors[i];
    out << kTensorNames[i] << ' ' << t.rows << ' ' << t.cols;
    for (double v : t.data) out << ' ' << fmt::format("{:a}", v);
    out << '\n';
  }
}

QNetworkParams read_params(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t number = 0;
  auto next_line = [&]() -> std::vector<std::string> {
    if (!std::getline(in, line)) throw ParseError(source, number + 1, "unexpected end of checkpoint");
    ++number;
    return split(trim(line), ' ');
  };
  auto header = next_line();
  if (header.size() != 2 || header[0] != "metashift-params" || header[1] != "1")
    throw ParseError(source, number, "not a metashift parameter file (version 1)");
  auto dims_line = next_line();
  if (dims_line.size() != 4 || dims_line[0] != "dims") throw ParseError(source, number, "expected dims line");
  NetworkDims dims;
  dims.embed_dim = static_cast<std::size_t>(parse_u64(dims_line[1], source, number));
  dims.compete_dim = static_cast<std::size_t>(parse_u64(dims_line[2], source, number));
  dims.demand_scale = parse_double(dims_line[3], source, number);
  QNetworkParams params;
  try {
    params = QNetworkParams::zeros(dims);
  } catch (const ArgumentError& e) {
    throw ParseError(source, number, e.what());
  }
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    auto fields = next_line();
    auto& t = *tensors[i];
    if (fields.size() != 3 + t.size() || fields[0] != kTensorNames[i] ||
        parse_u64(fields[1], source, number) != t.rows || parse_u64(fields[2], source, number) != t.cols)
      throw ParseError(source, number, fmt::format("tensor {} has the wrong name or shape", kTensorNames[i]));
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = parse_double(fields[3 + k], source, number);
  }
  return params;
}

void save_params(const std::filesystem::path& file, const QNetworkParams& params) {
  auto out = open_output(file);
  write_params(out, params);
}

QNetworkParams load_params(const std::filesystem::path& file) {
  auto in = open_input(file);
  return read_params(in, file.string());
}

}  // namespace metashift
