#pragma once

// Phase-competition Q-network.
//
// Every movement is embedded by one shared layer from [demand, green flag];
// a phase is represented by the mean embedding of its movements; every
// ordered phase pair (p, q) is scored by one shared competition layer and a
// shared linear readout; Q(p) sums the scores of p against every rival.
// All weights are shared, so relabeling phases permutes the Q-values.

#include <array>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "metashift/intersection.hpp"

namespace metashift {

struct NetworkDims {
  std::size_t embed_dim = 16;
  std::size_t compete_dim = 16;
  /// Queue counts are multiplied by this before entering the network.
  double demand_scale = 0.1;

  friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr std::size_t kTensorCount = 6;
inline constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "embed_w", "embed_b", "compete_w", "compete_b", "readout_w", "readout_b"};

/// All trainable weights. Also used as the gradient container.
struct QNetworkParams {
  NetworkDims dims;
  Tensor embed_w;    // E x 2
  Tensor embed_b;    // E x 1
  Tensor compete_w;  // C x 2E
  Tensor compete_b;  // C x 1
  Tensor readout_w;  // 1 x C
  Tensor readout_b;  // 1 x 1

  /// Zero-valued parameters of the given dimensions.
  static QNetworkParams zeros(const NetworkDims& dims);

  std::array<Tensor*, kTensorCount> tensors() noexcept;
  std::array<const Tensor*, kTensorCount> tensors() const noexcept;
  std::size_t parameter_count() const noexcept;

  /// this += scale * other. Throws ShapeError on any shape mismatch.
  void add_scaled(const QNetworkParams& other, double scale);
  bool same_shape(const QNetworkParams& other) const noexcept;
  /// Euclidean norm over every coordinate.
  double l2_norm() const noexcept;

  friend bool operator==(const QNetworkParams&, const QNetworkParams&) = default;
};

using GradientSet = QNetworkParams;

struct QValues {
  std::vector<double> q;

  std::size_t size() const noexcept { return q.size(); }
  /// Ties resolve to the lowest index.
  std::size_t argmax() const;
  double max() const;
};

struct Transition {
  Observation s;
  std::size_t a = 0;
  double r = 0.0;
  Observation s_next;
};

/// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
QNetworkParams init_params(const NetworkDims& dims, std::uint64_t seed);

QValues frap_forward(const QNetworkParams& params, const Observation& obs,
                     const IntersectionConfig& config);

struct LossAndGrads {
  double loss = 0.0;
  GradientSet grads;
};

/// Mean over the batch of (Q(s,a) - r - gamma * max_a' Q_target(s',a'))^2.
/// The target term is a constant.
LossAndGrads bellman_grads(const QNetworkParams& params, std::span<const Transition> batch,
                           const QNetworkParams& target_params, double gamma,
                           const IntersectionConfig& config);

/// Loss only; used by finite-difference checks.
double bellman_loss(const QNetworkParams& params, std::span<const Transition> batch,
                    const QNetworkParams& target_params, double gamma,
                    const IntersectionConfig& config);

/// theta - lr * grads. The input is left untouched.
QNetworkParams sgd_step(const QNetworkParams& params, const GradientSet& grads, double lr);

/// Rescales `grads` so its l2 norm is at most `max_norm`; max_norm <= 0 disables.
GradientSet clip_norm(GradientSet grads, double max_norm);

/// Anything that can be moved along a gradient.
template <class P>
concept ParamVector = std::copyable<P> && requires(P& p, const P& g, double s) { p.add_scaled(g, s); };

// ---- checkpoints -----------------------------------------------------------
// Text format with hex-float values, so a save/load round trip is bit-exact:
//   metashift-params 1
//   dims <embed> <compete> <demand_scale>
//   <name> <rows> <cols> <values...>      (one line per tensor)

void write_params(std::ostream& out, const QNetworkParams& params);
QNetworkParams read_params(std::istream& in, const std::string& source = "<params>");
void save_params(const std::filesystem::path& file, const QNetworkParams& params);
QNetworkParams load_params(const std::filesystem::path& file);

}  // namespace metashift
