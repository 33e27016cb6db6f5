#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "clinlm/encoder.hpp"

namespace clinlm::testing {

inline EncoderConfig tiny_config() {
  EncoderConfig c;
  c.vocab_size = 50;
  c.hidden_dim = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ff_dim = 16;
  c.max_positions = 8;
  c.dropout_rate = 0.1;
  return c;
}

/// Two rows of length 6; the second ends in two padding positions.
inline Batch tiny_batch() {
  const std::vector<std::vector<TokenId>> rows{{kClsId, 7, 19, kMaskId, 33, kSepId}, {kClsId, 41, kMaskId, kSepId}};
  const std::vector<std::vector<int>> segments{{0, 0, 0, 1, 1, 1}, {0, 0, 1, 1}};
  return Batch::from_rows(rows, segments);
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor) over every parameter entry,
/// with n the central difference of loss_value.
inline GradientCheck check_gradients(const Parameters& params, const Parameters& analytic,
                                     const std::function<double(const Parameters&)>& loss_value,
                                     double step = 1e-5, double floor = 1e-6) {
  GradientCheck result;
  Parameters probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    Matrix& m = *probe_tensors[t].second;
    const Matrix& g = *grad_tensors[t].second;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + step;
      const double up = loss_value(probe);
      m.data()[i] = saved - step;
      const double down = loss_value(probe);
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = probe_tensors[t].first + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace clinlm::testing
