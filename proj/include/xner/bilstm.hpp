#ifndef XNER_BILSTM_HPP_
#define XNER_BILSTM_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xner/autodiff.hpp"
#include "xner/random.hpp"

namespace xner {

/// Standard LSTM cell without peepholes. The four gates are stacked in the
/// order input, forget, output, candidate: W is [4H × D], U is [4H × H], b is [4H].
struct LstmCell {
  std::size_t input_dim;
  std::size_t hidden;
  ad::Param W;
  ad::Param U;
  ad::Param b;

  LstmCell(const std::string& prefix, std::size_t d_in, std::size_t h)
      : input_dim(d_in),
        hidden(h),
        W(prefix + ".W", ad::Tensor({4 * h, d_in})),
        U(prefix + ".U", ad::Tensor({4 * h, h})),
        b(prefix + ".b", ad::Tensor({4 * h})) {}

  /// Weights uniform(±sqrt(6/(D+H))), forget bias 1, other biases 0.
  void initialize(Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : W.value.values()) v = static_cast<ad::Real>(u(rng));
    for (auto& v : U.value.values()) v = static_cast<ad::Real>(u(rng));
    b.value.fill(0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b.value[i] = 1;
  }

  std::vector<ad::Param*> params() { return {&W, &U, &b}; }
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// i,f,o = σ(Wx + Uh + b); ĉ = tanh(·); c = f⊙c_prev + i⊙ĉ; h = o⊙tanh(c).
inline LstmState cell_step(ad::Tape& tape, LstmCell& p, ad::Var x, const LstmState& prev) {
  if (x.value().rank() != 1 || x.value().size() != p.input_dim)
    throw ConfigError("lstm: input " + ad::shape_str(x.shape()) + ", expected [" + std::to_string(p.input_dim) + "]");
  if (prev.h.value().size() != p.hidden || prev.c.value().size() != p.hidden)
    throw ConfigError("lstm: state size mismatch, expected " + std::to_string(p.hidden));
  const std::size_t H = p.hidden;
  const ad::Var z = ad::add(ad::add(ad::matmul(tape.param(p.W), x), ad::matmul(tape.param(p.U), prev.h)),
                            tape.param(p.b));
  const ad::Var i = ad::sigmoid(ad::slice(z, 0, H));
  const ad::Var f = ad::sigmoid(ad::slice(z, H, H));
  const ad::Var o = ad::sigmoid(ad::slice(z, 2 * H, H));
  const ad::Var g = ad::tanh(ad::slice(z, 3 * H, H));
  const ad::Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  const ad::Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

inline LstmState zero_state(ad::Tape& tape, std::size_t hidden) {
  return {tape.constant(ad::Tensor({hidden})), tape.constant(ad::Tensor({hidden}))};
}

struct BiLstm {
  LstmCell forward;
  LstmCell backward;

  BiLstm(const std::string& prefix, std::size_t d_in, std::size_t h)
      : forward(prefix + ".fwd", d_in, h), backward(prefix + ".bwd", d_in, h) {}

  std::size_t hidden() const noexcept { return forward.hidden; }
  std::size_t output_dim() const noexcept { return 2 * forward.hidden; }

  std::vector<ad::Param*> params() {
    auto out = forward.params();
    for (auto* p : backward.params()) out.push_back(p);
    return out;
  }
};

/// g_i = [forward state after x_1..x_i, backward state after x_n..x_i].
inline std::vector<ad::Var> encode_sentence(ad::Tape& tape, BiLstm& net, std::span<const ad::Var> inputs) {
  if (inputs.empty()) throw ConfigError("encode_sentence: empty sentence");
  const std::size_t n = inputs.size();
  std::vector<ad::Var> fwd(n), bwd(n);
  LstmState s = zero_state(tape, net.hidden());
  for (std::size_t i = 0; i < n; ++i) {
    s = cell_step(tape, net.forward, inputs[i], s);
    fwd[i] = s.h;
  }
  s = zero_state(tape, net.hidden());
  for (std::size_t i = n; i-- > 0;) {
    s = cell_step(tape, net.backward, inputs[i], s);
    bwd[i] = s.h;
  }
  std::vector<ad::Var> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ad::concat({fwd[i], bwd[i]}));
  return out;
}

}  // namespace xner

#endif  // XNER_BILSTM_HPP_
