#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"
#include "advgrasp/imaging.hpp"
#include "advgrasp/rng.hpp"

namespace advgrasp::net {

enum class LayerKind : std::uint8_t { Conv, ReLU, MaxPool, Flatten, Dense, Sigmoid };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int out = 0;     // conv channels or dense width
  int kernel = 0;  // conv / pool window
  int stride = 1;

  static LayerSpec conv(int out, int kernel, int stride = 1) { return {LayerKind::Conv, out, kernel, stride}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec max_pool(int kernel, int stride) { return {LayerKind::MaxPool, 0, kernel, stride}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(int out) { return {LayerKind::Dense, out}; }
  static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }

  bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetSpec {
  int in_channels = 1;
  int in_height = 32;
  int in_width = 32;
  std::vector<LayerSpec> layers;

  int output_width() const { return layers.size() >= 2 ? layers[layers.size() - 2].out : 0; }
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Desk-scale grasp classifier: two conv/pool stages and a two-layer head.
inline NetSpec default_spec(int outputs, int input_px = 32) {
  NetSpec spec;
  spec.in_height = spec.in_width = input_px;
  spec.layers = {LayerSpec::conv(8, 5),  LayerSpec::relu(),        LayerSpec::max_pool(2, 2),
                 LayerSpec::conv(16, 3), LayerSpec::relu(),        LayerSpec::max_pool(2, 2),
                 LayerSpec::flatten(),   LayerSpec::dense(64),     LayerSpec::relu(),
                 LayerSpec::dense(outputs), LayerSpec::sigmoid()};
  return spec;
}

struct Shape3 {
  int c = 0, h = 0, w = 0;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
};

// Output shape of every layer; throws SHAPE_MISMATCH when the chain does not fit.
inline std::vector<Shape3> layer_shapes(const NetSpec& spec) {
  std::vector<Shape3> shapes;
  Shape3 s{spec.in_channels, spec.in_height, spec.in_width};
  if (s.c <= 0 || s.h <= 0 || s.w <= 0) throw Error(ErrorCode::SHAPE_MISMATCH, "input shape must be positive");
  bool flat = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::MaxPool: {
        if (flat) throw Error(ErrorCode::SHAPE_MISMATCH, where + " after flatten");
        if (l.kernel <= 0 || l.stride <= 0 || l.kernel > s.h || l.kernel > s.w)
          throw Error(ErrorCode::SHAPE_MISMATCH, where + " window does not fit");
        const int c = l.kind == LayerKind::Conv ? l.out : s.c;
        if (c <= 0) throw Error(ErrorCode::SHAPE_MISMATCH, where + " needs output channels");
        s = {c, (s.h - l.kernel) / l.stride + 1, (s.w - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::Flatten:
        s = {static_cast<int>(s.size()), 1, 1};
        flat = true;
        break;
      case LayerKind::Dense:
        if (!flat) throw Error(ErrorCode::SHAPE_MISMATCH, where + " before flatten");
        if (l.out <= 0) throw Error(ErrorCode::SHAPE_MISMATCH, where + " needs a positive width");
        s = {l.out, 1, 1};
        break;
      case LayerKind::ReLU:
      case LayerKind::Sigmoid:
        break;
    }
    shapes.push_back(s);
  }
  return shapes;
}

inline void validate(const NetSpec& spec) {
  const auto shapes = layer_shapes(spec);
  if (spec.layers.size() < 2 || spec.layers.back().kind != LayerKind::Sigmoid ||
      spec.layers[spec.layers.size() - 2].kind != LayerKind::Dense)
    throw Error(ErrorCode::SHAPE_MISMATCH, "network must end with dense followed by sigmoid");
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::Sigmoid)
      throw Error(ErrorCode::SHAPE_MISMATCH, "sigmoid is only allowed as the final layer");
  }
  (void)shapes;
}

struct LayerParams {
  std::vector<double> w;
  std::vector<double> b;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// One LayerParams per spec layer; parameter-free layers hold empty vectors.
struct NetParams {
  NetSpec spec;
  std::vector<LayerParams> layers;
  friend bool operator==(const NetParams&, const NetParams&) = default;
};

using Gradients = NetParams;

struct OptState {
  double lr = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::vector<LayerParams> acc;  // running mean of squared gradients
};

namespace detail {

struct ParamCounts {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t fan_in = 0;
};

inline ParamCounts param_counts(const LayerSpec& l, const Shape3& in) {
  if (l.kind == LayerKind::Conv) {
    const std::size_t fan_in = static_cast<std::size_t>(in.c) * l.kernel * l.kernel;
    return {static_cast<std::size_t>(l.out) * fan_in, static_cast<std::size_t>(l.out), fan_in};
  }
  if (l.kind == LayerKind::Dense) {
    return {static_cast<std::size_t>(l.out) * in.size(), static_cast<std::size_t>(l.out), in.size()};
  }
  return {};
}

inline std::vector<Shape3> input_shapes(const NetSpec& spec, const std::vector<Shape3>& outs) {
  std::vector<Shape3> ins;
  Shape3 s{spec.in_channels, spec.in_height, spec.in_width};
  for (const Shape3& o : outs) {
    ins.push_back(s);
    s = o;
  }
  return ins;
}

}  // namespace detail

inline NetParams zero_params(const NetSpec& spec) {
  validate(spec);
  const auto outs = layer_shapes(spec);
  const auto ins = detail::input_shapes(spec, outs);
  NetParams p;
  p.spec = spec;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto counts = detail::param_counts(spec.layers[i], ins[i]);
    p.layers.push_back({std::vector<double>(counts.w, 0.0), std::vector<double>(counts.b, 0.0)});
  }
  return p;
}

// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline NetParams init_params(const NetSpec& spec, std::uint64_t rng_seed) {
  NetParams p = zero_params(spec);
  const auto outs = layer_shapes(spec);
  const auto ins = detail::input_shapes(spec, outs);
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto counts = detail::param_counts(spec.layers[i], ins[i]);
    if (counts.fan_in == 0) continue;
    const double limit = 1.0 / std::sqrt(static_cast<double>(counts.fan_in));
    for (double& w : p.layers[i].w) w = rng.uniform(-limit, limit);
  }
  return p;
}

inline void check_compatible(const NetParams& a, const NetParams& b) {
  if (a.layers.size() != b.layers.size()) throw Error(ErrorCode::SHAPE_MISMATCH, "layer count differs");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].w.size() != b.layers[i].w.size() || a.layers[i].b.size() != b.layers[i].b.size())
      throw Error(ErrorCode::SHAPE_MISMATCH, "parameter shapes differ at layer " + std::to_string(i));
  }
}

inline void check_consistent(const NetParams& p) { check_compatible(p, zero_params(p.spec)); }

// Activations of every layer plus max-pool routing, kept for the backward pass.
struct Trace {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i+1] = output of layer i
  std::vector<std::vector<std::size_t>> argmax;
};

inline Trace forward_trace(const NetParams& params, const Grid& input) {
  const NetSpec& spec = params.spec;
  if (spec.in_channels != 1 || input.width != spec.in_width || input.height != spec.in_height)
    throw Error(ErrorCode::SHAPE_MISMATCH, "input is " + std::to_string(input.width) + "x" +
                                               std::to_string(input.height) + ", network expects " +
                                               std::to_string(spec.in_width) + "x" + std::to_string(spec.in_height));
  const auto outs = layer_shapes(spec);
  const auto ins = detail::input_shapes(spec, outs);
  if (params.layers.size() != spec.layers.size()) throw Error(ErrorCode::SHAPE_MISMATCH, "params do not match spec");

  Trace tr;
  tr.acts.reserve(spec.layers.size() + 1);
  tr.argmax.resize(spec.layers.size());
  tr.acts.push_back(input.pixels);

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const Shape3 in = ins[li];
    const Shape3 out = outs[li];
    const std::vector<double>& x = tr.acts.back();
    std::vector<double> y(out.size(), 0.0);
    const LayerParams& lp = params.layers[li];

    switch (l.kind) {
      case LayerKind::Conv: {
        const int k = l.kernel;
        for (int oc = 0; oc < out.c; ++oc) {
          const double* wo = lp.w.data() + static_cast<std::size_t>(oc) * in.c * k * k;
          for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
              double s = lp.b[oc];
              for (int ic = 0; ic < in.c; ++ic) {
                const double* wi = wo + static_cast<std::size_t>(ic) * k * k;
                const double* xi = x.data() + static_cast<std::size_t>(ic) * in.h * in.w;
                for (int ky = 0; ky < k; ++ky) {
                  const double* row = xi + static_cast<std::size_t>(oy * l.stride + ky) * in.w + ox * l.stride;
                  for (int kx = 0; kx < k; ++kx) s += wi[ky * k + kx] * row[kx];
                }
              }
              y[(static_cast<std::size_t>(oc) * out.h + oy) * out.w + ox] = s;
            }
          }
        }
        break;
      }
      case LayerKind::MaxPool: {
        auto& route = tr.argmax[li];
        route.resize(out.size());
        for (int c = 0; c < out.c; ++c) {
          for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
              std::size_t best = (static_cast<std::size_t>(c) * in.h + oy * l.stride) * in.w + ox * l.stride;
              for (int ky = 0; ky < l.kernel; ++ky) {
                for (int kx = 0; kx < l.kernel; ++kx) {
                  const std::size_t idx =
                      (static_cast<std::size_t>(c) * in.h + oy * l.stride + ky) * in.w + ox * l.stride + kx;
                  if (x[idx] > x[best]) best = idx;
                }
              }
              const std::size_t o = (static_cast<std::size_t>(c) * out.h + oy) * out.w + ox;
              y[o] = x[best];
              route[o] = best;
            }
          }
        }
        break;
      }
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        for (int o = 0; o < out.c; ++o) {
          const double* wo = lp.w.data() + static_cast<std::size_t>(o) * n_in;
          double s = lp.b[o];
          for (std::size_t i = 0; i < n_in; ++i) s += wo[i] * x[i];
          y[o] = s;
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        break;
      case LayerKind::Sigmoid:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        break;
      case LayerKind::Flatten:
        y = x;
        break;
    }
    tr.acts.push_back(std::move(y));
  }
  return tr;
}

inline std::vector<double> forward(const NetParams& params, const Grid& input) {
  return std::move(forward_trace(params, input).acts.back());
}

inline constexpr double kProbClamp = 1e-7;

inline double bce_loss(double p, double target) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

// Gradient of bce_loss(forward(input)[output_idx], target); other outputs carry no gradient.
inline Gradients backward(const NetParams& params, const Grid& input, std::size_t output_idx, double target) {
  const NetSpec& spec = params.spec;
  const Trace tr = forward_trace(params, input);
  if (output_idx >= tr.acts.back().size())
    throw Error(ErrorCode::SHAPE_MISMATCH, "output index " + std::to_string(output_idx) + " out of range");
  const auto outs = layer_shapes(spec);
  const auto ins = detail::input_shapes(spec, outs);

  Gradients grads = zero_params(spec);
  // Sigmoid + BCE collapse to p - target at the final pre-activation.
  std::vector<double> delta(tr.acts.back().size(), 0.0);
  delta[output_idx] = tr.acts.back()[output_idx] - target;

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& l = spec.layers[li];
    const Shape3 in = ins[li];
    const Shape3 out = outs[li];
    const std::vector<double>& x = tr.acts[li];
    std::vector<double> dx(in.size(), 0.0);
    const LayerParams& lp = params.layers[li];
    LayerParams& g = grads.layers[li];

    switch (l.kind) {
      case LayerKind::Sigmoid:
        dx = delta;
        break;
      case LayerKind::Dense: {
        const std::size_t n_in = in.size();
        for (int o = 0; o < out.c; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          g.b[o] += d;
          double* go = g.w.data() + static_cast<std::size_t>(o) * n_in;
          const double* wo = lp.w.data() + static_cast<std::size_t>(o) * n_in;
          for (std::size_t i = 0; i < n_in; ++i) {
            go[i] += d * x[i];
            dx[i] += d * wo[i];
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? delta[i] : 0.0;
        break;
      case LayerKind::Flatten:
        dx = delta;
        break;
      case LayerKind::MaxPool: {
        const auto& route = tr.argmax[li];
        for (std::size_t o = 0; o < route.size(); ++o) dx[route[o]] += delta[o];
        break;
      }
      case LayerKind::Conv: {
        const int k = l.kernel;
        for (int oc = 0; oc < out.c; ++oc) {
          const std::size_t wbase = static_cast<std::size_t>(oc) * in.c * k * k;
          for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
              const double d = delta[(static_cast<std::size_t>(oc) * out.h + oy) * out.w + ox];
              if (d == 0.0) continue;
              g.b[oc] += d;
              for (int ic = 0; ic < in.c; ++ic) {
                for (int ky = 0; ky < k; ++ky) {
                  const std::size_t xrow =
                      (static_cast<std::size_t>(ic) * in.h + oy * l.stride + ky) * in.w + ox * l.stride;
                  const std::size_t wrow = wbase + (static_cast<std::size_t>(ic) * k + ky) * k;
                  for (int kx = 0; kx < k; ++kx) {
                    g.w[wrow + kx] += d * x[xrow + kx];
                    dx[xrow + kx] += d * lp.w[wrow + kx];
                  }
                }
              }
            }
          }
        }
        break;
      }
    }
    delta = std::move(dx);
  }
  return grads;
}

// acc <- rho*acc + (1-rho)*g^2 ; w <- w - lr*g/sqrt(acc + eps)
inline void rmsprop_step(NetParams& params, const Gradients& grads, OptState& opt) {
  check_compatible(params, grads);
  if (opt.acc.empty()) {
    for (const LayerParams& lp : params.layers)
      opt.acc.push_back({std::vector<double>(lp.w.size(), 0.0), std::vector<double>(lp.b.size(), 0.0)});
  }
  if (opt.acc.size() != params.layers.size()) throw Error(ErrorCode::SHAPE_MISMATCH, "optimizer state shape");
  auto update = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& acc) {
    if (acc.size() != w.size()) throw Error(ErrorCode::SHAPE_MISMATCH, "optimizer state shape");
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc[i] = opt.decay * acc[i] + (1.0 - opt.decay) * g[i] * g[i];
      w[i] -= opt.lr * g[i] / std::sqrt(acc[i] + opt.epsilon);
    }
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].w, grads.layers[i].w, opt.acc[i].w);
    update(params.layers[i].b, grads.layers[i].b, opt.acc[i].b);
  }
}

// One supervised step on a single (input, output, target) example.
inline void train_example(NetParams& params, OptState& opt, const Grid& input, std::size_t output_idx,
                          double target) {
  rmsprop_step(params, backward(params, input, output_idx, target), opt);
}

// ---- Checkpoint JSON: { "spec": ..., "layers": [{"w": [...], "b": [...]}, ...] } ----

inline LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::Conv, LayerKind::ReLU, LayerKind::MaxPool, LayerKind::Flatten, LayerKind::Dense,
                      LayerKind::Sigmoid}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::PARSE, "unknown layer type '" + s + "'");
}

inline void to_json(nlohmann::json& j, const NetSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::json e = {{"type", to_string(l.kind)}};
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) e["out"] = l.out;
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool) {
      e["kernel"] = l.kernel;
      e["stride"] = l.stride;
    }
    layers.push_back(std::move(e));
  }
  j = {{"input", {spec.in_channels, spec.in_height, spec.in_width}}, {"layers", std::move(layers)}};
}

inline void from_json(const nlohmann::json& j, NetSpec& spec) {
  const auto& input = j.at("input");
  spec.in_channels = input.at(0).get<int>();
  spec.in_height = input.at(1).get<int>();
  spec.in_width = input.at(2).get<int>();
  spec.layers.clear();
  for (const auto& e : j.at("layers")) {
    LayerSpec l;
    l.kind = parse_layer_kind(e.at("type").get<std::string>());
    l.out = e.value("out", 0);
    l.kernel = e.value("kernel", 0);
    l.stride = e.value("stride", 1);
    spec.layers.push_back(l);
  }
}

inline nlohmann::json params_to_json(const NetParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& lp : p.layers) layers.push_back({{"w", lp.w}, {"b", lp.b}});
  return {{"spec", p.spec}, {"layers", std::move(layers)}};
}

inline NetParams params_from_json(const nlohmann::json& j) {
  NetParams p;
  try {
    p.spec = j.at("spec").get<NetSpec>();
    for (const auto& e : j.at("layers"))
      p.layers.push_back({e.at("w").get<std::vector<double>>(), e.at("b").get<std::vector<double>>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PARSE, std::string("checkpoint: ") + e.what());
  }
  check_consistent(p);
  return p;
}

inline void save(const NetParams& p, const std::string& path) { write_text_file(path, params_to_json(p).dump()); }

inline NetParams parse_params(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::PARSE, std::string("checkpoint: ") + e.what());
  }
  return params_from_json(j);
}

inline NetParams load(const std::string& path) { return parse_params(read_text_file(path)); }

inline NetParams load(const std::string& path, const NetSpec& expected) {
  NetParams p = load(path);
  if (!(p.spec == expected)) throw Error(ErrorCode::SHAPE_MISMATCH, path + " holds a different network spec");
  return p;
}

}  // namespace advgrasp::net
