// SPDX-License-Identifier: Apache-2.0
#include "robustkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rk {

std::string layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

namespace {

std::string where(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + layer_name(l.kind) + ")";
}

std::size_t conv_out(std::size_t in, const LayerSpec& l) {
  return (in + 2 * l.pad - l.kernel) / l.stride + 1;
}

}  // namespace

Architecture::Architecture(Shape input, std::vector<LayerSpec> layers)
    : input_(std::move(input)), layers_(std::move(layers)) {
  if (input_.empty()) throw std::invalid_argument("architecture needs an input shape");
  if (layers_.empty()) throw std::invalid_argument("architecture needs at least one layer");
  shapes_.push_back(input_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape& s = shapes_.back();
    Shape next;
    switch (l.kind) {
      case LayerKind::dense:
        if (s.size() != 1 || s[0] != l.in)
          throw std::invalid_argument(where(i, l) + " expects [" + std::to_string(l.in) + "], got " +
                                      shape_str(s));
        if (l.out == 0) throw std::invalid_argument(where(i, l) + " has zero outputs");
        next = {l.out};
        break;
      case LayerKind::conv2d:
        if (s.size() != 3 || s[0] != l.in)
          throw std::invalid_argument(where(i, l) + " expects " + std::to_string(l.in) +
                                      " input channels, got " + shape_str(s));
        if (l.kernel == 0 || l.stride == 0 || l.out == 0)
          throw std::invalid_argument(where(i, l) + " has a zero kernel/stride/channel count");
        if (s[1] + 2 * l.pad < l.kernel || s[2] + 2 * l.pad < l.kernel)
          throw std::invalid_argument(where(i, l) + " kernel larger than padded input " + shape_str(s));
        next = {l.out, conv_out(s[1], l), conv_out(s[2], l)};
        break;
      case LayerKind::relu:
        next = s;
        break;
      case LayerKind::maxpool2d:
        if (s.size() != 3 || s[1] < 2 || s[2] < 2)
          throw std::invalid_argument(where(i, l) + " needs a [C,H,W] input with H,W >= 2, got " +
                                      shape_str(s));
        next = {s[0], s[1] / 2, s[2] / 2};
        break;
      case LayerKind::flatten:
        next = {shape_numel(s)};
        break;
    }
    shapes_.push_back(std::move(next));
  }
  if (shapes_.back().size() != 1)
    throw std::invalid_argument("architecture must end in a flat logits vector, got " +
                                shape_str(shapes_.back()));
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << "input=";
  for (std::size_t i = 0; i < input_.size(); ++i) os << (i ? "x" : "") << input_[i];
  for (const auto& l : layers_) {
    os << ';' << layer_name(l.kind);
    if (l.kind == LayerKind::dense) os << ':' << l.in << ':' << l.out;
    if (l.kind == LayerKind::conv2d)
      os << ':' << l.in << ':' << l.out << ':' << l.kernel << ':' << l.stride << ':' << l.pad;
  }
  return os.str();
}

Architecture Architecture::parse(const std::string& text) {
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) parts.push_back(cur);
    return parts;
  };
  auto num = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw std::invalid_argument("bad number '" + s + "' in architecture");
    return static_cast<std::size_t>(v);
  };
  const auto items = split(text, ';');
  if (items.empty() || items[0].rfind("input=", 0) != 0)
    throw std::invalid_argument("architecture descriptor must start with input=");
  Shape input;
  for (const auto& d : split(items[0].substr(6), 'x')) input.push_back(num(d));
  std::vector<LayerSpec> layers;
  for (std::size_t i = 1; i < items.size(); ++i) {
    const auto f = split(items[i], ':');
    if (f.empty()) throw std::invalid_argument("empty layer in architecture");
    const std::string& k = f[0];
    if (k == "dense" && f.size() == 3) {
      layers.push_back(LayerSpec::dense(num(f[1]), num(f[2])));
    } else if (k == "conv2d" && f.size() == 6) {
      layers.push_back(LayerSpec::conv2d(num(f[1]), num(f[2]), num(f[3]), num(f[4]), num(f[5])));
    } else if (k == "relu" && f.size() == 1) {
      layers.push_back(LayerSpec::relu());
    } else if (k == "maxpool2d" && f.size() == 1) {
      layers.push_back(LayerSpec::maxpool2d());
    } else if (k == "flatten" && f.size() == 1) {
      layers.push_back(LayerSpec::flatten());
    } else {
      throw std::invalid_argument("unknown layer '" + items[i] + "'");
    }
  }
  return Architecture(std::move(input), std::move(layers));
}

Architecture Architecture::mlp(const Shape& input, std::size_t num_classes, std::size_t hidden) {
  return Architecture(input, {LayerSpec::flatten(), LayerSpec::dense(shape_numel(input), hidden),
                              LayerSpec::relu(), LayerSpec::dense(hidden, num_classes)});
}

Architecture Architecture::tiny_cnn(const Shape& input, std::size_t num_classes) {
  if (input.size() != 3) throw std::invalid_argument("tiny_cnn needs a [C,H,W] input");
  const std::size_t flat = 32 * (input[1] / 4) * (input[2] / 4);
  return Architecture(input, {LayerSpec::conv2d(input[0], 16, 3, 1, 1), LayerSpec::relu(),
                              LayerSpec::maxpool2d(), LayerSpec::conv2d(16, 32, 3, 1, 1),
                              LayerSpec::relu(), LayerSpec::maxpool2d(), LayerSpec::flatten(),
                              LayerSpec::dense(flat, num_classes)});
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void im2col(const T* x, std::size_t c_in, std::size_t h, std::size_t w, const LayerSpec& l,
            std::size_t ho, std::size_t wo, T* col) {
  const std::size_t k = l.kernel;
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * l.stride + ki) -
                                    static_cast<std::ptrdiff_t>(l.pad);
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * l.stride + kj) -
                                      static_cast<std::ptrdiff_t>(l.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[iw];
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, std::size_t c_in, std::size_t h, std::size_t w, const LayerSpec& l,
                std::size_t ho, std::size_t wo, T* dx) {
  const std::size_t k = l.kernel;
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * l.stride + ki) -
                                    static_cast<std::ptrdiff_t>(l.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = dx + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * l.stride + kj) -
                                      static_cast<std::ptrdiff_t>(l.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) dst[iw] += row[oh * wo + ow];
          }
        }
      }
}

template <class T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                            const BasicTensor<T>& bias, const LayerSpec& l) {
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = conv_out(h, l), wo = conv_out(w, l), plane = ho * wo;
  const std::size_t rows = c_in * l.kernel * l.kernel;
  BasicTensor<T> y({n, l.out, ho, wo});
  std::vector<T> col(rows * plane);
  const T* wt = weight.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x.data().data() + s * c_in * h * w, c_in, h, w, l, ho, wo, col.data());
    T* out = y.data().data() + s * l.out * plane;
    for (std::size_t co = 0; co < l.out; ++co) {
      T* o = out + co * plane;
      std::fill(o, o + plane, bias[co]);
      for (std::size_t r = 0; r < rows; ++r) {
        const T a = wt[co * rows + r];
        const T* cr = col.data() + r * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] += a * cr[p];
      }
    }
  }
  return y;
}

template <class T>
void conv_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const LayerSpec& l,
                   const BasicTensor<T>& g, BasicTensor<T>* dw, BasicTensor<T>* db, BasicTensor<T>* dx) {
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = conv_out(h, l), wo = conv_out(w, l), plane = ho * wo;
  const std::size_t rows = c_in * l.kernel * l.kernel;
  std::vector<T> col(rows * plane), dcol(dx ? rows * plane : 0);
  const T* wt = weight.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    const T* gs = g.data().data() + s * l.out * plane;
    if (dw) {
      im2col(x.data().data() + s * c_in * h * w, c_in, h, w, l, ho, wo, col.data());
      T* dwt = dw->data().data();
      for (std::size_t co = 0; co < l.out; ++co) {
        const T* gc = gs + co * plane;
        T bsum = 0;
        for (std::size_t p = 0; p < plane; ++p) bsum += gc[p];
        (*db)[co] += bsum;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* cr = col.data() + r * plane;
          T acc = 0;
          for (std::size_t p = 0; p < plane; ++p) acc += gc[p] * cr[p];
          dwt[co * rows + r] += acc;
        }
      }
    }
    if (dx) {
      std::fill(dcol.begin(), dcol.end(), T(0));
      for (std::size_t co = 0; co < l.out; ++co) {
        const T* gc = gs + co * plane;
        for (std::size_t r = 0; r < rows; ++r) {
          const T a = wt[co * rows + r];
          T* dr = dcol.data() + r * plane;
          for (std::size_t p = 0; p < plane; ++p) dr[p] += a * gc[p];
        }
      }
      col2im_add(dcol.data(), c_in, h, w, l, ho, wo, dx->data().data() + s * c_in * h * w);
    }
  }
}

template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             const BasicTensor<T>& bias, const LayerSpec& l) {
  const std::size_t n = x.dim(0);
  BasicTensor<T> y({n, l.out});
  const T* wt = weight.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x.data().data() + s * l.in;
    for (std::size_t o = 0; o < l.out; ++o) {
      const T* wr = wt + o * l.in;
      T acc = bias[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += wr[i] * xs[i];
      y.at(s, o) = acc;
    }
  }
  return y;
}

template <class T>
void dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const LayerSpec& l,
                    const BasicTensor<T>& g, BasicTensor<T>* dw, BasicTensor<T>* db, BasicTensor<T>* dx) {
  const std::size_t n = x.dim(0);
  const T* wt = weight.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x.data().data() + s * l.in;
    for (std::size_t o = 0; o < l.out; ++o) {
      const T go = g.at(s, o);
      if (dw) {
        (*db)[o] += go;
        T* dwr = dw->data().data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) dwr[i] += go * xs[i];
      }
      if (dx) {
        T* dxs = dx->data().data() + s * l.in;
        const T* wr = wt + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) dxs[i] += wr[i] * go;
      }
    }
  }
}

template <class T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  BasicTensor<T> y({n, c, ho, wo});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          T m = x.at(s, ch, 2 * i, 2 * j);
          m = std::max(m, x.at(s, ch, 2 * i, 2 * j + 1));
          m = std::max(m, x.at(s, ch, 2 * i + 1, 2 * j));
          m = std::max(m, x.at(s, ch, 2 * i + 1, 2 * j + 1));
          y.at(s, ch, i, j) = m;
        }
  return y;
}

// Gradient goes to the first maximal element of each window in row-major order.
template <class T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& x, const BasicTensor<T>& g) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  BasicTensor<T> dx(x.shape());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          std::size_t bi = 2 * i, bj = 2 * j;
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj)
              if (x.at(s, ch, 2 * i + di, 2 * j + dj) > x.at(s, ch, bi, bj)) {
                bi = 2 * i + di;
                bj = 2 * j + dj;
              }
          dx.at(s, ch, bi, bj) += g.at(s, ch, i, j);
        }
  return dx;
}

}  // namespace

template <class T>
BasicStack<T>::BasicStack(Architecture arch) : arch_(std::move(arch)) {
  for (const auto& l : arch_.layers()) {
    param_offset_.push_back(params_.size());
    if (l.kind == LayerKind::dense) {
      params_.emplace_back(Shape{l.out, l.in});
      params_.emplace_back(Shape{l.out});
    } else if (l.kind == LayerKind::conv2d) {
      params_.emplace_back(Shape{l.out, l.in, l.kernel, l.kernel});
      params_.emplace_back(Shape{l.out});
    }
  }
}

template <class T>
BasicStack<T> BasicStack<T>::kaiming(Architecture arch, Rng& rng) {
  BasicStack s(std::move(arch));
  for (std::size_t i = 0; i < s.arch_.layers().size(); ++i) {
    const auto& l = s.arch_.layers()[i];
    if (!l.has_params()) continue;
    const std::size_t fan_in = l.kind == LayerKind::dense ? l.in : l.in * l.kernel * l.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : s.params_[s.param_offset_[i]].data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return s;
}

template <class T>
std::size_t BasicStack<T>::num_params() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <class T>
std::string BasicStack<T>::param_name(std::size_t i) const {
  for (std::size_t l = 0; l < param_offset_.size(); ++l) {
    if (!arch_.layers()[l].has_params()) continue;
    if (param_offset_[l] == i) return "layer" + std::to_string(l) + ".weight";
    if (param_offset_[l] + 1 == i) return "layer" + std::to_string(l) + ".bias";
  }
  throw std::out_of_range("no parameter " + std::to_string(i));
}

template <class T>
BasicTensor<T> BasicStack<T>::forward(const tensor_type& x, BasicTrace<T>* trace) const {
  const Shape& in = arch_.input_shape();
  if (x.rank() != in.size() + 1 || !std::equal(in.begin(), in.end(), x.shape().begin() + 1))
    throw std::invalid_argument("layer 0 (" + layer_name(arch_.layers()[0].kind) + ") expects [N," +
                                shape_str(in).substr(1) + ", got " + shape_str(x.shape()));
  if (trace) trace->inputs.clear();
  tensor_type cur = x;
  const std::size_t n = x.dim(0);
  for (std::size_t i = 0; i < arch_.layers().size(); ++i) {
    const LayerSpec& l = arch_.layers()[i];
    tensor_type next;
    switch (l.kind) {
      case LayerKind::dense:
        next = dense_forward(cur, params_[param_offset_[i]], params_[param_offset_[i] + 1], l);
        break;
      case LayerKind::conv2d:
        next = conv_forward(cur, params_[param_offset_[i]], params_[param_offset_[i] + 1], l);
        break;
      case LayerKind::relu:
        next = cur;
        for (T& v : next.data()) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::maxpool2d:
        next = maxpool_forward(cur);
        break;
      case LayerKind::flatten:
        next = cur.reshaped({n, shape_numel(arch_.activation_shape(i))});
        break;
    }
    if (trace) trace->inputs.push_back(std::move(cur));
    cur = std::move(next);
  }
  return cur;
}

template <class T>
BasicGradients<T> BasicStack<T>::backward(const BasicTrace<T>& trace, const tensor_type& upstream,
                                          BackwardOptions opts) const {
  if (trace.inputs.size() != arch_.layers().size())
    throw std::logic_error("backward called before a traced forward");
  const std::size_t n = trace.inputs[0].dim(0);
  if (upstream.shape() != Shape{n, arch_.num_classes()})
    throw std::invalid_argument("upstream gradient shape " + shape_str(upstream.shape()) +
                                " does not match logits [" + std::to_string(n) + "," +
                                std::to_string(arch_.num_classes()) + "]");
  BasicGradients<T> out;
  if (opts.param_grads)
    for (const auto& p : params_) out.params.emplace_back(p.shape());
  tensor_type g = upstream;
  for (std::size_t i = arch_.layers().size(); i-- > 0;) {
    const LayerSpec& l = arch_.layers()[i];
    const tensor_type& x = trace.inputs[i];
    const bool want_dx = i > 0 || opts.input_grad;
    tensor_type dx;
    switch (l.kind) {
      case LayerKind::dense:
      case LayerKind::conv2d: {
        tensor_type* dw = opts.param_grads ? &out.params[param_offset_[i]] : nullptr;
        tensor_type* db = opts.param_grads ? &out.params[param_offset_[i] + 1] : nullptr;
        if (want_dx) dx = tensor_type(x.shape());
        if (l.kind == LayerKind::dense)
          dense_backward(x, params_[param_offset_[i]], l, g, dw, db, want_dx ? &dx : nullptr);
        else
          conv_backward(x, params_[param_offset_[i]], l, g, dw, db, want_dx ? &dx : nullptr);
        break;
      }
      case LayerKind::relu:
        dx = g;
        for (std::size_t k = 0; k < dx.size(); ++k)
          if (!(x[k] > T(0))) dx[k] = T(0);
        break;
      case LayerKind::maxpool2d:
        dx = maxpool_backward(x, g);
        break;
      case LayerKind::flatten:
        dx = g.reshaped(x.shape());
        break;
    }
    if (!want_dx) break;
    g = std::move(dx);
  }
  if (opts.input_grad) out.input = std::move(g);
  return out;
}

template <class T>
BasicTensor<T> BasicStack<T>::forward_cached(const tensor_type& x, bool train_mode) {
  if (!train_mode) {
    trace_.inputs.clear();
    return forward(x, nullptr);
  }
  return forward(x, &trace_);
}

template <class T>
BasicGradients<T> BasicStack<T>::backward_cached(const tensor_type& upstream) {
  if (trace_.empty()) throw std::logic_error("backward_cached called before forward_cached in train mode");
  return backward(trace_, upstream, BackwardOptions{});
}

template <class T>
BasicOptimizerState<T>::BasicOptimizerState(const BasicStack<T>& stack, double momentum_,
                                            double weight_decay_, double lr_)
    : momentum(momentum_), weight_decay(weight_decay_), lr(lr_) {
  for (const auto& p : stack.params()) velocity.emplace_back(p.shape());
}

template <class T>
void sgd_step(BasicStack<T>& stack, BasicOptimizerState<T>& state, const std::vector<BasicTensor<T>>& grads) {
  auto& params = stack.params();
  if (grads.size() != params.size() || state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: gradient/velocity count does not match parameters");
  const T mu = static_cast<T>(state.momentum), wd = static_cast<T>(state.weight_decay),
          lr = static_cast<T>(state.lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape())
      throw std::invalid_argument("sgd_step: gradient " + std::to_string(i) + " has shape " +
                                  shape_str(grads[i].shape()) + ", parameter has " +
                                  shape_str(params[i].shape()));
    auto th = params[i].data();
    auto v = state.velocity[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < th.size(); ++k) {
      v[k] = mu * v[k] + (g[k] + wd * th[k]);
      th[k] -= lr * v[k];
    }
  }
}

double cosine_lr(int epoch, int total_epochs, double lr0) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs)
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total_epochs) + ")");
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

template class BasicStack<float>;
template class BasicStack<double>;
template struct BasicOptimizerState<float>;
template struct BasicOptimizerState<double>;
template void sgd_step(BasicStack<float>&, BasicOptimizerState<float>&, const std::vector<Tensor>&);
template void sgd_step(BasicStack<double>&, BasicOptimizerState<double>&, const std::vector<TensorD>&);

}  // namespace rk
