// SPDX-License-Identifier: Apache-2.0
#include "stutter/layers.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "stutter/error.hpp"

namespace stutter {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string_view to_string(ActivationFn fn) {
  switch (fn) {
    case ActivationFn::Linear: return "linear";
    case ActivationFn::Relu: return "relu";
    case ActivationFn::Sigmoid: return "sigmoid";
    case ActivationFn::Tanh: return "tanh";
  }
  return "linear";
}

ActivationFn activation_from_string(std::string_view name) {
  if (name == "linear") return ActivationFn::Linear;
  if (name == "relu") return ActivationFn::Relu;
  if (name == "sigmoid") return ActivationFn::Sigmoid;
  if (name == "tanh") return ActivationFn::Tanh;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(name) + "'");
}

namespace layers {

namespace {

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void apply_inplace(std::vector<double>& v, ActivationFn fn) {
  switch (fn) {
    case ActivationFn::Linear: break;
    case ActivationFn::Relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case ActivationFn::Sigmoid:
      for (double& x : v) x = sigmoid(x);
      break;
    case ActivationFn::Tanh:
      for (double& x : v) x = std::tanh(x);
      break;
  }
}

}  // namespace

Tensor activation_forward(const Tensor& x, ActivationFn fn) {
  Tensor y = x;
  apply_inplace(y.data, fn);
  return y;
}

Tensor activation_backward(const Tensor& y, const Tensor& dy, ActivationFn fn) {
  require(y.size() == dy.size(), "activation gradient size mismatch");
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    double d = 1.0;
    switch (fn) {
      case ActivationFn::Linear: break;
      case ActivationFn::Relu: d = y[i] > 0.0 ? 1.0 : 0.0; break;
      case ActivationFn::Sigmoid: d = y[i] * (1.0 - y[i]); break;
      case ActivationFn::Tanh: d = 1.0 - y[i] * y[i]; break;
    }
    dx[i] = dy[i] * d;
  }
  return dx;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride_h,
                      std::size_t stride_w) {
  require(x.rank() == 3, "conv2d input must be h x w x c, got " + to_string(x.shape));
  require(kernel.rank() == 4, "conv2d kernel must be kh x kw x c_in x c_out");
  const std::size_t h = x.shape[0], w = x.shape[1], cin = x.shape[2];
  const std::size_t kh = kernel.shape[0], kw = kernel.shape[1], cout = kernel.shape[3];
  require(kernel.shape[2] == cin, "conv2d kernel expects " + std::to_string(kernel.shape[2]) +
                                      " input channels, got " + std::to_string(cin));
  require(bias.size() == cout, "conv2d bias size mismatch");
  require(stride_h > 0 && stride_w > 0, "conv2d stride must be positive");
  require(h >= kh && w >= kw, "conv2d input " + to_string(x.shape) + " smaller than kernel");

  const std::size_t oh = (h - kh) / stride_h + 1, ow = (w - kw) / stride_w + 1;
  Tensor y({oh, ow, cout});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double* out = &y.data[(i * ow + j) * cout];
      for (std::size_t o = 0; o < cout; ++o) out[o] = bias[o];
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const double* in = &x.data[((i * stride_h + a) * w + (j * stride_w + b)) * cin];
          const double* k = &kernel.data[(a * kw + b) * cin * cout];
          for (std::size_t c = 0; c < cin; ++c) {
            const double xv = in[c];
            const double* krow = k + c * cout;
            for (std::size_t o = 0; o < cout; ++o) out[o] += xv * krow[o];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, std::size_t stride_h,
                       std::size_t stride_w, Tensor& d_kernel, Tensor& d_bias) {
  const std::size_t w = x.shape[1], cin = x.shape[2];
  const std::size_t kh = kernel.shape[0], kw = kernel.shape[1], cout = kernel.shape[3];
  const std::size_t oh = dy.shape[0], ow = dy.shape[1];
  require(dy.rank() == 3 && dy.shape[2] == cout, "conv2d output gradient shape mismatch");

  Tensor dx(x.shape);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const double* g = &dy.data[(i * ow + j) * cout];
      for (std::size_t o = 0; o < cout; ++o) d_bias[o] += g[o];
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const std::size_t in_off = ((i * stride_h + a) * w + (j * stride_w + b)) * cin;
          const double* in = &x.data[in_off];
          double* din = &dx.data[in_off];
          const std::size_t k_off = (a * kw + b) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double xv = in[c];
            const double* krow = &kernel.data[k_off + c * cout];
            double* dkrow = &d_kernel.data[k_off + c * cout];
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) {
              dkrow[o] += xv * g[o];
              acc += krow[o] * g[o];
            }
            din[c] += acc;
          }
        }
      }
    }
  }
  return dx;
}

Tensor gru_forward(const Tensor& x, const Tensor& kernel, const Tensor& recurrent, const Tensor& bias,
                   bool return_sequences, GruCache* cache) {
  require(x.rank() == 2, "gru input must be t x f, got " + to_string(x.shape));
  const std::size_t steps = x.shape[0], f = x.shape[1];
  require(recurrent.rank() == 2 && recurrent.shape[1] == 3 * recurrent.shape[0], "gru recurrent kernel must be u x 3u");
  const std::size_t u = recurrent.shape[0];
  const std::size_t g3 = 3 * u;
  require(kernel.rank() == 2 && kernel.shape[0] == f && kernel.shape[1] == g3,
          "gru kernel must be " + std::to_string(f) + " x " + std::to_string(g3) + ", got " + to_string(kernel.shape));
  require(bias.size() == g3, "gru bias must have 3u entries");

  Tensor hidden({steps + 1, u});
  Tensor zs({steps, u}), rs({steps, u}), cs({steps, u});
  std::vector<double> a(g3), rh(u);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xt = &x.data[t * f];
    const double* hp = &hidden.data[t * u];
    double* hn = &hidden.data[(t + 1) * u];
    for (std::size_t g = 0; g < g3; ++g) a[g] = bias[g];
    for (std::size_t i = 0; i < f; ++i) {
      const double xv = xt[i];
      const double* wrow = &kernel.data[i * g3];
      for (std::size_t g = 0; g < g3; ++g) a[g] += xv * wrow[g];
    }
    // update and reset gates see h directly
    for (std::size_t i = 0; i < u; ++i) {
      const double hv = hp[i];
      const double* urow = &recurrent.data[i * g3];
      for (std::size_t g = 0; g < 2 * u; ++g) a[g] += hv * urow[g];
    }
    double* z = &zs.data[t * u];
    double* r = &rs.data[t * u];
    for (std::size_t j = 0; j < u; ++j) {
      z[j] = sigmoid(a[j]);
      r[j] = sigmoid(a[u + j]);
      rh[j] = r[j] * hp[j];
    }
    for (std::size_t i = 0; i < u; ++i) {
      const double v = rh[i];
      const double* urow = &recurrent.data[i * g3 + 2 * u];
      for (std::size_t j = 0; j < u; ++j) a[2 * u + j] += v * urow[j];
    }
    double* c = &cs.data[t * u];
    for (std::size_t j = 0; j < u; ++j) {
      c[j] = std::tanh(a[2 * u + j]);
      hn[j] = (1.0 - z[j]) * hp[j] + z[j] * c[j];
    }
  }

  Tensor y;
  if (return_sequences) {
    y = Tensor({steps, u}, std::vector<double>(hidden.data.begin() + static_cast<std::ptrdiff_t>(u), hidden.data.end()));
  } else {
    y = Tensor({u}, std::vector<double>(hidden.data.end() - static_cast<std::ptrdiff_t>(u), hidden.data.end()));
  }
  if (cache) {
    cache->hidden = std::move(hidden);
    cache->update = std::move(zs);
    cache->reset = std::move(rs);
    cache->candidate = std::move(cs);
  }
  return y;
}

Tensor gru_backward(const Tensor& x, const Tensor& kernel, const Tensor& recurrent, const GruCache& cache,
                    const Tensor& dy, bool return_sequences, Tensor& d_kernel, Tensor& d_recurrent,
                    Tensor& d_bias) {
  const std::size_t steps = x.shape[0], f = x.shape[1];
  const std::size_t u = recurrent.shape[0];
  const std::size_t g3 = 3 * u;
  require(dy.size() == (return_sequences ? steps * u : u), "gru output gradient shape mismatch");

  Tensor dx(x.shape);
  std::vector<double> dh(u, 0.0), dhp(u), da(g3), drh(u), rh(u);
  for (std::size_t t = steps; t-- > 0;) {
    if (return_sequences) {
      for (std::size_t j = 0; j < u; ++j) dh[j] += dy[t * u + j];
    } else if (t == steps - 1) {
      for (std::size_t j = 0; j < u; ++j) dh[j] += dy[j];
    }
    const double* hp = &cache.hidden.data[t * u];
    const double* z = &cache.update.data[t * u];
    const double* r = &cache.reset.data[t * u];
    const double* c = &cache.candidate.data[t * u];

    for (std::size_t j = 0; j < u; ++j) {
      const double dz = dh[j] * (c[j] - hp[j]);
      const double dc = dh[j] * z[j];
      dhp[j] = dh[j] * (1.0 - z[j]);
      da[j] = dz * z[j] * (1.0 - z[j]);
      da[2 * u + j] = dc * (1.0 - c[j] * c[j]);
      rh[j] = r[j] * hp[j];
    }
    // candidate path through r * h
    for (std::size_t i = 0; i < u; ++i) {
      const double* urow = &recurrent.data[i * g3 + 2 * u];
      double* durow = &d_recurrent.data[i * g3 + 2 * u];
      double acc = 0.0;
      for (std::size_t j = 0; j < u; ++j) {
        durow[j] += rh[i] * da[2 * u + j];
        acc += urow[j] * da[2 * u + j];
      }
      drh[i] = acc;
    }
    for (std::size_t j = 0; j < u; ++j) {
      const double dr = drh[j] * hp[j];
      dhp[j] += drh[j] * r[j];
      da[u + j] = dr * r[j] * (1.0 - r[j]);
    }
    // update and reset paths through h
    for (std::size_t i = 0; i < u; ++i) {
      const double* urow = &recurrent.data[i * g3];
      double* durow = &d_recurrent.data[i * g3];
      double acc = 0.0;
      for (std::size_t g = 0; g < 2 * u; ++g) {
        durow[g] += hp[i] * da[g];
        acc += urow[g] * da[g];
      }
      dhp[i] += acc;
    }
    const double* xt = &x.data[t * f];
    double* dxt = &dx.data[t * f];
    for (std::size_t g = 0; g < g3; ++g) d_bias[g] += da[g];
    for (std::size_t i = 0; i < f; ++i) {
      const double* wrow = &kernel.data[i * g3];
      double* dwrow = &d_kernel.data[i * g3];
      double acc = 0.0;
      for (std::size_t g = 0; g < g3; ++g) {
        dwrow[g] += xt[i] * da[g];
        acc += wrow[g] * da[g];
      }
      dxt[i] = acc;
    }
    dh.swap(dhp);
  }
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, ActivationFn fn) {
  require(x.rank() == 1, "dense input must be a vector, got " + to_string(x.shape));
  require(kernel.rank() == 2 && kernel.shape[0] == x.size(),
          "dense kernel " + to_string(kernel.shape) + " does not accept " + to_string(x.shape));
  const std::size_t f = kernel.shape[0], u = kernel.shape[1];
  require(bias.size() == u, "dense bias size mismatch");
  Tensor y({u}, bias.data);
  for (std::size_t i = 0; i < f; ++i) {
    const double* wrow = &kernel.data[i * u];
    for (std::size_t j = 0; j < u; ++j) y[j] += x[i] * wrow[j];
  }
  apply_inplace(y.data, fn);
  return y;
}

Tensor dense_backward(const Tensor& x, const Tensor& kernel, const Tensor& y, const Tensor& dy, ActivationFn fn,
                      Tensor& d_kernel, Tensor& d_bias) {
  const std::size_t f = kernel.shape[0], u = kernel.shape[1];
  require(dy.size() == u, "dense output gradient size mismatch");
  Tensor da = activation_backward(y, dy, fn);
  Tensor dx({f});
  for (std::size_t j = 0; j < u; ++j) d_bias[j] += da[j];
  for (std::size_t i = 0; i < f; ++i) {
    const double* wrow = &kernel.data[i * u];
    double* dwrow = &d_kernel.data[i * u];
    double acc = 0.0;
    for (std::size_t j = 0; j < u; ++j) {
      dwrow[j] += x[i] * da[j];
      acc += wrow[j] * da[j];
    }
    dx[i] = acc;
  }
  return dx;
}

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
  Tensor mask(shape);
  const double keep = 1.0 - rate;
  std::mt19937_64 rng(seed);
  for (double& m : mask.data) {
    const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u01 < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace layers
}  // namespace stutter
