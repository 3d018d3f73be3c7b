#include "reach/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>

#include "reach/errors.hpp"

namespace reach::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " differ");
  }
}

template <typename T>
void require_rank(Var<T> x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    for (auto id : {ia, ib}) {
      auto dst = tape.grad_buffer(id);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto da = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    auto db = tape.grad_buffer(ib);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    const auto& av = tape.value(ia);
    const auto& bv = tape.value(ib);
    auto da = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    auto db = tape.grad_buffer(ib);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= factor;
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, factor](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * g[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  const auto ix = x.id;
  return x.tape->record(Tensor<T>({1}, {total}), {x}, [ix](Tape<T>& tape, std::uint32_t self) {
    const T g = tape.out_grad(self)[0];
    for (auto& d : tape.grad_buffer(ix)) d += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value();
  out.reshape(std::move(shape));
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T{0} ? v : slope * v;
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, slope](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    const auto& xv = tape.value(ix);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += xv[i] > T{0} ? g[i] : slope * g[i];
  });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  require_rank(x, 2, "dense");
  require_rank(w, 2, "dense");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in || b.value().size() != out) {
    throw ShapeError("dense: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()) +
                     " and bias " + to_string(b.shape()));
  }
  Tensor<T> y({batch, out});
  {
    ConstMatMap<T> X(x.value().data(), batch, in);
    ConstMatMap<T> W(w.value().data(), out, in);
    MatMap<T> Y(y.data(), batch, out);
    Y.noalias() = X * W.transpose();
    const T* bias = b.value().data();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < out; ++c) Y(r, c) += bias[c];
  }
  const auto ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(y), {x, w, b}, [=](Tape<T>& tape, std::uint32_t self) {
    ConstMatMap<T> G(tape.out_grad(self).data(), batch, out);
    if (auto dx = tape.grad_buffer(ix); !dx.empty()) {
      ConstMatMap<T> W(tape.value(iw).data(), out, in);
      MatMap<T>(dx.data(), batch, in).noalias() += G * W;
    }
    if (auto dw = tape.grad_buffer(iw); !dw.empty()) {
      ConstMatMap<T> X(tape.value(ix).data(), batch, in);
      MatMap<T>(dw.data(), out, in).noalias() += G.transpose() * X;
    }
    if (auto db = tape.grad_buffer(ib); !db.empty()) {
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out; ++c) db[c] += G(r, c);
    }
  });
}

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride) {
  require_rank(x, 3, "conv1d");
  require_rank(w, 3, "conv1d");
  const std::size_t batch = x.dim(0), cin = x.dim(1), frames = x.dim(2);
  const std::size_t cout = w.dim(0), kernel = w.dim(2);
  if (w.dim(1) != cin || b.value().size() != cout) {
    throw ShapeError("conv1d: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()) +
                     " and bias " + to_string(b.shape()));
  }
  if (kernel % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(kernel));
  if (stride == 0 || frames % stride != 0) {
    throw ShapeError("conv1d: " + std::to_string(frames) + " frames not divisible by stride " +
                     std::to_string(stride));
  }
  const std::size_t out_frames = frames / stride;
  const std::size_t rows = cin * kernel, cols = batch * out_frames;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);

  // im2col: row (ci, k), column (b, t_out).
  auto columns = std::make_shared<std::vector<T>>(rows * cols, T{0});
  const T* xv = x.value().data();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = columns->data() + (ci * kernel + k) * cols;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const T* src = xv + (bi * cin + ci) * frames;
        for (std::size_t to = 0; to < out_frames; ++to) {
          const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(to * stride) + static_cast<std::ptrdiff_t>(k) - pad;
          if (t >= 0 && t < static_cast<std::ptrdiff_t>(frames)) row[bi * out_frames + to] = src[t];
        }
      }
    }
  }

  RowMatrix<T> result(cout, cols);
  result.noalias() = ConstMatMap<T>(w.value().data(), cout, rows) * ConstMatMap<T>(columns->data(), rows, cols);
  Tensor<T> y({batch, cout, out_frames});
  const T* bias = b.value().data();
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t co = 0; co < cout; ++co) {
      T* dst = y.data() + (bi * cout + co) * out_frames;
      for (std::size_t to = 0; to < out_frames; ++to) dst[to] = result(co, bi * out_frames + to) + bias[co];
    }

  const auto ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(std::move(y), {x, w, b}, [=](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    RowMatrix<T> G(cout, cols);
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t co = 0; co < cout; ++co) {
        const T* src = g.data() + (bi * cout + co) * out_frames;
        for (std::size_t to = 0; to < out_frames; ++to) G(co, bi * out_frames + to) = src[to];
      }
    if (auto db = tape.grad_buffer(ib); !db.empty()) {
      for (std::size_t co = 0; co < cout; ++co) db[co] += G.row(co).sum();
    }
    if (auto dw = tape.grad_buffer(iw); !dw.empty()) {
      MatMap<T>(dw.data(), cout, rows).noalias() += G * ConstMatMap<T>(columns->data(), rows, cols).transpose();
    }
    if (auto dx = tape.grad_buffer(ix); !dx.empty()) {
      RowMatrix<T> dcols(rows, cols);
      dcols.noalias() = ConstMatMap<T>(tape.value(iw).data(), cout, rows).transpose() * G;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t k = 0; k < kernel; ++k) {
          const T* row = dcols.data() + (ci * kernel + k) * cols;
          for (std::size_t bi = 0; bi < batch; ++bi) {
            T* dst = dx.data() + (bi * cin + ci) * frames;
            for (std::size_t to = 0; to < out_frames; ++to) {
              const std::ptrdiff_t t =
                  static_cast<std::ptrdiff_t>(to * stride) + static_cast<std::ptrdiff_t>(k) - pad;
              if (t >= 0 && t < static_cast<std::ptrdiff_t>(frames)) dst[t] += row[bi * out_frames + to];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample(Var<T> x, UpsampleMode mode) {
  require_rank(x, 3, "upsample");
  const std::size_t rows = x.dim(0) * x.dim(1), frames = x.dim(2);
  if (frames == 0) throw ShapeError("upsample: empty time axis");
  Tensor<T> y({x.dim(0), x.dim(1), 2 * frames});

  // Output sample j reads input position j/2 - 1/4, clamped to [0, frames-1].
  auto taps = [frames, mode](std::size_t j, std::size_t& lo, std::size_t& hi, T& w_hi) {
    const std::size_t i = j / 2;
    if (mode == UpsampleMode::nearest) {
      lo = hi = i;
      w_hi = T{0};
      return;
    }
    if (j % 2 == 0) {
      lo = i == 0 ? 0 : i - 1;
      hi = i;
      w_hi = i == 0 ? T{0} : T(0.75);
    } else {
      lo = i;
      hi = std::min(i + 1, frames - 1);
      w_hi = hi == i ? T{0} : T(0.25);
    }
  };

  const T* src = x.value().data();
  T* dst = y.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < 2 * frames; ++j) {
      std::size_t lo, hi;
      T w_hi;
      taps(j, lo, hi, w_hi);
      dst[r * 2 * frames + j] = (T{1} - w_hi) * src[r * frames + lo] + w_hi * src[r * frames + hi];
    }

  const auto ix = x.id;
  return x.tape->record(std::move(y), {x}, [=](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < 2 * frames; ++j) {
        std::size_t lo, hi;
        T w_hi;
        taps(j, lo, hi, w_hi);
        const T gj = g[r * 2 * frames + j];
        dx[r * frames + lo] += (T{1} - w_hi) * gj;
        dx[r * frames + hi] += w_hi * gj;
      }
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: " + to_string(s) + " does not match " + to_string(first) + " off axis");
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Tensor<T> y(shape);
  const std::size_t row = shape[axis] * inner;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets, widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * inner;
    const T* src = p.value().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * width, width, y.data() + o * row + offset);
    ids.push_back(p.id);
    offsets.push_back(offset);
    widths.push_back(width);
    offset += width;
  }
  return parts[0].tape->record(std::move(y), parts, [=](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto dx = tape.grad_buffer(ids[k]);
      if (dx.empty()) continue;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < widths[k]; ++i) dx[o * widths[k] + i] += g[o * row + offsets[k] + i];
    }
  });
}

template <typename T>
Var<T> tile_time(Var<T> x, std::size_t frames) {
  require_rank(x, 2, "tile_time");
  const std::size_t rows = x.dim(0) * x.dim(1);
  Tensor<T> y({x.dim(0), x.dim(1), frames});
  const T* src = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) std::fill_n(y.data() + r * frames, frames, src[r]);
  const auto ix = x.id;
  return x.tape->record(std::move(y), {x}, [=](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < frames; ++t) dx[r] += g[r * frames + t];
  });
}

template <typename T>
Var<T> channel_affine(Var<T> x, std::span<const T> gain, std::span<const T> offset) {
  require_rank(x, 3, "channel_affine");
  const std::size_t batch = x.dim(0), channels = x.dim(1), frames = x.dim(2);
  if (gain.size() != channels || offset.size() != channels) {
    throw ShapeError("channel_affine: " + std::to_string(gain.size()) + " gains for " + to_string(x.shape()));
  }
  Tensor<T> y = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < frames; ++t) y.at(b, c, t) = y.at(b, c, t) * gain[c] + offset[c];
  std::vector<T> g_copy(gain.begin(), gain.end());
  const auto ix = x.id;
  return x.tape->record(std::move(y), {x}, [=, g_copy = std::move(g_copy)](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < frames; ++t) {
          const std::size_t i = (b * channels + c) * frames + t;
          dx[i] += g_copy[c] * g[i];
        }
  });
}

#define REACH_INSTANTIATE_OPS(T)                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> sub(Var<T>, Var<T>);                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                  \
  template Var<T> scale(Var<T>, T);                                                     \
  template Var<T> sum(Var<T>);                                                          \
  template Var<T> mean(Var<T>);                                                         \
  template Var<T> reshape(Var<T>, Shape);                                               \
  template Var<T> leaky_relu(Var<T>, T);                                                \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                        \
  template Var<T> conv1d(Var<T>, Var<T>, Var<T>, std::size_t);                          \
  template Var<T> upsample(Var<T>, UpsampleMode);                                       \
  template Var<T> concat(std::span<const Var<T>>, std::size_t);                         \
  template Var<T> tile_time(Var<T>, std::size_t);                                       \
  template Var<T> channel_affine(Var<T>, std::span<const T>, std::span<const T>);

REACH_INSTANTIATE_OPS(float)
REACH_INSTANTIATE_OPS(double)

}  // namespace reach::nn
