#include "trafficdiff/nn/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace trafficdiff::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

template <typename T>
void uniform_fill(Buffer<T>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& x : v) x = static_cast<T>(dist(rng));
}

// Column matrix for the whole batch: rows index (ci, ky, kx), columns index
// (sample, y, x).
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, Mat<T>& col) {
  const int ph = kh / 2, pw = kw / 2;
  const int hw = x.h * x.w;
  col.resize(static_cast<Eigen::Index>(x.c) * kh * kw, static_cast<Eigen::Index>(x.n) * hw);
  for (int ci = 0; ci < x.c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col.data() + ((static_cast<Eigen::Index>(ci) * kh + ky) * kw + kx) * col.cols();
        for (int s = 0; s < x.n; ++s) {
          const T* src = x.sample(s) + static_cast<std::size_t>(ci) * hw;
          T* dst = row + static_cast<std::size_t>(s) * hw;
          for (int y = 0; y < x.h; ++y) {
            const int sy = y + ky - ph;
            T* drow = dst + static_cast<std::size_t>(y) * x.w;
            if (sy < 0 || sy >= x.h) {
              std::fill(drow, drow + x.w, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(sy) * x.w;
            const int shift = kx - pw;
            for (int xx = 0; xx < x.w; ++xx) {
              const int sx = xx + shift;
              drow[xx] = (sx >= 0 && sx < x.w) ? srow[sx] : T(0);
            }
          }
        }
      }
}

template <typename T>
void col2im(const Mat<T>& col, int kh, int kw, Tensor<T>& dx) {
  const int ph = kh / 2, pw = kw / 2;
  const int hw = dx.h * dx.w;
  std::fill(dx.data.begin(), dx.data.end(), T(0));
  for (int ci = 0; ci < dx.c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col.data() + ((static_cast<Eigen::Index>(ci) * kh + ky) * kw + kx) * col.cols();
        for (int s = 0; s < dx.n; ++s) {
          T* dst = dx.sample(s) + static_cast<std::size_t>(ci) * hw;
          const T* src = row + static_cast<std::size_t>(s) * hw;
          for (int y = 0; y < dx.h; ++y) {
            const int sy = y + ky - ph;
            if (sy < 0 || sy >= dx.h) continue;
            const T* srow = src + static_cast<std::size_t>(y) * dx.w;
            T* drow = dst + static_cast<std::size_t>(sy) * dx.w;
            const int shift = kx - pw;
            for (int xx = 0; xx < dx.w; ++xx) {
              const int sx = xx + shift;
              if (sx >= 0 && sx < dx.w) drow[sx] += srow[xx];
            }
          }
        }
      }
}

// Row-band variants for one sample: columns index (y, x) for y in [y0, y1).
template <typename T>
void im2col_rows(const T* src, int c, int h, int w, int y0, int y1, int kh, int kw, Mat<T>& col) {
  const int ph = kh / 2, pw = kw / 2;
  const int cols = (y1 - y0) * w;
  col.resize(static_cast<Eigen::Index>(c) * kh * kw, cols);
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col.data() + ((static_cast<Eigen::Index>(ci) * kh + ky) * kw + kx) * cols;
        const T* plane = src + static_cast<std::size_t>(ci) * h * w;
        const int shift = kx - pw;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - ph;
          T* drow = row + static_cast<std::size_t>(y - y0) * w;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * w;
          const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
          for (int xx = 0; xx < lo; ++xx) drow[xx] = T(0);
          for (int xx = lo; xx < hi; ++xx) drow[xx] = srow[xx + shift];
          for (int xx = std::max(hi, lo); xx < w; ++xx) drow[xx] = T(0);
        }
      }
}

template <typename T>
void col2im_rows(const Mat<T>& col, int c, int h, int w, int y0, int y1, int kh, int kw, T* dst) {
  const int ph = kh / 2, pw = kw / 2;
  const int cols = (y1 - y0) * w;
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col.data() + ((static_cast<Eigen::Index>(ci) * kh + ky) * kw + kx) * cols;
        T* plane = dst + static_cast<std::size_t>(ci) * h * w;
        const int shift = kx - pw;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - ph;
          if (sy < 0 || sy >= h) continue;
          const T* srow = row + static_cast<std::size_t>(y - y0) * w;
          T* drow = plane + static_cast<std::size_t>(sy) * w;
          const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
          for (int xx = lo; xx < hi; ++xx) drow[xx + shift] += srow[xx];
        }
      }
}

// Rows per band so that one column block stays cache resident.
inline int band_rows(int k, int h, int w) {
  constexpr std::size_t kBudget = 1u << 20;
  const std::size_t per_row = static_cast<std::size_t>(k) * w * sizeof(float);
  return std::clamp(static_cast<int>(kBudget / std::max<std::size_t>(per_row, 1)), 1, h);
}

// Planes at least this large are convolved sample by sample in row bands.
constexpr int kBandedPlane = 1024;

// (n, c, hw) <-> (c, n*hw) reshuffles around the batched GEMM.
template <typename T>
void gather_channels_major(const Tensor<T>& x, Mat<T>& m) {
  const int hw = x.h * x.w;
  m.resize(x.c, static_cast<Eigen::Index>(x.n) * hw);
  for (int s = 0; s < x.n; ++s)
    for (int ch = 0; ch < x.c; ++ch)
      std::copy_n(x.sample(s) + static_cast<std::size_t>(ch) * hw, hw,
                  m.data() + static_cast<std::size_t>(ch) * m.cols() + static_cast<std::size_t>(s) * hw);
}

template <typename T>
void scatter_channels_major(const Mat<T>& m, Tensor<T>& x) {
  const int hw = x.h * x.w;
  for (int s = 0; s < x.n; ++s)
    for (int ch = 0; ch < x.c; ++ch)
      std::copy_n(m.data() + static_cast<std::size_t>(ch) * m.cols() + static_cast<std::size_t>(s) * hw, hw,
                  x.sample(s) + static_cast<std::size_t>(ch) * hw);
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kh, int kw)
    : cin_(in_channels), cout_(out_channels), kh_(kh), kw_(kw) {
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("Conv2d kernel sizes must be odd");
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(static_cast<std::size_t>(cout_) * cin_ * kh_ * kw_);
  bias.resize(static_cast<std::size_t>(cout_));
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng, double gain) {
  const double fan_in = static_cast<double>(cin_) * kh_ * kw_;
  uniform_fill(weight.value, gain * std::sqrt(6.0 / fan_in), rng);
  std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c != cin_) throw std::invalid_argument(weight.name + ": channel mismatch");
  input_ = x;
  const Eigen::Index k = static_cast<Eigen::Index>(cin_) * kh_ * kw_;
  ConstMapMat<T> w(weight.value.data(), cout_, k);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value.data(), cout_);
  Tensor<T> out(x.n, cout_, x.h, x.w);
  const int hw = x.h * x.w;

  if (hw >= kBandedPlane) {
    using Strided = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
    const int rows = band_rows(static_cast<int>(k), x.h, x.w);
    Mat<T> col;
    for (int s = 0; s < x.n; ++s)
      for (int y0 = 0; y0 < x.h; y0 += rows) {
        const int y1 = std::min(x.h, y0 + rows);
        const int cols = (y1 - y0) * x.w;
        T* dst = out.sample(s) + static_cast<std::size_t>(y0) * x.w;
        Strided y(dst, cout_, cols, Eigen::OuterStride<>(hw));
        if (kh_ == 1 && kw_ == 1) {
          Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>> xin(x.sample(s) + static_cast<std::size_t>(y0) * x.w,
                                                                 cin_, cols, Eigen::OuterStride<>(hw));
          y.noalias() = w * xin;
        } else {
          im2col_rows(x.sample(s), cin_, x.h, x.w, y0, y1, kh_, kw_, col);
          y.noalias() = w * col;
        }
        y.colwise() += b;
      }
    return out;
  }

  Mat<T> col;
  if (kh_ == 1 && kw_ == 1) {
    gather_channels_major(x, col);
  } else {
    im2col(x, kh_, kw_, col);
  }
  Mat<T> y = w * col;
  y.colwise() += b;
  scatter_channels_major(y, out);
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const Tensor<T>& x = input_;
  const Eigen::Index k = static_cast<Eigen::Index>(cin_) * kh_ * kw_;
  MapMat<T> dw(weight.grad.data(), cout_, k);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias.grad.data(), cout_);
  ConstMapMat<T> w(weight.value.data(), cout_, k);
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  const int hw = x.h * x.w;

  if (hw >= kBandedPlane) {
    using ConstStrided = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;
    using Strided = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
    const int rows = band_rows(static_cast<int>(k), x.h, x.w);
    Mat<T> col, dcol;
    for (int s = 0; s < x.n; ++s)
      for (int y0 = 0; y0 < x.h; y0 += rows) {
        const int y1 = std::min(x.h, y0 + rows);
        const int cols = (y1 - y0) * x.w;
        const std::size_t offset = static_cast<std::size_t>(y0) * x.w;
        ConstStrided g(dy.sample(s) + offset, cout_, cols, Eigen::OuterStride<>(hw));
        db += g.rowwise().sum();
        if (kh_ == 1 && kw_ == 1) {
          ConstStrided xin(x.sample(s) + offset, cin_, cols, Eigen::OuterStride<>(hw));
          dw.noalias() += g * xin.transpose();
          Strided dxin(dx.sample(s) + offset, cin_, cols, Eigen::OuterStride<>(hw));
          dxin.noalias() = w.transpose() * g;
        } else {
          im2col_rows(x.sample(s), cin_, x.h, x.w, y0, y1, kh_, kw_, col);
          dw.noalias() += g * col.transpose();
          dcol.noalias() = w.transpose() * g;
          col2im_rows(dcol, cin_, x.h, x.w, y0, y1, kh_, kw_, dx.sample(s));
        }
      }
    return dx;
  }

  Mat<T> dym;
  gather_channels_major(dy, dym);
  Mat<T> col;
  if (kh_ == 1 && kw_ == 1) {
    gather_channels_major(x, col);
  } else {
    im2col(x, kh_, kw_, col);
  }
  dw.noalias() += dym * col.transpose();
  db += dym.rowwise().sum();
  Mat<T> dcol = w.transpose() * dym;
  if (kh_ == 1 && kw_ == 1) {
    scatter_channels_major(dcol, dx);
  } else {
    col2im(dcol, kh_, kw_, dx);
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---- Linear ---------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight.name = name + ".weight";
  bias.name = name + ".bias";
  weight.resize(static_cast<std::size_t>(out_) * in_);
  bias.resize(static_cast<std::size_t>(out_));
}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng, double gain) {
  uniform_fill(weight.value, gain * std::sqrt(6.0 / in_), rng);
  std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != in_) throw std::invalid_argument(weight.name + ": feature mismatch");
  input_ = x;
  ConstMapMat<T> xm(x.data.data(), x.n, in_);
  ConstMapMat<T> w(weight.value.data(), out_, in_);
  Tensor<T> out(x.n, out_, 1, 1);
  MapMat<T> y(out.data.data(), x.n, out_);
  y.noalias() = xm * w.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), out_);
  y.rowwise() += b;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  ConstMapMat<T> xm(input_.data.data(), input_.n, in_);
  ConstMapMat<T> g(dy.data.data(), dy.n, out_);
  MapMat<T> dw(weight.grad.data(), out_, in_);
  dw.noalias() += g.transpose() * xm;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias.grad.data(), out_);
  db += g.colwise().sum();
  ConstMapMat<T> w(weight.value.data(), out_, in_);
  Tensor<T> dx(input_.n, input_.c, input_.h, input_.w);
  MapMat<T> dxm(dx.data.data(), input_.n, in_);
  dxm.noalias() = g * w;
  return dx;
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---- Embedding ------------------------------------------------------------

template <typename T>
Embedding<T>::Embedding(std::string name, int count, int dim) : count_(count), dim_(dim) {
  table.name = name + ".table";
  table.resize(static_cast<std::size_t>(count) * dim);
}

template <typename T>
void Embedding<T>::init(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  for (T& v : table.value) v = static_cast<T>(dist(rng));
}

template <typename T>
Tensor<T> Embedding<T>::forward(std::span<const int> ids) {
  ids_.assign(ids.begin(), ids.end());
  Tensor<T> out(static_cast<int>(ids.size()), dim_, 1, 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= count_) throw std::out_of_range(table.name + ": id out of range");
    std::copy_n(table.value.data() + static_cast<std::size_t>(ids[i]) * dim_, dim_,
                out.data.data() + i * dim_);
  }
  return out;
}

template <typename T>
void Embedding<T>::backward(const Tensor<T>& dy) {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    for (int d = 0; d < dim_; ++d)
      table.grad[static_cast<std::size_t>(ids_[i]) * dim_ + d] += dy.data[i * dim_ + d];
}

template <typename T>
void Embedding<T>::collect(ParamList<T>& out) {
  out.push_back(&table);
}

// ---- activations ----------------------------------------------------------

template <typename T>
Tensor<T> SiLU<T>::forward(const Tensor<T>& x) {
  input_ = x;
  Tensor<T> y = x;
  for (T& v : y.data) v = v / (T(1) + std::exp(-v));
  return y;
}

template <typename T>
Tensor<T> SiLU<T>::backward(const Tensor<T>& dy) const {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    const T x = input_.data[i];
    const T s = T(1) / (T(1) + std::exp(-x));
    dx.data[i] *= s * (T(1) + x * (T(1) - s));
  }
  return dx;
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  input_ = x;
  Tensor<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) const {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(input_.data[i] > T(0))) dx.data[i] = T(0);
  return dx;
}

// ---- shape ops ------------------------------------------------------------

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int ph, int pw) {
  if (x.h % ph != 0 || x.w % pw != 0) throw std::invalid_argument("avg_pool: size not divisible by pool");
  Tensor<T> y(x.n, x.c, x.h / ph, x.w / pw);
  const T scale = T(1) / static_cast<T>(ph * pw);
  for (int s = 0; s < x.n; ++s)
    for (int ch = 0; ch < x.c; ++ch)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) {
          T acc = 0;
          for (int a = 0; a < ph; ++a)
            for (int b = 0; b < pw; ++b) acc += x.at(s, ch, yy * ph + a, xx * pw + b);
          y.at(s, ch, yy, xx) = acc * scale;
        }
  return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& dy, int ph, int pw) {
  Tensor<T> dx(dy.n, dy.c, dy.h * ph, dy.w * pw);
  const T scale = T(1) / static_cast<T>(ph * pw);
  for (int s = 0; s < dx.n; ++s)
    for (int ch = 0; ch < dx.c; ++ch)
      for (int yy = 0; yy < dx.h; ++yy)
        for (int xx = 0; xx < dx.w; ++xx) dx.at(s, ch, yy, xx) = dy.at(s, ch, yy / ph, xx / pw) * scale;
  return dx;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int ph, int pw) {
  Tensor<T> y(x.n, x.c, x.h * ph, x.w * pw);
  for (int s = 0; s < y.n; ++s)
    for (int ch = 0; ch < y.c; ++ch)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(s, ch, yy, xx) = x.at(s, ch, yy / ph, xx / pw);
  return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int ph, int pw) {
  Tensor<T> dx(dy.n, dy.c, dy.h / ph, dy.w / pw);
  for (int s = 0; s < dy.n; ++s)
    for (int ch = 0; ch < dy.c; ++ch)
      for (int yy = 0; yy < dy.h; ++yy)
        for (int xx = 0; xx < dy.w; ++xx) dx.at(s, ch, yy / ph, xx / pw) += dy.at(s, ch, yy, xx);
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, 1, 1);
  const std::size_t hw = x.plane();
  for (int s = 0; s < x.n; ++s)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* p = x.sample(s) + static_cast<std::size_t>(ch) * hw;
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      y.at(s, ch, 0, 0) = acc / static_cast<T>(hw);
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int h, int w) {
  Tensor<T> dx(dy.n, dy.c, h, w);
  const std::size_t hw = dx.plane();
  for (int s = 0; s < dy.n; ++s)
    for (int ch = 0; ch < dy.c; ++ch) {
      const T g = dy.at(s, ch, 0, 0) / static_cast<T>(hw);
      T* p = dx.sample(s) + static_cast<std::size_t>(ch) * hw;
      std::fill(p, p + hw, g);
    }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
  for (int s = 0; s < a.n; ++s) {
    std::copy_n(a.sample(s), a.sample_size(), y.sample(s));
    std::copy_n(b.sample(s), b.sample_size(), y.sample(s) + a.sample_size());
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int first_channels) {
  Tensor<T> a(d.n, first_channels, d.h, d.w);
  Tensor<T> b(d.n, d.c - first_channels, d.h, d.w);
  for (int s = 0; s < d.n; ++s) {
    std::copy_n(d.sample(s), a.sample_size(), a.sample(s));
    std::copy_n(d.sample(s) + a.sample_size(), b.sample_size(), b.sample(s));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> sinusoidal_embedding(std::span<const int> steps, int dim) {
  Tensor<T> out(static_cast<int>(steps.size()), dim, 1, 1);
  const int half = dim / 2;
  for (std::size_t i = 0; i < steps.size(); ++i)
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half));
      const double arg = static_cast<double>(steps[i]) * freq;
      out.data[i * dim + k] = static_cast<T>(std::sin(arg));
      out.data[i * dim + half + k] = static_cast<T>(std::cos(arg));
    }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p = logits;
  const int k = static_cast<int>(logits.sample_size());
  for (int s = 0; s < logits.n; ++s) {
    T* row = p.sample(s);
    const T mx = *std::max_element(row, row + k);
    T sum = 0;
    for (int j = 0; j < k; ++j) sum += (row[j] = std::exp(row[j] - mx));
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
  return p;
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* dlogits) {
  const Tensor<T> p = softmax(logits);
  const int k = static_cast<int>(logits.sample_size());
  T loss = 0;
  for (int s = 0; s < logits.n; ++s) loss -= std::log(std::max(p.sample(s)[labels[s]], T(1e-12)));
  loss /= static_cast<T>(logits.n);
  if (dlogits) {
    *dlogits = p;
    for (int s = 0; s < logits.n; ++s) {
      dlogits->sample(s)[labels[s]] -= T(1);
      for (int j = 0; j < k; ++j) dlogits->sample(s)[j] /= static_cast<T>(logits.n);
    }
  }
  return loss;
}

#define TRAFFICDIFF_INSTANTIATE_LAYERS(T)                                                          \
  template class Conv2d<T>;                                                                        \
  template class Linear<T>;                                                                        \
  template class Embedding<T>;                                                                     \
  template class SiLU<T>;                                                                          \
  template class ReLU<T>;                                                                          \
  template Tensor<T> avg_pool(const Tensor<T>&, int, int);                                         \
  template Tensor<T> avg_pool_backward(const Tensor<T>&, int, int);                                \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int, int);                                 \
  template Tensor<T> upsample_nearest_backward(const Tensor<T>&, int, int);                        \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                            \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, int, int);                         \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                          \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);                  \
  template Tensor<T> sinusoidal_embedding<T>(std::span<const int>, int);                           \
  template Tensor<T> softmax(const Tensor<T>&);                                                    \
  template T softmax_cross_entropy(const Tensor<T>&, std::span<const int>, Tensor<T>*);

TRAFFICDIFF_INSTANTIATE_LAYERS(float)
TRAFFICDIFF_INSTANTIATE_LAYERS(double)

}  // namespace trafficdiff::nn
