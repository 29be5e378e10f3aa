#include "tnas/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

using detail::grad_of;
using detail::Node;

namespace {

std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (std::int64_t a = static_cast<std::int64_t>(shape.size()) - 2; a >= 0; --a) {
    s[static_cast<std::size_t>(a)] =
        s[static_cast<std::size_t>(a + 1)] * shape[static_cast<std::size_t>(a + 1)];
  }
  return s;
}

// Visits every contiguous run of the block described by `windows` inside an
// array of shape `outer`: fn(block_offset, outer_offset, run_length).
template <typename F>
void for_each_block_run(const Shape& outer, std::span<const Window> windows, F&& fn) {
  const std::size_t rank = outer.size();
  const auto ostr = strides_of(outer);
  Shape inner(rank);
  for (std::size_t a = 0; a < rank; ++a) inner[a] = windows[a].extent;
  const auto istr = strides_of(inner);
  const std::int64_t run = inner[rank - 1];
  const std::int64_t runs = numel(inner) / run;
  std::vector<std::int64_t> idx(rank, 0);
  for (std::int64_t r = 0; r < runs; ++r) {
    std::int64_t in_off = 0;
    std::int64_t out_off = windows[rank - 1].start;
    for (std::size_t a = 0; a + 1 < rank; ++a) {
      in_off += idx[a] * istr[a];
      out_off += (windows[a].start + idx[a]) * ostr[a];
    }
    fn(in_off, out_off, run);
    for (std::int64_t a = static_cast<std::int64_t>(rank) - 2; a >= 0; --a) {
      auto ua = static_cast<std::size_t>(a);
      if (++idx[ua] < inner[ua]) break;
      idx[ua] = 0;
    }
  }
}

void require_same_shape(const DiffArray& a, const DiffArray& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw RangeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

// Unary elementwise primitive with derivative expressed through (x, y).
template <typename Fwd, typename Deriv>
DiffArray unary(const char* name, const DiffArray& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(x.shape(), std::move(out), x.dtype(), track);
  if (track) {
    detail::record(name, {x}, y, [xn = x.node().get(), yn = y.node().get(), deriv] {
      auto& gx = grad_of(*xn);
      const auto& gy = yn->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += gy[i] * deriv(xn->values[i], yn->values[i]);
      }
    });
  }
  return y;
}

}  // namespace

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, const Conv2dOptions& opt) {
  const std::int64_t span = in + 2 * opt.padding - opt.dilation * (kernel - 1) - 1;
  if (span < 0) {
    throw DimensionError("convolution output extent would be non-positive (input " +
                         std::to_string(in) + ", kernel " + std::to_string(kernel) + ")");
  }
  return span / opt.stride + 1;
}

// ---------------------------------------------------------------------------
// Linear algebra

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = av[static_cast<std::size_t>(i * k + kk)];
      const double* brow = bv.data() + kk * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  const bool track = detail::tracking({&a, &b});
  auto y = detail::make_output({m, n}, std::move(out), detail::promote({&a, &b}), track);
  if (track) {
    detail::record("matmul", {a, b}, y,
                   [an = a.node().get(), bn = b.node().get(), yn = y.node().get(), m, k, n] {
                     const auto& g = yn->grad;
                     if (an->requires_grad) {
                       auto& ga = grad_of(*an);
                       for (std::int64_t i = 0; i < m; ++i)
                         for (std::int64_t kk = 0; kk < k; ++kk) {
                           double s = 0.0;
                           for (std::int64_t j = 0; j < n; ++j)
                             s += g[static_cast<std::size_t>(i * n + j)] *
                                  bn->values[static_cast<std::size_t>(kk * n + j)];
                           ga[static_cast<std::size_t>(i * k + kk)] += s;
                         }
                     }
                     if (bn->requires_grad) {
                       auto& gb = grad_of(*bn);
                       for (std::int64_t i = 0; i < m; ++i)
                         for (std::int64_t kk = 0; kk < k; ++kk) {
                           const double aik = an->values[static_cast<std::size_t>(i * k + kk)];
                           for (std::int64_t j = 0; j < n; ++j)
                             gb[static_cast<std::size_t>(kk * n + j)] +=
                                 aik * g[static_cast<std::size_t>(i * n + j)];
                         }
                     }
                   });
  }
  return y;
}

DiffArray linear(const DiffArray& x, const DiffArray& weight, const DiffArray& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::int64_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (bias.defined() && bias.numel() != outd) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(outd) + " outputs");
  }
  const auto xv = x.values();
  const auto wv = weight.values();
  std::vector<double> out(static_cast<std::size_t>(n * outd));
  for (std::int64_t r = 0; r < n; ++r) {
    const double* xr = xv.data() + r * in;
    for (std::int64_t o = 0; o < outd; ++o) {
      const double* wr = wv.data() + o * in;
      double s = 0.0;
      for (std::int64_t c = 0; c < in; ++c) s += xr[c] * wr[c];
      if (bias.defined()) s += bias.values()[static_cast<std::size_t>(o)];
      out[static_cast<std::size_t>(r * outd + o)] = s;
    }
  }
  const bool track = detail::tracking({&x, &weight, &bias});
  auto y = detail::make_output({n, outd}, std::move(out), detail::promote({&x, &weight, &bias}),
                               track);
  if (track) {
    std::vector<DiffArray> ins{x, weight};
    if (bias.defined()) ins.push_back(bias);
    Node* bn = bias.defined() ? bias.node().get() : nullptr;
    detail::record("linear", ins, y,
                   [xn = x.node().get(), wn = weight.node().get(), bn, yn = y.node().get(), n, in,
                    outd] {
                     const auto& g = yn->grad;
                     if (xn->requires_grad) {
                       auto& gx = grad_of(*xn);
                       for (std::int64_t r = 0; r < n; ++r)
                         for (std::int64_t o = 0; o < outd; ++o) {
                           const double go = g[static_cast<std::size_t>(r * outd + o)];
                           const double* wr = wn->values.data() + o * in;
                           double* gxr = gx.data() + r * in;
                           for (std::int64_t c = 0; c < in; ++c) gxr[c] += go * wr[c];
                         }
                     }
                     if (wn->requires_grad) {
                       auto& gw = grad_of(*wn);
                       for (std::int64_t r = 0; r < n; ++r)
                         for (std::int64_t o = 0; o < outd; ++o) {
                           const double go = g[static_cast<std::size_t>(r * outd + o)];
                           const double* xr = xn->values.data() + r * in;
                           double* gwr = gw.data() + o * in;
                           for (std::int64_t c = 0; c < in; ++c) gwr[c] += go * xr[c];
                         }
                     }
                     if (bn != nullptr && bn->requires_grad) {
                       auto& gb = grad_of(*bn);
                       for (std::int64_t r = 0; r < n; ++r)
                         for (std::int64_t o = 0; o < outd; ++o)
                           gb[static_cast<std::size_t>(o)] +=
                               g[static_cast<std::size_t>(r * outd + o)];
                     }
                   });
  }
  return y;
}

DiffArray transpose(const DiffArray& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(a.shape()));
  const std::int64_t m = a.dim(0), n = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j * m + i)] = av[static_cast<std::size_t>(i * n + j)];
  const bool track = detail::tracking({&a});
  auto y = detail::make_output({n, m}, std::move(out), a.dtype(), track);
  if (track) {
    detail::record("transpose", {a}, y, [an = a.node().get(), yn = y.node().get(), m, n] {
      auto& ga = grad_of(*an);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          ga[static_cast<std::size_t>(i * n + j)] += yn->grad[static_cast<std::size_t>(j * m + i)];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution (im2col per sample and group, then a K-ordered product)

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, ho, wo, groups, cin_g, cout_g;
  Conv2dOptions opt;
  std::int64_t patch() const { return cin_g * k * k; }
  std::int64_t positions() const { return ho * wo; }
};

void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::int64_t p_count = g.positions();
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    const double* plane = img + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * p_count;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.opt.stride - g.opt.padding + ky * g.opt.dilation;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.opt.stride - g.opt.padding + kx * g.opt.dilation;
            row[oy * g.wo + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const std::int64_t p_count = g.positions();
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    double* plane = img + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * p_count;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.opt.stride - g.opt.padding + ky * g.opt.dilation;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.opt.stride - g.opt.padding + kx * g.opt.dilation;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

DiffArray conv2d(const DiffArray& input, const DiffArray& kernel, const Conv2dOptions& opt) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d expects input [N,C,H,W] and kernel [O,I,k,k], got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0 || opt.groups < 1) {
    throw PreconditionError("conv2d: stride/dilation/groups must be >= 1 and padding >= 0");
  }
  ConvGeometry g{};
  g.opt = opt;
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.groups = opt.groups;
  if (kernel.dim(3) != g.k) throw UnsupportedKernelError("conv2d: kernel must be square");
  if (g.k % 2 == 0) {
    throw UnsupportedKernelError("conv2d: kernel extent must be odd, got " + std::to_string(g.k));
  }
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw DimensionError("conv2d: channels not divisible by groups");
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (kernel.dim(1) != g.cin_g) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                         shape_str(input.shape()) + " with " + std::to_string(g.groups) +
                         " groups");
  }
  g.ho = conv_output_extent(g.h, g.k, opt);
  g.wo = conv_output_extent(g.w, g.k, opt);

  const std::int64_t patch = g.patch();
  const std::int64_t pos = g.positions();
  const auto xv = input.values();
  const auto wv = kernel.values();
  std::vector<double> out(static_cast<std::size_t>(g.n * g.cout * pos), 0.0);
  std::vector<double> col(static_cast<std::size_t>(patch * pos));
  for (std::int64_t s = 0; s < g.n; ++s) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      im2col(xv.data() + (s * g.cin + grp * g.cin_g) * g.h * g.w, g, col.data());
      for (std::int64_t oc = 0; oc < g.cout_g; ++oc) {
        const std::int64_t co = grp * g.cout_g + oc;
        double* orow = out.data() + (s * g.cout + co) * pos;
        const double* wrow = wv.data() + co * patch;
        for (std::int64_t kk = 0; kk < patch; ++kk) {
          const double wk = wrow[kk];
          const double* crow = col.data() + kk * pos;
          for (std::int64_t p = 0; p < pos; ++p) orow[p] += wk * crow[p];
        }
      }
    }
  }
  const bool track = detail::tracking({&input, &kernel});
  auto y = detail::make_output({g.n, g.cout, g.ho, g.wo}, std::move(out),
                               detail::promote({&input, &kernel}), track);
  if (track) {
    detail::record("conv2d", {input, kernel}, y,
                   [xn = input.node().get(), wn = kernel.node().get(), yn = y.node().get(), g] {
                     const std::int64_t patch = g.patch();
                     const std::int64_t pos = g.positions();
                     const auto& gy = yn->grad;
                     std::vector<double> col(static_cast<std::size_t>(patch * pos));
                     std::vector<double> gcol(static_cast<std::size_t>(patch * pos));
                     double* gw = wn->requires_grad ? grad_of(*wn).data() : nullptr;
                     double* gx = xn->requires_grad ? grad_of(*xn).data() : nullptr;
                     for (std::int64_t s = 0; s < g.n; ++s) {
                       for (std::int64_t grp = 0; grp < g.groups; ++grp) {
                         const std::int64_t img_off = (s * g.cin + grp * g.cin_g) * g.h * g.w;
                         if (gw != nullptr) im2col(xn->values.data() + img_off, g, col.data());
                         if (gx != nullptr) std::fill(gcol.begin(), gcol.end(), 0.0);
                         for (std::int64_t oc = 0; oc < g.cout_g; ++oc) {
                           const std::int64_t co = grp * g.cout_g + oc;
                           const double* grow = gy.data() + (s * g.cout + co) * pos;
                           if (gw != nullptr) {
                             double* gwrow = gw + co * patch;
                             for (std::int64_t kk = 0; kk < patch; ++kk) {
                               const double* crow = col.data() + kk * pos;
                               double acc = 0.0;
                               for (std::int64_t p = 0; p < pos; ++p) acc += grow[p] * crow[p];
                               gwrow[kk] += acc;
                             }
                           }
                           if (gx != nullptr) {
                             const double* wrow = wn->values.data() + co * patch;
                             for (std::int64_t kk = 0; kk < patch; ++kk) {
                               const double wk = wrow[kk];
                               if (wk == 0.0) continue;
                               double* gcrow = gcol.data() + kk * pos;
                               for (std::int64_t p = 0; p < pos; ++p) gcrow[p] += wk * grow[p];
                             }
                           }
                         }
                         if (gx != nullptr) col2im_add(gcol.data(), g, gx + img_off);
                       }
                     }
                   });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structural

std::vector<Window> aligned_windows(const Shape& inner, const Shape& outer,
                                    std::span<const Alignment> alignment) {
  if (inner.size() != outer.size() || alignment.size() != outer.size()) {
    throw DimensionError("aligned_windows: rank mismatch between " + shape_str(inner) + ", " +
                         shape_str(outer) + " and " + std::to_string(alignment.size()) +
                         " alignments");
  }
  std::vector<Window> w(outer.size());
  for (std::size_t a = 0; a < outer.size(); ++a) {
    const std::int64_t gap = outer[a] - inner[a];
    if (gap < 0) {
      throw DimensionError("target extent " + std::to_string(outer[a]) + " smaller than source " +
                           std::to_string(inner[a]) + " on axis " + std::to_string(a));
    }
    if (alignment[a] == Alignment::Centered) {
      if (gap % 2 != 0) {
        throw AlignmentError("centered alignment needs an even gap on axis " + std::to_string(a) +
                             " (" + std::to_string(inner[a]) + " into " +
                             std::to_string(outer[a]) + ")");
      }
      w[a] = {gap / 2, inner[a]};
    } else {
      w[a] = {0, inner[a]};
    }
  }
  return w;
}

DiffArray zero_pad(const DiffArray& x, const Shape& target, std::span<const Alignment> alignment) {
  const auto windows = aligned_windows(x.shape(), target, alignment);
  std::vector<double> out(static_cast<std::size_t>(numel(target)), 0.0);
  const auto xv = x.values();
  for_each_block_run(target, windows, [&](std::int64_t in_off, std::int64_t out_off, std::int64_t run) {
    std::copy_n(xv.data() + in_off, run, out.data() + out_off);
  });
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(target, std::move(out), x.dtype(), track);
  if (track) {
    detail::record("zero_pad", {x}, y,
                   [xn = x.node().get(), yn = y.node().get(), target, windows] {
                     auto& gx = grad_of(*xn);
                     for_each_block_run(target, windows,
                                        [&](std::int64_t in_off, std::int64_t out_off,
                                            std::int64_t run) {
                                          for (std::int64_t i = 0; i < run; ++i)
                                            gx[static_cast<std::size_t>(in_off + i)] +=
                                                yn->grad[static_cast<std::size_t>(out_off + i)];
                                        });
                   });
  }
  return y;
}

DiffArray slice_view(const DiffArray& x, std::span<const Window> windows) {
  const Shape& shape = x.shape();
  if (windows.size() != shape.size()) {
    throw DimensionError("slice_view: " + std::to_string(windows.size()) + " windows for rank " +
                         std::to_string(shape.size()));
  }
  Shape out_shape(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) {
    const auto& w = windows[a];
    if (w.start < 0 || w.extent <= 0 || w.start + w.extent > shape[a]) {
      throw RangeError("slice_view: window [" + std::to_string(w.start) + ", " +
                       std::to_string(w.start + w.extent) + ") outside axis " + std::to_string(a) +
                       " of extent " + std::to_string(shape[a]));
    }
    out_shape[a] = w.extent;
  }
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  const auto xv = x.values();
  std::vector<Window> win(windows.begin(), windows.end());
  for_each_block_run(shape, win, [&](std::int64_t in_off, std::int64_t src_off, std::int64_t run) {
    std::copy_n(xv.data() + src_off, run, out.data() + in_off);
  });
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(out_shape, std::move(out), x.dtype(), track);
  if (track) {
    detail::record("slice_view", {x}, y,
                   [xn = x.node().get(), yn = y.node().get(), shape, win] {
                     auto& gx = grad_of(*xn);
                     for_each_block_run(shape, win,
                                        [&](std::int64_t in_off, std::int64_t src_off,
                                            std::int64_t run) {
                                          for (std::int64_t i = 0; i < run; ++i)
                                            gx[static_cast<std::size_t>(src_off + i)] +=
                                                yn->grad[static_cast<std::size_t>(in_off + i)];
                                        });
                   });
  }
  return y;
}

DiffArray reshape(const DiffArray& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(std::move(shape), std::move(out), x.dtype(), track);
  if (track) {
    detail::record("reshape", {x}, y, [xn = x.node().get(), yn = y.node().get()] {
      auto& gx = grad_of(*xn);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i];
    });
  }
  return y;
}

DiffArray concat(const std::vector<DiffArray>& parts, std::int64_t axis) {
  if (parts.empty()) throw PreconditionError("concat of an empty list");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, static_cast<std::int64_t>(first.size()));
  const auto ua = static_cast<std::size_t>(axis);
  Shape out_shape = first;
  out_shape[ua] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != ua && s[a] != first[a]) {
        throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                             shape_str(first));
      }
    }
    out_shape[ua] += s[ua];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < ua; ++a) outer *= first[a];
  for (std::size_t a = ua + 1; a < first.size(); ++a) inner *= first[a];
  const std::int64_t out_row = out_shape[ua] * inner;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::int64_t row = p.dim(axis) * inner;
    const auto pv = p.values();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * row, row, out.data() + o * out_row + off);
    off += row;
  }
  const bool track = detail::tracking(parts);
  auto y = detail::make_output(out_shape, std::move(out), detail::promote(parts), track);
  if (track) {
    std::vector<Node*> nodes;
    std::vector<std::int64_t> rows;
    for (const auto& p : parts) {
      nodes.push_back(p.node().get());
      rows.push_back(p.dim(axis) * inner);
    }
    detail::record("concat", parts, y,
                   [nodes, rows, offsets, outer, out_row, yn = y.node().get()] {
                     for (std::size_t i = 0; i < nodes.size(); ++i) {
                       if (!nodes[i]->requires_grad) continue;
                       auto& gp = grad_of(*nodes[i]);
                       for (std::int64_t o = 0; o < outer; ++o)
                         for (std::int64_t j = 0; j < rows[i]; ++j)
                           gp[static_cast<std::size_t>(o * rows[i] + j)] +=
                               yn->grad[static_cast<std::size_t>(o * out_row + offsets[i] + j)];
                     }
                   });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd, typename Back>
DiffArray binary(const char* name, const DiffArray& a, const DiffArray& b, Fwd fwd, Back back) {
  require_same_shape(a, b, name);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool track = detail::tracking({&a, &b});
  auto y = detail::make_output(a.shape(), std::move(out), detail::promote({&a, &b}), track);
  if (track) {
    detail::record(name, {a, b}, y,
                   [an = a.node().get(), bn = b.node().get(), yn = y.node().get(), back] {
                     double* ga = an->requires_grad ? grad_of(*an).data() : nullptr;
                     double* gb = bn->requires_grad ? grad_of(*bn).data() : nullptr;
                     for (std::size_t i = 0; i < yn->grad.size(); ++i) {
                       back(an->values[i], bn->values[i], yn->grad[i], ga ? ga + i : nullptr,
                            gb ? gb + i : nullptr);
                     }
                   });
  }
  return y;
}

}  // namespace

DiffArray add(const DiffArray& a, const DiffArray& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

DiffArray sub(const DiffArray& a, const DiffArray& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

DiffArray mul(const DiffArray& a, const DiffArray& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

DiffArray scale(const DiffArray& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

DiffArray scale_by(const DiffArray& x, const DiffArray& w, std::int64_t index) {
  if (index < 0 || index >= w.numel()) {
    throw RangeError("scale_by: index " + std::to_string(index) + " outside weight vector");
  }
  const double s = w.values()[static_cast<std::size_t>(index)];
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * s;
  const bool track = detail::tracking({&x, &w});
  auto y = detail::make_output(x.shape(), std::move(out), detail::promote({&x, &w}), track);
  if (track) {
    detail::record("scale_by", {x, w}, y,
                   [xn = x.node().get(), wn = w.node().get(), yn = y.node().get(), index] {
                     const double s = wn->values[static_cast<std::size_t>(index)];
                     const auto& g = yn->grad;
                     if (xn->requires_grad) {
                       auto& gx = grad_of(*xn);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
                     }
                     if (wn->requires_grad) {
                       double acc = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xn->values[i];
                       grad_of(*wn)[static_cast<std::size_t>(index)] += acc;
                     }
                   });
  }
  return y;
}

DiffArray add_bias(const DiffArray& x, const DiffArray& bias, std::int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const std::int64_t c = x.dim(axis);
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  std::int64_t inner = 1;
  for (std::int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const auto xv = x.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] + bv[static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % c)];
  }
  const bool track = detail::tracking({&x, &bias});
  auto y = detail::make_output(x.shape(), std::move(out), detail::promote({&x, &bias}), track);
  if (track) {
    detail::record("add_bias", {x, bias}, y,
                   [xn = x.node().get(), bn = bias.node().get(), yn = y.node().get(), inner, c] {
                     const auto& g = yn->grad;
                     if (xn->requires_grad) {
                       auto& gx = grad_of(*xn);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     }
                     if (bn->requires_grad) {
                       auto& gb = grad_of(*bn);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gb[static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % c)] +=
                             g[i];
                     }
                   });
  }
  return y;
}

DiffArray add_n(const std::vector<DiffArray>& terms) {
  if (terms.empty()) throw PreconditionError("add_n of an empty list");
  for (const auto& t : terms) require_same_shape(terms.front(), t, "add_n");
  std::vector<double> out(terms.front().values().begin(), terms.front().values().end());
  for (std::size_t t = 1; t < terms.size(); ++t) {
    const auto tv = terms[t].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
  }
  const bool track = detail::tracking(terms);
  auto y = detail::make_output(terms.front().shape(), std::move(out), detail::promote(terms), track);
  if (track) {
    std::vector<Node*> nodes;
    for (const auto& t : terms) nodes.push_back(t.node().get());
    detail::record("add_n", terms, y, [nodes, yn = y.node().get()] {
      for (auto* n : nodes) {
        if (!n->requires_grad) continue;
        auto& g = grad_of(*n);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

DiffArray relu(const DiffArray& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

DiffArray gelu(const DiffArray& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

DiffArray softplus(const DiffArray& x) {
  return unary(
      "softplus", x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

DiffArray square(const DiffArray& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

DiffArray stop_gradient(const DiffArray& x) { return x.detach(); }

// ---------------------------------------------------------------------------
// Reductions

DiffArray sum(const DiffArray& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const bool track = detail::tracking({&x});
  auto y = detail::make_output({1}, {s}, x.dtype(), track);
  if (track) {
    detail::record("sum", {x}, y, [xn = x.node().get(), yn = y.node().get()] {
      auto& gx = grad_of(*xn);
      for (auto& g : gx) g += yn->grad[0];
    });
  }
  return y;
}

DiffArray mean(const DiffArray& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

DiffArray global_avg_pool(const DiffArray& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) s += xv[static_cast<std::size_t>(i * hw + p)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hw);
  }
  const bool track = detail::tracking({&x});
  auto y = detail::make_output({n, c}, std::move(out), x.dtype(), track);
  if (track) {
    detail::record("global_avg_pool", {x}, y, [xn = x.node().get(), yn = y.node().get(), n, c, hw] {
      auto& gx = grad_of(*xn);
      for (std::int64_t i = 0; i < n * c; ++i) {
        const double g = yn->grad[static_cast<std::size_t>(i)] / static_cast<double>(hw);
        for (std::int64_t p = 0; p < hw; ++p) gx[static_cast<std::size_t>(i * hw + p)] += g;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Probabilistic

DiffArray softmax(const DiffArray& x, std::int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const std::int64_t len = x.dim(axis);
  std::int64_t inner = 1;
  for (std::int64_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::int64_t outer = x.numel() / (len * inner);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      double mx = -INFINITY;
      for (std::int64_t j = 0; j < len; ++j) mx = std::max(mx, xv[static_cast<std::size_t>(base + j * inner)]);
      double s = 0.0;
      for (std::int64_t j = 0; j < len; ++j) {
        const auto idx = static_cast<std::size_t>(base + j * inner);
        out[idx] = std::exp(xv[idx] - mx);
        s += out[idx];
      }
      for (std::int64_t j = 0; j < len; ++j) out[static_cast<std::size_t>(base + j * inner)] /= s;
    }
  }
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(x.shape(), std::move(out), x.dtype(), track);
  if (track) {
    detail::record("softmax", {x}, y,
                   [xn = x.node().get(), yn = y.node().get(), outer, inner, len] {
                     auto& gx = grad_of(*xn);
                     const auto& g = yn->grad;
                     const auto& yv = yn->values;
                     for (std::int64_t o = 0; o < outer; ++o) {
                       for (std::int64_t in = 0; in < inner; ++in) {
                         const std::int64_t base = o * len * inner + in;
                         double dot = 0.0;
                         for (std::int64_t j = 0; j < len; ++j) {
                           const auto idx = static_cast<std::size_t>(base + j * inner);
                           dot += g[idx] * yv[idx];
                         }
                         for (std::int64_t j = 0; j < len; ++j) {
                           const auto idx = static_cast<std::size_t>(base + j * inner);
                           gx[idx] += yv[idx] * (g[idx] - dot);
                         }
                       }
                     }
                   });
  }
  return y;
}

DiffArray cross_entropy(const DiffArray& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects logits [N,C], got " + shape_str(logits.shape()));
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (auto l : labels) {
    if (l < 0 || l >= c) {
      throw RangeError("cross_entropy: label " + std::to_string(l) + " outside " +
                       std::to_string(c) + " classes");
    }
  }
  const auto zv = logits.values();
  std::vector<double> probs(zv.size());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* z = zv.data() + i * c;
    double mx = -INFINITY;
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, z[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      probs[static_cast<std::size_t>(i * c + j)] = std::exp(z[j] - mx);
      s += probs[static_cast<std::size_t>(i * c + j)];
    }
    for (std::int64_t j = 0; j < c; ++j) probs[static_cast<std::size_t>(i * c + j)] /= s;
    total += std::log(s) + mx - z[labels[static_cast<std::size_t>(i)]];
  }
  const bool track = detail::tracking({&logits});
  auto y = detail::make_output({1}, {total / static_cast<double>(n)}, logits.dtype(), track);
  if (track) {
    std::vector<std::int32_t> lab(labels.begin(), labels.end());
    detail::record("cross_entropy", {logits}, y,
                   [zn = logits.node().get(), yn = y.node().get(), probs = std::move(probs),
                    lab = std::move(lab), n, c] {
                     auto& gz = grad_of(*zn);
                     const double g = yn->grad[0] / static_cast<double>(n);
                     for (std::int64_t i = 0; i < n; ++i)
                       for (std::int64_t j = 0; j < c; ++j) {
                         const auto idx = static_cast<std::size_t>(i * c + j);
                         gz[idx] += g * (probs[idx] - (j == lab[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
                       }
                   });
  }
  return y;
}

DiffArray normalize_sum(const DiffArray& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  if (!(s > 0.0)) throw NormalizationError("normalize_sum: non-positive total");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v /= s;
  const bool track = detail::tracking({&x});
  auto y = detail::make_output(x.shape(), std::move(out), x.dtype(), track);
  if (track) {
    detail::record("normalize_sum", {x}, y, [xn = x.node().get(), yn = y.node().get(), s] {
      auto& gx = grad_of(*xn);
      double dot = 0.0;
      for (std::size_t i = 0; i < gx.size(); ++i) dot += yn->grad[i] * yn->values[i];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (yn->grad[i] - dot) / s;
    });
  }
  return y;
}

DiffArray outer_product(const std::vector<DiffArray>& vectors) {
  if (vectors.empty()) throw PreconditionError("outer_product of no vectors");
  std::vector<std::int64_t> lens;
  std::int64_t total = 1;
  for (const auto& v : vectors) {
    lens.push_back(v.numel());
    total *= v.numel();
  }
  const std::size_t d = vectors.size();
  auto for_each_combo = [lens, total, d](auto&& fn) {
    std::vector<std::int64_t> idx(d, 0);
    for (std::int64_t c = 0; c < total; ++c) {
      fn(c, idx);
      for (std::int64_t a = static_cast<std::int64_t>(d) - 1; a >= 0; --a) {
        auto ua = static_cast<std::size_t>(a);
        if (++idx[ua] < lens[ua]) break;
        idx[ua] = 0;
      }
    }
  };
  std::vector<double> out(static_cast<std::size_t>(total));
  for_each_combo([&](std::int64_t c, const std::vector<std::int64_t>& idx) {
    double p = 1.0;
    for (std::size_t a = 0; a < d; ++a) p *= vectors[a].values()[static_cast<std::size_t>(idx[a])];
    out[static_cast<std::size_t>(c)] = p;
  });
  const bool track = detail::tracking(vectors);
  auto y = detail::make_output({total}, std::move(out), detail::promote(vectors), track);
  if (track) {
    std::vector<Node*> nodes;
    for (const auto& v : vectors) nodes.push_back(v.node().get());
    detail::record("outer_product", vectors, y, [nodes, for_each_combo, d, yn = y.node().get()] {
      for_each_combo([&](std::int64_t c, const std::vector<std::int64_t>& idx) {
        const double g = yn->grad[static_cast<std::size_t>(c)];
        for (std::size_t a = 0; a < d; ++a) {
          if (!nodes[a]->requires_grad) continue;
          double p = g;
          for (std::size_t b = 0; b < d; ++b)
            if (b != a) p *= nodes[b]->values[static_cast<std::size_t>(idx[b])];
          grad_of(*nodes[a])[static_cast<std::size_t>(idx[a])] += p;
        }
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

// Standardises `groups` contiguous runs of length `len`; the affine parameter
// index of element i in group gi is given by `param_index(gi, i)`.
template <typename ParamIndex>
DiffArray standardize(const char* name, const DiffArray& x, const DiffArray& gamma,
                      const DiffArray& beta, double eps, std::int64_t groups, std::int64_t len,
                      ParamIndex param_index) {
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(groups));
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    const double* row = xv.data() + gi * len;
    double mu = 0.0;
    for (std::int64_t i = 0; i < len; ++i) mu += row[i];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::int64_t i = 0; i < len; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(len);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(gi)] = is;
    for (std::int64_t i = 0; i < len; ++i) {
      const auto idx = static_cast<std::size_t>(gi * len + i);
      const auto p = static_cast<std::size_t>(param_index(gi, i));
      xhat[idx] = (row[i] - mu) * is;
      out[idx] = gv[p] * xhat[idx] + bv[p];
    }
  }
  const bool track = detail::tracking({&x, &gamma, &beta});
  auto y = detail::make_output(x.shape(), std::move(out), detail::promote({&x, &gamma, &beta}),
                               track);
  if (track) {
    detail::record(name, {x, gamma, beta}, y,
                   [xn = x.node().get(), gn = gamma.node().get(), bn = beta.node().get(),
                    yn = y.node().get(), xhat = std::move(xhat), inv_std = std::move(inv_std),
                    groups, len, param_index] {
                     const auto& g = yn->grad;
                     for (std::int64_t gi = 0; gi < groups; ++gi) {
                       double m1 = 0.0, m2 = 0.0;
                       for (std::int64_t i = 0; i < len; ++i) {
                         const auto idx = static_cast<std::size_t>(gi * len + i);
                         const auto p = static_cast<std::size_t>(param_index(gi, i));
                         const double gh = g[idx] * gn->values[p];
                         m1 += gh;
                         m2 += gh * xhat[idx];
                         if (gn->requires_grad) grad_of(*gn)[p] += g[idx] * xhat[idx];
                         if (bn->requires_grad) grad_of(*bn)[p] += g[idx];
                       }
                       if (!xn->requires_grad) continue;
                       m1 /= static_cast<double>(len);
                       m2 /= static_cast<double>(len);
                       auto& gx = grad_of(*xn);
                       const double is = inv_std[static_cast<std::size_t>(gi)];
                       for (std::int64_t i = 0; i < len; ++i) {
                         const auto idx = static_cast<std::size_t>(gi * len + i);
                         const auto p = static_cast<std::size_t>(param_index(gi, i));
                         gx[idx] += is * (g[idx] * gn->values[p] - m1 - xhat[idx] * m2);
                       }
                     }
                   });
  }
  return y;
}

}  // namespace

DiffArray normalize_features(const DiffArray& x, const DiffArray& gamma, const DiffArray& beta,
                             double eps) {
  if (x.rank() != 4) throw DimensionError("normalize_features expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t c = x.dim(1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("normalize_features: affine parameters must have " + std::to_string(c) +
                         " entries");
  }
  const std::int64_t hw = x.dim(2) * x.dim(3);
  return standardize("normalize_features", x, gamma, beta, eps, x.dim(0) * c, hw,
                     [c](std::int64_t gi, std::int64_t) { return gi % c; });
}

DiffArray layer_norm(const DiffArray& x, const DiffArray& gamma, const DiffArray& beta, double eps) {
  if (x.rank() != 2) throw DimensionError("layer_norm expects [N,D], got " + shape_str(x.shape()));
  const std::int64_t d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(d) + " entries");
  }
  return standardize("layer_norm", x, gamma, beta, eps, x.dim(0), d,
                     [](std::int64_t, std::int64_t i) { return i; });
}

// ---------------------------------------------------------------------------
// Sequence models

DiffArray embedding(const DiffArray& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) throw DimensionError("embedding table must be [V,D]");
  const std::int64_t v = table.dim(0), d = table.dim(1);
  const auto n = static_cast<std::int64_t>(ids.size());
  if (n == 0) throw DimensionError("embedding of an empty id list");
  std::vector<double> out(static_cast<std::size_t>(n * d));
  const auto tv = table.values();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= v) {
      throw RangeError("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(v));
    }
    std::copy_n(tv.data() + id * d, d, out.data() + i * d);
  }
  const bool track = detail::tracking({&table});
  auto y = detail::make_output({n, d}, std::move(out), table.dtype(), track);
  if (track) {
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    detail::record("embedding", {table}, y,
                   [tn = table.node().get(), yn = y.node().get(), idv = std::move(idv), d] {
                     auto& gt = grad_of(*tn);
                     for (std::size_t i = 0; i < idv.size(); ++i)
                       for (std::int64_t j = 0; j < d; ++j)
                         gt[static_cast<std::size_t>(idv[i] * d + j)] +=
                             yn->grad[static_cast<std::size_t>(static_cast<std::int64_t>(i) * d + j)];
                   });
  }
  return y;
}

DiffArray causal_attention(const DiffArray& q, const DiffArray& k, const DiffArray& v,
                           std::int64_t batch, std::int64_t seq, std::int64_t heads) {
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  if (q.rank() != 2 || q.dim(0) != batch * seq || heads < 1 || q.dim(1) % heads != 0) {
    throw DimensionError("causal_attention: projections " + shape_str(q.shape()) +
                         " incompatible with batch " + std::to_string(batch) + ", sequence " +
                         std::to_string(seq) + ", heads " + std::to_string(heads));
  }
  const std::int64_t width = q.dim(1);
  const std::int64_t hd = width / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  std::vector<double> out(qv.size(), 0.0);
  // probs[b][h][i][j], j <= i
  std::vector<double> probs(static_cast<std::size_t>(batch * heads * seq * seq), 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t h = 0; h < heads; ++h) {
      double* pb = probs.data() + ((b * heads + h) * seq) * seq;
      for (std::int64_t i = 0; i < seq; ++i) {
        const double* qi = qv.data() + (b * seq + i) * width + h * hd;
        double* prow = pb + i * seq;
        double mx = -INFINITY;
        for (std::int64_t j = 0; j <= i; ++j) {
          const double* kj = kv.data() + (b * seq + j) * width + h * hd;
          double s = 0.0;
          for (std::int64_t t = 0; t < hd; ++t) s += qi[t] * kj[t];
          prow[j] = s * sc;
          mx = std::max(mx, prow[j]);
        }
        double z = 0.0;
        for (std::int64_t j = 0; j <= i; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          z += prow[j];
        }
        double* oi = out.data() + (b * seq + i) * width + h * hd;
        for (std::int64_t j = 0; j <= i; ++j) {
          prow[j] /= z;
          const double* vj = vv.data() + (b * seq + j) * width + h * hd;
          for (std::int64_t t = 0; t < hd; ++t) oi[t] += prow[j] * vj[t];
        }
      }
    }
  }
  const bool track = detail::tracking({&q, &k, &v});
  auto y = detail::make_output(q.shape(), std::move(out), detail::promote({&q, &k, &v}), track);
  if (track) {
    detail::record(
        "causal_attention", {q, k, v}, y,
        [qn = q.node().get(), kn = k.node().get(), vn = v.node().get(), yn = y.node().get(),
         probs = std::move(probs), batch, seq, heads, width, hd, sc] {
          const auto& g = yn->grad;
          double* gq = qn->requires_grad ? grad_of(*qn).data() : nullptr;
          double* gk = kn->requires_grad ? grad_of(*kn).data() : nullptr;
          double* gv = vn->requires_grad ? grad_of(*vn).data() : nullptr;
          std::vector<double> dp(static_cast<std::size_t>(seq));
          for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t h = 0; h < heads; ++h) {
              const double* pb = probs.data() + ((b * heads + h) * seq) * seq;
              for (std::int64_t i = 0; i < seq; ++i) {
                const double* prow = pb + i * seq;
                const double* gi = g.data() + (b * seq + i) * width + h * hd;
                double dot = 0.0;
                for (std::int64_t j = 0; j <= i; ++j) {
                  const double* vj = vn->values.data() + (b * seq + j) * width + h * hd;
                  double s = 0.0;
                  for (std::int64_t t = 0; t < hd; ++t) s += gi[t] * vj[t];
                  dp[static_cast<std::size_t>(j)] = s;
                  dot += s * prow[j];
                  if (gv != nullptr) {
                    double* gvj = gv + (b * seq + j) * width + h * hd;
                    for (std::int64_t t = 0; t < hd; ++t) gvj[t] += prow[j] * gi[t];
                  }
                }
                const double* qi = qn->values.data() + (b * seq + i) * width + h * hd;
                for (std::int64_t j = 0; j <= i; ++j) {
                  const double ds = prow[j] * (dp[static_cast<std::size_t>(j)] - dot) * sc;
                  if (ds == 0.0) continue;
                  const double* kj = kn->values.data() + (b * seq + j) * width + h * hd;
                  if (gq != nullptr) {
                    double* gqi = gq + (b * seq + i) * width + h * hd;
                    for (std::int64_t t = 0; t < hd; ++t) gqi[t] += ds * kj[t];
                  }
                  if (gk != nullptr) {
                    double* gkj = gk + (b * seq + j) * width + h * hd;
                    for (std::int64_t t = 0; t < hd; ++t) gkj[t] += ds * qi[t];
                  }
                }
              }
            }
          }
        });
  }
  return y;
}

}  // namespace tnas
