#include "vf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vf/parallel.hpp"

namespace vf {

std::int64_t shape_count(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("shape has non-positive dimension " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(
          static_cast<std::size_t>(shape_count(shape_)), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_count(shape_) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("tensor data length does not match shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const double* Tensor::data() const { return data_->data(); }

double* Tensor::data() {
  if (data_.use_count() > 1)
    data_ = std::make_shared<std::vector<double>>(*data_);
  return data_->data();
}

double Tensor::value() const {
  if (size() != 1) throw NotScalar("value() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Tensor Graph::make_leaf(const Tensor& value, bool requires_grad) {
  Tensor t = value;
  t.graph_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = requires_grad;
  Node n;
  n.kind = OpKind::leaf;
  n.shape = t.shape_;
  n.value = t.data_;
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return t;
}

Tensor Graph::variable(const Tensor& value) { return make_leaf(value, true); }
Tensor Graph::constant(const Tensor& value) { return make_leaf(value, false); }

Tensor Graph::add_node(OpKind kind, Shape shape, std::vector<double> values,
                       std::vector<int> inputs,
                       std::function<void(Graph&, int)> bw) {
  Node n;
  n.kind = kind;
  n.shape = shape;
  n.value = std::make_shared<std::vector<double>>(std::move(values));
  n.inputs = std::move(inputs);
  for (int id : n.inputs)
    if (nodes_[static_cast<std::size_t>(id)].needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.backward_fn = std::move(bw);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = n.value;
  t.graph_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = false;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return t;
}

std::vector<double>& Graph::grad_buf(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty())
    g.assign(nodes_[static_cast<std::size_t>(id)].value->size(), 0.0);
  return g;
}

void Graph::backward(const Tensor& loss) {
  if (loss.graph_ != this || loss.node_ < 0)
    throw Error("backward: loss is not bound to this graph");
  if (loss.size() != 1) throw NotScalar("backward: loss must be scalar");
  for (auto& g : grads_) g.clear();
  grad_buf(loss.node_)[0] = 1.0;
  for (int id = loss.node_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || !n.backward_fn) continue;
    if (grads_[static_cast<std::size_t>(id)].empty()) continue;
    n.backward_fn(*this, id);
  }
}

Tensor Graph::grad(const Tensor& t) const {
  if (t.graph_ != this || t.node_ < 0)
    throw Error("grad: tensor is not bound to this graph");
  const auto& g = grads_[static_cast<std::size_t>(t.node_)];
  if (g.empty()) return Tensor(t.shape_);
  return Tensor(t.shape_, g);
}

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace {

Graph& common_graph(std::initializer_list<const Tensor*> ts) {
  Graph* g = nullptr;
  for (const Tensor* t : ts) {
    if (!t->bound()) throw Error("operand is not bound to a graph");
    if (g == nullptr) g = t->graph();
    if (t->graph() != g) throw Error("operands bound to different graphs");
  }
  return *g;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

struct Dims4 {
  int c, x, y, z;
  std::int64_t spatial() const { return static_cast<std::int64_t>(x) * y * z; }
};

Dims4 dims4(const Tensor& t, const char* op) {
  if (t.rank() != 4)
    throw ShapeError(std::string(op) + ": expected [C,X,Y,Z], got " + shape_str(t.shape()));
  const Shape& s = t.shape();
  return {s[0], s[1], s[2], s[3]};
}

}  // namespace

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
  int cin, cout;
  int ix, iy, iz;       // input spatial
  int kx, ky, kz;       // kernel spatial
  int ox, oy, oz;       // output spatial
  int pad, stride;
};

// out[co,ox,oy,oz] = bias[co]
//   + sum_{ci,kx,ky,kz} in[ci, ox*s-p+kx, oy*s-p+ky, oz*s-p+kz] * w[co,ci,kx,ky,kz]
// Terms are always accumulated in (ci,kx,ky,kz) order so the stride-1 line
// kernel below and the generic path produce bitwise identical sums.
void conv_forward(const ConvGeom& g, const double* in, const double* w,
                  const double* b, double* out) {
  const std::int64_t in_sp = static_cast<std::int64_t>(g.ix) * g.iy * g.iz;
  const std::int64_t out_sp = static_cast<std::int64_t>(g.ox) * g.oy * g.oz;
  const std::int64_t kvol = static_cast<std::int64_t>(g.kx) * g.ky * g.kz;

  if (g.stride == 1) {
    parallel_for(g.cout, [&](std::int64_t co) {
      double* out_c = out + co * out_sp;
      std::fill(out_c, out_c + out_sp, b[co]);
      const double* w_c = w + co * g.cin * kvol;
      for (int ci = 0; ci < g.cin; ++ci) {
        const double* in_c = in + static_cast<std::int64_t>(ci) * in_sp;
        const double* w_k = w_c + static_cast<std::int64_t>(ci) * kvol;
        for (int kx = 0; kx < g.kx; ++kx)
          for (int ky = 0; ky < g.ky; ++ky)
            for (int kz = 0; kz < g.kz; ++kz) {
              const double wv = w_k[(kx * g.ky + ky) * g.kz + kz];
              // valid output ranges where the input index stays in bounds
              const int x0 = std::max(0, g.pad - kx);
              const int x1 = std::min(g.ox, g.ix + g.pad - kx);
              const int y0 = std::max(0, g.pad - ky);
              const int y1 = std::min(g.oy, g.iy + g.pad - ky);
              const int z0 = std::max(0, g.pad - kz);
              const int z1 = std::min(g.oz, g.iz + g.pad - kz);
              for (int ox = x0; ox < x1; ++ox) {
                const int sx = ox - g.pad + kx;
                for (int oy = y0; oy < y1; ++oy) {
                  const int sy = oy - g.pad + ky;
                  const double* in_line =
                      in_c + (static_cast<std::int64_t>(sx) * g.iy + sy) * g.iz -
                      g.pad + kz;
                  double* out_line =
                      out_c + (static_cast<std::int64_t>(ox) * g.oy + oy) * g.oz;
                  for (int oz = z0; oz < z1; ++oz)
                    out_line[oz] += wv * in_line[oz];
                }
              }
            }
      }
    });
    return;
  }

  // generic strided path
  parallel_for(g.cout, [&](std::int64_t co) {
    const double* w_c = w + co * g.cin * kvol;
    double* out_c = out + co * out_sp;
    std::int64_t o = 0;
    for (int ox = 0; ox < g.ox; ++ox)
      for (int oy = 0; oy < g.oy; ++oy)
        for (int oz = 0; oz < g.oz; ++oz, ++o) {
          double acc = b[co];
          for (int ci = 0; ci < g.cin; ++ci) {
            const double* in_c = in + static_cast<std::int64_t>(ci) * in_sp;
            const double* w_k = w_c + static_cast<std::int64_t>(ci) * kvol;
            for (int kx = 0; kx < g.kx; ++kx) {
              const int sx = ox * g.stride - g.pad + kx;
              if (sx < 0 || sx >= g.ix) continue;
              for (int ky = 0; ky < g.ky; ++ky) {
                const int sy = oy * g.stride - g.pad + ky;
                if (sy < 0 || sy >= g.iy) continue;
                for (int kz = 0; kz < g.kz; ++kz) {
                  const int sz = oz * g.stride - g.pad + kz;
                  if (sz < 0 || sz >= g.iz) continue;
                  acc += in_c[(static_cast<std::int64_t>(sx) * g.iy + sy) * g.iz + sz] *
                         w_k[(kx * g.ky + ky) * g.kz + kz];
                }
              }
            }
          }
          out_c[o] = acc;
        }
  });
}

// dIn[ci,sx,sy,sz] += sum_{co,k} gout[co, ...] * w[co,ci,k]; terms in
// (co,kx,ky,kz) order per element.
void conv_backward_input(const ConvGeom& g, const double* gout, const double* w,
                         double* gin) {
  const std::int64_t in_sp = static_cast<std::int64_t>(g.ix) * g.iy * g.iz;
  const std::int64_t out_sp = static_cast<std::int64_t>(g.ox) * g.oy * g.oz;
  const std::int64_t kvol = static_cast<std::int64_t>(g.kx) * g.ky * g.kz;

  if (g.stride == 1) {
    parallel_for(g.cin, [&](std::int64_t ci) {
      double* gin_c = gin + ci * in_sp;
      for (int co = 0; co < g.cout; ++co) {
        const double* gout_c = gout + static_cast<std::int64_t>(co) * out_sp;
        const double* w_k = w + (static_cast<std::int64_t>(co) * g.cin + ci) * kvol;
        for (int kx = 0; kx < g.kx; ++kx)
          for (int ky = 0; ky < g.ky; ++ky)
            for (int kz = 0; kz < g.kz; ++kz) {
              const double wv = w_k[(kx * g.ky + ky) * g.kz + kz];
              // input element (sx,sy,sz) receives from output (sx+p-kx, ...)
              const int x0 = std::max(0, kx - g.pad);
              const int x1 = std::min(g.ix, g.ox + kx - g.pad);
              const int y0 = std::max(0, ky - g.pad);
              const int y1 = std::min(g.iy, g.oy + ky - g.pad);
              const int z0 = std::max(0, kz - g.pad);
              const int z1 = std::min(g.iz, g.oz + kz - g.pad);
              for (int sx = x0; sx < x1; ++sx) {
                const int ox = sx + g.pad - kx;
                for (int sy = y0; sy < y1; ++sy) {
                  const int oy = sy + g.pad - ky;
                  const double* gout_line =
                      gout_c + (static_cast<std::int64_t>(ox) * g.oy + oy) * g.oz +
                      g.pad - kz;
                  double* gin_line =
                      gin_c + (static_cast<std::int64_t>(sx) * g.iy + sy) * g.iz;
                  for (int sz = z0; sz < z1; ++sz)
                    gin_line[sz] += wv * gout_line[sz];
                }
              }
            }
      }
    });
    return;
  }

  parallel_for(g.cin, [&](std::int64_t ci) {
    double* gin_c = gin + ci * in_sp;
    std::int64_t idx = 0;
    for (int sx = 0; sx < g.ix; ++sx)
      for (int sy = 0; sy < g.iy; ++sy)
        for (int sz = 0; sz < g.iz; ++sz, ++idx) {
          double acc = 0.0;
          for (int co = 0; co < g.cout; ++co) {
            const double* gout_c = gout + static_cast<std::int64_t>(co) * out_sp;
            const double* w_k =
                w + (static_cast<std::int64_t>(co) * g.cin + ci) * kvol;
            for (int kx = 0; kx < g.kx; ++kx) {
              const int nx = sx + g.pad - kx;
              if (nx < 0 || nx % g.stride) continue;
              const int ox = nx / g.stride;
              if (ox >= g.ox) continue;
              for (int ky = 0; ky < g.ky; ++ky) {
                const int ny = sy + g.pad - ky;
                if (ny < 0 || ny % g.stride) continue;
                const int oy = ny / g.stride;
                if (oy >= g.oy) continue;
                for (int kz = 0; kz < g.kz; ++kz) {
                  const int nz = sz + g.pad - kz;
                  if (nz < 0 || nz % g.stride) continue;
                  const int oz = nz / g.stride;
                  if (oz >= g.oz) continue;
                  acc += gout_c[(static_cast<std::int64_t>(ox) * g.oy + oy) * g.oz + oz] *
                         w_k[(kx * g.ky + ky) * g.kz + kz];
                }
              }
            }
          }
          gin_c[idx] += acc;
        }
  });
}

// dW[co,ci,k] += sum_out gout[co,out] * in[ci, src(out,k)]; (ox,oy,oz) order.
void conv_backward_kernel(const ConvGeom& g, const double* gout, const double* in,
                          double* gw, double* gb) {
  const std::int64_t in_sp = static_cast<std::int64_t>(g.ix) * g.iy * g.iz;
  const std::int64_t out_sp = static_cast<std::int64_t>(g.ox) * g.oy * g.oz;
  const std::int64_t kvol = static_cast<std::int64_t>(g.kx) * g.ky * g.kz;

  parallel_for(g.cout, [&](std::int64_t co) {
    const double* gout_c = gout + co * out_sp;
    double acc_b = 0.0;
    for (std::int64_t i = 0; i < out_sp; ++i) acc_b += gout_c[i];
    gb[co] += acc_b;

    double* gw_c = gw + co * g.cin * kvol;
    for (int ci = 0; ci < g.cin; ++ci) {
      const double* in_c = in + static_cast<std::int64_t>(ci) * in_sp;
      double* gw_k = gw_c + static_cast<std::int64_t>(ci) * kvol;
      for (int kx = 0; kx < g.kx; ++kx)
        for (int ky = 0; ky < g.ky; ++ky)
          for (int kz = 0; kz < g.kz; ++kz) {
            double acc = 0.0;
            for (int ox = 0; ox < g.ox; ++ox) {
              const int sx = ox * g.stride - g.pad + kx;
              if (sx < 0 || sx >= g.ix) continue;
              for (int oy = 0; oy < g.oy; ++oy) {
                const int sy = oy * g.stride - g.pad + ky;
                if (sy < 0 || sy >= g.iy) continue;
                const double* gout_line =
                    gout_c + (static_cast<std::int64_t>(ox) * g.oy + oy) * g.oz;
                const double* in_line =
                    in_c + (static_cast<std::int64_t>(sx) * g.iy + sy) * g.iz;
                if (g.stride == 1) {
                  const int z0 = std::max(0, g.pad - kz);
                  const int z1 = std::min(g.oz, g.iz + g.pad - kz);
                  const double* in_shift = in_line - g.pad + kz;
                  for (int oz = z0; oz < z1; ++oz)
                    acc += gout_line[oz] * in_shift[oz];
                } else {
                  for (int oz = 0; oz < g.oz; ++oz) {
                    const int sz = oz * g.stride - g.pad + kz;
                    if (sz < 0 || sz >= g.iz) continue;
                    acc += gout_line[oz] * in_line[sz];
                  }
                }
              }
            }
            gw_k[(kx * g.ky + ky) * g.kz + kz] += acc;
          }
    }
  });
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding, int stride) {
  Graph& g = common_graph({&input, &kernel, &bias});
  const Dims4 in = dims4(input, "conv3d");
  if (kernel.rank() != 5)
    throw ShapeError("conv3d: kernel must be [Cout,Cin,kx,ky,kz], got " +
                     shape_str(kernel.shape()));
  const Shape& ks = kernel.shape();
  if (ks[1] != in.c)
    throw ShapeError("conv3d: kernel Cin " + std::to_string(ks[1]) +
                     " does not match input channels " + std::to_string(in.c));
  if (bias.rank() != 1 || bias.shape()[0] != ks[0])
    throw ShapeError("conv3d: bias must be [Cout]");
  if (padding < 0 || stride < 1) throw ShapeError("conv3d: bad padding/stride");

  ConvGeom geom;
  geom.cin = in.c;
  geom.cout = ks[0];
  geom.ix = in.x; geom.iy = in.y; geom.iz = in.z;
  geom.kx = ks[2]; geom.ky = ks[3]; geom.kz = ks[4];
  geom.pad = padding;
  geom.stride = stride;
  geom.ox = (in.x + 2 * padding - geom.kx) / stride + 1;
  geom.oy = (in.y + 2 * padding - geom.ky) / stride + 1;
  geom.oz = (in.z + 2 * padding - geom.kz) / stride + 1;
  if (geom.ox < 1 || geom.oy < 1 || geom.oz < 1)
    throw ShapeError("conv3d: kernel larger than padded input");

  std::vector<double> out(static_cast<std::size_t>(geom.cout) * geom.ox * geom.oy * geom.oz);
  conv_forward(geom, input.data(), kernel.data(), bias.data(), out.data());

  const int in_id = input.node(), k_id = kernel.node(), b_id = bias.node();
  auto bw = [geom, in_id, k_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    if (gr.node_needs_grad(in_id))
      conv_backward_input(geom, gout.data(), gr.value_at(k_id).data(),
                          gr.grad_buf(in_id).data());
    const bool need_k = gr.node_needs_grad(k_id);
    const bool need_b = gr.node_needs_grad(b_id);
    if (need_k || need_b) {
      std::vector<double> scratch_w, scratch_b;
      double* gw = nullptr;
      double* gb = nullptr;
      if (need_k) gw = gr.grad_buf(k_id).data();
      else { scratch_w.assign(gr.value_at(k_id).size(), 0.0); gw = scratch_w.data(); }
      if (need_b) gb = gr.grad_buf(b_id).data();
      else { scratch_b.assign(gr.value_at(b_id).size(), 0.0); gb = scratch_b.data(); }
      conv_backward_kernel(geom, gout.data(), gr.value_at(in_id).data(), gw, gb);
    }
  };
  return g.add_node(OpKind::conv3d, {geom.cout, geom.ox, geom.oy, geom.oz},
                    std::move(out), {in_id, k_id, b_id}, std::move(bw));
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

Tensor maxpool3d(const Tensor& input) {
  Graph& g = common_graph({&input});
  const Dims4 in = dims4(input, "maxpool3d");
  if (in.x % 2 || in.y % 2 || in.z % 2)
    throw ShapeError("maxpool3d: spatial dims must be even, got " +
                     shape_str(input.shape()));
  const int ox = in.x / 2, oy = in.y / 2, oz = in.z / 2;
  const std::int64_t out_sp = static_cast<std::int64_t>(ox) * oy * oz;
  const std::int64_t in_sp = in.spatial();
  std::vector<double> out(static_cast<std::size_t>(in.c) * out_sp);
  std::vector<std::int64_t> argmax(out.size());
  const double* src = input.data();

  for (int c = 0; c < in.c; ++c) {
    const double* in_c = src + static_cast<std::int64_t>(c) * in_sp;
    std::int64_t o = static_cast<std::int64_t>(c) * out_sp;
    for (int x = 0; x < ox; ++x)
      for (int y = 0; y < oy; ++y)
        for (int z = 0; z < oz; ++z, ++o) {
          const std::int64_t first =
              (static_cast<std::int64_t>(2 * x) * in.y + 2 * y) * in.z + 2 * z;
          double best = in_c[first];
          std::int64_t best_idx = first;
          // scan in increasing linear index order; strict > keeps the first,
          // and seeding with the first element keeps NaN windows routable
          for (int dx = 0; dx < 2; ++dx)
            for (int dy = 0; dy < 2; ++dy)
              for (int dz = 0; dz < 2; ++dz) {
                const std::int64_t idx =
                    (static_cast<std::int64_t>(2 * x + dx) * in.y + (2 * y + dy)) *
                        in.z + (2 * z + dz);
                if (in_c[idx] > best) {
                  best = in_c[idx];
                  best_idx = idx;
                }
              }
          out[static_cast<std::size_t>(o)] = best;
          argmax[static_cast<std::size_t>(o)] =
              static_cast<std::int64_t>(c) * in_sp + best_idx;
        }
  }

  const int in_id = input.node();
  auto bw = [argmax = std::move(argmax), in_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    if (!gr.node_needs_grad(in_id)) return;
    std::vector<double>& gin = gr.grad_buf(in_id);
    for (std::size_t i = 0; i < argmax.size(); ++i)
      gin[static_cast<std::size_t>(argmax[i])] += gout[i];
  };
  return g.add_node(OpKind::maxpool3d, {in.c, ox, oy, oz}, std::move(out),
                    {in_id}, std::move(bw));
}

Tensor upsample_nn(const Tensor& input, int factor) {
  Graph& g = common_graph({&input});
  const Dims4 in = dims4(input, "upsample_nn");
  if (factor < 1) throw ShapeError("upsample_nn: factor must be >= 1");
  const int ox = in.x * factor, oy = in.y * factor, oz = in.z * factor;
  const std::int64_t in_sp = in.spatial();
  const std::int64_t out_sp = static_cast<std::int64_t>(ox) * oy * oz;
  std::vector<double> out(static_cast<std::size_t>(in.c) * out_sp);
  const double* src = input.data();
  for (int c = 0; c < in.c; ++c) {
    const double* in_c = src + static_cast<std::int64_t>(c) * in_sp;
    double* out_c = out.data() + static_cast<std::int64_t>(c) * out_sp;
    std::int64_t o = 0;
    for (int x = 0; x < ox; ++x)
      for (int y = 0; y < oy; ++y)
        for (int z = 0; z < oz; ++z, ++o)
          out_c[o] = in_c[(static_cast<std::int64_t>(x / factor) * in.y +
                           y / factor) * in.z + z / factor];
  }

  const int in_id = input.node();
  auto bw = [in, factor, ox, oy, oz, in_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(in_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    std::vector<double>& gin = gr.grad_buf(in_id);
    const std::int64_t in_sp = in.spatial();
    const std::int64_t out_sp = static_cast<std::int64_t>(ox) * oy * oz;
    for (int c = 0; c < in.c; ++c) {
      const double* gout_c = gout.data() + static_cast<std::int64_t>(c) * out_sp;
      double* gin_c = gin.data() + static_cast<std::int64_t>(c) * in_sp;
      std::int64_t i = 0;
      for (int x = 0; x < in.x; ++x)
        for (int y = 0; y < in.y; ++y)
          for (int z = 0; z < in.z; ++z, ++i) {
            double acc = 0.0;
            for (int dx = 0; dx < factor; ++dx)
              for (int dy = 0; dy < factor; ++dy)
                for (int dz = 0; dz < factor; ++dz)
                  acc += gout_c[(static_cast<std::int64_t>(x * factor + dx) * oy +
                                 (y * factor + dy)) * oz + (z * factor + dz)];
            gin_c[i] += acc;
          }
    }
  };
  return g.add_node(OpKind::upsample_nn, {in.c, ox, oy, oz}, std::move(out),
                    {in_id}, std::move(bw));
}

// ---------------------------------------------------------------------------
// normalization / activations
// ---------------------------------------------------------------------------

Tensor instance_norm(const Tensor& input, const Tensor& gamma,
                     const Tensor& beta, double eps) {
  Graph& g = common_graph({&input, &gamma, &beta});
  const Dims4 in = dims4(input, "instance_norm");
  if (gamma.rank() != 1 || gamma.shape()[0] != in.c ||
      beta.rank() != 1 || beta.shape()[0] != in.c)
    throw ShapeError("instance_norm: gamma/beta must be [C]");
  const std::int64_t sp = in.spatial();
  if (sp < 2) throw DegenerateInstance("instance_norm: spatial size must be >= 2");

  std::vector<double> out(static_cast<std::size_t>(in.c) * sp);
  std::vector<double> mean(static_cast<std::size_t>(in.c));
  std::vector<double> inv_std(static_cast<std::size_t>(in.c));
  const double* src = input.data();
  const double* gam = gamma.data();
  const double* bet = beta.data();
  for (int c = 0; c < in.c; ++c) {
    const double* in_c = src + static_cast<std::int64_t>(c) * sp;
    double mu = 0.0;
    for (std::int64_t i = 0; i < sp; ++i) mu += in_c[i];
    mu /= static_cast<double>(sp);
    double var = 0.0;
    for (std::int64_t i = 0; i < sp; ++i) {
      const double d = in_c[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(sp);  // biased
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[static_cast<std::size_t>(c)] = mu;
    inv_std[static_cast<std::size_t>(c)] = inv;
    double* out_c = out.data() + static_cast<std::int64_t>(c) * sp;
    for (std::int64_t i = 0; i < sp; ++i)
      out_c[i] = gam[c] * ((in_c[i] - mu) * inv) + bet[c];
  }

  const int in_id = input.node(), g_id = gamma.node(), b_id = beta.node();
  auto bw = [in, sp, mean = std::move(mean), inv_std = std::move(inv_std),
             in_id, g_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& x = gr.value_at(in_id);
    const std::vector<double>& gam = gr.value_at(g_id);
    const bool need_in = gr.node_needs_grad(in_id);
    const bool need_g = gr.node_needs_grad(g_id);
    const bool need_b = gr.node_needs_grad(b_id);
    for (int c = 0; c < in.c; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * static_cast<std::size_t>(sp);
      const double mu = mean[static_cast<std::size_t>(c)];
      const double inv = inv_std[static_cast<std::size_t>(c)];
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::int64_t i = 0; i < sp; ++i) {
        const double xh = (x[base + static_cast<std::size_t>(i)] - mu) * inv;
        const double gv = gout[base + static_cast<std::size_t>(i)];
        sum_g += gv;
        sum_gx += gv * xh;
      }
      if (need_b) gr.grad_buf(b_id)[static_cast<std::size_t>(c)] += sum_g;
      if (need_g) gr.grad_buf(g_id)[static_cast<std::size_t>(c)] += sum_gx;
      if (need_in) {
        std::vector<double>& gin = gr.grad_buf(in_id);
        const double n = static_cast<double>(sp);
        const double k = gam[static_cast<std::size_t>(c)] * inv;
        for (std::int64_t i = 0; i < sp; ++i) {
          const double xh = (x[base + static_cast<std::size_t>(i)] - mu) * inv;
          gin[base + static_cast<std::size_t>(i)] +=
              k * (gout[base + static_cast<std::size_t>(i)] - sum_g / n - xh * sum_gx / n);
        }
      }
    }
  };
  return g.add_node(OpKind::instance_norm, input.shape(), std::move(out),
                    {in_id, g_id, b_id}, std::move(bw));
}

Tensor relu(const Tensor& x) {
  Graph& g = common_graph({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  const int x_id = x.node();
  auto bw = [x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& xv = gr.value_at(x_id);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i)
      if (xv[i] > 0.0) gin[i] += gout[i];
  };
  return g.add_node(OpKind::relu, x.shape(), std::move(out), {x_id}, std::move(bw));
}

Tensor prelu(const Tensor& x, const Tensor& a) {
  Graph& g = common_graph({&x, &a});
  if (x.rank() < 1) throw ShapeError("prelu: input must have rank >= 1");
  const int channels = x.shape()[0];
  if (a.rank() != 1 || a.shape()[0] != channels)
    throw ShapeError("prelu: slope must be [C] with C = input channel dim");
  const std::int64_t sp = x.size() / channels;
  std::vector<double> out(x.values());
  const double* av = a.data();
  for (int c = 0; c < channels; ++c) {
    double* out_c = out.data() + static_cast<std::int64_t>(c) * sp;
    for (std::int64_t i = 0; i < sp; ++i)
      if (out_c[i] < 0.0) out_c[i] *= av[c];
  }
  const int x_id = x.node(), a_id = a.node();
  auto bw = [channels, sp, x_id, a_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& xv = gr.value_at(x_id);
    const std::vector<double>& av = gr.value_at(a_id);
    const bool need_x = gr.node_needs_grad(x_id);
    const bool need_a = gr.node_needs_grad(a_id);
    for (int c = 0; c < channels; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * static_cast<std::size_t>(sp);
      double acc_a = 0.0;
      for (std::int64_t i = 0; i < sp; ++i) {
        const std::size_t idx = base + static_cast<std::size_t>(i);
        if (xv[idx] >= 0.0) {
          if (need_x) gr.grad_buf(x_id)[idx] += gout[idx];
        } else {
          if (need_x) gr.grad_buf(x_id)[idx] += av[static_cast<std::size_t>(c)] * gout[idx];
          acc_a += xv[idx] * gout[idx];
        }
      }
      if (need_a) gr.grad_buf(a_id)[static_cast<std::size_t>(c)] += acc_a;
    }
  };
  return g.add_node(OpKind::prelu, x.shape(), std::move(out), {x_id, a_id},
                    std::move(bw));
}

Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& stream) {
  Graph& g = common_graph({&x});
  if (rate < 0.0 || rate >= 1.0)
    throw InvalidRate("dropout: rate must be in [0,1)");
  if (mode == Mode::eval || rate == 0.0) {
    // identity in inference; still recorded so gradients pass through
    std::vector<double> out(x.values());
    const int x_id = x.node();
    auto bw = [x_id](Graph& gr, int self) {
      if (!gr.node_needs_grad(x_id)) return;
      const std::vector<double>& gout = gr.grad_buf(self);
      std::vector<double>& gin = gr.grad_buf(x_id);
      for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
    };
    return g.add_node(OpKind::dropout, x.shape(), std::move(out), {x_id}, std::move(bw));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  for (double& m : mask) m = stream.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int x_id = x.node();
  auto bw = [mask = std::move(mask), x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i] * mask[i];
  };
  return g.add_node(OpKind::dropout, x.shape(), std::move(out), {x_id}, std::move(bw));
}

// ---------------------------------------------------------------------------
// elementwise / reductions
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph({&a, &b});
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const double* bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int a_id = a.node(), b_id = b.node();
  auto bw = [a_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    if (gr.node_needs_grad(a_id)) {
      std::vector<double>& ga = gr.grad_buf(a_id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (gr.node_needs_grad(b_id)) {
      std::vector<double>& gb = gr.grad_buf(b_id);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
    }
  };
  return g.add_node(OpKind::add, a.shape(), std::move(out), {a_id, b_id}, std::move(bw));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph({&a, &b});
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const double* bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int a_id = a.node(), b_id = b.node();
  auto bw = [a_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    if (gr.node_needs_grad(a_id)) {
      std::vector<double>& ga = gr.grad_buf(a_id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (gr.node_needs_grad(b_id)) {
      std::vector<double>& gb = gr.grad_buf(b_id);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
    }
  };
  return g.add_node(OpKind::sub, a.shape(), std::move(out), {a_id, b_id}, std::move(bw));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph({&a, &b});
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const double* bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int a_id = a.node(), b_id = b.node();
  auto bw = [a_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& av = gr.value_at(a_id);
    const std::vector<double>& bv2 = gr.value_at(b_id);
    if (gr.node_needs_grad(a_id)) {
      std::vector<double>& ga = gr.grad_buf(a_id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * bv2[i];
    }
    if (gr.node_needs_grad(b_id)) {
      std::vector<double>& gb = gr.grad_buf(b_id);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * av[i];
    }
  };
  return g.add_node(OpKind::mul, a.shape(), std::move(out), {a_id, b_id}, std::move(bw));
}

Tensor div(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph({&a, &b});
  require_same_shape(a, b, "div");
  std::vector<double> out(a.values());
  const double* bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  const int a_id = a.node(), b_id = b.node();
  auto bw = [a_id, b_id](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& av = gr.value_at(a_id);
    const std::vector<double>& bv2 = gr.value_at(b_id);
    if (gr.node_needs_grad(a_id)) {
      std::vector<double>& ga = gr.grad_buf(a_id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] / bv2[i];
    }
    if (gr.node_needs_grad(b_id)) {
      std::vector<double>& gb = gr.grad_buf(b_id);
      for (std::size_t i = 0; i < gout.size(); ++i)
        gb[i] -= gout[i] * av[i] / (bv2[i] * bv2[i]);
    }
  };
  return g.add_node(OpKind::div, a.shape(), std::move(out), {a_id, b_id}, std::move(bw));
}

Tensor scale(const Tensor& x, double c) {
  Graph& g = common_graph({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v *= c;
  const int x_id = x.node();
  auto bw = [c, x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += c * gout[i];
  };
  return g.add_node(OpKind::scale, x.shape(), std::move(out), {x_id}, std::move(bw));
}

Tensor add_scalar(const Tensor& x, double c) {
  Graph& g = common_graph({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v += c;
  const int x_id = x.node();
  auto bw = [x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
  };
  return g.add_node(OpKind::add_scalar, x.shape(), std::move(out), {x_id}, std::move(bw));
}

Tensor abs(const Tensor& x) {
  Graph& g = common_graph({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = std::fabs(v);
  const int x_id = x.node();
  // subgradient 0 at x == 0
  auto bw = [x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& xv = gr.value_at(x_id);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i) {
      if (xv[i] > 0.0) gin[i] += gout[i];
      else if (xv[i] < 0.0) gin[i] -= gout[i];
    }
  };
  return g.add_node(OpKind::abs, x.shape(), std::move(out), {x_id}, std::move(bw));
}

Tensor tanh(const Tensor& x) {
  Graph& g = common_graph({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = std::tanh(v);
  const int x_id = x.node();
  auto bw = [x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const std::vector<double>& gout = gr.grad_buf(self);
    const std::vector<double>& y = gr.value_at(self);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (std::size_t i = 0; i < gout.size(); ++i)
      gin[i] += gout[i] * (1.0 - y[i] * y[i]);
  };
  return g.add_node(OpKind::tanh_op, x.shape(), std::move(out), {x_id}, std::move(bw));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Graph& g = common_graph({&a, &b});
  const Dims4 da = dims4(a, "concat_channels");
  const Dims4 db = dims4(b, "concat_channels");
  if (da.x != db.x || da.y != db.y || da.z != db.z)
    throw ShapeError("concat_channels: spatial dims differ");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(a.size() + b.size()));
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const int a_id = a.node(), b_id = b.node();
  const std::size_t a_len = static_cast<std::size_t>(a.size());
  auto bw = [a_id, b_id, a_len](Graph& gr, int self) {
    const std::vector<double>& gout = gr.grad_buf(self);
    if (gr.node_needs_grad(a_id)) {
      std::vector<double>& ga = gr.grad_buf(a_id);
      for (std::size_t i = 0; i < a_len; ++i) ga[i] += gout[i];
    }
    if (gr.node_needs_grad(b_id)) {
      std::vector<double>& gb = gr.grad_buf(b_id);
      for (std::size_t i = a_len; i < gout.size(); ++i) gb[i - a_len] += gout[i];
    }
  };
  return g.add_node(OpKind::concat_channels, {da.c + db.c, da.x, da.y, da.z},
                    std::move(out), {a_id, b_id}, std::move(bw));
}

Tensor mean_all(const Tensor& x) {
  Graph& g = common_graph({&x});
  double acc = 0.0;
  const double* xv = x.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) acc += xv[i];
  const int x_id = x.node();
  auto bw = [n, x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const double gs = gr.grad_buf(self)[0] / static_cast<double>(n);
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (auto& v : gin) v += gs;
  };
  return g.add_node(OpKind::mean_all, {1}, {acc / static_cast<double>(n)},
                    {x_id}, std::move(bw));
}

Tensor sum_all(const Tensor& x) {
  Graph& g = common_graph({&x});
  double acc = 0.0;
  const double* xv = x.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) acc += xv[i];
  const int x_id = x.node();
  auto bw = [x_id](Graph& gr, int self) {
    if (!gr.node_needs_grad(x_id)) return;
    const double gs = gr.grad_buf(self)[0];
    std::vector<double>& gin = gr.grad_buf(x_id);
    for (auto& v : gin) v += gs;
  };
  return g.add_node(OpKind::sum_all, {1}, {acc}, {x_id}, std::move(bw));
}

}  // namespace vf
