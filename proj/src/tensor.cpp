#include "gdance/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace gdance {

namespace {

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void validate_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("empty shape (scalars are shape [1])");
  for (int d : shape)
    if (d < 1) throw ShapeError("non-positive dimension in " + shape_str(shape));
}

void check_nan(const char* op, const std::vector<double>& vals) {
  for (double v : vals)
    if (std::isnan(v)) throw NumericError(std::string(op) + " produced NaN");
}

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

thread_local bool g_grad_enabled = true;

// Builds the output tensor and attaches a tape node when any parent is
// tracked. `bw` sees the finished output (its grad seeded by the consumer).
Tensor make_out(const char* op, std::vector<int> shape, std::vector<double> vals,
                std::vector<Tensor> parents, std::function<void(const Tensor&)> bw) {
  check_nan(op, vals);
  Tensor out;
  out.shape = std::move(shape);
  out.data = std::make_shared<std::vector<double>>(std::move(vals));
  bool track = false;
  for (const Tensor& p : parents)
    if (want_grad(p)) track = true;
  if (track) {
    out.requires_grad = true;
    out.grad = std::make_shared<std::vector<double>>(out.data->size(), 0.0);
    out.node = std::make_shared<TapeNode>();
    out.node->parents = std::move(parents);
    out.node->backward = std::move(bw);
  }
  return out;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool FlopCounter::enabled = false;
std::uint64_t FlopCounter::mults = 0;

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  validate_shape(shape);
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(numel_of(shape), value);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  return t;
}

Tensor Tensor::from(const std::vector<int>& shape, std::vector<double> values,
                    bool requires_grad) {
  validate_shape(shape);
  if (numel_of(shape) != values.size())
    throw ShapeError("from: " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(RngStream& rng, const std::vector<int>& shape, bool requires_grad) {
  validate_shape(shape);
  std::vector<double> vals(numel_of(shape));
  rng.fill_gaussian(vals);
  return from(shape, std::move(vals), requires_grad);
}

int Tensor::size(int axis) const {
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + shape_str(shape));
  return shape[axis];
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape));
  return (*data)[0];
}

Tensor Tensor::detach_copy() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  return t;
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

void Tensor::backward() {
  if (numel() != 1) throw ValueError("backward: output must be scalar, got " + shape_str(shape));
  if (!requires_grad || !node) return;

  // Post-order over tape nodes, iterative to survive deep graphs.
  std::vector<Tensor> order;
  std::unordered_set<TapeNode*> visited;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  visited.insert(node.get());
  stack.emplace_back(*this, 0);
  while (!stack.empty()) {
    Tensor cur = stack.back().first;
    std::size_t idx = stack.back().second;
    if (idx < cur.node->parents.size()) {
      stack.back().second += 1;
      const Tensor& child = cur.node->parents[idx];
      if (child.node && !visited.count(child.node.get())) {
        visited.insert(child.node.get());
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  // Accumulation into tracked parents must not be silenced by an ambient
  // NoGradGuard, so the flag is forced on for the sweep.
  struct FlagRestore {
    bool& flag;
    bool prev;
    ~FlagRestore() { flag = prev; }
  } restore{g_grad_enabled, g_grad_enabled};
  g_grad_enabled = true;

  ensure_grad();
  (*grad)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (it->node->backward) it->node->backward(*it);
}

namespace ops {

namespace {

// Broadcasting plan for elementwise binaries: equal rank with size-1 axes,
// or a {1} scalar on either side.
struct Bcast {
  std::vector<int> out_shape;
  std::vector<std::size_t> a_stride, b_stride, out_extent;
  std::size_t n = 0;
  bool same = false;
};

std::vector<std::size_t> row_major_strides(const std::vector<int>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s[i] = s[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  return s;
}

Bcast plan_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  Bcast p;
  if (a.shape == b.shape) {
    p.out_shape = a.shape;
    p.n = a.numel();
    p.same = true;
    return p;
  }
  std::vector<int> ash = a.shape, bsh = b.shape;
  if (ash.size() != bsh.size()) {
    if (a.numel() == 1 && a.rank() == 1)
      ash.assign(bsh.size(), 1);
    else if (b.numel() == 1 && b.rank() == 1)
      bsh.assign(ash.size(), 1);
    else
      throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a.shape) + " vs " +
                       shape_str(b.shape));
  }
  p.out_shape.resize(ash.size());
  for (std::size_t i = 0; i < ash.size(); ++i) {
    if (ash[i] == bsh[i])
      p.out_shape[i] = ash[i];
    else if (ash[i] == 1)
      p.out_shape[i] = bsh[i];
    else if (bsh[i] == 1)
      p.out_shape[i] = ash[i];
    else
      throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape) + " vs " +
                       shape_str(b.shape));
  }
  auto as = row_major_strides(ash);
  auto bs = row_major_strides(bsh);
  p.a_stride.resize(ash.size());
  p.b_stride.resize(ash.size());
  for (std::size_t i = 0; i < ash.size(); ++i) {
    p.a_stride[i] = (ash[i] == 1 && p.out_shape[i] != 1) ? 0 : as[i];
    p.b_stride[i] = (bsh[i] == 1 && p.out_shape[i] != 1) ? 0 : bs[i];
  }
  p.out_extent.assign(p.out_shape.begin(), p.out_shape.end());
  p.n = numel_of(p.out_shape);
  return p;
}

template <class F, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, F f, DA dfda, DB dfdb) {
  Bcast p = plan_broadcast(op, a, b);
  std::vector<double> out(p.n);
  const double* pa = a.ptr();
  const double* pb = b.ptr();

  if (p.same) {
    for (std::size_t i = 0; i < p.n; ++i) out[i] = f(pa[i], pb[i]);
    return make_out(op, p.out_shape, std::move(out), {a, b}, [=](const Tensor& o) {
      const double* g = o.grad->data();
      Tensor& ta = o.node->parents[0];
      Tensor& tb = o.node->parents[1];
      const double* va = ta.ptr();
      const double* vb = tb.ptr();
      if (want_grad(ta)) {
        ta.ensure_grad();
        double* ga = ta.grad->data();
        for (std::size_t i = 0; i < p.n; ++i) ga[i] += dfda(va[i], vb[i]) * g[i];
      }
      if (want_grad(tb)) {
        tb.ensure_grad();
        double* gb = tb.grad->data();
        for (std::size_t i = 0; i < p.n; ++i) gb[i] += dfdb(va[i], vb[i]) * g[i];
      }
    });
  }

  const std::size_t rank = p.out_shape.size();
  std::vector<std::size_t> coord(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < p.n; ++i) {
    out[i] = f(pa[ia], pb[ib]);
    for (std::size_t ax = rank; ax-- > 0;) {
      coord[ax]++;
      ia += p.a_stride[ax];
      ib += p.b_stride[ax];
      if (coord[ax] < p.out_extent[ax]) break;
      ia -= p.a_stride[ax] * p.out_extent[ax];
      ib -= p.b_stride[ax] * p.out_extent[ax];
      coord[ax] = 0;
    }
  }
  return make_out(op, p.out_shape, std::move(out), {a, b}, [=](const Tensor& o) {
    const double* g = o.grad->data();
    Tensor& ta = o.node->parents[0];
    Tensor& tb = o.node->parents[1];
    const double* va = ta.ptr();
    const double* vb = tb.ptr();
    bool ga_on = want_grad(ta);
    bool gb_on = want_grad(tb);
    if (ga_on) ta.ensure_grad();
    if (gb_on) tb.ensure_grad();
    double* ga = ga_on ? ta.grad->data() : nullptr;
    double* gb = gb_on ? tb.grad->data() : nullptr;
    const std::size_t rk = p.out_shape.size();
    std::vector<std::size_t> c(rk, 0);
    std::size_t ja = 0, jb = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
      if (ga_on) ga[ja] += dfda(va[ja], vb[jb]) * g[i];
      if (gb_on) gb[jb] += dfdb(va[ja], vb[jb]) * g[i];
      for (std::size_t ax = rk; ax-- > 0;) {
        c[ax]++;
        ja += p.a_stride[ax];
        jb += p.b_stride[ax];
        if (c[ax] < p.out_extent[ax]) break;
        ja -= p.a_stride[ax] * p.out_extent[ax];
        jb -= p.b_stride[ax] * p.out_extent[ax];
        c[ax] = 0;
      }
    }
  });
}

template <class F, class DF>
Tensor unary_op(const char* op, const Tensor& a, F f, DF df) {
  std::vector<double> out(a.numel());
  const double* pa = a.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i]);
  return make_out(op, a.shape, std::move(out), {a}, [=](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double* g = o.grad->data();
    const double* va = ta.ptr();
    const double* vo = o.ptr();
    double* ga = ta.grad->data();
    for (std::size_t i = 0; i < o.numel(); ++i) ga[i] += df(va[i], vo[i]) * g[i];
  });
}

void require_rank(const char* op, const Tensor& t, int r) {
  if (t.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t.shape));
}

// C[m,n] += A[m,k] @ B[k,n], raw buffers.
void matmul_accum(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += G[m,n] @ B[k,n]^T
void matmul_grad_a(const double* g, const double* b, double* da, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* grow = g + static_cast<std::size_t>(i) * n;
    double* darow = da + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
      darow[p] += acc;
    }
  }
}

// dB[k,n] += A[m,k]^T @ G[m,n]
void matmul_grad_b(const double* a, const double* g, double* db, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* grow = g + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw ShapeError("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  FlopCounter::add(static_cast<std::uint64_t>(m) * k * n);
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  matmul_accum(a.ptr(), b.ptr(), out.data(), m, k, n);
  return make_out("matmul", {m, n}, std::move(out), {a, b}, [=](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    Tensor& tb = o.node->parents[1];
    const double* g = o.grad->data();
    if (want_grad(ta)) {
      ta.ensure_grad();
      matmul_grad_a(g, tb.ptr(), ta.grad->data(), m, k, n);
    }
    if (want_grad(tb)) {
      tb.ensure_grad();
      matmul_grad_b(ta.ptr(), g, tb.grad->data(), m, k, n);
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const int B = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2];
  if (b.shape[0] != B || b.shape[1] != k)
    throw ShapeError("bmm: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  FlopCounter::add(static_cast<std::uint64_t>(B) * m * k * n);
  std::vector<double> out(static_cast<std::size_t>(B) * m * n, 0.0);
  for (int t = 0; t < B; ++t)
    matmul_accum(a.ptr() + static_cast<std::size_t>(t) * m * k,
                 b.ptr() + static_cast<std::size_t>(t) * k * n,
                 out.data() + static_cast<std::size_t>(t) * m * n, m, k, n);
  return make_out("bmm", {B, m, n}, std::move(out), {a, b}, [=](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    Tensor& tb = o.node->parents[1];
    const double* g = o.grad->data();
    if (want_grad(ta)) {
      ta.ensure_grad();
      for (int t = 0; t < B; ++t)
        matmul_grad_a(g + static_cast<std::size_t>(t) * m * n,
                      tb.ptr() + static_cast<std::size_t>(t) * k * n,
                      ta.grad->data() + static_cast<std::size_t>(t) * m * k, m, k, n);
    }
    if (want_grad(tb)) {
      tb.ensure_grad();
      for (int t = 0; t < B; ++t)
        matmul_grad_b(ta.ptr() + static_cast<std::size_t>(t) * m * k,
                      g + static_cast<std::size_t>(t) * m * n,
                      tb.grad->data() + static_cast<std::size_t>(t) * k * n, m, k, n);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const int m = a.shape[0], n = a.shape[1];
  std::vector<double> out(a.numel());
  const double* pa = a.ptr();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = pa[static_cast<std::size_t>(i) * n + j];
  return make_out("transpose", {n, m}, std::move(out), {a}, [=](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double* g = o.grad->data();
    double* ga = ta.grad->data();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& a, const std::vector<int>& shape) {
  validate_shape(shape);
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape) + " -> " + shape_str(shape));
  std::vector<double> out(*a.data);
  return make_out("reshape", shape, std::move(out), {a}, [](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double* g = o.grad->data();
    double* ga = ta.grad->data();
    for (std::size_t i = 0; i < o.numel(); ++i) ga[i] += g[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts[0];
  if (axis < 0 || axis >= first.rank()) throw ShapeError("concat: axis out of range");
  std::vector<int> out_shape = first.shape;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.rank())
      throw ShapeError("concat: rank mismatch " + shape_str(p.shape) + " vs " +
                       shape_str(first.shape));
    for (int ax = 0; ax < first.rank(); ++ax)
      if (ax != axis && p.shape[ax] != first.shape[ax])
        throw ShapeError("concat: " + shape_str(p.shape) + " vs " + shape_str(first.shape));
    total += p.shape[axis];
  }
  out_shape[axis] = total;

  std::size_t outer = 1, inner = 1;
  for (int ax = 0; ax < axis; ++ax) outer *= static_cast<std::size_t>(first.shape[ax]);
  for (int ax = axis + 1; ax < first.rank(); ++ax)
    inner *= static_cast<std::size_t>(first.shape[ax]);

  std::vector<double> out(numel_of(out_shape));
  const std::size_t out_row = static_cast<std::size_t>(total) * inner;
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t blk = static_cast<std::size_t>(p.shape[axis]) * inner;
    const double* pp = p.ptr();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(pp + o * blk, pp + (o + 1) * blk, out.begin() + o * out_row + off);
    off += blk;
  }

  std::vector<Tensor> parents = parts;
  return make_out("concat", out_shape, std::move(out), std::move(parents),
                  [outer, inner, out_row, offsets](const Tensor& o) {
                    const double* g = o.grad->data();
                    for (std::size_t pi = 0; pi < o.node->parents.size(); ++pi) {
                      Tensor& tp = o.node->parents[pi];
                      if (!want_grad(tp)) continue;
                      tp.ensure_grad();
                      double* gp = tp.grad->data();
                      const std::size_t blk = tp.numel() / outer;
                      for (std::size_t ou = 0; ou < outer; ++ou) {
                        const double* src = g + ou * out_row + offsets[pi];
                        double* dst = gp + ou * blk;
                        for (std::size_t i = 0; i < blk; ++i) dst[i] += src[i];
                      }
                    }
                    (void)inner;
                  });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  if (axis < 0 || axis >= a.rank()) throw ShapeError("slice: axis out of range");
  if (start < 0 || len < 1 || start + len > a.shape[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") outside " + shape_str(a.shape));
  std::vector<int> out_shape = a.shape;
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (int ax = 0; ax < axis; ++ax) outer *= static_cast<std::size_t>(a.shape[ax]);
  for (int ax = axis + 1; ax < a.rank(); ++ax) inner *= static_cast<std::size_t>(a.shape[ax]);
  const std::size_t in_row = static_cast<std::size_t>(a.shape[axis]) * inner;
  const std::size_t out_blk = static_cast<std::size_t>(len) * inner;
  const std::size_t skip = static_cast<std::size_t>(start) * inner;

  std::vector<double> out(numel_of(out_shape));
  const double* pa = a.ptr();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(pa + o * in_row + skip, pa + o * in_row + skip + out_blk, out.begin() + o * out_blk);

  return make_out("slice", out_shape, std::move(out), {a},
                  [outer, in_row, out_blk, skip](const Tensor& o) {
                    Tensor& ta = o.node->parents[0];
                    if (!want_grad(ta)) return;
                    ta.ensure_grad();
                    const double* g = o.grad->data();
                    double* ga = ta.grad->data();
                    for (std::size_t ou = 0; ou < outer; ++ou) {
                      double* dst = ga + ou * in_row + skip;
                      const double* src = g + ou * out_blk;
                      for (std::size_t i = 0; i < out_blk; ++i) dst[i] += src[i];
                    }
                  });
}

std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<int>& sizes) {
  int total = 0;
  for (int s : sizes) total += s;
  if (axis < 0 || axis >= a.rank() || total != a.shape[axis])
    throw ShapeError("split: sizes do not cover " + shape_str(a.shape));
  std::vector<Tensor> outs;
  int at = 0;
  for (int s : sizes) {
    outs.push_back(slice(a, axis, at, s));
    at += s;
  }
  return outs;
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor expm1(const Tensor& a) {
  return unary_op(
      "expm1", a, [](double x) { return std::expm1(x); },
      [](double x, double) { return std::exp(x); });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_last(const Tensor& a) {
  const int n = a.shape.back();
  const std::size_t rows = a.numel() / static_cast<std::size_t>(n);
  std::vector<double> out(a.numel());
  const double* pa = a.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = pa + r * n;
    double* y = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, x[j]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw NumericError("softmax: fully masked row " + std::to_string(r));
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < n; ++j) y[j] *= inv;
  }
  return make_out("softmax", a.shape, std::move(out), {a}, [n, rows](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double* g = o.grad->data();
    const double* y = o.ptr();
    double* ga = ta.grad->data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y + r * n;
      const double* gr = g + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += yr[j] * gr[j];
      double* gar = ga + r * n;
      for (int j = 0; j < n; ++j) gar[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  const double* pa = a.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) s += pa[i];
  return make_out("sum", {1}, {s}, {a}, [](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double g = (*o.grad)[0];
    double* ga = ta.grad->data();
    for (std::size_t i = 0; i < ta.numel(); ++i) ga[i] += g;
  });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
  const int n = a.shape.back();
  const std::size_t rows = a.numel() / static_cast<std::size_t>(n);
  std::vector<int> out_shape = a.shape;
  out_shape.back() = 1;
  std::vector<double> out(rows, 0.0);
  const double* pa = a.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += pa[r * n + j];
    out[r] = s;
  }
  return make_out("sum_last", out_shape, std::move(out), {a}, [n, rows](const Tensor& o) {
    Tensor& ta = o.node->parents[0];
    if (!want_grad(ta)) return;
    ta.ensure_grad();
    const double* g = o.grad->data();
    double* ga = ta.grad->data();
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < n; ++j) ga[r * n + j] += g[r];
  });
}

Tensor mean_last(const Tensor& a) {
  return scale(sum_last(a), 1.0 / static_cast<double>(a.shape.back()));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor mu = mean_last(x);
  Tensor xc = sub(x, mu);
  Tensor var = mean_last(mul(xc, xc));
  Tensor inv = div(Tensor::scalar(1.0), sqrt(add_scalar(var, eps)));
  return add(mul(mul(xc, inv), gamma), beta);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  require_rank("gather_rows", a, 2);
  const int n = a.shape[1];
  for (int idx : indices)
    if (idx < 0 || idx >= a.shape[0])
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " outside " +
                       shape_str(a.shape));
  std::vector<double> out(indices.size() * static_cast<std::size_t>(n));
  const double* pa = a.ptr();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy(pa + static_cast<std::size_t>(indices[r]) * n,
              pa + static_cast<std::size_t>(indices[r] + 1) * n, out.begin() + r * n);
  return make_out("gather_rows", {static_cast<int>(indices.size()), n}, std::move(out), {a},
                  [indices, n](const Tensor& o) {
                    Tensor& ta = o.node->parents[0];
                    if (!want_grad(ta)) return;
                    ta.ensure_grad();
                    const double* g = o.grad->data();
                    double* ga = ta.grad->data();
                    for (std::size_t r = 0; r < indices.size(); ++r)
                      for (int j = 0; j < n; ++j)
                        ga[static_cast<std::size_t>(indices[r]) * n + j] += g[r * n + j];
                  });
}

Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double value) {
  if (mask.size() != a.numel())
    throw ShapeError("masked_fill: mask length " + std::to_string(mask.size()) +
                     " != " + std::to_string(a.numel()));
  std::vector<double> out(a.numel());
  const double* pa = a.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? value : pa[i];
  // NaN fill values are legal only through make_out's scan; -inf is the
  // intended use and passes.
  Tensor res;
  res.shape = a.shape;
  res.data = std::make_shared<std::vector<double>>(std::move(out));
  if (want_grad(a)) {
    res.requires_grad = true;
    res.grad = std::make_shared<std::vector<double>>(res.data->size(), 0.0);
    res.node = std::make_shared<TapeNode>();
    res.node->parents = {a};
    res.node->backward = [mask](const Tensor& o) {
      Tensor& ta = o.node->parents[0];
      if (!want_grad(ta)) return;
      ta.ensure_grad();
      const double* g = o.grad->data();
      double* ga = ta.grad->data();
      for (std::size_t i = 0; i < o.numel(); ++i)
        if (!mask[i]) ga[i] += g[i];
    };
  }
  return res;
}

Tensor ssm_scan(const Tensor& x, const Tensor& abar, const Tensor& bbar, const Tensor& c) {
  require_rank("ssm_scan", x, 2);
  require_rank("ssm_scan", abar, 2);
  const int L = x.shape[0], d = x.shape[1];
  const int n = abar.shape[1];
  if (abar.shape[0] != d || bbar.shape != abar.shape || c.shape != abar.shape)
    throw ShapeError("ssm_scan: params " + shape_str(abar.shape) + " vs input " +
                     shape_str(x.shape));
  FlopCounter::add(static_cast<std::uint64_t>(L) * d * 3 * n);

  // States kept for the backward pass: H[l, j, :] after step l.
  auto states = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(L) * d * n, 0.0);
  std::vector<double> out(static_cast<std::size_t>(L) * d, 0.0);
  const double* px = x.ptr();
  const double* pa = abar.ptr();
  const double* pb = bbar.ptr();
  const double* pc = c.ptr();
  std::vector<double> h(static_cast<std::size_t>(d) * n, 0.0);
  for (int l = 0; l < L; ++l) {
    for (int j = 0; j < d; ++j) {
      const double xv = px[static_cast<std::size_t>(l) * d + j];
      double* hj = h.data() + static_cast<std::size_t>(j) * n;
      const double* aj = pa + static_cast<std::size_t>(j) * n;
      const double* bj = pb + static_cast<std::size_t>(j) * n;
      const double* cj = pc + static_cast<std::size_t>(j) * n;
      double y = 0.0;
      for (int i = 0; i < n; ++i) {
        hj[i] = aj[i] * hj[i] + bj[i] * xv;
        y += cj[i] * hj[i];
      }
      out[static_cast<std::size_t>(l) * d + j] = y;
      std::copy(hj, hj + n,
                states->data() + (static_cast<std::size_t>(l) * d + j) * n);
    }
  }

  return make_out("ssm_scan", {L, d}, std::move(out), {x, abar, bbar, c},
                  [L, d, n, states](const Tensor& o) {
                    Tensor& tx = o.node->parents[0];
                    Tensor& tab = o.node->parents[1];
                    Tensor& tbb = o.node->parents[2];
                    Tensor& tc = o.node->parents[3];
                    const double* g = o.grad->data();
                    const double* px = tx.ptr();
                    const double* pa = tab.ptr();
                    const double* pb = tbb.ptr();
                    const double* pc = tc.ptr();
                    const double* hs = states->data();
                    bool gx_on = want_grad(tx), ga_on = want_grad(tab);
                    bool gb_on = want_grad(tbb), gc_on = want_grad(tc);
                    if (gx_on) tx.ensure_grad();
                    if (ga_on) tab.ensure_grad();
                    if (gb_on) tbb.ensure_grad();
                    if (gc_on) tc.ensure_grad();
                    std::vector<double> dh(static_cast<std::size_t>(d) * n, 0.0);
                    for (int l = L - 1; l >= 0; --l) {
                      for (int j = 0; j < d; ++j) {
                        const double gy = g[static_cast<std::size_t>(l) * d + j];
                        const double xv = px[static_cast<std::size_t>(l) * d + j];
                        double* dhj = dh.data() + static_cast<std::size_t>(j) * n;
                        const double* hl = hs + (static_cast<std::size_t>(l) * d + j) * n;
                        const double* hprev =
                            l > 0 ? hs + (static_cast<std::size_t>(l - 1) * d + j) * n : nullptr;
                        const double* aj = pa + static_cast<std::size_t>(j) * n;
                        const double* bj = pb + static_cast<std::size_t>(j) * n;
                        const double* cj = pc + static_cast<std::size_t>(j) * n;
                        double dxv = 0.0;
                        for (int i = 0; i < n; ++i) {
                          dhj[i] += cj[i] * gy;
                          if (gc_on) (*tc.grad)[static_cast<std::size_t>(j) * n + i] += gy * hl[i];
                          if (gb_on) (*tbb.grad)[static_cast<std::size_t>(j) * n + i] += dhj[i] * xv;
                          if (ga_on && l > 0)
                            (*tab.grad)[static_cast<std::size_t>(j) * n + i] += dhj[i] * hprev[i];
                          dxv += dhj[i] * bj[i];
                          dhj[i] *= aj[i];
                        }
                        if (gx_on) (*tx.grad)[static_cast<std::size_t>(l) * d + j] += dxv;
                      }
                    }
                  });
}

namespace {

struct WindowSpan {
  int lo, hi;  // inclusive
};

WindowSpan window_span(int l, int L_keys, int window, bool causal) {
  if (window < 0) return {0, causal ? std::min(l, L_keys - 1) : L_keys - 1};
  int lo = std::max(0, l - window);
  int hi = causal ? std::min(l, L_keys - 1) : std::min(L_keys - 1, l + window);
  if (hi < lo) throw NumericError("attention: empty window at row " + std::to_string(l));
  return {lo, hi};
}

}  // namespace

Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, int window,
                          bool causal) {
  require_rank("windowed_attention", q, 2);
  require_rank("windowed_attention", k, 2);
  require_rank("windowed_attention", v, 2);
  const int L = q.shape[0], dk = q.shape[1];
  const int Lk = k.shape[0], dv = v.shape[1];
  if (k.shape[1] != dk || v.shape[0] != Lk)
    throw ShapeError("windowed_attention: q" + shape_str(q.shape) + " k" + shape_str(k.shape) +
                     " v" + shape_str(v.shape));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  // Ragged per-row weights saved for backward.
  auto weights = std::make_shared<std::vector<double>>();
  auto starts = std::make_shared<std::vector<int>>(L);
  auto offsets = std::make_shared<std::vector<std::size_t>>(L + 1, 0);

  std::vector<double> out(static_cast<std::size_t>(L) * dv, 0.0);
  const double* pq = q.ptr();
  const double* pk = k.ptr();
  const double* pv = v.ptr();
  std::uint64_t mults = 0;
  std::vector<double> scores;
  for (int l = 0; l < L; ++l) {
    WindowSpan span = window_span(l, Lk, window, causal);
    const int W = span.hi - span.lo + 1;
    (*starts)[l] = span.lo;
    (*offsets)[l + 1] = (*offsets)[l] + static_cast<std::size_t>(W);
    scores.assign(W, 0.0);
    const double* qr = pq + static_cast<std::size_t>(l) * dk;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < W; ++j) {
      const double* kr = pk + static_cast<std::size_t>(span.lo + j) * dk;
      double s = 0.0;
      for (int t = 0; t < dk; ++t) s += qr[t] * kr[t];
      scores[j] = s * inv_scale;
      mx = std::max(mx, scores[j]);
    }
    double z = 0.0;
    for (int j = 0; j < W; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      z += scores[j];
    }
    const double invz = 1.0 / z;
    double* orow = out.data() + static_cast<std::size_t>(l) * dv;
    for (int j = 0; j < W; ++j) {
      const double a = scores[j] * invz;
      weights->push_back(a);
      const double* vr = pv + static_cast<std::size_t>(span.lo + j) * dv;
      for (int t = 0; t < dv; ++t) orow[t] += a * vr[t];
    }
    mults += static_cast<std::uint64_t>(W) * (dk + dv);
  }
  FlopCounter::add(mults);

  return make_out(
      "windowed_attention", {L, dv}, std::move(out), {q, k, v},
      [L, dk, dv, inv_scale, weights, starts, offsets](const Tensor& o) {
        Tensor& tq = o.node->parents[0];
        Tensor& tk = o.node->parents[1];
        Tensor& tv = o.node->parents[2];
        const double* g = o.grad->data();
        const double* pq = tq.ptr();
        const double* pk = tk.ptr();
        const double* pv = tv.ptr();
        bool gq_on = want_grad(tq), gk_on = want_grad(tk), gv_on = want_grad(tv);
        if (gq_on) tq.ensure_grad();
        if (gk_on) tk.ensure_grad();
        if (gv_on) tv.ensure_grad();
        std::vector<double> da;
        for (int l = 0; l < L; ++l) {
          const std::size_t o0 = (*offsets)[l];
          const int W = static_cast<int>((*offsets)[l + 1] - o0);
          const int lo = (*starts)[l];
          const double* a = weights->data() + o0;
          const double* grow = g + static_cast<std::size_t>(l) * dv;
          da.assign(W, 0.0);
          double dot = 0.0;
          for (int j = 0; j < W; ++j) {
            const double* vr = pv + static_cast<std::size_t>(lo + j) * dv;
            double s = 0.0;
            for (int t = 0; t < dv; ++t) s += grow[t] * vr[t];
            da[j] = s;
            dot += a[j] * s;
            if (gv_on) {
              double* gv = tv.grad->data() + static_cast<std::size_t>(lo + j) * dv;
              for (int t = 0; t < dv; ++t) gv[t] += a[j] * grow[t];
            }
          }
          const double* qr = pq + static_cast<std::size_t>(l) * dk;
          for (int j = 0; j < W; ++j) {
            const double ds = a[j] * (da[j] - dot) * inv_scale;
            const double* kr = pk + static_cast<std::size_t>(lo + j) * dk;
            if (gq_on) {
              double* gq = tq.grad->data() + static_cast<std::size_t>(l) * dk;
              for (int t = 0; t < dk; ++t) gq[t] += ds * kr[t];
            }
            if (gk_on) {
              double* gk = tk.grad->data() + static_cast<std::size_t>(lo + j) * dk;
              for (int t = 0; t < dk; ++t) gk[t] += ds * qr[t];
            }
          }
        }
      });
}

std::vector<double> windowed_attention_weights(const Tensor& q, const Tensor& k, int window,
                                               bool causal) {
  require_rank("windowed_attention", q, 2);
  require_rank("windowed_attention", k, 2);
  const int L = q.shape[0], dk = q.shape[1], Lk = k.shape[0];
  if (k.shape[1] != dk)
    throw ShapeError("windowed_attention_weights: q" + shape_str(q.shape) + " k" +
                     shape_str(k.shape));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> full(static_cast<std::size_t>(L) * Lk, 0.0);
  const double* pq = q.ptr();
  const double* pk = k.ptr();
  std::vector<double> scores;
  for (int l = 0; l < L; ++l) {
    WindowSpan span = window_span(l, Lk, window, causal);
    const int W = span.hi - span.lo + 1;
    scores.assign(W, 0.0);
    const double* qr = pq + static_cast<std::size_t>(l) * dk;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < W; ++j) {
      const double* kr = pk + static_cast<std::size_t>(span.lo + j) * dk;
      double s = 0.0;
      for (int t = 0; t < dk; ++t) s += qr[t] * kr[t];
      scores[j] = s * inv_scale;
      mx = std::max(mx, scores[j]);
    }
    double z = 0.0;
    for (int j = 0; j < W; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      z += scores[j];
    }
    const double invz = 1.0 / z;
    for (int j = 0; j < W; ++j)
      full[static_cast<std::size_t>(l) * Lk + span.lo + j] = scores[j] * invz;
  }
  return full;
}

}  // namespace ops

CheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& input,
                       double tolerance, int max_coords, std::uint64_t probe_seed) {
  if (tolerance <= 0.0) throw ValueError("grad_check: tolerance must be positive");
  CheckReport rep;

  Tensor x = input.detach_copy();
  x.requires_grad = true;
  x.ensure_grad();
  Tensor y = f(x);
  if (y.numel() != 1) throw ValueError("grad_check: function must be scalar-valued");
  y.backward();
  std::vector<double> analytic = *x.grad;

  std::vector<std::size_t> coords;
  const std::size_t n = x.numel();
  if (max_coords <= 0 || static_cast<std::size_t>(max_coords) >= n) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  } else {
    RngStream rng(probe_seed);
    std::unordered_set<std::size_t> used;
    while (coords.size() < static_cast<std::size_t>(max_coords)) {
      std::size_t i = static_cast<std::size_t>(rng.next_u64() % n);
      if (used.insert(i).second) coords.push_back(i);
    }
  }

  const double h = 1e-5;
  Tensor probe = input.detach_copy();
  NoGradGuard ng;
  for (std::size_t i : coords) {
    const double x0 = (*probe.data)[i];
    (*probe.data)[i] = x0 + h;
    const double fp = f(probe).item();
    (*probe.data)[i] = x0 - h;
    const double fm = f(probe).item();
    (*probe.data)[i] = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    if (!std::isfinite(a) || !std::isfinite(numeric)) {
      rep.pass = false;
      rep.max_rel_err = std::numeric_limits<double>::infinity();
      rep.worst_index = static_cast<long>(i);
      rep.note = "non-finite gradient at coordinate " + std::to_string(i);
      return rep;
    }
    const double rel =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = static_cast<long>(i);
    }
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

}  // namespace gdance
