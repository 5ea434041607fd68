#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gdance/error.hpp"
#include "gdance/rng.hpp"

namespace gdance {

class Tensor;

// One reverse-mode tape node per op output. `parents` hold shared views of
// the inputs; `backward` reads the output's grad and accumulates into the
// parents' grads. Tapes are confined to one logical execution context.
struct TapeNode {
  std::vector<Tensor> parents;
  std::function<void(const Tensor&)> backward;
};

// Dense row-major 64-bit float tensor with value semantics. Data is shared
// by copies and treated as immutable after construction; ops return new
// tensors. Rank-0 scalars are represented as shape {1}.
class Tensor {
 public:
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated on demand
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
  static Tensor from(const std::vector<int>& shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(RngStream& rng, const std::vector<int>& shape, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data); }
  int rank() const { return static_cast<int>(shape.size()); }
  int size(int axis) const;
  std::size_t numel() const;
  double item() const;

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }

  // Independent deep copy (fresh storage, no tape).
  Tensor detach_copy() const;

  void ensure_grad();
  void zero_grad();

  // Reverse pass from a scalar output: seeds grad with 1 and runs the tape
  // in reverse topological order.
  void backward();
};

std::string shape_str(const std::vector<int>& shape);

// Thread-local switch; when off, ops do not record tape nodes.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Multiply counter for the efficiency harness. Counts scalar multiplies in
// the structured kernels only (matmul, bmm, windowed attention, ssm_scan);
// elementwise ops and normalizations are excluded by convention.
struct FlopCounter {
  static bool enabled;
  static std::uint64_t mults;
  static void reset() { mults = 0; }
  static void add(std::uint64_t n) {
    if (enabled) mults += n;
  }
};

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched matmul: [B,m,k] x [B,k,n] -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b);

// Elementwise with broadcasting restricted to size-1 axes (equal rank) or a
// scalar {1} operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);

Tensor transpose(const Tensor& a);  // 2-D
Tensor reshape(const Tensor& a, const std::vector<int>& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<int>& sizes);
Tensor slice(const Tensor& a, int axis, int start, int len);

Tensor exp(const Tensor& a);
Tensor expm1(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax_last(const Tensor& a);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_last(const Tensor& a);   // keeps a trailing axis of size 1
Tensor mean_last(const Tensor& a);  // keeps a trailing axis of size 1

// Layer normalization over the last axis; gamma/beta broadcast over rows.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Row gather on a 2-D tensor; backward scatter-adds.
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

// Fills positions where mask != 0 with `value`; mask has a's numel.
Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double value);

// Diagonal state-space scan, channels independent:
//   h_l = abar[j] * h_{l-1} + bbar[j] * x[l,j],  y[l,j] = c[j] . h_l
// x: [L,d], abar/bbar/c: [d,n] -> y: [L,d]. Time-invariant parameters.
Tensor ssm_scan(const Tensor& x, const Tensor& abar, const Tensor& bbar, const Tensor& c);

// Softmax attention restricted to a sliding key window. For query l the key
// range is [l-w, l+w] (symmetric) or [l-w, l] (causal); w < 0 means full.
// q: [L,dk], k: [Lk,dk], v: [Lk,dv] -> [L,dv]. Weights outside the window
// are never formed; inside, rows renormalize over the window.
Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, int window,
                          bool causal);

// Dense L x Lk weight matrix of the same attention (zeros outside the
// window); inspection/oracle path, no tape.
std::vector<double> windowed_attention_weights(const Tensor& q, const Tensor& k, int window,
                                               bool causal);

}  // namespace ops

// Gradient verification against central finite differences (step 1e-5).
struct CheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  long worst_index = -1;
  std::string note;
};

// f must map a tensor to a scalar tensor built on the tape. When
// max_coords > 0, a seeded random subset of coordinates is probed instead
// of all of them.
CheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& input,
                       double tolerance, int max_coords = 0, std::uint64_t probe_seed = 0);

}  // namespace gdance
