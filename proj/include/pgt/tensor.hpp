#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace pgt {

/// Dense row-major float64 tensor. A Tensor is a cheap handle over shared
/// storage: copies alias the same buffer, clone() deep-copies. All ops treat
/// their inputs as immutable and return fresh tensors; in-place mutation is
/// reserved for parameter owners (initializer, optimizer, checkpoint loader).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const;
  size_t rank() const { return shape().size(); }
  size_t size() const;  // number of elements

  double* data();
  const double* data() const;
  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // requires size()==1

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  bool has_grad() const;
  std::vector<double>& grad();              // allocates zeros on first access
  const std::vector<double>& grad() const;  // requires has_grad()
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  bool all_finite() const;

  std::string shape_str() const;

  // internal: autodiff bookkeeping (set when an op records onto a tape)
  bool tracked() const;
  void mark_tracked();
  void ensure_grad();

 private:
  struct Node {
    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until needed; same length as data after ensure_grad
    bool requires_grad = false;
    bool tracked = false;
  };
  std::shared_ptr<Node> node_;
};

size_t shape_numel(const std::vector<size_t>& shape);

/// Records backward rules during a forward pass. Replaying them in reverse
/// order accumulates gradients into every tensor on the path between the
/// backward() seed and the requires_grad leaves. Grad buffers are zeroed by
/// their owners (trainer, grad_check), not by backward() itself; a Tape
/// belongs to one logical thread.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  void backward(Tensor& scalar_output);  // seeds d(output)=1, replays in reverse
  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  std::vector<std::function<void()>> records_;
};

// "PGTT v1" container: magic PGTT, u32 version, u32 rank, rank x u64 dims,
// row-major little-endian f64 payload.
void write_pgtt(std::ostream& out, const Tensor& t);
void write_pgtt_file(const std::string& path, const Tensor& t);
Tensor read_pgtt(std::istream& in);
Tensor read_pgtt_file(const std::string& path);

}  // namespace pgt
