#include "pgt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pgt/errors.hpp"

namespace pgt {

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data.assign(shape_numel(t.node_->shape), 0.0);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.node_->data) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    std::ostringstream os;
    os << "from_data: shape holds " << shape_numel(shape) << " elements but " << data.size()
       << " values were given";
    throw ShapeError(os.str());
  }
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<size_t>& Tensor::shape() const {
  static const std::vector<size_t> empty;
  return node_ ? node_->shape : empty;
}

size_t Tensor::size() const { return node_ ? node_->data.size() : 0; }

double* Tensor::data() { return node_->data.data(); }
const double* Tensor::data() const { return node_->data.data(); }
std::vector<double>& Tensor::values() { return node_->data; }
const std::vector<double>& Tensor::values() const { return node_->data; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor has " + shape_str() + " shape, expected a scalar");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw Error("grad(): no gradient has been accumulated for this tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::ensure_grad() {
  if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::clone() const {
  // fresh leaf: values and requires_grad carry over, grad and graph
  // bookkeeping do not
  Tensor t;
  if (!node_) return t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = node_->shape;
  t.node_->data = node_->data;
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

bool Tensor::all_finite() const {
  if (!node_) return true;
  for (double v : node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  const auto& s = shape();
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

bool Tensor::tracked() const { return node_ && node_->tracked; }
void Tensor::mark_tracked() { node_->tracked = true; }

void Tape::record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }

void Tape::backward(Tensor& scalar_output) {
  if (scalar_output.size() != 1)
    throw ShapeError("backward: output has shape " + scalar_output.shape_str() +
                     ", expected a scalar");
  scalar_output.ensure_grad();
  scalar_output.grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// --- PGTT v1 container ---

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_pgtt(std::ostream& out, const Tensor& t) {
  out.write("PGTT", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (size_t d : t.shape()) put_u64(out, d);
  for (double v : t.values()) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
}

Tensor read_pgtt(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PGTT", 4) != 0) throw LoadError("PGTT: bad magic bytes");
  uint32_t version = get_u32(in);
  if (version != 1) throw LoadError("PGTT: unsupported version " + std::to_string(version));
  uint32_t rank = get_u32(in);
  std::vector<size_t> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<size_t>(get_u64(in));
  size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits = get_u64(in);
    std::memcpy(&data[i], &bits, 8);
  }
  if (!in) throw LoadError("PGTT: truncated payload");
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_pgtt_file(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_pgtt(out, t);
  if (!out) throw DataError("write failed: " + path);
}

Tensor read_pgtt_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return read_pgtt(in);
}

}  // namespace pgt
