#include "layersim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "layersim/parallel.hpp"

namespace layersim {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); i++) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void matmul_kernel(const double* a, const double* b, double* out, int m, int k, int n) {
    int64_t grain = std::max<int64_t>(1, 32768 / std::max<int64_t>(1, int64_t(k) * n));
    parallel_for(m, [&](int64_t i) {
        double* out_row = out + i * n;
        std::fill(out_row, out_row + n, 0.0);
        const double* a_row = a + i * k;
        for (int p = 0; p < k; p++) {
            double av = a_row[p];
            if (av == 0.0) continue;
            const double* b_row = b + int64_t(p) * n;
            for (int j = 0; j < n; j++) out_row[j] += av * b_row[j];
        }
    }, grain);
}

namespace ref {
void matmul_serial(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; i++)
        for (int j = 0; j < n; j++) {
            double acc = 0.0;
            for (int p = 0; p < k; p++) acc += a[int64_t(i) * k + p] * b[int64_t(p) * n + j];
            out[int64_t(i) * n + j] = acc;
        }
}
}  // namespace ref

// ---- graph internals ---------------------------------------------------

struct Graph::Node {
    enum Op {
        Leaf, Add, Sub, Mul, Relu, ScaleConst, Scale, DivScalar, Matmul, Transpose, AddRowvec,
        Reshape, Concat, Slice, Sum, Mean, L2Norm, Mse, Softmax,
        GatherRows, ScatterAddRows, ScaleRows, RowwiseDot, RowwiseNorm, RowwiseDiv, CrossRows,
        RowwiseRot3, SegmentSoftmax
    };
    Op op = Leaf;
    Shape shape;
    std::vector<int> inputs;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;

    int axis = 0, start = 0, out_rows = 0;
    double c = 0.0;
    bool flag = false;
    std::vector<int> indices;
    std::vector<Mat3> rots;
};

Graph::Graph() = default;
Graph::~Graph() = default;

int Graph::node_count() const { return int(nodes_.size()); }

const Shape& Tensor::shape() const { return graph->shape_of(id); }
const std::vector<double>& Tensor::value() const { return graph->value_of(id); }
const std::vector<double>& Tensor::grad() const { return graph->grad_of(id); }
double Tensor::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw std::invalid_argument("Tensor::scalar: tensor has " + shape_str(shape()));
    return v[0];
}

const Shape& Graph::shape_of(int id) const { return nodes_.at(id).shape; }
const std::vector<double>& Graph::value_of(int id) const { return nodes_.at(id).value; }
const std::vector<double>& Graph::grad_of(int id) const {
    static const std::vector<double> empty;
    const Node& n = nodes_.at(id);
    return n.grad.empty() && numel(n.shape) > 0 ? (const_cast<Node&>(n).grad.assign(numel(n.shape), 0.0), n.grad)
                                                : n.grad;
}

Tensor Graph::make(Node&& node) {
    for (int in : node.inputs) node.requires_grad = node.requires_grad || nodes_.at(in).requires_grad;
    nodes_.push_back(std::move(node));
    return Tensor{this, int(nodes_.size()) - 1};
}

static void check_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

static void check_matrix(const char* op, const Shape& s) {
    if (s.size() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_str(s));
}

Tensor Graph::input(const Shape& shape, const std::vector<double>& data, bool requires_grad) {
    if (int64_t(data.size()) != numel(shape))
        throw std::invalid_argument("input: data length " + std::to_string(data.size()) + " does not match " +
                                    shape_str(shape));
    Node n;
    n.op = Node::Leaf;
    n.shape = shape;
    n.value = data;
    n.requires_grad = requires_grad;
    return make(std::move(n));
}

Tensor Graph::zeros(const Shape& shape, bool requires_grad) {
    return input(shape, std::vector<double>(numel(shape), 0.0), requires_grad);
}

Tensor Graph::add(Tensor a, Tensor b) {
    check_same_shape("add", a.shape(), b.shape());
    Node n;
    n.op = Node::Add;
    n.shape = a.shape();
    n.inputs = {a.id, b.id};
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = a.value()[i] + b.value()[i];
    return make(std::move(n));
}

Tensor Graph::sub(Tensor a, Tensor b) {
    check_same_shape("sub", a.shape(), b.shape());
    Node n;
    n.op = Node::Sub;
    n.shape = a.shape();
    n.inputs = {a.id, b.id};
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = a.value()[i] - b.value()[i];
    return make(std::move(n));
}

Tensor Graph::mul(Tensor a, Tensor b) {
    check_same_shape("mul", a.shape(), b.shape());
    Node n;
    n.op = Node::Mul;
    n.shape = a.shape();
    n.inputs = {a.id, b.id};
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = a.value()[i] * b.value()[i];
    return make(std::move(n));
}

Tensor Graph::relu(Tensor a) {
    Node n;
    n.op = Node::Relu;
    n.shape = a.shape();
    n.inputs = {a.id};
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = std::max(0.0, a.value()[i]);
    return make(std::move(n));
}

Tensor Graph::scale_const(Tensor a, double c) {
    Node n;
    n.op = Node::ScaleConst;
    n.shape = a.shape();
    n.inputs = {a.id};
    n.c = c;
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = c * a.value()[i];
    return make(std::move(n));
}

Tensor Graph::scale(Tensor a, Tensor s) {
    if (numel(s.shape()) != 1) throw std::invalid_argument("scale: scale factor must be one element, got " + shape_str(s.shape()));
    Node n;
    n.op = Node::Scale;
    n.shape = a.shape();
    n.inputs = {a.id, s.id};
    double sv = s.value()[0];
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = sv * a.value()[i];
    return make(std::move(n));
}

Tensor Graph::div_scalar(Tensor a, Tensor s) {
    if (numel(s.shape()) != 1) throw std::invalid_argument("div_scalar: divisor must be one element, got " + shape_str(s.shape()));
    Node n;
    n.op = Node::DivScalar;
    n.shape = a.shape();
    n.inputs = {a.id, s.id};
    double sv = s.value()[0];
    n.value.resize(a.value().size());
    for (size_t i = 0; i < n.value.size(); i++) n.value[i] = a.value()[i] / sv;
    return make(std::move(n));
}

Tensor Graph::matmul(Tensor a, Tensor b) {
    check_matrix("matmul", a.shape());
    check_matrix("matmul", b.shape());
    if (a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    int m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
    Node n;
    n.op = Node::Matmul;
    n.shape = {m, nn};
    n.inputs = {a.id, b.id};
    n.value.resize(int64_t(m) * nn);
    matmul_kernel(a.value().data(), b.value().data(), n.value.data(), m, k, nn);
    return make(std::move(n));
}

Tensor Graph::transpose(Tensor a) {
    check_matrix("transpose", a.shape());
    int m = a.shape()[0], k = a.shape()[1];
    Node n;
    n.op = Node::Transpose;
    n.shape = {k, m};
    n.inputs = {a.id};
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++)
        for (int j = 0; j < k; j++) n.value[int64_t(j) * m + i] = a.value()[int64_t(i) * k + j];
    return make(std::move(n));
}

Tensor Graph::add_rowvec(Tensor a, Tensor b) {
    check_matrix("add_rowvec", a.shape());
    if (b.shape() != Shape{a.shape()[1]})
        throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    int m = a.shape()[0], d = a.shape()[1];
    Node n;
    n.op = Node::AddRowvec;
    n.shape = a.shape();
    n.inputs = {a.id, b.id};
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++)
        for (int j = 0; j < d; j++) n.value[int64_t(i) * d + j] = a.value()[int64_t(i) * d + j] + b.value()[j];
    return make(std::move(n));
}

Tensor Graph::reshape(Tensor a, const Shape& shape) {
    if (numel(shape) != numel(a.shape()))
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) + " vs " + shape_str(shape));
    Node n;
    n.op = Node::Reshape;
    n.shape = shape;
    n.inputs = {a.id};
    n.value = a.value();
    return make(std::move(n));
}

// outer/inner extents around an axis for row-major block copies
static void axis_spans(const Shape& s, int axis, int64_t* outer, int64_t* inner) {
    *outer = 1;
    *inner = 1;
    for (int i = 0; i < axis; i++) *outer *= s[i];
    for (int i = axis + 1; i < int(s.size()); i++) *inner *= s[i];
}

Tensor Graph::concat(int axis, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Shape out_shape = parts[0].shape();
    if (axis < 0 || axis >= int(out_shape.size())) throw std::invalid_argument("concat: bad axis");
    int total = 0;
    for (const Tensor& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < int(s.size()); i++)
            if (i != axis && s[i] != out_shape[i])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(out_shape) + " vs " + shape_str(s));
        total += s[axis];
    }
    out_shape[axis] = total;

    Node n;
    n.op = Node::Concat;
    n.shape = out_shape;
    n.axis = axis;
    for (const Tensor& p : parts) n.inputs.push_back(p.id);
    n.value.resize(numel(out_shape));
    int64_t outer, inner;
    axis_spans(out_shape, axis, &outer, &inner);
    int64_t dst_axis = total;
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        int64_t p_axis = p.shape()[axis];
        const auto& pv = p.value();
        for (int64_t o = 0; o < outer; o++)
            std::copy(pv.begin() + o * p_axis * inner, pv.begin() + (o + 1) * p_axis * inner,
                      n.value.begin() + (o * dst_axis + offset) * inner);
        offset += p_axis;
    }
    return make(std::move(n));
}

Tensor Graph::slice(Tensor a, int axis, int start, int len) {
    Shape s = a.shape();
    if (axis < 0 || axis >= int(s.size())) throw std::invalid_argument("slice: bad axis");
    if (start < 0 || len < 0 || start + len > s[axis])
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") out of bounds for " + shape_str(s));
    Shape out_shape = s;
    out_shape[axis] = len;
    Node n;
    n.op = Node::Slice;
    n.shape = out_shape;
    n.axis = axis;
    n.start = start;
    n.inputs = {a.id};
    n.value.resize(numel(out_shape));
    int64_t outer, inner;
    axis_spans(s, axis, &outer, &inner);
    for (int64_t o = 0; o < outer; o++)
        std::copy(a.value().begin() + (o * s[axis] + start) * inner,
                  a.value().begin() + (o * s[axis] + start + len) * inner, n.value.begin() + o * len * inner);
    return make(std::move(n));
}

Tensor Graph::sum(Tensor a) {
    Node n;
    n.op = Node::Sum;
    n.shape = {};
    n.inputs = {a.id};
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    n.value = {acc};
    return make(std::move(n));
}

Tensor Graph::mean(Tensor a) {
    if (a.value().empty()) throw std::invalid_argument("mean: empty tensor");
    Node n;
    n.op = Node::Mean;
    n.shape = {};
    n.inputs = {a.id};
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    n.value = {acc / double(a.value().size())};
    return make(std::move(n));
}

Tensor Graph::l2norm(Tensor a) {
    Node n;
    n.op = Node::L2Norm;
    n.shape = {};
    n.inputs = {a.id};
    double acc = 0.0;
    for (double v : a.value()) acc += v * v;
    n.value = {std::sqrt(acc)};
    return make(std::move(n));
}

Tensor Graph::mse(Tensor a, Tensor b) {
    check_same_shape("mse", a.shape(), b.shape());
    if (a.value().empty()) throw std::invalid_argument("mse: empty tensor");
    Node n;
    n.op = Node::Mse;
    n.shape = {};
    n.inputs = {a.id, b.id};
    double acc = 0.0;
    for (size_t i = 0; i < a.value().size(); i++) {
        double d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    n.value = {acc / double(a.value().size())};
    return make(std::move(n));
}

Tensor Graph::softmax(Tensor a, int axis) {
    Shape s = a.shape();
    if (axis < 0 || axis >= int(s.size())) throw std::invalid_argument("softmax: bad axis");
    Node n;
    n.op = Node::Softmax;
    n.shape = s;
    n.axis = axis;
    n.inputs = {a.id};
    n.value.resize(a.value().size());
    int64_t outer, inner;
    axis_spans(s, axis, &outer, &inner);
    int64_t lanes = s[axis];
    for (int64_t o = 0; o < outer; o++)
        for (int64_t in = 0; in < inner; in++) {
            auto at = [&](int64_t l) -> int64_t { return (o * lanes + l) * inner + in; };
            double mx = -1e300;
            for (int64_t l = 0; l < lanes; l++) mx = std::max(mx, a.value()[at(l)]);
            double z = 0.0;
            for (int64_t l = 0; l < lanes; l++) z += std::exp(a.value()[at(l)] - mx);
            for (int64_t l = 0; l < lanes; l++) n.value[at(l)] = std::exp(a.value()[at(l)] - mx) / z;
        }
    return make(std::move(n));
}

Tensor Graph::gather_rows(Tensor a, const std::vector<int>& idx) {
    check_matrix("gather_rows", a.shape());
    int rows = a.shape()[0], d = a.shape()[1];
    for (int i : idx)
        if (i < 0 || i >= rows) throw std::invalid_argument("gather_rows: index out of range");
    Node n;
    n.op = Node::GatherRows;
    n.shape = {int(idx.size()), d};
    n.inputs = {a.id};
    n.indices = idx;
    n.value.resize(int64_t(idx.size()) * d);
    for (size_t r = 0; r < idx.size(); r++)
        std::copy(a.value().begin() + int64_t(idx[r]) * d, a.value().begin() + int64_t(idx[r] + 1) * d,
                  n.value.begin() + int64_t(r) * d);
    return make(std::move(n));
}

Tensor Graph::scatter_add_rows(Tensor a, const std::vector<int>& idx, int out_rows) {
    check_matrix("scatter_add_rows", a.shape());
    if (int(idx.size()) != a.shape()[0]) throw std::invalid_argument("scatter_add_rows: one index per row required");
    for (int i : idx)
        if (i < 0 || i >= out_rows) throw std::invalid_argument("scatter_add_rows: index out of range");
    int d = a.shape()[1];
    Node n;
    n.op = Node::ScatterAddRows;
    n.shape = {out_rows, d};
    n.inputs = {a.id};
    n.indices = idx;
    n.out_rows = out_rows;
    n.value.assign(int64_t(out_rows) * d, 0.0);
    for (size_t r = 0; r < idx.size(); r++)
        for (int j = 0; j < d; j++) n.value[int64_t(idx[r]) * d + j] += a.value()[int64_t(r) * d + j];
    return make(std::move(n));
}

Tensor Graph::scale_rows(Tensor a, Tensor s) {
    check_matrix("scale_rows", a.shape());
    if (s.shape() != Shape{a.shape()[0]})
        throw std::invalid_argument("scale_rows: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(s.shape()));
    int m = a.shape()[0], d = a.shape()[1];
    Node n;
    n.op = Node::ScaleRows;
    n.shape = a.shape();
    n.inputs = {a.id, s.id};
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++)
        for (int j = 0; j < d; j++) n.value[int64_t(i) * d + j] = a.value()[int64_t(i) * d + j] * s.value()[i];
    return make(std::move(n));
}

Tensor Graph::rowwise_dot(Tensor a, Tensor b) {
    check_same_shape("rowwise_dot", a.shape(), b.shape());
    check_matrix("rowwise_dot", a.shape());
    int m = a.shape()[0], d = a.shape()[1];
    Node n;
    n.op = Node::RowwiseDot;
    n.shape = {m};
    n.inputs = {a.id, b.id};
    n.value.assign(m, 0.0);
    for (int i = 0; i < m; i++)
        for (int j = 0; j < d; j++) n.value[i] += a.value()[int64_t(i) * d + j] * b.value()[int64_t(i) * d + j];
    return make(std::move(n));
}

Tensor Graph::rowwise_norm(Tensor a) {
    check_matrix("rowwise_norm", a.shape());
    int m = a.shape()[0], d = a.shape()[1];
    Node n;
    n.op = Node::RowwiseNorm;
    n.shape = {m};
    n.inputs = {a.id};
    n.value.assign(m, 0.0);
    for (int i = 0; i < m; i++) {
        double acc = 0.0;
        for (int j = 0; j < d; j++) {
            double v = a.value()[int64_t(i) * d + j];
            acc += v * v;
        }
        n.value[i] = std::max(std::sqrt(acc), 1e-12);
    }
    return make(std::move(n));
}

Tensor Graph::rowwise_div(Tensor a, Tensor s) {
    check_matrix("rowwise_div", a.shape());
    if (s.shape() != Shape{a.shape()[0]})
        throw std::invalid_argument("rowwise_div: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(s.shape()));
    int m = a.shape()[0], d = a.shape()[1];
    Node n;
    n.op = Node::RowwiseDiv;
    n.shape = a.shape();
    n.inputs = {a.id, s.id};
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++)
        for (int j = 0; j < d; j++) n.value[int64_t(i) * d + j] = a.value()[int64_t(i) * d + j] / s.value()[i];
    return make(std::move(n));
}

Tensor Graph::cross_rows(Tensor a, Tensor b) {
    check_same_shape("cross_rows", a.shape(), b.shape());
    if (a.shape().size() != 2 || a.shape()[1] != 3)
        throw std::invalid_argument("cross_rows: expected [m,3], got " + shape_str(a.shape()));
    int m = a.shape()[0];
    Node n;
    n.op = Node::CrossRows;
    n.shape = a.shape();
    n.inputs = {a.id, b.id};
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++) {
        const double* u = a.value().data() + 3 * i;
        const double* v = b.value().data() + 3 * i;
        n.value[3 * i + 0] = u[1] * v[2] - u[2] * v[1];
        n.value[3 * i + 1] = u[2] * v[0] - u[0] * v[2];
        n.value[3 * i + 2] = u[0] * v[1] - u[1] * v[0];
    }
    return make(std::move(n));
}

Tensor Graph::rowwise_rot3(Tensor a, const std::vector<Mat3>& rots, bool transpose) {
    if (a.shape().size() != 2 || a.shape()[1] != 3)
        throw std::invalid_argument("rowwise_rot3: expected [m,3], got " + shape_str(a.shape()));
    if (int(rots.size()) != a.shape()[0]) throw std::invalid_argument("rowwise_rot3: one rotation per row required");
    int m = a.shape()[0];
    Node n;
    n.op = Node::RowwiseRot3;
    n.shape = a.shape();
    n.inputs = {a.id};
    n.rots = rots;
    n.flag = transpose;
    n.value.resize(a.value().size());
    for (int i = 0; i < m; i++) {
        Vec3 v(a.value()[3 * i], a.value()[3 * i + 1], a.value()[3 * i + 2]);
        Vec3 r = transpose ? rots[i].transposed() * v : rots[i] * v;
        n.value[3 * i] = r.x;
        n.value[3 * i + 1] = r.y;
        n.value[3 * i + 2] = r.z;
    }
    return make(std::move(n));
}

Tensor Graph::segment_softmax(Tensor a, const std::vector<int>& segments) {
    if (a.shape().size() != 1) throw std::invalid_argument("segment_softmax: expected a vector, got " + shape_str(a.shape()));
    if (int(segments.size()) != a.shape()[0])
        throw std::invalid_argument("segment_softmax: one segment id per element required");
    for (size_t i = 1; i < segments.size(); i++)
        if (segments[i] < segments[i - 1]) throw std::invalid_argument("segment_softmax: segment ids must be non-decreasing");
    int m = a.shape()[0];
    Node n;
    n.op = Node::SegmentSoftmax;
    n.shape = a.shape();
    n.inputs = {a.id};
    n.indices = segments;
    n.value.resize(m);
    for (int lo = 0; lo < m;) {
        int hi = lo;
        while (hi < m && segments[hi] == segments[lo]) hi++;
        double mx = -1e300;
        for (int i = lo; i < hi; i++) mx = std::max(mx, a.value()[i]);
        double z = 0.0;
        for (int i = lo; i < hi; i++) z += std::exp(a.value()[i] - mx);
        for (int i = lo; i < hi; i++) n.value[i] = std::exp(a.value()[i] - mx) / z;
        lo = hi;
    }
    return make(std::move(n));
}

// ---- backward ----------------------------------------------------------

void Graph::backward(Tensor loss) {
    if (loss.graph != this) throw std::invalid_argument("backward: loss from another graph");
    Node& top = nodes_.at(loss.id);
    if (numel(top.shape) != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(top.shape));

    for (Node& n : nodes_)
        if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    top.grad.assign(1, 1.0);

    auto grad_buf = [&](int id) -> std::vector<double>& {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(numel(n.shape), 0.0);
        return n.grad;
    };

    for (int id = loss.id; id >= 0; id--) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty() || n.op == Node::Leaf) continue;
        const std::vector<double>& g = n.grad;

        switch (n.op) {
            case Node::Add: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); i++) db[i] += g[i];
                }
                break;
            }
            case Node::Sub: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); i++) db[i] -= g[i];
                }
                break;
            }
            case Node::Mul: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& bv = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += g[i] * bv[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); i++) db[i] += g[i] * av[i];
                }
                break;
            }
            case Node::Relu: {
                const auto& av = nodes_[n.inputs[0]].value;
                auto& da = grad_buf(n.inputs[0]);
                for (size_t i = 0; i < g.size(); i++)
                    if (av[i] > 0.0) da[i] += g[i];
                break;
            }
            case Node::ScaleConst: {
                auto& da = grad_buf(n.inputs[0]);
                for (size_t i = 0; i < g.size(); i++) da[i] += n.c * g[i];
                break;
            }
            case Node::Scale: {
                const auto& av = nodes_[n.inputs[0]].value;
                double sv = nodes_[n.inputs[1]].value[0];
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += sv * g[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& ds = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); i++) ds[0] += g[i] * av[i];
                }
                break;
            }
            case Node::DivScalar: {
                const auto& av = nodes_[n.inputs[0]].value;
                double sv = nodes_[n.inputs[1]].value[0];
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += g[i] / sv;
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& ds = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < g.size(); i++) ds[0] -= g[i] * av[i] / (sv * sv);
                }
                break;
            }
            case Node::Matmul: {
                const Node& a = nodes_[n.inputs[0]];
                const Node& b = nodes_[n.inputs[1]];
                int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
                if (a.requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    // da[i,p] += sum_j g[i,j] * b[p,j]
                    parallel_for(m, [&](int64_t i) {
                        for (int p = 0; p < k; p++) {
                            double acc = 0.0;
                            for (int j = 0; j < nn; j++) acc += g[i * nn + j] * b.value[int64_t(p) * nn + j];
                            da[i * k + p] += acc;
                        }
                    }, std::max<int64_t>(1, 32768 / std::max(1, k * nn)));
                }
                if (b.requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    // db[p,j] += sum_i a[i,p] * g[i,j]
                    parallel_for(k, [&](int64_t p) {
                        for (int i = 0; i < m; i++) {
                            double av = a.value[int64_t(i) * k + p];
                            if (av == 0.0) continue;
                            for (int j = 0; j < nn; j++) db[p * nn + j] += av * g[int64_t(i) * nn + j];
                        }
                    }, std::max<int64_t>(1, 32768 / std::max(1, m * nn)));
                }
                break;
            }
            case Node::Transpose: {
                const Node& a = nodes_[n.inputs[0]];
                int m = a.shape[0], k = a.shape[1];
                auto& da = grad_buf(n.inputs[0]);
                for (int i = 0; i < m; i++)
                    for (int j = 0; j < k; j++) da[int64_t(i) * k + j] += g[int64_t(j) * m + i];
                break;
            }
            case Node::AddRowvec: {
                int m = n.shape[0], d = n.shape[1];
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (int i = 0; i < m; i++)
                        for (int j = 0; j < d; j++) db[j] += g[int64_t(i) * d + j];
                }
                break;
            }
            case Node::Reshape: {
                auto& da = grad_buf(n.inputs[0]);
                for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
                break;
            }
            case Node::Concat: {
                int64_t outer, inner;
                axis_spans(n.shape, n.axis, &outer, &inner);
                int64_t dst_axis = n.shape[n.axis];
                int64_t offset = 0;
                for (int in_id : n.inputs) {
                    Node& p = nodes_[in_id];
                    int64_t p_axis = p.shape[n.axis];
                    if (p.requires_grad) {
                        auto& dp = grad_buf(in_id);
                        for (int64_t o = 0; o < outer; o++)
                            for (int64_t e = 0; e < p_axis * inner; e++)
                                dp[o * p_axis * inner + e] += g[(o * dst_axis + offset) * inner + e];
                    }
                    offset += p_axis;
                }
                break;
            }
            case Node::Slice: {
                const Node& a = nodes_[n.inputs[0]];
                int64_t outer, inner;
                axis_spans(a.shape, n.axis, &outer, &inner);
                int64_t len = n.shape[n.axis];
                auto& da = grad_buf(n.inputs[0]);
                for (int64_t o = 0; o < outer; o++)
                    for (int64_t e = 0; e < len * inner; e++)
                        da[(o * a.shape[n.axis] + n.start) * inner + e] += g[o * len * inner + e];
                break;
            }
            case Node::Sum: {
                auto& da = grad_buf(n.inputs[0]);
                for (size_t i = 0; i < da.size(); i++) da[i] += g[0];
                break;
            }
            case Node::Mean: {
                auto& da = grad_buf(n.inputs[0]);
                double s = g[0] / double(da.size());
                for (size_t i = 0; i < da.size(); i++) da[i] += s;
                break;
            }
            case Node::L2Norm: {
                const auto& av = nodes_[n.inputs[0]].value;
                auto& da = grad_buf(n.inputs[0]);
                double denom = std::max(n.value[0], 1e-12);
                for (size_t i = 0; i < da.size(); i++) da[i] += g[0] * av[i] / denom;
                break;
            }
            case Node::Mse: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& bv = nodes_[n.inputs[1]].value;
                double s = 2.0 * g[0] / double(av.size());
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (size_t i = 0; i < av.size(); i++) da[i] += s * (av[i] - bv[i]);
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (size_t i = 0; i < av.size(); i++) db[i] -= s * (av[i] - bv[i]);
                }
                break;
            }
            case Node::Softmax: {
                int64_t outer, inner;
                axis_spans(n.shape, n.axis, &outer, &inner);
                int64_t lanes = n.shape[n.axis];
                auto& da = grad_buf(n.inputs[0]);
                for (int64_t o = 0; o < outer; o++)
                    for (int64_t in = 0; in < inner; in++) {
                        auto at = [&](int64_t l) -> int64_t { return (o * lanes + l) * inner + in; };
                        double dot = 0.0;
                        for (int64_t l = 0; l < lanes; l++) dot += g[at(l)] * n.value[at(l)];
                        for (int64_t l = 0; l < lanes; l++) da[at(l)] += n.value[at(l)] * (g[at(l)] - dot);
                    }
                break;
            }
            case Node::GatherRows: {
                int d = n.shape[1];
                auto& da = grad_buf(n.inputs[0]);
                for (size_t r = 0; r < n.indices.size(); r++)
                    for (int j = 0; j < d; j++) da[int64_t(n.indices[r]) * d + j] += g[int64_t(r) * d + j];
                break;
            }
            case Node::ScatterAddRows: {
                int d = n.shape[1];
                auto& da = grad_buf(n.inputs[0]);
                for (size_t r = 0; r < n.indices.size(); r++)
                    for (int j = 0; j < d; j++) da[int64_t(r) * d + j] += g[int64_t(n.indices[r]) * d + j];
                break;
            }
            case Node::ScaleRows: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& sv = nodes_[n.inputs[1]].value;
                int m = n.shape[0], d = n.shape[1];
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (int i = 0; i < m; i++)
                        for (int j = 0; j < d; j++) da[int64_t(i) * d + j] += g[int64_t(i) * d + j] * sv[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& ds = grad_buf(n.inputs[1]);
                    for (int i = 0; i < m; i++) {
                        double acc = 0.0;
                        for (int j = 0; j < d; j++) acc += g[int64_t(i) * d + j] * av[int64_t(i) * d + j];
                        ds[i] += acc;
                    }
                }
                break;
            }
            case Node::RowwiseDot: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& bv = nodes_[n.inputs[1]].value;
                int m = n.shape[0];
                int d = int(av.size()) / std::max(1, m);
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (int i = 0; i < m; i++)
                        for (int j = 0; j < d; j++) da[int64_t(i) * d + j] += g[i] * bv[int64_t(i) * d + j];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& db = grad_buf(n.inputs[1]);
                    for (int i = 0; i < m; i++)
                        for (int j = 0; j < d; j++) db[int64_t(i) * d + j] += g[i] * av[int64_t(i) * d + j];
                }
                break;
            }
            case Node::RowwiseNorm: {
                const auto& av = nodes_[n.inputs[0]].value;
                int m = n.shape[0];
                int d = int(av.size()) / std::max(1, m);
                auto& da = grad_buf(n.inputs[0]);
                for (int i = 0; i < m; i++) {
                    double raw2 = 0.0;
                    for (int j = 0; j < d; j++) raw2 += av[int64_t(i) * d + j] * av[int64_t(i) * d + j];
                    if (raw2 < 1e-24) continue;  // clamped region is flat
                    for (int j = 0; j < d; j++) da[int64_t(i) * d + j] += g[i] * av[int64_t(i) * d + j] / n.value[i];
                }
                break;
            }
            case Node::RowwiseDiv: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& sv = nodes_[n.inputs[1]].value;
                int m = n.shape[0], d = n.shape[1];
                if (nodes_[n.inputs[0]].requires_grad) {
                    auto& da = grad_buf(n.inputs[0]);
                    for (int i = 0; i < m; i++)
                        for (int j = 0; j < d; j++) da[int64_t(i) * d + j] += g[int64_t(i) * d + j] / sv[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    auto& ds = grad_buf(n.inputs[1]);
                    for (int i = 0; i < m; i++) {
                        double acc = 0.0;
                        for (int j = 0; j < d; j++) acc += g[int64_t(i) * d + j] * av[int64_t(i) * d + j];
                        ds[i] -= acc / (sv[i] * sv[i]);
                    }
                }
                break;
            }
            case Node::CrossRows: {
                const auto& av = nodes_[n.inputs[0]].value;
                const auto& bv = nodes_[n.inputs[1]].value;
                int m = n.shape[0];
                for (int i = 0; i < m; i++) {
                    Vec3 u(av[3 * i], av[3 * i + 1], av[3 * i + 2]);
                    Vec3 v(bv[3 * i], bv[3 * i + 1], bv[3 * i + 2]);
                    Vec3 gg(g[3 * i], g[3 * i + 1], g[3 * i + 2]);
                    if (nodes_[n.inputs[0]].requires_grad) {
                        auto& da = grad_buf(n.inputs[0]);
                        Vec3 d = v.cross(gg);
                        da[3 * i] += d.x;
                        da[3 * i + 1] += d.y;
                        da[3 * i + 2] += d.z;
                    }
                    if (nodes_[n.inputs[1]].requires_grad) {
                        auto& db = grad_buf(n.inputs[1]);
                        Vec3 d = gg.cross(u);
                        db[3 * i] += d.x;
                        db[3 * i + 1] += d.y;
                        db[3 * i + 2] += d.z;
                    }
                }
                break;
            }
            case Node::RowwiseRot3: {
                auto& da = grad_buf(n.inputs[0]);
                int m = n.shape[0];
                for (int i = 0; i < m; i++) {
                    Vec3 gg(g[3 * i], g[3 * i + 1], g[3 * i + 2]);
                    Vec3 d = n.flag ? n.rots[i] * gg : n.rots[i].transposed() * gg;
                    da[3 * i] += d.x;
                    da[3 * i + 1] += d.y;
                    da[3 * i + 2] += d.z;
                }
                break;
            }
            case Node::SegmentSoftmax: {
                auto& da = grad_buf(n.inputs[0]);
                int m = n.shape[0];
                for (int lo = 0; lo < m;) {
                    int hi = lo;
                    while (hi < m && n.indices[hi] == n.indices[lo]) hi++;
                    double dot = 0.0;
                    for (int i = lo; i < hi; i++) dot += g[i] * n.value[i];
                    for (int i = lo; i < hi; i++) da[i] += n.value[i] * (g[i] - dot);
                    lo = hi;
                }
                break;
            }
            case Node::Leaf:
                break;
        }
    }
}

// ---- gradcheck ---------------------------------------------------------

double gradcheck(const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& build,
                 const std::vector<Shape>& shapes, const std::vector<std::vector<double>>& inputs,
                 double eps) {
    if (eps <= 0.0) throw std::invalid_argument("gradcheck: eps must be positive");
    if (shapes.size() != inputs.size()) throw std::invalid_argument("gradcheck: shapes/inputs size mismatch");

    // analytic gradients
    std::vector<std::vector<double>> analytic;
    {
        Graph g;
        std::vector<Tensor> leaves;
        for (size_t t = 0; t < inputs.size(); t++) leaves.push_back(g.input(shapes[t], inputs[t], true));
        Tensor loss = build(g, leaves);
        if (numel(loss.shape()) != 1) throw std::invalid_argument("gradcheck: builder must return a scalar");
        g.backward(loss);
        for (const Tensor& leaf : leaves) analytic.push_back(leaf.grad());
    }

    auto eval = [&](const std::vector<std::vector<double>>& xs) {
        Graph g;
        std::vector<Tensor> leaves;
        for (size_t t = 0; t < xs.size(); t++) leaves.push_back(g.input(shapes[t], xs[t], false));
        return build(g, leaves).scalar();
    };

    double max_rel = 0.0;
    std::vector<std::vector<double>> xs = inputs;
    for (size_t t = 0; t < xs.size(); t++) {
        for (size_t e = 0; e < xs[t].size(); e++) {
            double keep = xs[t][e];
            xs[t][e] = keep + eps;
            double up = eval(xs);
            xs[t][e] = keep - eps;
            double dn = eval(xs);
            xs[t][e] = keep;
            double numeric = (up - dn) / (2.0 * eps);
            double a = analytic[t][e];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace layersim
