#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "layersim/vec3.hpp"

namespace layersim {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Handle to a node inside one Graph. Values are f64, row-major, computed
// eagerly when the op is recorded.
struct Tensor {
    Graph* graph = nullptr;
    int id = -1;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    double scalar() const;  // value of a one-element tensor
};

// Reverse-mode tape. A graph is confined to one thread; separate graphs may
// run in parallel. Ops validate shapes and throw std::invalid_argument with
// both shapes in the message on mismatch.
class Graph {
  public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // leaves
    Tensor input(const Shape& shape, const std::vector<double>& data, bool requires_grad);
    Tensor constant(const Shape& shape, const std::vector<double>& data) { return input(shape, data, false); }
    Tensor zeros(const Shape& shape, bool requires_grad = false);

    // elementwise
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor relu(Tensor a);
    Tensor scale_const(Tensor a, double c);
    Tensor scale(Tensor a, Tensor s);       // s one-element
    Tensor div_scalar(Tensor a, Tensor s);  // s one-element

    // linear algebra
    Tensor matmul(Tensor a, Tensor b);  // [m,k] x [k,n]
    Tensor transpose(Tensor a);         // 2-d
    Tensor add_rowvec(Tensor a, Tensor b);  // [m,n] + [n] per row

    // structure
    Tensor reshape(Tensor a, const Shape& shape);
    Tensor concat(int axis, const std::vector<Tensor>& parts);
    Tensor slice(Tensor a, int axis, int start, int len);

    // reductions
    Tensor sum(Tensor a);
    Tensor mean(Tensor a);
    Tensor l2norm(Tensor a);        // sqrt of sum of squares, any shape
    Tensor mse(Tensor a, Tensor b); // mean of squared elementwise difference
    Tensor softmax(Tensor a, int axis);

    // row-structured ops over [m,d] matrices
    Tensor gather_rows(Tensor a, const std::vector<int>& idx);
    Tensor scatter_add_rows(Tensor a, const std::vector<int>& idx, int out_rows);
    Tensor scale_rows(Tensor a, Tensor s);                      // s [m]
    Tensor rowwise_dot(Tensor a, Tensor b);                     // -> [m]
    Tensor rowwise_norm(Tensor a);                              // -> [m], clamped at 1e-12
    Tensor rowwise_div(Tensor a, Tensor s);                     // rows / s[m]
    Tensor cross_rows(Tensor a, Tensor b);                      // [m,3] x [m,3]
    Tensor rowwise_rot3(Tensor a, const std::vector<Mat3>& rots, bool transpose);  // [m,3]

    // softmax within runs of equal, non-decreasing segment ids
    Tensor segment_softmax(Tensor a, const std::vector<int>& segments);

    // Reverse-mode pass from a one-element loss; every node reachable from a
    // requires-grad leaf receives its exact derivative, others stay zero.
    void backward(Tensor loss);

    int node_count() const;

    const Shape& shape_of(int id) const;
    const std::vector<double>& value_of(int id) const;
    const std::vector<double>& grad_of(int id) const;

  private:
    struct Node;
    Tensor make(Node&& node);
    std::vector<Node>* nodes_ptr();
    friend struct Tensor;

    std::vector<Node> nodes_;
};

// Central-difference check of the reverse-mode gradient of a scalar-valued
// builder. Relative error uses max(|analytic|, |numeric|, 1e-8).
double gradcheck(const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& build,
                 const std::vector<Shape>& shapes, const std::vector<std::vector<double>>& inputs,
                 double eps);

namespace ref {
// Naive serial matmul; the baseline for the parallel kernel.
void matmul_serial(const double* a, const double* b, double* out, int m, int k, int n);
}  // namespace ref

// Parallel dense matmul kernel shared by the graph op and the benchmark.
void matmul_kernel(const double* a, const double* b, double* out, int m, int k, int n);

}  // namespace layersim
