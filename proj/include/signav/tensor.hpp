#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace signav {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}
    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);

    int numel() const {
        int n = 1;
        for (int e : shape) n *= e;
        return n;
    }
    int dim(int i) const { return shape[i]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m, adam_v;  // sized lazily by the optimizer

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

    // grad allocated on first touch so huge configs stay cheap to construct
    void ensure_grad() {
        if (grad.data.size() != value.data.size()) grad = Tensor::zeros(value.shape);
    }
    void zero_grad() {
        ensure_grad();
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
    }
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One tape per forward pass; ops append nodes; backward()
// walks them once in reverse topological (= insertion) order.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;             // backward closures capture `this`
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor v);        // leaf without gradient
    Var param(Param& p);        // leaf bound to an external Param (grads accumulate)

    const Tensor& val(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad_of(Var v) const;  // valid after backward

    Var add(Var a, Var b);                 // same shape
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);              // [n,k] x [k,m]
    Var transpose(Var a);                  // [n,m] -> [m,n]
    Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);  // rows of x times w
    Var add_rowvec(Var x, Var b);          // [n,m] + broadcast [m]
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);  // last axis
    Var softmax(Var x);                    // last axis, max-subtracted
    Var gelu(Var x);                       // exact erf form
    Var conv2d(Var x, Var k, std::optional<Var> bias = std::nullopt);  // 3x3, stride 2, pad 1
    Var reshape(Var a, std::vector<int> shape);
    Var stack_rows(const std::vector<Var>& rows);   // each [D] -> [T,D]
    Var concat_rows(const std::vector<Var>& parts); // each [ti,D] -> [sum ti, D]
    Var concat_cols(const std::vector<Var>& parts); // each [T,di] -> [T, sum di]
    Var select_row(Var x, int r);          // [T,D] -> [D]
    Var slice_rows(Var x, int r0, int r1); // [T,D] -> [r1-r0, D]
    Var slice_cols(Var x, int c0, int c1); // [T,D] -> [T, c1-c0]
    Var gather_rows(Var x, std::vector<int> rows);  // [T,D] -> [|rows|, D], dup ok
    Var mean_rows(Var x);                  // [N,D] -> [D]
    Var pick(Var x, int i);                // [n] -> [1]
    Var log_floored(Var x, double floor = 1e-12);  // counts floor hits
    Var sum(Var x);                        // all elements -> [1]

    void backward(Var root);               // root must be scalar
    int floor_hits() const { return floor_hits_; }
    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool grad_alloc = false;
        Param* bound = nullptr;
        std::function<void()> back;
    };

    int push(Tensor value, bool needs_grad);
    Tensor& grad_buf(int id);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    std::vector<Node> nodes_;
    int floor_hits_ = 0;
};

// Central finite differences on a seeded subsample of coordinates.
// compute_grads must zero, forward, and backward-fill every param's grad;
// loss_value must evaluate the same scalar without touching grads.
double grad_check(const std::function<double()>& loss_value,
                  const std::function<void()>& compute_grads, const std::vector<Param*>& params,
                  double h = 1e-5, int max_coords_per_param = 200, uint64_t seed = 1234);

// Seeded initializers.
void init_uniform_xavier(Param& p, int fan_in, int fan_out, uint64_t seed);
void init_zeros(Param& p);
void init_ones(Param& p);

// Checkpoint: magic, config hash, config blob, then name/shape/f64-LE data
// per param. Byte-exact round trip.
void save_checkpoint(const std::string& path, const std::vector<Param*>& params,
                     uint64_t config_hash, const std::string& config_blob = "");

struct Checkpoint {
    uint64_t config_hash = 0;
    std::string config_blob;
    std::vector<std::pair<std::string, Tensor>> tensors;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace signav
