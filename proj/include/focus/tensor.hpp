#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace focus {

using Shape = std::vector<long>;

enum class DType : uint8_t { F64 = 0, F32 = 1 };

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<double> v;
    DType dtype = DType::F64;
    bool requires_grad = false;
    std::unique_ptr<std::vector<double>> grad;  // allocated lazily, same length as v
};

// Value-semantic handle to a dense row-major array. Copies share storage;
// ops never mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, DType dt = DType::F64);
    static Tensor full(const Shape& shape, double value, DType dt = DType::F64);
    static Tensor scalar(double value, DType dt = DType::F64);
    static Tensor from(const Shape& shape, std::vector<double> values, DType dt = DType::F64);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int rank() const { return static_cast<int>(p_->shape.size()); }
    long numel() const { return static_cast<long>(p_->v.size()); }
    long dim(int i) const;  // negative indices allowed
    DType dtype() const { return p_->dtype; }

    const std::vector<double>& values() const { return p_->v; }
    std::vector<double>& raw() { return p_->v; }  // setup only; never call on graph outputs
    double item() const;                          // numel()==1 only
    double at(std::initializer_list<long> idx) const;

    bool requires_grad() const { return p_->requires_grad; }
    Tensor& set_requires_grad(bool b);
    bool has_grad() const { return p_ && p_->grad != nullptr; }
    const std::vector<double>& grad() const;
    std::vector<double>& ensure_grad() const;  // allocate zero-filled if absent
    void zero_grad() { if (p_) p_->grad.reset(); }

    Tensor clone() const;  // deep copy, no grad, keeps requires_grad=false

    TensorData* ptr() const { return p_.get(); }

private:
    std::shared_ptr<TensorData> p_;
    explicit Tensor(std::shared_ptr<TensorData> p) : p_(std::move(p)) {}
    friend Tensor make_tensor(Shape shape, DType dt);
};

Tensor make_tensor(Shape shape, DType dt);

// Records executed ops in order; backward replays them reversed, exactly once.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // seeds d(loss)=1 and propagates to every requires_grad leaf.
    // errors: non-scalar loss, empty graph, or a second call on the same tape.
    void backward(const Tensor& loss);

    size_t node_count() const { return nodes_.size(); }
    bool spent() const { return spent_; }

    static Tape* active();
    static bool recording();  // active tape present and not suspended
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

private:
    std::vector<std::function<void()>> nodes_;
    bool spent_ = false;
    Tape* prev_ = nullptr;
};

// RAII guard that suspends recording on the active tape.
struct NoGrad {
    NoGrad();
    ~NoGrad();
};

// ---- differentiable primitive set ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties take a's gradient
Tensor maximum(const Tensor& a, const Tensor& b);  // ties take a's gradient

Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);      // exact erf form
Tensor softplus(const Tensor& a);  // log(1+e^x), overflow-safe

// softmax over the last axis; optional additive mask broadcast over leading
// axes. A row whose mask is entirely -inf is treated as unmasked.
Tensor softmax(const Tensor& a);
Tensor softmax_masked(const Tensor& a, const Tensor& mask);

Tensor layer_norm(const Tensor& a, double eps = 1e-5);    // last axis, no affine
Tensor l2_normalize(const Tensor& a, double eps = 1e-12); // last axis

Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only
Tensor transpose(const Tensor& a);                // swaps the last two axes

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, long start, long len);
std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<long>& sizes);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);

// x: [Ci,H,W], w: [Co,Ci,kh,kw], b: [Co] or undefined
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride, long pad);
// x: [C,H,W], w: [C,kh,kw], b: [C] or undefined
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride, long pad);
Tensor max_pool2d(const Tensor& x, long k, long stride);

// values: [C,H,W]; coords: [N,2] as (x,y) normalized to [0,1] with pixel
// centers at (i+0.5)/size; out-of-bounds clamps to the border. Returns [N,C].
// Differentiable in both values and coords.
Tensor grid_sample(const Tensor& values, const Tensor& coords);

// x: [...,H,W] resized over the trailing two axes, align_corners=false.
Tensor resize_bilinear(const Tensor& x, long out_h, long out_w);

// max over coordinates of |analytic - central difference| / max(1, |cd|).
// f must map a tensor to a finite scalar; throws on non-finite values.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double eps = 1e-5);

}  // namespace focus
