#include "focus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace focus {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

thread_local Tape* g_tape = nullptr;
thread_local int g_nograd = 0;

[[noreturn]] void fail(const std::string& op, const std::string& what) {
    throw std::invalid_argument(op + ": " + what);
}

void check(bool ok, const std::string& op, const std::string& what) {
    if (!ok) fail(op, what);
}

void round_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

DType promote(const Tensor& a, const Tensor& b) {
    return (a.dtype() == DType::F32 && b.dtype() == DType::F32) ? DType::F32 : DType::F64;
}

void finish(Tensor& t) {
    if (t.dtype() == DType::F32) round_f32(t.raw());
}

// right-aligned broadcast: each pair of trailing dims must match or be 1
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        long da = i < ra ? a[ra - 1 - i] : 1;
        long db = i < rb ? b[rb - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            fail(op, "shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

// strides of `s` aligned to the broadcast result `out` (0 on broadcast axes)
std::vector<long> bcast_strides(const Shape& s, const Shape& out) {
    std::vector<long> st(out.size(), 0);
    long run = 1;
    size_t rs = s.size(), ro = out.size();
    std::vector<long> natural(rs);
    for (size_t i = 0; i < rs; ++i) {
        natural[rs - 1 - i] = run;
        run *= s[rs - 1 - i];
    }
    for (size_t i = 0; i < rs; ++i) {
        size_t oi = ro - 1 - i, si = rs - 1 - i;
        st[oi] = (s[si] == 1 && out[oi] != 1) ? 0 : natural[si];
    }
    return st;
}

// calls f(out_index, a_index, b_index) for every element in row-major order
template <class F>
void for_each_bcast(const Shape& out, const Shape& as, const Shape& bs, F&& f) {
    long n = shape_numel(out);
    if (n == 0) return;
    size_t r = out.size();
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    auto sa = bcast_strides(as, out);
    auto sb = bcast_strides(bs, out);
    long inner = out[r - 1];
    long outer = n / inner;
    long saL = sa[r - 1], sbL = sb[r - 1];
    std::vector<long> idx(r - 1, 0);
    long offA = 0, offB = 0;
    for (long o = 0; o < outer; ++o) {
        long base = o * inner;
        for (long j = 0; j < inner; ++j) f(base + j, offA + j * saL, offB + j * sbL);
        // odometer over leading dims
        for (long d = static_cast<long>(r) - 2; d >= 0; --d) {
            offA += sa[d];
            offB += sb[d];
            if (++idx[d] < out[d]) break;
            offA -= sa[d] * out[d];
            offB -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

bool want_grad(const Tensor& a) { return Tape::recording() && a.requires_grad(); }
bool want_grad(const Tensor& a, const Tensor& b) {
    return Tape::recording() && (a.requires_grad() || b.requires_grad());
}

// ---- generic binary op with broadcast ----
// FwdF: (double,double)->double; DaF/DbF: partials evaluated at (a,b) values
template <class FwdF, class DaF, class DbF>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdF fwd, DaF da, DbF db) {
    check(a.defined() && b.defined(), name, "undefined operand");
    Shape os = broadcast_shapes(a.shape(), b.shape(), name);
    Tensor out = make_tensor(os, promote(a, b));
    const double* A = a.values().data();
    const double* B = b.values().data();
    double* O = out.raw().data();
    if (a.shape() == b.shape()) {
        long n = out.numel();
        for (long i = 0; i < n; ++i) O[i] = fwd(A[i], B[i]);
    } else {
        for_each_bcast(os, a.shape(), b.shape(),
                       [&](long oi, long ai, long bi) { O[oi] = fwd(A[ai], B[bi]); });
    }
    finish(out);
    if (want_grad(a, b)) {
        out.set_requires_grad(true);
        Tensor ta = a, tb = b, to = out;
        Tape::active()->record([ta, tb, to, da, db]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* A = ta.values().data();
            const double* B = tb.values().data();
            double* GA = ta.requires_grad() ? ta.ensure_grad().data() : nullptr;
            double* GB = tb.requires_grad() ? tb.ensure_grad().data() : nullptr;
            if (ta.shape() == tb.shape()) {
                long n = static_cast<long>(go.size());
                for (long i = 0; i < n; ++i) {
                    if (GA) GA[i] += go[i] * da(A[i], B[i]);
                    if (GB) GB[i] += go[i] * db(A[i], B[i]);
                }
            } else {
                for_each_bcast(to.shape(), ta.shape(), tb.shape(), [&](long oi, long ai, long bi) {
                    if (GA) GA[ai] += go[oi] * da(A[ai], B[bi]);
                    if (GB) GB[bi] += go[oi] * db(A[ai], B[bi]);
                });
            }
        });
    }
    return out;
}

// ---- generic unary op ----
template <class FwdF, class DF>
Tensor unary_op(const char* name, const Tensor& a, FwdF fwd, DF dfdx) {
    check(a.defined(), name, "undefined operand");
    Tensor out = make_tensor(a.shape(), a.dtype());
    const double* A = a.values().data();
    double* O = out.raw().data();
    long n = a.numel();
    for (long i = 0; i < n; ++i) O[i] = fwd(A[i]);
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, dfdx]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* A = ta.values().data();
            const double* O = to.values().data();
            double* GA = ta.ensure_grad().data();
            long n = static_cast<long>(go.size());
            for (long i = 0; i < n; ++i) GA[i] += go[i] * dfdx(A[i], O[i]);
        });
    }
    return out;
}

// C[M,N] += A[M,K]*B[K,N]; j-tiled so a B tile stays cache-resident across rows
void gemm_nn(long M, long K, long N, const double* A, const double* B, double* C) {
    constexpr long JT = 256;
    for (long j0 = 0; j0 < N; j0 += JT) {
        long j1 = std::min(N, j0 + JT);
        for (long i = 0; i < M; ++i) {
            double* __restrict c = C + i * N;
            const double* a = A + i * K;
            for (long k = 0; k < K; ++k) {
                const double av = a[k];
                const double* __restrict b = B + k * N;
                for (long j = j0; j < j1; ++j) c[j] += av * b[j];
            }
        }
    }
}

void transpose_mat(long M, long N, const double* A, double* AT) {
    constexpr long T = 32;
    for (long i0 = 0; i0 < M; i0 += T)
        for (long j0 = 0; j0 < N; j0 += T) {
            long i1 = std::min(M, i0 + T), j1 = std::min(N, j0 + T);
            for (long i = i0; i < i1; ++i)
                for (long j = j0; j < j1; ++j) AT[j * M + i] = A[i * N + j];
        }
}

}  // namespace

// ---- Tensor ----

std::string shape_str(const Shape& s) {
    std::ostringstream o;
    o << '[';
    for (size_t i = 0; i < s.size(); ++i) o << (i ? "," : "") << s[i];
    o << ']';
    return o.str();
}

long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
}

Tensor make_tensor(Shape shape, DType dt) {
    auto p = std::make_shared<TensorData>();
    long n = shape_numel(shape);
    p->shape = std::move(shape);
    p->v.resize(static_cast<size_t>(n));
    p->dtype = dt;
    return Tensor(std::move(p));
}

Tensor Tensor::zeros(const Shape& shape, DType dt) { return make_tensor(shape, dt); }

Tensor Tensor::full(const Shape& shape, double value, DType dt) {
    Tensor t = make_tensor(shape, dt);
    std::fill(t.raw().begin(), t.raw().end(), value);
    if (dt == DType::F32) round_f32(t.raw());
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({}, value, dt); }

Tensor Tensor::from(const Shape& shape, std::vector<double> values, DType dt) {
    if (shape_numel(shape) != static_cast<long>(values.size()))
        fail("Tensor::from", "shape " + shape_str(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
    Tensor t = make_tensor(shape, dt);
    t.raw() = std::move(values);
    if (dt == DType::F32) round_f32(t.raw());
    return t;
}

long Tensor::dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) fail("Tensor::dim", "axis out of range");
    return p_->shape[i];
}

double Tensor::item() const {
    if (numel() != 1) fail("Tensor::item", "tensor has " + std::to_string(numel()) + " elements");
    return p_->v[0];
}

double Tensor::at(std::initializer_list<long> idx) const {
    if (static_cast<int>(idx.size()) != rank()) fail("Tensor::at", "index rank mismatch");
    long off = 0;
    int d = 0;
    for (long i : idx) {
        off = off * p_->shape[d] + i;
        ++d;
    }
    return p_->v[static_cast<size_t>(off)];
}

Tensor& Tensor::set_requires_grad(bool b) {
    p_->requires_grad = b;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) fail("Tensor::grad", "no gradient present");
    return *p_->grad;
}

std::vector<double>& Tensor::ensure_grad() const {
    if (!p_->grad) p_->grad = std::make_unique<std::vector<double>>(p_->v.size(), 0.0);
    return *p_->grad;
}

Tensor Tensor::clone() const {
    Tensor t = make_tensor(p_->shape, p_->dtype);
    t.raw() = p_->v;
    return t;
}

// ---- Tape ----

Tape::Tape() {
    prev_ = g_tape;
    g_tape = this;
}

Tape::~Tape() { g_tape = prev_; }

Tape* Tape::active() { return g_tape; }
bool Tape::recording() { return g_tape != nullptr && g_nograd == 0; }

void Tape::backward(const Tensor& loss) {
    if (spent_) throw std::runtime_error("Tape::backward: tape already used; build a new graph");
    if (!loss.defined() || loss.numel() != 1)
        throw std::runtime_error("Tape::backward: loss must be a scalar");
    if (nodes_.empty()) throw std::runtime_error("Tape::backward: empty graph");
    spent_ = true;
    Tensor l = loss;
    auto& g = l.ensure_grad();
    std::fill(g.begin(), g.end(), 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

NoGrad::NoGrad() { ++g_nograd; }
NoGrad::~NoGrad() { --g_nograd; }

// ---- elementwise ----

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

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary_op(
        "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary_op(
        "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y) { return x >= y ? 1.0 : 0.0; },
        [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(
        "gelu", a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        "softplus", a,
        [](double x) {
            if (x > 35.0) return x + std::exp(-x);
            if (x < -35.0) return std::exp(x);
            return std::log1p(std::exp(x));
        },
        [](double x, double) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
}

// ---- softmax ----

namespace {

Tensor softmax_impl(const Tensor& a, const Tensor& mask, const char* name) {
    check(a.defined(), name, "undefined operand");
    check(a.rank() >= 1, name, "rank must be >= 1");
    long n = a.dim(-1);
    long rows = a.numel() / n;
    std::vector<double> mexp;  // mask expanded to a's shape
    const double* M = nullptr;
    if (mask.defined()) {
        check(!mask.requires_grad(), name, "mask must not require grad");
        Shape os = broadcast_shapes(a.shape(), mask.shape(), name);
        check(os == a.shape(), name,
              "mask " + shape_str(mask.shape()) + " not broadcastable to " + shape_str(a.shape()));
        mexp.resize(static_cast<size_t>(a.numel()));
        const double* src = mask.values().data();
        for_each_bcast(a.shape(), a.shape(), mask.shape(),
                       [&](long oi, long, long bi) { mexp[oi] = src[bi]; });
        M = mexp.data();
    }
    Tensor out = make_tensor(a.shape(), a.dtype());
    const double* A = a.values().data();
    double* O = out.raw().data();
    for (long r = 0; r < rows; ++r) {
        const double* x = A + r * n;
        const double* m = M ? M + r * n : nullptr;
        double* y = O + r * n;
        bool all_masked = false;
        if (m) {
            all_masked = true;
            for (long i = 0; i < n && all_masked; ++i)
                if (m[i] != kNegInf) all_masked = false;
        }
        // an entirely -inf mask row is ignored (degenerate-row convention)
        bool use_mask = m && !all_masked;
        double mx = kNegInf;
        for (long i = 0; i < n; ++i) {
            double z = use_mask ? x[i] + m[i] : x[i];
            if (z > mx) mx = z;
        }
        double s = 0.0;
        for (long i = 0; i < n; ++i) {
            double z = use_mask ? x[i] + m[i] : x[i];
            double e = (z == kNegInf) ? 0.0 : std::exp(z - mx);
            y[i] = e;
            s += e;
        }
        for (long i = 0; i < n; ++i) y[i] /= s;
    }
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, n]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* Y = to.values().data();
            double* GA = ta.ensure_grad().data();
            long rows = ta.numel() / n;
            for (long r = 0; r < rows; ++r) {
                const double* y = Y + r * n;
                const double* g = go.data() + r * n;
                double dot = 0.0;
                for (long i = 0; i < n; ++i) dot += y[i] * g[i];
                double* ga = GA + r * n;
                for (long i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - dot);
            }
        });
    }
    return out;
}

}  // namespace

Tensor softmax(const Tensor& a) { return softmax_impl(a, Tensor(), "softmax"); }

Tensor softmax_masked(const Tensor& a, const Tensor& mask) {
    return softmax_impl(a, mask, "softmax_masked");
}

// ---- normalization ----

Tensor layer_norm(const Tensor& a, double eps) {
    check(a.defined() && a.rank() >= 1, "layer_norm", "rank must be >= 1");
    long n = a.dim(-1);
    long rows = a.numel() / n;
    Tensor out = make_tensor(a.shape(), a.dtype());
    auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    const double* A = a.values().data();
    double* O = out.raw().data();
    for (long r = 0; r < rows; ++r) {
        const double* x = A + r * n;
        double* y = O + r * n;
        double mu = 0.0;
        for (long i = 0; i < n; ++i) mu += x[i];
        mu /= n;
        double var = 0.0;
        for (long i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= n;
        double iv = 1.0 / std::sqrt(var + eps);
        (*inv)[r] = iv;
        for (long i = 0; i < n; ++i) y[i] = (x[i] - mu) * iv;
    }
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, inv, n]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* Y = to.values().data();
            double* GA = ta.ensure_grad().data();
            long rows = ta.numel() / n;
            for (long r = 0; r < rows; ++r) {
                const double* y = Y + r * n;
                const double* g = go.data() + r * n;
                double gm = 0.0, gym = 0.0;
                for (long i = 0; i < n; ++i) {
                    gm += g[i];
                    gym += g[i] * y[i];
                }
                gm /= n;
                gym /= n;
                double iv = (*inv)[r];
                double* ga = GA + r * n;
                for (long i = 0; i < n; ++i) ga[i] += iv * (g[i] - gm - y[i] * gym);
            }
        });
    }
    return out;
}

Tensor l2_normalize(const Tensor& a, double eps) {
    check(a.defined() && a.rank() >= 1, "l2_normalize", "rank must be >= 1");
    long n = a.dim(-1);
    long rows = a.numel() / n;
    Tensor out = make_tensor(a.shape(), a.dtype());
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    const double* A = a.values().data();
    double* O = out.raw().data();
    for (long r = 0; r < rows; ++r) {
        const double* x = A + r * n;
        double s = 0.0;
        for (long i = 0; i < n; ++i) s += x[i] * x[i];
        double nv = std::sqrt(s);
        double d = std::max(nv, eps);
        (*norms)[r] = d;
        double* y = O + r * n;
        for (long i = 0; i < n; ++i) y[i] = x[i] / d;
    }
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, norms, n, eps]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* X = ta.values().data();
            double* GA = ta.ensure_grad().data();
            long rows = ta.numel() / n;
            for (long r = 0; r < rows; ++r) {
                double d = (*norms)[r];
                const double* x = X + r * n;
                const double* g = go.data() + r * n;
                double* ga = GA + r * n;
                if (d <= eps) {
                    for (long i = 0; i < n; ++i) ga[i] += g[i] / d;
                } else {
                    double dot = 0.0;
                    for (long i = 0; i < n; ++i) dot += g[i] * x[i];
                    double d3 = d * d * d;
                    for (long i = 0; i < n; ++i) ga[i] += g[i] / d - x[i] * dot / d3;
                }
            }
        });
    }
    return out;
}

// ---- matmul / transpose ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.defined() && b.defined(), "matmul", "undefined operand");
    check(a.rank() == 2 && b.rank() == 2, "matmul",
          "expects rank-2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    long M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
    check(K == K2, "matmul",
          "inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out = make_tensor({M, N}, promote(a, b));
    gemm_nn(M, K, N, a.values().data(), b.values().data(), out.raw().data());
    finish(out);
    if (want_grad(a, b)) {
        out.set_requires_grad(true);
        Tensor ta = a, tb = b, to = out;
        Tape::active()->record([ta, tb, to, M, K, N]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            if (ta.requires_grad()) {
                // dA += dC * B^T
                std::vector<double> bt(static_cast<size_t>(K * N));
                transpose_mat(K, N, tb.values().data(), bt.data());
                gemm_nn(M, N, K, go.data(), bt.data(), ta.ensure_grad().data());
            }
            if (tb.requires_grad()) {
                // dB += A^T * dC
                std::vector<double> at(static_cast<size_t>(M * K));
                transpose_mat(M, K, ta.values().data(), at.data());
                gemm_nn(K, M, N, at.data(), go.data(), tb.ensure_grad().data());
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    check(a.defined() && a.rank() >= 2, "transpose", "rank must be >= 2");
    Shape os = a.shape();
    std::swap(os[os.size() - 1], os[os.size() - 2]);
    long R = a.dim(-2), C = a.dim(-1);
    long batch = a.numel() / (R * C);
    Tensor out = make_tensor(os, a.dtype());
    const double* A = a.values().data();
    double* O = out.raw().data();
    for (long b = 0; b < batch; ++b) transpose_mat(R, C, A + b * R * C, O + b * R * C);
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, R, C, batch]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* GA = ta.ensure_grad().data();
            for (long b = 0; b < batch; ++b) {
                const double* g = go.data() + b * R * C;
                double* ga = GA + b * R * C;
                for (long i = 0; i < C; ++i)
                    for (long j = 0; j < R; ++j) ga[j * C + i] += g[i * R + j];
            }
        });
    }
    return out;
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, const Shape& shape) {
    check(a.defined(), "reshape", "undefined operand");
    check(shape_numel(shape) == a.numel(), "reshape",
          "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    Tensor out = make_tensor(shape, a.dtype());
    out.raw() = a.values();
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* ga = ta.ensure_grad().data();
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

namespace {
// view a shape as [outer, axis, inner]
void axis_blocks(const Shape& s, int axis, long& outer, long& ax, long& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    ax = s[axis];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
int norm_axis(const Tensor& a, int axis, const char* op) {
    int r = a.rank();
    if (axis < 0) axis += r;
    check(axis >= 0 && axis < r, op, "axis out of range");
    return axis;
}
}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat", "no inputs");
    int ax = norm_axis(parts[0], axis, "concat");
    Shape os = parts[0].shape();
    long total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        check(p.rank() == parts[0].rank(), "concat", "rank mismatch");
        for (int d = 0; d < p.rank(); ++d)
            if (d != ax)
                check(p.shape()[d] == os[d], "concat",
                      "shape mismatch at " + shape_str(p.shape()));
        total += p.shape()[ax];
        any_grad = any_grad || p.requires_grad();
    }
    os[ax] = total;
    DType dt = DType::F32;
    for (const auto& p : parts)
        if (p.dtype() == DType::F64) dt = DType::F64;
    Tensor out = make_tensor(os, dt);
    long outer, axn, inner;
    axis_blocks(os, ax, outer, axn, inner);
    double* O = out.raw().data();
    long off = 0;
    for (const auto& p : parts) {
        long pa = p.shape()[ax];
        const double* P = p.values().data();
        for (long o = 0; o < outer; ++o)
            std::memcpy(O + (o * axn + off) * inner, P + o * pa * inner,
                        static_cast<size_t>(pa * inner) * sizeof(double));
        off += pa;
    }
    finish(out);
    if (Tape::recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<Tensor> ps = parts;
        Tensor to = out;
        Tape::active()->record([ps, to, ax, outer, axn, inner]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            long off = 0;
            for (auto p : ps) {
                long pa = p.shape()[ax];
                if (p.requires_grad()) {
                    double* ga = p.ensure_grad().data();
                    for (long o = 0; o < outer; ++o) {
                        const double* g = go.data() + (o * axn + off) * inner;
                        double* dst = ga + o * pa * inner;
                        for (long i = 0; i < pa * inner; ++i) dst[i] += g[i];
                    }
                }
                off += pa;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, long start, long len) {
    int ax = norm_axis(a, axis, "slice");
    check(start >= 0 && len >= 0 && start + len <= a.shape()[ax], "slice",
          "range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of bounds for " + shape_str(a.shape()));
    Shape os = a.shape();
    os[ax] = len;
    long outer, axn, inner;
    axis_blocks(a.shape(), ax, outer, axn, inner);
    Tensor out = make_tensor(os, a.dtype());
    double* O = out.raw().data();
    const double* A = a.values().data();
    for (long o = 0; o < outer; ++o)
        std::memcpy(O + o * len * inner, A + (o * axn + start) * inner,
                    static_cast<size_t>(len * inner) * sizeof(double));
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, outer, axn, inner, start, len]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* ga = ta.ensure_grad().data();
            for (long o = 0; o < outer; ++o) {
                const double* g = go.data() + o * len * inner;
                double* dst = ga + (o * axn + start) * inner;
                for (long i = 0; i < len * inner; ++i) dst[i] += g[i];
            }
        });
    }
    return out;
}

std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<long>& sizes) {
    int ax = norm_axis(a, axis, "split");
    long total = 0;
    for (long s : sizes) total += s;
    check(total == a.shape()[ax], "split",
          "sizes sum to " + std::to_string(total) + " but axis has " +
              std::to_string(a.shape()[ax]));
    std::vector<Tensor> out;
    long off = 0;
    for (long s : sizes) {
        out.push_back(slice(a, ax, off, s));
        off += s;
    }
    return out;
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    check(a.defined(), "sum", "undefined operand");
    double s = 0.0;
    for (double x : a.values()) s += x;
    Tensor out = Tensor::scalar(s, a.dtype());
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to]() {
            if (!to.has_grad()) return;
            double g = to.grad()[0];
            double* ga = ta.ensure_grad().data();
            long n = ta.numel();
            for (long i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    check(a.defined() && a.numel() > 0, "mean", "empty operand");
    double s = 0.0;
    for (double x : a.values()) s += x;
    long n = a.numel();
    Tensor out = Tensor::scalar(s / n, a.dtype());
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, n]() {
            if (!to.has_grad()) return;
            double g = to.grad()[0] / n;
            double* ga = ta.ensure_grad().data();
            for (long i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

Tensor sum_axis(const Tensor& a, int axis) {
    int ax = norm_axis(a, axis, "sum_axis");
    long outer, axn, inner;
    axis_blocks(a.shape(), ax, outer, axn, inner);
    Shape os;
    for (int d = 0; d < a.rank(); ++d)
        if (d != ax) os.push_back(a.shape()[d]);
    Tensor out = make_tensor(os, a.dtype());
    const double* A = a.values().data();
    double* O = out.raw().data();
    for (long o = 0; o < outer; ++o)
        for (long k = 0; k < axn; ++k) {
            const double* src = A + (o * axn + k) * inner;
            double* dst = O + o * inner;
            for (long i = 0; i < inner; ++i) dst[i] += src[i];
        }
    finish(out);
    if (want_grad(a)) {
        out.set_requires_grad(true);
        Tensor ta = a, to = out;
        Tape::active()->record([ta, to, outer, axn, inner]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* ga = ta.ensure_grad().data();
            for (long o = 0; o < outer; ++o)
                for (long k = 0; k < axn; ++k) {
                    double* dst = ga + (o * axn + k) * inner;
                    const double* g = go.data() + o * inner;
                    for (long i = 0; i < inner; ++i) dst[i] += g[i];
                }
        });
    }
    return out;
}

// ---- convolution ----

namespace {

void im2col(const double* x, long C, long H, long W, long kh, long kw, long stride, long pad,
            long oh, long ow, double* col) {
    // col layout: [C*kh*kw, oh*ow]
    long P = oh * ow;
    for (long c = 0; c < C; ++c)
        for (long u = 0; u < kh; ++u)
            for (long v = 0; v < kw; ++v) {
                double* row = col + ((c * kh + u) * kw + v) * P;
                for (long oy = 0; oy < oh; ++oy) {
                    long sy = oy * stride + u - pad;
                    double* dst = row + oy * ow;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst, dst + ow, 0.0);
                        continue;
                    }
                    const double* src = x + (c * H + sy) * W;
                    for (long ox = 0; ox < ow; ++ox) {
                        long sx = ox * stride + v - pad;
                        dst[ox] = (sx >= 0 && sx < W) ? src[sx] : 0.0;
                    }
                }
            }
}

void col2im_acc(const double* col, long C, long H, long W, long kh, long kw, long stride,
                long pad, long oh, long ow, double* gx) {
    long P = oh * ow;
    for (long c = 0; c < C; ++c)
        for (long u = 0; u < kh; ++u)
            for (long v = 0; v < kw; ++v) {
                const double* row = col + ((c * kh + u) * kw + v) * P;
                for (long oy = 0; oy < oh; ++oy) {
                    long sy = oy * stride + u - pad;
                    if (sy < 0 || sy >= H) continue;
                    double* dst = gx + (c * H + sy) * W;
                    const double* src = row + oy * ow;
                    for (long ox = 0; ox < ow; ++ox) {
                        long sx = ox * stride + v - pad;
                        if (sx >= 0 && sx < W) dst[sx] += src[ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride, long pad) {
    check(x.defined() && w.defined(), "conv2d", "undefined operand");
    check(x.rank() == 3, "conv2d", "input must be [C,H,W], got " + shape_str(x.shape()));
    check(w.rank() == 4, "conv2d", "weight must be [Co,Ci,kh,kw], got " + shape_str(w.shape()));
    long Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
    long Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(w.dim(1) == Ci, "conv2d",
          "channel mismatch: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
    check(stride >= 1, "conv2d", "stride must be >= 1");
    check(H + 2 * pad >= kh && W + 2 * pad >= kw, "conv2d", "kernel larger than padded input");
    long oh = (H + 2 * pad - kh) / stride + 1;
    long ow = (W + 2 * pad - kw) / stride + 1;
    if (b.defined()) check(b.rank() == 1 && b.dim(0) == Co, "conv2d", "bias must be [Co]");
    long CK = Ci * kh * kw, P = oh * ow;
    auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(CK * P));
    im2col(x.values().data(), Ci, H, W, kh, kw, stride, pad, oh, ow, col->data());
    Tensor out = make_tensor({Co, oh, ow}, x.dtype());
    gemm_nn(Co, CK, P, w.values().data(), col->data(), out.raw().data());
    if (b.defined()) {
        double* O = out.raw().data();
        const double* B = b.values().data();
        for (long c = 0; c < Co; ++c)
            for (long p = 0; p < P; ++p) O[c * P + p] += B[c];
    }
    finish(out);
    bool bg = b.defined() && b.requires_grad();
    if (Tape::recording() && (x.requires_grad() || w.requires_grad() || bg)) {
        out.set_requires_grad(true);
        Tensor tx = x, tw = w, tb = b, to = out;
        Tape::active()->record([tx, tw, tb, to, col, Ci, H, W, kh, kw, stride, pad, oh, ow]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();  // [Co, P]
            long Co = tw.dim(0), CK = Ci * kh * kw, P = oh * ow;
            if (tb.defined() && tb.requires_grad()) {
                double* gb = tb.ensure_grad().data();
                for (long c = 0; c < Co; ++c) {
                    double s = 0.0;
                    const double* g = go.data() + c * P;
                    for (long p = 0; p < P; ++p) s += g[p];
                    gb[c] += s;
                }
            }
            if (tw.requires_grad()) {
                std::vector<double> colT(static_cast<size_t>(P * CK));
                transpose_mat(CK, P, col->data(), colT.data());
                gemm_nn(Co, P, CK, go.data(), colT.data(), tw.ensure_grad().data());
            }
            if (tx.requires_grad()) {
                std::vector<double> wT(static_cast<size_t>(CK * Co));
                transpose_mat(Co, CK, tw.values().data(), wT.data());
                std::vector<double> dcol(static_cast<size_t>(CK * P));
                gemm_nn(CK, Co, P, wT.data(), go.data(), dcol.data());
                col2im_acc(dcol.data(), Ci, H, W, kh, kw, stride, pad, oh, ow,
                           tx.ensure_grad().data());
            }
        });
    }
    return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride,
                        long pad) {
    check(x.defined() && w.defined(), "depthwise_conv2d", "undefined operand");
    check(x.rank() == 3, "depthwise_conv2d", "input must be [C,H,W]");
    check(w.rank() == 3 && w.dim(0) == x.dim(0), "depthwise_conv2d",
          "weight must be [C,kh,kw] matching input channels, got " + shape_str(w.shape()) +
              " for " + shape_str(x.shape()));
    long C = x.dim(0), H = x.dim(1), W = x.dim(2);
    long kh = w.dim(1), kw = w.dim(2);
    check(H + 2 * pad >= kh && W + 2 * pad >= kw, "depthwise_conv2d",
          "kernel larger than padded input");
    long oh = (H + 2 * pad - kh) / stride + 1;
    long ow = (W + 2 * pad - kw) / stride + 1;
    if (b.defined()) check(b.rank() == 1 && b.dim(0) == C, "depthwise_conv2d", "bias must be [C]");
    Tensor out = make_tensor({C, oh, ow}, x.dtype());
    const double* X = x.values().data();
    const double* Wt = w.values().data();
    double* O = out.raw().data();
    for (long c = 0; c < C; ++c) {
        const double* xp = X + c * H * W;
        const double* wp = Wt + c * kh * kw;
        double bias = b.defined() ? b.values()[c] : 0.0;
        for (long oy = 0; oy < oh; ++oy)
            for (long ox = 0; ox < ow; ++ox) {
                double acc = bias;
                for (long u = 0; u < kh; ++u) {
                    long sy = oy * stride + u - pad;
                    if (sy < 0 || sy >= H) continue;
                    for (long v = 0; v < kw; ++v) {
                        long sx = ox * stride + v - pad;
                        if (sx >= 0 && sx < W) acc += wp[u * kw + v] * xp[sy * W + sx];
                    }
                }
                O[(c * oh + oy) * ow + ox] = acc;
            }
    }
    finish(out);
    bool bg = b.defined() && b.requires_grad();
    if (Tape::recording() && (x.requires_grad() || w.requires_grad() || bg)) {
        out.set_requires_grad(true);
        Tensor tx = x, tw = w, tb = b, to = out;
        Tape::active()->record([tx, tw, tb, to, C, H, W, kh, kw, stride, pad, oh, ow]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* X = tx.values().data();
            const double* Wt = tw.values().data();
            double* gx = tx.requires_grad() ? tx.ensure_grad().data() : nullptr;
            double* gw = tw.requires_grad() ? tw.ensure_grad().data() : nullptr;
            double* gb = (tb.defined() && tb.requires_grad()) ? tb.ensure_grad().data() : nullptr;
            for (long c = 0; c < C; ++c) {
                const double* xp = X + c * H * W;
                const double* wp = Wt + c * kh * kw;
                for (long oy = 0; oy < oh; ++oy)
                    for (long ox = 0; ox < ow; ++ox) {
                        double g = go[(c * oh + oy) * ow + ox];
                        if (gb) gb[c] += g;
                        for (long u = 0; u < kh; ++u) {
                            long sy = oy * stride + u - pad;
                            if (sy < 0 || sy >= H) continue;
                            for (long v = 0; v < kw; ++v) {
                                long sx = ox * stride + v - pad;
                                if (sx < 0 || sx >= W) continue;
                                if (gw) gw[c * kh * kw + u * kw + v] += g * xp[sy * W + sx];
                                if (gx) gx[(c * H + sy) * W + sx] += g * wp[u * kw + v];
                            }
                        }
                    }
            }
        });
    }
    return out;
}

Tensor max_pool2d(const Tensor& x, long k, long stride) {
    check(x.defined() && x.rank() == 3, "max_pool2d", "input must be [C,H,W]");
    long C = x.dim(0), H = x.dim(1), W = x.dim(2);
    check(k >= 1 && stride >= 1 && H >= k && W >= k, "max_pool2d",
          "window does not fit " + shape_str(x.shape()));
    long oh = (H - k) / stride + 1;
    long ow = (W - k) / stride + 1;
    Tensor out = make_tensor({C, oh, ow}, x.dtype());
    auto arg = std::make_shared<std::vector<long>>(static_cast<size_t>(C * oh * ow));
    const double* X = x.values().data();
    double* O = out.raw().data();
    for (long c = 0; c < C; ++c)
        for (long oy = 0; oy < oh; ++oy)
            for (long ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                long bi = -1;
                for (long u = 0; u < k; ++u)
                    for (long v = 0; v < k; ++v) {
                        long sy = oy * stride + u, sx = ox * stride + v;
                        double val = X[(c * H + sy) * W + sx];
                        if (val > best) {  // first max wins ties
                            best = val;
                            bi = (c * H + sy) * W + sx;
                        }
                    }
                O[(c * oh + oy) * ow + ox] = best;
                (*arg)[(c * oh + oy) * ow + ox] = bi;
            }
    finish(out);
    if (want_grad(x)) {
        out.set_requires_grad(true);
        Tensor tx = x, to = out;
        Tape::active()->record([tx, to, arg]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* gx = tx.ensure_grad().data();
            for (size_t i = 0; i < go.size(); ++i) gx[(*arg)[i]] += go[i];
        });
    }
    return out;
}

// ---- sampling ----

Tensor grid_sample(const Tensor& values, const Tensor& coords) {
    check(values.defined() && coords.defined(), "grid_sample", "undefined operand");
    check(values.rank() == 3, "grid_sample", "values must be [C,H,W]");
    check(coords.rank() == 2 && coords.dim(1) == 2, "grid_sample",
          "coords must be [N,2], got " + shape_str(coords.shape()));
    long C = values.dim(0), H = values.dim(1), W = values.dim(2);
    long N = coords.dim(0);
    Tensor out = make_tensor({N, C}, promote(values, coords));
    const double* V = values.values().data();
    const double* Q = coords.values().data();
    double* O = out.raw().data();

    auto corners = [H, W](double gx, double gy, long& x0, long& x1, long& y0, long& y1,
                          double& wx, double& wy) {
        double fx = std::floor(gx), fy = std::floor(gy);
        wx = gx - fx;
        wy = gy - fy;
        long cx0 = static_cast<long>(fx), cy0 = static_cast<long>(fy);
        x0 = std::clamp(cx0, 0L, W - 1);
        x1 = std::clamp(cx0 + 1, 0L, W - 1);
        y0 = std::clamp(cy0, 0L, H - 1);
        y1 = std::clamp(cy0 + 1, 0L, H - 1);
    };

    for (long n = 0; n < N; ++n) {
        double gx = Q[n * 2] * W - 0.5;
        double gy = Q[n * 2 + 1] * H - 0.5;
        long x0, x1, y0, y1;
        double wx, wy;
        corners(gx, gy, x0, x1, y0, y1, wx, wy);
        double w00 = (1 - wx) * (1 - wy), w10 = wx * (1 - wy);
        double w01 = (1 - wx) * wy, w11 = wx * wy;
        for (long c = 0; c < C; ++c) {
            const double* p = V + c * H * W;
            O[n * C + c] = w00 * p[y0 * W + x0] + w10 * p[y0 * W + x1] + w01 * p[y1 * W + x0] +
                           w11 * p[y1 * W + x1];
        }
    }
    finish(out);
    if (want_grad(values, coords)) {
        out.set_requires_grad(true);
        Tensor tv = values, tq = coords, to = out;
        Tape::active()->record([tv, tq, to, C, H, W, N, corners]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            const double* V = tv.values().data();
            const double* Q = tq.values().data();
            double* gv = tv.requires_grad() ? tv.ensure_grad().data() : nullptr;
            double* gq = tq.requires_grad() ? tq.ensure_grad().data() : nullptr;
            for (long n = 0; n < N; ++n) {
                double gx = Q[n * 2] * W - 0.5;
                double gy = Q[n * 2 + 1] * H - 0.5;
                long x0, x1, y0, y1;
                double wx, wy;
                corners(gx, gy, x0, x1, y0, y1, wx, wy);
                double w00 = (1 - wx) * (1 - wy), w10 = wx * (1 - wy);
                double w01 = (1 - wx) * wy, w11 = wx * wy;
                double dgx = 0.0, dgy = 0.0;
                for (long c = 0; c < C; ++c) {
                    double g = go[n * C + c];
                    const double* p = V + c * H * W;
                    double v00 = p[y0 * W + x0], v10 = p[y0 * W + x1];
                    double v01 = p[y1 * W + x0], v11 = p[y1 * W + x1];
                    if (gv) {
                        double* q = gv + c * H * W;
                        q[y0 * W + x0] += g * w00;
                        q[y0 * W + x1] += g * w10;
                        q[y1 * W + x0] += g * w01;
                        q[y1 * W + x1] += g * w11;
                    }
                    if (gq) {
                        dgx += g * ((v10 - v00) * (1 - wy) + (v11 - v01) * wy);
                        dgy += g * ((v01 - v00) * (1 - wx) + (v11 - v10) * wx);
                    }
                }
                if (gq) {
                    gq[n * 2] += dgx * W;
                    gq[n * 2 + 1] += dgy * H;
                }
            }
        });
    }
    return out;
}

Tensor resize_bilinear(const Tensor& x, long out_h, long out_w) {
    check(x.defined() && x.rank() >= 2, "resize_bilinear", "input must have trailing H,W axes");
    check(out_h >= 1 && out_w >= 1, "resize_bilinear", "target dims must be >= 1");
    long H = x.dim(-2), W = x.dim(-1);
    long C = x.numel() / (H * W);
    Shape os = x.shape();
    os[os.size() - 2] = out_h;
    os[os.size() - 1] = out_w;
    // separable taps, align_corners=false, borders clamped
    auto taps = [](long in, long out, std::vector<long>& i0, std::vector<long>& i1,
                   std::vector<double>& w) {
        i0.resize(out);
        i1.resize(out);
        w.resize(out);
        double scale = static_cast<double>(in) / out;
        for (long o = 0; o < out; ++o) {
            double s = (o + 0.5) * scale - 0.5;
            double f = std::floor(s);
            long a = static_cast<long>(f);
            w[o] = s - f;
            i0[o] = std::clamp(a, 0L, in - 1);
            i1[o] = std::clamp(a + 1, 0L, in - 1);
        }
    };
    std::vector<long> x0, x1, yy0, yy1;
    std::vector<double> wx, wy;
    taps(W, out_w, x0, x1, wx);
    taps(H, out_h, yy0, yy1, wy);
    Tensor out = make_tensor(os, x.dtype());
    const double* X = x.values().data();
    double* O = out.raw().data();
    for (long c = 0; c < C; ++c) {
        const double* p = X + c * H * W;
        double* q = O + c * out_h * out_w;
        for (long oy = 0; oy < out_h; ++oy) {
            const double* r0 = p + yy0[oy] * W;
            const double* r1 = p + yy1[oy] * W;
            double fy = wy[oy];
            for (long ox = 0; ox < out_w; ++ox) {
                double fx = wx[ox];
                double top = (1 - fx) * r0[x0[ox]] + fx * r0[x1[ox]];
                double bot = (1 - fx) * r1[x0[ox]] + fx * r1[x1[ox]];
                q[oy * out_w + ox] = (1 - fy) * top + fy * bot;
            }
        }
    }
    finish(out);
    if (want_grad(x)) {
        out.set_requires_grad(true);
        Tensor tx = x, to = out;
        Tape::active()->record([tx, to, C, H, W, out_h, out_w, x0, x1, yy0, yy1, wx, wy]() {
            if (!to.has_grad()) return;
            const auto& go = to.grad();
            double* gx = tx.ensure_grad().data();
            for (long c = 0; c < C; ++c) {
                const double* g = go.data() + c * out_h * out_w;
                double* p = gx + c * H * W;
                for (long oy = 0; oy < out_h; ++oy) {
                    double fy = wy[oy];
                    for (long ox = 0; ox < out_w; ++ox) {
                        double fx = wx[ox];
                        double gv = g[oy * out_w + ox];
                        p[yy0[oy] * W + x0[ox]] += gv * (1 - fx) * (1 - fy);
                        p[yy0[oy] * W + x1[ox]] += gv * fx * (1 - fy);
                        p[yy1[oy] * W + x0[ox]] += gv * (1 - fx) * fy;
                        p[yy1[oy] * W + x1[ox]] += gv * fx * fy;
                    }
                }
            }
        });
    }
    return out;
}

// ---- finite differences ----

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
    Tensor xg = x.clone();
    xg.set_requires_grad(true);
    std::vector<double> analytic(static_cast<size_t>(x.numel()), 0.0);
    {
        Tape tape;
        Tensor y = f(xg);
        if (y.numel() != 1) throw std::runtime_error("finite_diff_check: f must return a scalar");
        if (!std::isfinite(y.item()))
            throw std::runtime_error("finite_diff_check: non-finite value of f");
        tape.backward(y);
        if (xg.has_grad()) analytic = xg.grad();
    }
    NoGrad ng;
    double max_rel = 0.0;
    Tensor xp = x.clone();
    long n = x.numel();
    for (long i = 0; i < n; ++i) {
        double orig = xp.raw()[i];
        xp.raw()[i] = orig + eps;
        double fp = f(xp).item();
        xp.raw()[i] = orig - eps;
        double fm = f(xp).item();
        xp.raw()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_check: non-finite value of f");
        double fd = (fp - fm) / (2 * eps);
        double rel = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

}  // namespace focus
