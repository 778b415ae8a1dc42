#pragma once

// Reverse-mode autodiff over dense row-major arrays. Define-by-run: building
// an op runs it eagerly, the tape records inputs and activations, backward
// walks node ids in reverse (construction order is already topological).
// Scalar type is a template parameter: float for training, double for the
// finite-difference gradient checks.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/parallel.hpp"

namespace ltm::ad {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

enum class Op : uint8_t {
    kLeaf,
    kMatmul,
    kTranspose,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kScale,
    kAddScalar,
    kRelu,
    kSoftplus,
    kExp,
    kLog,
    kConcatCols,
    kSliceCols,
    kSliceRows,
    kGatherRows,
    kScatterAddRows,
    kRepeatRows,
    kExpandRow,
    kGroupMaxRows,
    kGroupSumRows,
    kSumAll,
    kMeanAll,
    kSoftmaxCols,
    kGroupSoftmaxRows,
    kLayerNormRows,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kMatmul: return "matmul";
        case Op::kTranspose: return "transpose";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kDiv: return "div";
        case Op::kScale: return "scale";
        case Op::kAddScalar: return "add_scalar";
        case Op::kRelu: return "relu";
        case Op::kSoftplus: return "softplus";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kConcatCols: return "concat_cols";
        case Op::kSliceCols: return "slice_cols";
        case Op::kSliceRows: return "slice_rows";
        case Op::kGatherRows: return "gather_rows";
        case Op::kScatterAddRows: return "scatter_add_rows";
        case Op::kRepeatRows: return "repeat_rows";
        case Op::kExpandRow: return "expand_row";
        case Op::kGroupMaxRows: return "group_max_rows";
        case Op::kGroupSumRows: return "group_sum_rows";
        case Op::kSumAll: return "sum_all";
        case Op::kMeanAll: return "mean_all";
        case Op::kSoftmaxCols: return "softmax_cols";
        case Op::kGroupSoftmaxRows: return "group_softmax_rows";
        case Op::kLayerNormRows: return "layer_norm_rows";
    }
    return "?";
}

namespace detail {

// Bump allocator with stable addresses; reset() keeps capacity so a steady
// training loop stops allocating after the first step.
template <class T>
class Arena {
  public:
    T* alloc(int64_t n) {
        if (n <= 0) n = 1;
        while (chunk_ < static_cast<int64_t>(chunks_.size()) &&
               offset_ + n > sizes_[chunk_]) {
            ++chunk_;
            offset_ = 0;
        }
        if (chunk_ == static_cast<int64_t>(chunks_.size())) {
            int64_t grown = sizes_.empty() ? kMinChunkElems
                                           : std::min<int64_t>(sizes_.back() * 2, kMaxChunkElems);
            int64_t cap = std::max<int64_t>(n, grown);
            chunks_.emplace_back(new T[cap]);  // uninitialized; ops write before reading
            sizes_.push_back(cap);
            offset_ = 0;
        }
        T* p = chunks_[chunk_].get() + offset_;
        offset_ += n;
        return p;
    }

    void reset() {
        chunk_ = 0;
        offset_ = 0;
    }

  private:
    static constexpr int64_t kMinChunkElems = 1 << 12;
    static constexpr int64_t kMaxChunkElems = 1 << 22;
    std::vector<std::unique_ptr<T[]>> chunks_;
    std::vector<int64_t> sizes_;
    int64_t chunk_ = 0;
    int64_t offset_ = 0;
};

}  // namespace detail

template <class T>
class Tape;

template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Shape& shape() const;
    int64_t rows() const;
    int64_t cols() const;
    std::span<const T> value() const;
    std::span<const T> grad() const;
    T scalar_value() const { return value()[0]; }
};

template <class T>
class Tape {
  public:
    struct Node {
        Op op = Op::kLeaf;
        bool requires_grad = false;
        Shape shape;
        int64_t n = 0;
        T* val = nullptr;
        T* grad = nullptr;
        int32_t a = -1, b = -1;
        int64_t i0 = 0, i1 = 0;
        T scalar = 0;
        const int32_t* idx = nullptr;
        int64_t idx_n = 0;
        T* saved = nullptr;
    };

    // -- leaves ------------------------------------------------------------

    Var<T> input(const Shape& shape, const T* data) { return leaf(shape, data, false); }
    Var<T> input(const Shape& shape, std::span<const T> data) {
        check(numel(shape) == static_cast<int64_t>(data.size()), "input", "data size mismatch");
        return leaf(shape, data.data(), false);
    }
    Var<T> param(const Shape& shape, const T* data) { return leaf(shape, data, true); }
    Var<T> param(const Shape& shape, std::span<const T> data) {
        check(numel(shape) == static_cast<int64_t>(data.size()), "param", "data size mismatch");
        return leaf(shape, data.data(), true);
    }
    Var<T> zeros(const Shape& shape) {
        Var<T> v = make(Op::kLeaf, shape, -1, -1, false);
        std::memset(node(v.id).val, 0, sizeof(T) * node(v.id).n);
        return v;
    }

    // -- ops ---------------------------------------------------------------

    Var<T> matmul(Var<T> a, Var<T> b) {
        const Node& na = node(a.id);
        const Node& nb = node(b.id);
        check(na.shape.size() == 2 && nb.shape.size() == 2 && na.shape[1] == nb.shape[0],
              "matmul", "incompatible " + shape_str(na.shape) + " x " + shape_str(nb.shape));
        int64_t m = na.shape[0], k = na.shape[1], n = nb.shape[1];
        Var<T> out = make(Op::kMatmul, {m, n}, a.id, b.id);
        gemm(node(out.id).val, node(a.id).val, node(b.id).val, m, k, n);
        matmul_macs_ += static_cast<uint64_t>(m) * k * n;
        return out;
    }

    Var<T> transpose(Var<T> a) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2, "transpose", "rank-2 required, got " + shape_str(na.shape));
        int64_t m = na.shape[0], n = na.shape[1];
        Var<T> out = make(Op::kTranspose, {n, m}, a.id);
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
        return out;
    }

    Var<T> add(Var<T> a, Var<T> b) { return binary(Op::kAdd, a, b); }
    Var<T> sub(Var<T> a, Var<T> b) { return binary(Op::kSub, a, b); }
    Var<T> mul(Var<T> a, Var<T> b) { return binary(Op::kMul, a, b); }
    Var<T> div(Var<T> a, Var<T> b) { return binary(Op::kDiv, a, b); }

    Var<T> scale(Var<T> a, T c) {
        Var<T> out = unary_like(Op::kScale, a);
        node(out.id).scalar = c;
        apply(a, out, [c](T x) { return c * x; });
        return out;
    }

    Var<T> add_scalar(Var<T> a, T c) {
        Var<T> out = unary_like(Op::kAddScalar, a);
        node(out.id).scalar = c;
        apply(a, out, [c](T x) { return x + c; });
        return out;
    }

    Var<T> relu(Var<T> a) {
        Var<T> out = unary_like(Op::kRelu, a);
        apply(a, out, [](T x) { return x > 0 ? x : T(0); });
        return out;
    }

    Var<T> softplus(Var<T> a) {
        Var<T> out = unary_like(Op::kSoftplus, a);
        apply(a, out, [](T x) {
            return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        });
        return out;
    }

    Var<T> exp(Var<T> a) {
        Var<T> out = unary_like(Op::kExp, a);
        apply(a, out, [](T x) { return std::exp(x); });
        return out;
    }

    Var<T> log(Var<T> a) {
        Var<T> out = unary_like(Op::kLog, a);
        apply(a, out, [](T x) { return std::log(x); });
        return out;
    }

    Var<T> concat_cols(Var<T> a, Var<T> b) {
        const Node& na = node(a.id);
        const Node& nb = node(b.id);
        check(na.shape.size() == 2 && nb.shape.size() == 2 && na.shape[0] == nb.shape[0],
              "concat_cols", "row mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
        int64_t m = na.shape[0], ca = na.shape[1], cb = nb.shape[1];
        Var<T> out = make(Op::kConcatCols, {m, ca + cb}, a.id, b.id);
        T* dst = node(out.id).val;
        const T* pa = node(a.id).val;
        const T* pb = node(b.id).val;
        for (int64_t i = 0; i < m; ++i) {
            std::memcpy(dst + i * (ca + cb), pa + i * ca, sizeof(T) * ca);
            std::memcpy(dst + i * (ca + cb) + ca, pb + i * cb, sizeof(T) * cb);
        }
        return out;
    }

    Var<T> slice_cols(Var<T> a, int64_t begin, int64_t len) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && begin >= 0 && len >= 1 && begin + len <= na.shape[1],
              "slice_cols", "range out of bounds in " + shape_str(na.shape));
        int64_t m = na.shape[0], c = na.shape[1];
        Var<T> out = make(Op::kSliceCols, {m, len}, a.id);
        node(out.id).i0 = begin;
        node(out.id).i1 = len;
        T* dst = node(out.id).val;
        const T* src = node(a.id).val;
        for (int64_t i = 0; i < m; ++i)
            std::memcpy(dst + i * len, src + i * c + begin, sizeof(T) * len);
        return out;
    }

    Var<T> slice_rows(Var<T> a, int64_t begin, int64_t len) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && begin >= 0 && len >= 1 && begin + len <= na.shape[0],
              "slice_rows", "range out of bounds in " + shape_str(na.shape));
        int64_t c = na.shape[1];
        Var<T> out = make(Op::kSliceRows, {len, c}, a.id);
        node(out.id).i0 = begin;
        node(out.id).i1 = len;
        std::memcpy(node(out.id).val, node(a.id).val + begin * c, sizeof(T) * len * c);
        return out;
    }

    Var<T> gather_rows(Var<T> a, std::span<const int32_t> idx) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2, "gather_rows", "rank-2 required");
        int64_t rows = na.shape[0], c = na.shape[1];
        for (int32_t i : idx)
            check(i >= 0 && i < rows, "gather_rows", "index out of range");
        Var<T> out = make(Op::kGatherRows, {static_cast<int64_t>(idx.size()), c}, a.id);
        Node& no = node(out.id);
        no.idx = copy_idx(idx);
        no.idx_n = static_cast<int64_t>(idx.size());
        const T* src = node(a.id).val;
        T* dst = no.val;
        for (size_t i = 0; i < idx.size(); ++i)
            std::memcpy(dst + i * c, src + static_cast<int64_t>(idx[i]) * c, sizeof(T) * c);
        return out;
    }

    Var<T> scatter_add_rows(Var<T> a, std::span<const int32_t> idx, int64_t out_rows) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && na.shape[0] == static_cast<int64_t>(idx.size()),
              "scatter_add_rows", "rows must equal index count");
        for (int32_t i : idx)
            check(i >= 0 && i < out_rows, "scatter_add_rows", "index out of range");
        int64_t c = na.shape[1];
        Var<T> out = make(Op::kScatterAddRows, {out_rows, c}, a.id);
        Node& no = node(out.id);
        no.idx = copy_idx(idx);
        no.idx_n = static_cast<int64_t>(idx.size());
        std::memset(no.val, 0, sizeof(T) * no.n);
        const T* src = node(a.id).val;
        for (size_t i = 0; i < idx.size(); ++i) {
            T* dst = no.val + static_cast<int64_t>(idx[i]) * c;
            for (int64_t j = 0; j < c; ++j) dst[j] += src[i * c + j];
        }
        return out;
    }

    Var<T> repeat_rows(Var<T> a, int64_t k) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && k >= 1, "repeat_rows", "rank-2 and k>=1 required");
        int64_t m = na.shape[0], c = na.shape[1];
        Var<T> out = make(Op::kRepeatRows, {m * k, c}, a.id);
        node(out.id).i0 = k;
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < k; ++j)
                std::memcpy(dst + (i * k + j) * c, src + i * c, sizeof(T) * c);
        return out;
    }

    Var<T> expand_row(Var<T> a, int64_t rows) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && na.shape[0] == 1 && rows >= 1, "expand_row",
              "1-row input required, got " + shape_str(na.shape));
        int64_t c = na.shape[1];
        Var<T> out = make(Op::kExpandRow, {rows, c}, a.id);
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t i = 0; i < rows; ++i) std::memcpy(dst + i * c, src, sizeof(T) * c);
        return out;
    }

    // Max over each group of k consecutive rows; ties resolve to the lowest
    // row index so the subgradient routing is deterministic.
    Var<T> group_max_rows(Var<T> a, int64_t k) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && k >= 1 && na.shape[0] % k == 0, "group_max_rows",
              "rows of " + shape_str(na.shape) + " must divide by group " + std::to_string(k));
        int64_t g = na.shape[0] / k, c = na.shape[1];
        Var<T> out = make(Op::kGroupMaxRows, {g, c}, a.id);
        Node& no = node(out.id);
        no.i0 = k;
        no.saved = arena_.alloc(g * c);  // argmax row offsets, stored as T
        const T* src = node(a.id).val;
        T* dst = no.val;
        for (int64_t gi = 0; gi < g; ++gi) {
            for (int64_t j = 0; j < c; ++j) {
                T best = src[(gi * k) * c + j];
                int64_t arg = 0;
                for (int64_t r = 1; r < k; ++r) {
                    T v = src[(gi * k + r) * c + j];
                    if (v > best) {
                        best = v;
                        arg = r;
                    }
                }
                dst[gi * c + j] = best;
                no.saved[gi * c + j] = static_cast<T>(arg);
            }
        }
        return out;
    }

    Var<T> group_sum_rows(Var<T> a, int64_t k) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && k >= 1 && na.shape[0] % k == 0, "group_sum_rows",
              "rows of " + shape_str(na.shape) + " must divide by group " + std::to_string(k));
        int64_t g = na.shape[0] / k, c = na.shape[1];
        Var<T> out = make(Op::kGroupSumRows, {g, c}, a.id);
        node(out.id).i0 = k;
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t gi = 0; gi < g; ++gi) {
            for (int64_t j = 0; j < c; ++j) {
                T s = 0;
                for (int64_t r = 0; r < k; ++r) s += src[(gi * k + r) * c + j];
                dst[gi * c + j] = s;
            }
        }
        return out;
    }

    Var<T> sum_all(Var<T> a) {
        Var<T> out = make(Op::kSumAll, {1}, a.id);
        const Node& na = node(a.id);
        T s = 0;
        for (int64_t i = 0; i < na.n; ++i) s += na.val[i];
        node(out.id).val[0] = s;
        return out;
    }

    Var<T> mean_all(Var<T> a) {
        Var<T> out = make(Op::kMeanAll, {1}, a.id);
        const Node& na = node(a.id);
        T s = 0;
        for (int64_t i = 0; i < na.n; ++i) s += na.val[i];
        node(out.id).val[0] = s / static_cast<T>(na.n);
        return out;
    }

    // Softmax along the last axis (per row).
    Var<T> softmax_cols(Var<T> a) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2, "softmax_cols", "rank-2 required");
        int64_t m = na.shape[0], c = na.shape[1];
        Var<T> out = make(Op::kSoftmaxCols, {m, c}, a.id);
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t i = 0; i < m; ++i) {
            const T* row = src + i * c;
            T* orow = dst + i * c;
            T mx = row[0];
            for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            T s = 0;
            for (int64_t j = 0; j < c; ++j) {
                orow[j] = std::exp(row[j] - mx);
                s += orow[j];
            }
            T inv = T(1) / s;
            for (int64_t j = 0; j < c; ++j) orow[j] *= inv;
        }
        return out;
    }

    // Softmax down each column within consecutive groups of k rows.
    Var<T> group_softmax_rows(Var<T> a, int64_t k) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2 && k >= 1 && na.shape[0] % k == 0, "group_softmax_rows",
              "rows of " + shape_str(na.shape) + " must divide by group " + std::to_string(k));
        int64_t g = na.shape[0] / k, c = na.shape[1];
        Var<T> out = make(Op::kGroupSoftmaxRows, {g * k, c}, a.id);
        node(out.id).i0 = k;
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        for (int64_t gi = 0; gi < g; ++gi) {
            const T* blk = src + gi * k * c;
            T* oblk = dst + gi * k * c;
            for (int64_t j = 0; j < c; ++j) {
                T mx = blk[j];
                for (int64_t r = 1; r < k; ++r) mx = std::max(mx, blk[r * c + j]);
                T s = 0;
                for (int64_t r = 0; r < k; ++r) {
                    T e = std::exp(blk[r * c + j] - mx);
                    oblk[r * c + j] = e;
                    s += e;
                }
                T inv = T(1) / s;
                for (int64_t r = 0; r < k; ++r) oblk[r * c + j] *= inv;
            }
        }
        return out;
    }

    // Per-row normalization to zero mean / unit variance (no affine part).
    Var<T> layer_norm_rows(Var<T> a, T eps = T(1e-5)) {
        const Node& na = node(a.id);
        check(na.shape.size() == 2, "layer_norm_rows", "rank-2 required");
        int64_t m = na.shape[0], c = na.shape[1];
        Var<T> out = make(Op::kLayerNormRows, {m, c}, a.id);
        Node& no = node(out.id);
        no.scalar = eps;
        no.saved = arena_.alloc(2 * m);  // mean, inv_std per row
        const T* src = node(a.id).val;
        T* dst = no.val;
        for (int64_t i = 0; i < m; ++i) {
            const T* row = src + i * c;
            T mu = 0;
            for (int64_t j = 0; j < c; ++j) mu += row[j];
            mu /= static_cast<T>(c);
            T var = 0;
            for (int64_t j = 0; j < c; ++j) {
                T d = row[j] - mu;
                var += d * d;
            }
            var /= static_cast<T>(c);
            T inv_std = T(1) / std::sqrt(var + eps);
            no.saved[2 * i] = mu;
            no.saved[2 * i + 1] = inv_std;
            for (int64_t j = 0; j < c; ++j) dst[i * c + j] = (row[j] - mu) * inv_std;
        }
        return out;
    }

    // -- backward ----------------------------------------------------------

    // Seeds the root gradient (ones, or output_grad when given) and
    // accumulates into every reachable node that requires grad.
    void backward(Var<T> root, const T* output_grad = nullptr) {
        if (!root.valid() || root.id >= static_cast<int32_t>(nodes_.size()))
            throw std::runtime_error("backward: no forward graph for this output");
        if (output_grad == nullptr)
            check(node(root.id).n == 1, "backward",
                  "scalar root required when no output gradient is given");

        std::vector<uint8_t> needed(root.id + 1, 0);
        needed[root.id] = 1;
        for (int32_t i = root.id; i >= 0; --i) {
            if (!needed[i]) continue;
            Node& nd = nodes_[i];
            if (!nd.requires_grad) {
                needed[i] = 0;
                continue;
            }
            if (nd.a >= 0 && nodes_[nd.a].requires_grad) needed[nd.a] = 1;
            if (nd.b >= 0 && nodes_[nd.b].requires_grad) needed[nd.b] = 1;
        }
        for (int32_t i = 0; i <= root.id; ++i) {
            if (!needed[i]) continue;
            Node& nd = nodes_[i];
            nd.grad = arena_.alloc(nd.n);
            std::memset(nd.grad, 0, sizeof(T) * nd.n);
        }
        if (!needed[root.id]) return;  // root does not depend on any parameter
        {
            Node& nr = node(root.id);
            if (output_grad)
                std::memcpy(nr.grad, output_grad, sizeof(T) * nr.n);
            else
                nr.grad[0] = T(1);
        }
        for (int32_t i = root.id; i >= 0; --i) {
            if (!needed[i]) continue;
            backprop(nodes_[i]);
        }
        has_grads_ = true;
    }

    // -- access ------------------------------------------------------------

    Node& node(int32_t id) { return nodes_[id]; }
    const Node& node(int32_t id) const { return nodes_[id]; }
    size_t size() const { return nodes_.size(); }
    bool has_grads() const { return has_grads_; }
    uint64_t matmul_macs() const { return matmul_macs_; }

    void reset() {
        nodes_.clear();
        arena_.reset();
        idx_arena_.reset();
        has_grads_ = false;
    }

  private:
    static void check(bool ok, const char* op, const std::string& msg) {
        if (!ok) throw std::runtime_error(std::string(op) + ": " + msg);
    }

    Var<T> make(Op op, const Shape& shape, int32_t a, int32_t b = -1, bool force_grad = false) {
        Node nd;
        nd.op = op;
        nd.shape = shape;
        nd.n = numel(shape);
        nd.a = a;
        nd.b = b;
        nd.requires_grad = force_grad || (a >= 0 && nodes_[a].requires_grad) ||
                           (b >= 0 && nodes_[b].requires_grad);
        nd.val = arena_.alloc(nd.n);
        nodes_.push_back(std::move(nd));
        return Var<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    Var<T> leaf(const Shape& shape, const T* data, bool requires_grad) {
        Var<T> v = make(Op::kLeaf, shape, -1, -1, requires_grad);
        std::memcpy(node(v.id).val, data, sizeof(T) * node(v.id).n);
        return v;
    }

    Var<T> unary_like(Op op, Var<T> a) { return make(op, node(a.id).shape, a.id); }

    Var<T> binary(Op op, Var<T> a, Var<T> b) {
        const Node& na = node(a.id);
        const Node& nb = node(b.id);
        check(na.shape == nb.shape, op_name(op),
              "shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
        Var<T> out = make(op, na.shape, a.id, b.id);
        const T* pa = node(a.id).val;
        const T* pb = node(b.id).val;
        T* po = node(out.id).val;
        int64_t n = node(out.id).n;
        switch (op) {
            case Op::kAdd: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
            case Op::kSub: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
            case Op::kMul: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
            case Op::kDiv: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i]; break;
            default: check(false, op_name(op), "not a binary op");
        }
        return out;
    }

    template <class F>
    void apply(Var<T> a, Var<T> out, F&& f) {
        const T* src = node(a.id).val;
        T* dst = node(out.id).val;
        int64_t n = node(out.id).n;
        for (int64_t i = 0; i < n; ++i) dst[i] = f(src[i]);
    }

    const int32_t* copy_idx(std::span<const int32_t> idx) {
        int32_t* p = idx_arena_.alloc(static_cast<int64_t>(idx.size()));
        std::memcpy(p, idx.data(), sizeof(int32_t) * idx.size());
        return p;
    }

    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;

    // C = A*B with rows of A statically sharded across the pool. For a fixed
    // shard layout the per-element accumulation order is fixed, so repeated
    // runs at the same thread count are bitwise identical.
    void gemm(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n) {
        if (m * n * k < (1 << 16) || m == 1) {
            MMap(c, m, n).noalias() = CMap(a, m, k) * CMap(b, k, n);
            return;
        }
        parallel_for_ranges(m, [&](int64_t lo, int64_t hi) {
            MMap(c + lo * n, hi - lo, n).noalias() =
                CMap(a + lo * k, hi - lo, k) * CMap(b, k, n);
        });
    }

    void gemm_acc(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n) {
        if (m * n * k < (1 << 16) || m == 1) {
            MMap(c, m, n).noalias() += CMap(a, m, k) * CMap(b, k, n);
            return;
        }
        parallel_for_ranges(m, [&](int64_t lo, int64_t hi) {
            MMap(c + lo * n, hi - lo, n).noalias() +=
                CMap(a + lo * k, hi - lo, k) * CMap(b, k, n);
        });
    }

    void backprop(Node& nd) {
        const T* g = nd.grad;
        Node* na = nd.a >= 0 ? &nodes_[nd.a] : nullptr;
        Node* nb = nd.b >= 0 ? &nodes_[nd.b] : nullptr;
        T* ga = (na && na->grad) ? na->grad : nullptr;
        T* gb = (nb && nb->grad) ? nb->grad : nullptr;
        switch (nd.op) {
            case Op::kLeaf:
                break;
            case Op::kMatmul: {
                int64_t m = nd.shape[0], n = nd.shape[1], k = na->shape[1];
                if (ga) {  // dA += dC * B^T
                    if (m * n * k < (1 << 16)) {
                        MMap(ga, m, k).noalias() += CMap(g, m, n) * CMap(nb->val, k, n).transpose();
                    } else {
                        parallel_for_ranges(m, [&](int64_t lo, int64_t hi) {
                            MMap(ga + lo * k, hi - lo, k).noalias() +=
                                CMap(g + lo * n, hi - lo, n) * CMap(nb->val, k, n).transpose();
                        });
                    }
                }
                if (gb) {  // dB += A^T * dC, sharded over rows of dB
                    if (m * n * k < (1 << 16)) {
                        MMap(gb, k, n).noalias() += CMap(na->val, m, k).transpose() * CMap(g, m, n);
                    } else {
                        parallel_for_ranges(k, [&](int64_t lo, int64_t hi) {
                            MMap(gb + lo * n, hi - lo, n).noalias() +=
                                CMap(na->val, m, k).middleCols(lo, hi - lo).transpose() *
                                CMap(g, m, n);
                        });
                    }
                }
                break;
            }
            case Op::kTranspose: {
                if (!ga) break;
                int64_t m = nd.shape[0], n = nd.shape[1];  // nd is n(a) transposed
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) ga[j * m + i] += g[i * n + j];
                break;
            }
            case Op::kAdd:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i];
                if (gb) for (int64_t i = 0; i < nd.n; ++i) gb[i] += g[i];
                break;
            case Op::kSub:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i];
                if (gb) for (int64_t i = 0; i < nd.n; ++i) gb[i] -= g[i];
                break;
            case Op::kMul:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i] * nb->val[i];
                if (gb) for (int64_t i = 0; i < nd.n; ++i) gb[i] += g[i] * na->val[i];
                break;
            case Op::kDiv:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i] / nb->val[i];
                if (gb)
                    for (int64_t i = 0; i < nd.n; ++i)
                        gb[i] -= g[i] * na->val[i] / (nb->val[i] * nb->val[i]);
                break;
            case Op::kScale:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += nd.scalar * g[i];
                break;
            case Op::kAddScalar:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i];
                break;
            case Op::kRelu:
                if (ga)
                    for (int64_t i = 0; i < nd.n; ++i)
                        if (na->val[i] > 0) ga[i] += g[i];
                break;
            case Op::kSoftplus:
                if (ga)
                    for (int64_t i = 0; i < nd.n; ++i)
                        ga[i] += g[i] / (T(1) + std::exp(-na->val[i]));
                break;
            case Op::kExp:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i] * nd.val[i];
                break;
            case Op::kLog:
                if (ga) for (int64_t i = 0; i < nd.n; ++i) ga[i] += g[i] / na->val[i];
                break;
            case Op::kConcatCols: {
                int64_t m = nd.shape[0], ca = na->shape[1], cb = nb->shape[1];
                if (ga)
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
                if (gb)
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < cb; ++j)
                            gb[i * cb + j] += g[i * (ca + cb) + ca + j];
                break;
            }
            case Op::kSliceCols: {
                if (!ga) break;
                int64_t m = nd.shape[0], len = nd.i1, c = na->shape[1], begin = nd.i0;
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < len; ++j) ga[i * c + begin + j] += g[i * len + j];
                break;
            }
            case Op::kSliceRows: {
                if (!ga) break;
                int64_t c = na->shape[1];
                for (int64_t i = 0; i < nd.i1 * c; ++i) ga[nd.i0 * c + i] += g[i];
                break;
            }
            case Op::kGatherRows: {
                if (!ga) break;
                int64_t c = na->shape[1];
                for (int64_t i = 0; i < nd.idx_n; ++i) {
                    T* dst = ga + static_cast<int64_t>(nd.idx[i]) * c;
                    for (int64_t j = 0; j < c; ++j) dst[j] += g[i * c + j];
                }
                break;
            }
            case Op::kScatterAddRows: {
                if (!ga) break;
                int64_t c = na->shape[1];
                for (int64_t i = 0; i < nd.idx_n; ++i) {
                    const T* src = g + static_cast<int64_t>(nd.idx[i]) * c;
                    for (int64_t j = 0; j < c; ++j) ga[i * c + j] += src[j];
                }
                break;
            }
            case Op::kRepeatRows: {
                if (!ga) break;
                int64_t k = nd.i0, m = na->shape[0], c = na->shape[1];
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t r = 0; r < k; ++r)
                        for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g[(i * k + r) * c + j];
                break;
            }
            case Op::kExpandRow: {
                if (!ga) break;
                int64_t rows = nd.shape[0], c = nd.shape[1];
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < c; ++j) ga[j] += g[i * c + j];
                break;
            }
            case Op::kGroupMaxRows: {
                if (!ga) break;
                int64_t k = nd.i0, gcount = nd.shape[0], c = nd.shape[1];
                for (int64_t gi = 0; gi < gcount; ++gi)
                    for (int64_t j = 0; j < c; ++j) {
                        int64_t arg = static_cast<int64_t>(nd.saved[gi * c + j]);
                        ga[(gi * k + arg) * c + j] += g[gi * c + j];
                    }
                break;
            }
            case Op::kGroupSumRows: {
                if (!ga) break;
                int64_t k = nd.i0, gcount = nd.shape[0], c = nd.shape[1];
                for (int64_t gi = 0; gi < gcount; ++gi)
                    for (int64_t r = 0; r < k; ++r)
                        for (int64_t j = 0; j < c; ++j)
                            ga[(gi * k + r) * c + j] += g[gi * c + j];
                break;
            }
            case Op::kSumAll:
                if (ga) for (int64_t i = 0; i < na->n; ++i) ga[i] += g[0];
                break;
            case Op::kMeanAll: {
                if (!ga) break;
                T s = g[0] / static_cast<T>(na->n);
                for (int64_t i = 0; i < na->n; ++i) ga[i] += s;
                break;
            }
            case Op::kSoftmaxCols: {
                if (!ga) break;
                int64_t m = nd.shape[0], c = nd.shape[1];
                for (int64_t i = 0; i < m; ++i) {
                    const T* s = nd.val + i * c;
                    const T* gr = g + i * c;
                    T dotv = 0;
                    for (int64_t j = 0; j < c; ++j) dotv += s[j] * gr[j];
                    for (int64_t j = 0; j < c; ++j) ga[i * c + j] += s[j] * (gr[j] - dotv);
                }
                break;
            }
            case Op::kGroupSoftmaxRows: {
                if (!ga) break;
                int64_t k = nd.i0, gcount = nd.shape[0] / k, c = nd.shape[1];
                for (int64_t gi = 0; gi < gcount; ++gi) {
                    const T* s = nd.val + gi * k * c;
                    const T* gr = g + gi * k * c;
                    T* go = ga + gi * k * c;
                    for (int64_t j = 0; j < c; ++j) {
                        T dotv = 0;
                        for (int64_t r = 0; r < k; ++r) dotv += s[r * c + j] * gr[r * c + j];
                        for (int64_t r = 0; r < k; ++r)
                            go[r * c + j] += s[r * c + j] * (gr[r * c + j] - dotv);
                    }
                }
                break;
            }
            case Op::kLayerNormRows: {
                if (!ga) break;
                int64_t m = nd.shape[0], c = nd.shape[1];
                for (int64_t i = 0; i < m; ++i) {
                    T inv_std = nd.saved[2 * i + 1];
                    const T* y = nd.val + i * c;  // normalized output
                    const T* gr = g + i * c;
                    T mean_g = 0, mean_gy = 0;
                    for (int64_t j = 0; j < c; ++j) {
                        mean_g += gr[j];
                        mean_gy += gr[j] * y[j];
                    }
                    mean_g /= static_cast<T>(c);
                    mean_gy /= static_cast<T>(c);
                    for (int64_t j = 0; j < c; ++j)
                        ga[i * c + j] += inv_std * (gr[j] - mean_g - y[j] * mean_gy);
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    detail::Arena<T> arena_;
    detail::Arena<int32_t> idx_arena_;
    bool has_grads_ = false;
    uint64_t matmul_macs_ = 0;
};

template <class T>
const Shape& Var<T>::shape() const { return tape->node(id).shape; }
template <class T>
int64_t Var<T>::rows() const { return shape()[0]; }
template <class T>
int64_t Var<T>::cols() const { return shape().size() > 1 ? shape()[1] : 1; }
template <class T>
std::span<const T> Var<T>::value() const {
    const auto& nd = tape->node(id);
    return {nd.val, static_cast<size_t>(nd.n)};
}
template <class T>
std::span<const T> Var<T>::grad() const {
    const auto& nd = tape->node(id);
    if (nd.grad == nullptr)
        throw std::runtime_error("grad: backward has not run for this node");
    return {nd.grad, static_cast<size_t>(nd.n)};
}

template <class T> Var<T> operator+(Var<T> a, Var<T> b) { return a.tape->add(a, b); }
template <class T> Var<T> operator-(Var<T> a, Var<T> b) { return a.tape->sub(a, b); }
template <class T> Var<T> operator*(Var<T> a, Var<T> b) { return a.tape->mul(a, b); }
template <class T> Var<T> operator/(Var<T> a, Var<T> b) { return a.tape->div(a, b); }
template <class T> Var<T> operator*(Var<T> a, T c) { return a.tape->scale(a, c); }
template <class T> Var<T> operator*(T c, Var<T> a) { return a.tape->scale(a, c); }

}  // namespace ltm::ad
