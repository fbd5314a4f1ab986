#pragma once

// Minimal dense-tensor reverse-mode autodiff. Nodes hold flat row-major
// float/double storage; ops record backward closures on a Tape that replays
// them in exact reverse execution order. One tape per training context.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "lrnmt/common.hpp"

namespace lrnmt {

inline std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

template <class T>
struct TapeNode {
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::string name;  // parameters only
    std::function<void()> backprop;

    std::size_t numel() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    void zero_grad() { grad.clear(); }
};

template <class T>
using Var = std::shared_ptr<TapeNode<T>>;

template <class T>
Var<T> make_leaf(std::vector<std::size_t> shape, std::vector<T> data) {
    if (numel_of(shape) != data.size())
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto node = std::make_shared<TapeNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return node;
}

template <class T>
Var<T> make_param(std::vector<std::size_t> shape, std::vector<T> data, std::string name) {
    Var<T> node = make_leaf<T>(std::move(shape), std::move(data));
    node->requires_grad = true;
    node->name = std::move(name);
    return node;
}

template <class T>
Var<T> make_scalar(T v) {
    return make_leaf<T>({1}, {v});
}

template <class T>
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    void record(const Var<T>& node) {
        if (recording_ && node->backprop) order_.push_back(node);
    }

    // Seeds d(loss)/d(loss) = 1 and replays closures in reverse order.
    void backward(const Var<T>& loss) {
        if (ran_) throw DataError("backward already ran on this tape; reset it first");
        if (loss->numel() != 1)
            throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss->shape));
        ran_ = true;
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) (*it)->backprop();
    }

    void reset() {
        order_.clear();
        ran_ = false;
    }

    std::size_t size() const { return order_.size(); }

  private:
    std::vector<Var<T>> order_;
    bool recording_;
    bool ran_ = false;
};

namespace detail {

// C(M,N) += A(M,K) * B(K,N)
template <class T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(M,K) += A(M,N) * B(K,N)^T
template <class T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C(K,N) += A(M,K)^T * B(M,N)
template <class T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

}  // namespace detail

// --- core operators --------------------------------------------------------

template <class T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    const auto& as = a->shape;
    const auto& bs = b->shape;
    const bool b_broadcast = bs.size() == 2 && as.size() >= 2;
    const bool batched = !b_broadcast && as.size() == bs.size() && as.size() >= 3;
    if (as.size() < 2 || (!b_broadcast && !batched))
        throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
    const std::size_t m = as[as.size() - 2];
    const std::size_t k = as[as.size() - 1];
    const std::size_t kb = bs[bs.size() - 2];
    const std::size_t n = bs[bs.size() - 1];
    if (k != kb) throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < as.size(); ++i) {
        batch *= as[i];
        if (batched && as[i] != bs[i])
            throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
    }

    std::vector<std::size_t> out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(n);
    Var<T> out = make_leaf<T>(out_shape, std::vector<T>(batch * m * n, T(0)));
    for (std::size_t p = 0; p < batch; ++p)
        detail::mm_nn(a->value.data() + p * m * k, b->value.data() + (b_broadcast ? 0 : p * kb * n),
                      out->value.data() + p * m * n, m, k, n);

    if (tape.recording() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, b, o, batch, m, k, n, b_broadcast] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t p = 0; p < batch; ++p)
                    detail::mm_nt(o->grad.data() + p * m * n,
                                  b->value.data() + (b_broadcast ? 0 : p * k * n),
                                  a->grad.data() + p * m * k, m, n, k);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t p = 0; p < batch; ++p)
                    detail::mm_tn(a->value.data() + p * m * k, o->grad.data() + p * m * n,
                                  b->grad.data() + (b_broadcast ? 0 : p * k * n), m, k, n);
            }
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    const bool bias = b->shape.size() == 1 && !a->shape.empty() &&
                      b->shape[0] == a->shape.back() && a->shape != b->shape;
    if (!bias && a->shape != b->shape)
        throw ShapeError("add: incompatible shapes " + shape_str(a->shape) + " + " +
                         shape_str(b->shape));
    Var<T> out = make_leaf<T>(a->shape, a->value);
    const std::size_t last = bias ? b->shape[0] : 0;
    if (bias) {
        for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] += b->value[i % last];
    } else {
        for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] += b->value[i];
    }
    if (tape.recording() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, b, o, bias, last] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                if (bias) {
                    for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i % last] += o->grad[i];
                } else {
                    for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
                }
            }
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    if (a->shape != b->shape)
        throw ShapeError("mul: incompatible shapes " + shape_str(a->shape) + " * " +
                         shape_str(b->shape));
    Var<T> out = make_leaf<T>(a->shape, a->value);
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] *= b->value[i];
    if (tape.recording() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, b, o] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    a->grad[i] += o->grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i)
                    b->grad[i] += o->grad[i] * a->value[i];
            }
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, double s) {
    Var<T> out = make_leaf<T>(a->shape, a->value);
    for (T& v : out->value) v = static_cast<T>(v * s);
    if (tape.recording() && a->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, o, s] {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                a->grad[i] += static_cast<T>(o->grad[i] * s);
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> swap_axes(Tape<T>& tape, const Var<T>& a, std::size_t ax0, std::size_t ax1) {
    if (ax0 >= a->shape.size() || ax1 >= a->shape.size())
        throw ShapeError("swap_axes: axes out of range for shape " + shape_str(a->shape));
    std::vector<std::size_t> out_shape = a->shape;
    std::swap(out_shape[ax0], out_shape[ax1]);

    const auto in_strides = detail::strides_of(a->shape);
    const auto out_strides = detail::strides_of(out_shape);
    auto permute = [&, ax0, ax1](const std::vector<T>& src, std::vector<T>& dst) {
        const std::size_t rank = a->shape.size();
        std::vector<std::size_t> idx(rank, 0);
        for (std::size_t flat = 0; flat < src.size(); ++flat) {
            std::size_t off = 0;
            for (std::size_t d = 0; d < rank; ++d) {
                std::size_t od = d == ax0 ? ax1 : d == ax1 ? ax0 : d;
                off += idx[d] * out_strides[od];
            }
            dst[off] = src[flat];
            for (std::size_t d = rank; d-- > 0;) {
                if (++idx[d] < a->shape[d]) break;
                idx[d] = 0;
            }
        }
    };
    Var<T> out = make_leaf<T>(out_shape, std::vector<T>(a->numel()));
    permute(a->value, out->value);

    if (tape.recording() && a->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        const auto shape = a->shape;
        out->backprop = [a, o, ax0, ax1, shape] {
            a->ensure_grad();
            // inverse of a transposition is itself
            const auto g_strides = detail::strides_of(o->shape);
            const auto a_strides = detail::strides_of(shape);
            const std::size_t rank = shape.size();
            std::vector<std::size_t> idx(rank, 0);
            for (std::size_t flat = 0; flat < o->grad.size(); ++flat) {
                std::size_t off = 0;  // position in o->grad for index of a
                for (std::size_t d = 0; d < rank; ++d) {
                    std::size_t od = d == ax0 ? ax1 : d == ax1 ? ax0 : d;
                    off += idx[d] * g_strides[od];
                }
                a->grad[flat] += o->grad[off];
                for (std::size_t d = rank; d-- > 0;) {
                    if (++idx[d] < shape[d]) break;
                    idx[d] = 0;
                }
            }
            (void)a_strides;
        };
        tape.record(out);
    }
    return out;
}

// Swaps the last two axes.
template <class T>
Var<T> transpose(Tape<T>& tape, const Var<T>& a) {
    if (a->shape.size() < 2)
        throw ShapeError("transpose needs rank >= 2, got " + shape_str(a->shape));
    return swap_axes(tape, a, a->shape.size() - 2, a->shape.size() - 1);
}

template <class T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, std::vector<std::size_t> shape) {
    if (numel_of(shape) != a->numel())
        throw ShapeError("reshape: cannot view " + shape_str(a->shape) + " as " + shape_str(shape));
    Var<T> out = make_leaf<T>(std::move(shape), a->value);
    if (tape.recording() && a->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, o] {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> concat(Tape<T>& tape, const std::vector<Var<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const std::size_t rank = parts[0]->shape.size();
    if (axis >= rank) throw ShapeError("concat: axis out of range for " + shape_str(parts[0]->shape));
    std::vector<std::size_t> out_shape = parts[0]->shape;
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const auto& s = parts[p]->shape;
        if (s.size() != rank)
            throw ShapeError("concat: rank mismatch " + shape_str(parts[0]->shape) + " vs " +
                             shape_str(s));
        for (std::size_t d = 0; d < rank; ++d)
            if (d != axis && s[d] != out_shape[d])
                throw ShapeError("concat: incompatible shapes " + shape_str(parts[0]->shape) +
                                 " vs " + shape_str(s));
        out_shape[axis] += s[axis];
    }

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    Var<T> out = make_leaf<T>(out_shape, std::vector<T>(numel_of(out_shape)));
    std::size_t col = 0;
    for (const auto& part : parts) {
        const std::size_t width = part->shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(part->value.data() + o * width, width,
                        out->value.data() + o * out_shape[axis] * inner + col);
        col += width;
    }

    bool any_grad = false;
    for (const auto& part : parts) any_grad = any_grad || part->requires_grad;
    if (tape.recording() && any_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        const std::size_t total = out_shape[axis] * inner;
        auto inputs = parts;
        out->backprop = [inputs, o, outer, inner, total, axis] {
            std::size_t col = 0;
            for (const auto& part : inputs) {
                const std::size_t width = part->shape[axis] * inner;
                if (part->requires_grad) {
                    part->ensure_grad();
                    for (std::size_t ob = 0; ob < outer; ++ob) {
                        const T* src = o->grad.data() + ob * total + col;
                        T* dst = part->grad.data() + ob * width;
                        for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                    }
                }
                col += width;
            }
        };
        tape.record(out);
    }
    return out;
}

// ids index rows of table (V, D); out shape = ids_shape + [D].
template <class T>
Var<T> embedding_lookup(Tape<T>& tape, const Var<T>& table, const std::vector<int>& ids,
                        std::vector<std::size_t> ids_shape) {
    if (table->shape.size() != 2)
        throw ShapeError("embedding_lookup: table must be rank 2, got " + shape_str(table->shape));
    if (numel_of(ids_shape) != ids.size())
        throw ShapeError("embedding_lookup: ids size does not match shape " + shape_str(ids_shape));
    const std::size_t v = table->shape[0], d = table->shape[1];
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw DataError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(v));
    std::vector<std::size_t> out_shape = std::move(ids_shape);
    out_shape.push_back(d);
    Var<T> out = make_leaf<T>(out_shape, std::vector<T>(ids.size() * d));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table->value.data() + static_cast<std::size_t>(ids[i]) * d, d,
                    out->value.data() + i * d);
    if (tape.recording() && table->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [table, o, ids, d] {
            table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const T* src = o->grad.data() + i * d;
                T* dst = table->grad.data() + static_cast<std::size_t>(ids[i]) * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        };
        tape.record(out);
    }
    return out;
}

// Adds fixed rows (e.g. a sinusoidal position table) to x of shape (B, S, D);
// rows is (max_len, D) row-major, of which the first S rows are used. The
// table is only read during the forward pass, so no lifetime is captured.
template <class T>
Var<T> add_position_encoding(Tape<T>& tape, const Var<T>& x, const std::vector<T>& rows,
                             std::size_t max_len) {
    if (x->shape.size() != 3)
        throw ShapeError("add_position_encoding expects (B, S, D), got " + shape_str(x->shape));
    const std::size_t s = x->shape[1], d = x->shape[2];
    if (s > max_len)
        throw DataError("sequence length " + std::to_string(s) + " exceeds max_len " +
                        std::to_string(max_len));
    if (rows.size() < max_len * d)
        throw ShapeError("position table has " + std::to_string(rows.size()) +
                         " entries, need " + std::to_string(max_len * d));
    Var<T> out = make_leaf<T>(x->shape, x->value);
    const std::size_t b = x->shape[0];
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t t = 0; t < s; ++t) {
            T* row = out->value.data() + (bi * s + t) * d;
            const T* pos = rows.data() + t * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += pos[j];
        }
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> softmax(Tape<T>& tape, const Var<T>& a) {
    if (a->shape.empty()) throw ShapeError("softmax needs rank >= 1");
    const std::size_t d = a->shape.back();
    const std::size_t rows = a->numel() / d;
    Var<T> out = make_leaf<T>(a->shape, std::vector<T>(a->numel()));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = a->value.data() + r * d;
        T* o = out->value.data() + r * d;
        T mx = in[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        T sum = 0;
        for (std::size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < d; ++j) o[j] /= sum;
    }
    if (tape.recording() && a->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [a, o, rows, d] {
            a->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* s = o->value.data() + r * d;
                const T* g = o->grad.data() + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += g[j] * s[j];
                T* da = a->grad.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) da[j] += s[j] * (g[j] - dot);
            }
        };
        tape.record(out);
    }
    return out;
}

// Softmax over the last axis with a keep-mask shared across axis 1 (heads):
// scores (B, H, Q, K), mask (B, Q, K) with 1 = attend. Masked positions get
// probability exactly zero; fully masked rows collapse to all-zero rows.
template <class T>
Var<T> masked_softmax(Tape<T>& tape, const Var<T>& scores,
                      const std::shared_ptr<const std::vector<std::uint8_t>>& mask) {
    if (scores->shape.size() != 4)
        throw ShapeError("masked_softmax expects (B, H, Q, K), got " + shape_str(scores->shape));
    const std::size_t b = scores->shape[0], h = scores->shape[1], q = scores->shape[2],
                      k = scores->shape[3];
    if (mask->size() != b * q * k)
        throw ShapeError("masked_softmax: mask size " + std::to_string(mask->size()) +
                         " does not match scores " + shape_str(scores->shape));
    Var<T> out = make_leaf<T>(scores->shape, std::vector<T>(scores->numel(), T(0)));
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t qi = 0; qi < q; ++qi) {
                const T* in = scores->value.data() + ((bi * h + hi) * q + qi) * k;
                T* o = out->value.data() + ((bi * h + hi) * q + qi) * k;
                const std::uint8_t* m = mask->data() + (bi * q + qi) * k;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < k; ++j)
                    if (m[j]) mx = std::max(mx, in[j]);
                if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row
                T sum = 0;
                for (std::size_t j = 0; j < k; ++j) {
                    if (m[j]) {
                        o[j] = std::exp(in[j] - mx);
                        sum += o[j];
                    }
                }
                for (std::size_t j = 0; j < k; ++j) o[j] /= sum;
            }
    if (tape.recording() && scores->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        const std::size_t rows = b * h * q;
        out->backprop = [scores, o, rows, k] {
            scores->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* s = o->value.data() + r * k;
                const T* g = o->grad.data() + r * k;
                T dot = 0;
                for (std::size_t j = 0; j < k; ++j) dot += g[j] * s[j];
                T* da = scores->grad.data() + r * k;
                for (std::size_t j = 0; j < k; ++j) da[j] += s[j] * (g[j] - dot);
            }
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                  double eps = 1e-6) {
    if (x->shape.empty()) throw ShapeError("layer_norm needs rank >= 1");
    const std::size_t d = x->shape.back();
    if (gain->shape != std::vector<std::size_t>{d} || bias->shape != std::vector<std::size_t>{d})
        throw ShapeError("layer_norm: gain/bias must be rank-1 of size " + std::to_string(d) +
                         ", got " + shape_str(gain->shape) + " and " + shape_str(bias->shape));
    const std::size_t rows = x->numel() / d;
    Var<T> out = make_leaf<T>(x->shape, std::vector<T>(x->numel()));
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x->value.data() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*mean)[r] = mu;
        (*inv_std)[r] = inv;
        T* o = out->value.data() + r * d;
        for (std::size_t j = 0; j < d; ++j)
            o[j] = (in[j] - mu) * inv * gain->value[j] + bias->value[j];
    }
    if (tape.recording() && (x->requires_grad || gain->requires_grad || bias->requires_grad)) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, gain, bias, o, mean, inv_std, rows, d] {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* in = x->value.data() + r * d;
                const T* g = o->grad.data() + r * d;
                const T mu = (*mean)[r];
                const T inv = (*inv_std)[r];
                if (gain->requires_grad) {
                    gain->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j)
                        gain->grad[j] += g[j] * (in[j] - mu) * inv;
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) bias->grad[j] += g[j];
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxhat = g[j] * gain->value[j];
                        const T xhat = (in[j] - mu) * inv;
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    T* dx = x->grad.data() + r * d;
                    const T dn = static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxhat = g[j] * gain->value[j];
                        const T xhat = (in[j] - mu) * inv;
                        dx[j] += inv * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                    }
                }
            }
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
    Var<T> out = make_leaf<T>(x->shape, x->value);
    for (T& v : out->value) v = v > T(0) ? v : T(0);
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                if (x->value[i] > T(0)) x->grad[i] += o->grad[i];
        };
        tape.record(out);
    }
    return out;
}

// Inverted dropout with a counter-based seed so runs are reproducible.
template <class T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double p, std::uint64_t seed, bool training) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x->numel());
    RngStream rng(seed);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    Var<T> out = make_leaf<T>(x->shape, std::vector<T>(x->numel()));
    for (std::size_t i = 0; i < x->numel(); ++i) {
        const bool keep = rng.next_double() >= p;
        (*mask)[i] = keep;
        out->value[i] = keep ? x->value[i] * keep_scale : T(0);
    }
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o, mask, keep_scale] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                if ((*mask)[i]) x->grad[i] += o->grad[i] * keep_scale;
        };
        tape.record(out);
    }
    return out;
}

template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
    T total = 0;
    for (T v : x->value) total += v;
    Var<T> out = make_scalar<T>(total);
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += o->grad[0];
        };
        tape.record(out);
    }
    return out;
}

// Mean negative log-likelihood over non-pad target positions, with optional
// label smoothing spread uniformly over the non-pad vocabulary.
template <class T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, const std::vector<int>& targets,
                     int pad_id, double label_smoothing = 0.0) {
    if (logits->shape.size() != 3)
        throw ShapeError("cross_entropy expects logits (B, S, V), got " + shape_str(logits->shape));
    const std::size_t v = logits->shape.back();
    const std::size_t positions = logits->numel() / v;
    if (targets.size() != positions)
        throw ShapeError("cross_entropy: got " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(positions) + " positions");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("label_smoothing must be in [0, 1)");

    std::size_t n_eff = 0;
    for (int t : targets)
        if (t != pad_id) ++n_eff;
    if (n_eff == 0) throw DataError("cross_entropy: every target position is padding");

    auto probs = std::make_shared<std::vector<T>>(logits->numel());
    const double ls = label_smoothing;
    const double smooth = v > 1 ? ls / static_cast<double>(v - 1) : 0.0;
    double loss = 0;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const int target = targets[pos];
        if (target == pad_id) continue;
        const T* in = logits->value.data() + pos * v;
        T* pr = probs->data() + pos * v;
        T mx = in[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, in[j]);
        double sum_exp = 0;
        for (std::size_t j = 0; j < v; ++j) sum_exp += std::exp(static_cast<double>(in[j] - mx));
        const double lse = static_cast<double>(mx) + std::log(sum_exp);
        for (std::size_t j = 0; j < v; ++j)
            pr[j] = static_cast<T>(std::exp(static_cast<double>(in[j]) - lse));
        // -sum_v q_v * log p_v with q = (1 - ls) one-hot + ls uniform off pad
        loss -= (1.0 - ls) * (static_cast<double>(in[static_cast<std::size_t>(target)]) - lse);
        if (ls > 0) {
            for (std::size_t j = 0; j < v; ++j) {
                if (static_cast<int>(j) == pad_id) continue;
                loss -= smooth * (static_cast<double>(in[j]) - lse);
            }
        }
    }
    loss /= static_cast<double>(n_eff);
    Var<T> out = make_scalar<T>(static_cast<T>(loss));
    if (tape.recording() && logits->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [logits, o, probs, targets, pad_id, v, positions, n_eff, ls, smooth] {
            logits->ensure_grad();
            const T upstream = o->grad[0] / static_cast<T>(n_eff);
            for (std::size_t pos = 0; pos < positions; ++pos) {
                const int target = targets[pos];
                if (target == pad_id) continue;
                const T* pr = probs->data() + pos * v;
                T* dl = logits->grad.data() + pos * v;
                for (std::size_t j = 0; j < v; ++j) {
                    double q = 0.0;
                    if (static_cast<int>(j) != pad_id) q = smooth;
                    if (static_cast<int>(j) == target) q += 1.0 - ls;
                    dl[j] += upstream * (pr[j] - static_cast<T>(q));
                }
            }
        };
        tape.record(out);
    }
    return out;
}

// Normalizes the last axis to unit L2 norm.
template <class T>
Var<T> l2_normalize_rows(Tape<T>& tape, const Var<T>& x) {
    if (x->shape.empty()) throw ShapeError("l2_normalize_rows needs rank >= 1");
    const std::size_t d = x->shape.back();
    const std::size_t rows = x->numel() / d;
    Var<T> out = make_leaf<T>(x->shape, std::vector<T>(x->numel()));
    auto norms = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x->value.data() + r * d;
        T sq = 0;
        for (std::size_t j = 0; j < d; ++j) sq += in[j] * in[j];
        const T norm = std::max(std::sqrt(sq), static_cast<T>(1e-12));
        (*norms)[r] = norm;
        T* o = out->value.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) o[j] = in[j] / norm;
    }
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o, norms, rows, d] {
            x->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = o->value.data() + r * d;
                const T* g = o->grad.data() + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
                T* dx = x->grad.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) dx[j] += (g[j] - y[j] * dot) / (*norms)[r];
            }
        };
        tape.record(out);
    }
    return out;
}

// Mean over axis 1 of x (B, S, D) restricted to kept positions;
// mask has B*S entries with 1 = keep. Every row must keep something.
template <class T>
Var<T> masked_mean_rows(Tape<T>& tape, const Var<T>& x,
                        const std::shared_ptr<const std::vector<std::uint8_t>>& mask) {
    if (x->shape.size() != 3)
        throw ShapeError("masked_mean_rows expects (B, S, D), got " + shape_str(x->shape));
    const std::size_t b = x->shape[0], s = x->shape[1], d = x->shape[2];
    if (mask->size() != b * s)
        throw ShapeError("masked_mean_rows: mask size " + std::to_string(mask->size()) +
                         " does not match " + shape_str(x->shape));
    Var<T> out = make_leaf<T>({b, d}, std::vector<T>(b * d, T(0)));
    auto counts = std::make_shared<std::vector<std::size_t>>(b, 0);
    for (std::size_t bi = 0; bi < b; ++bi) {
        std::size_t cnt = 0;
        for (std::size_t t = 0; t < s; ++t) {
            if (!(*mask)[bi * s + t]) continue;
            ++cnt;
            const T* in = x->value.data() + (bi * s + t) * d;
            T* o = out->value.data() + bi * d;
            for (std::size_t j = 0; j < d; ++j) o[j] += in[j];
        }
        if (cnt == 0) throw DataError("masked_mean_rows: sequence " + std::to_string(bi) +
                                      " has no unmasked positions");
        (*counts)[bi] = cnt;
        T* o = out->value.data() + bi * d;
        for (std::size_t j = 0; j < d; ++j) o[j] /= static_cast<T>(cnt);
    }
    if (tape.recording() && x->requires_grad) {
        out->requires_grad = true;
        TapeNode<T>* o = out.get();
        out->backprop = [x, o, mask, counts, b, s, d] {
            x->ensure_grad();
            for (std::size_t bi = 0; bi < b; ++bi) {
                const T inv = T(1) / static_cast<T>((*counts)[bi]);
                const T* g = o->grad.data() + bi * d;
                for (std::size_t t = 0; t < s; ++t) {
                    if (!(*mask)[bi * s + t]) continue;
                    T* dx = x->grad.data() + (bi * s + t) * d;
                    for (std::size_t j = 0; j < d; ++j) dx[j] += g[j] * inv;
                }
            }
        };
        tape.record(out);
    }
    return out;
}

}  // namespace lrnmt
