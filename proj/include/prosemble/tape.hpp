#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prosemble/rng.hpp"
#include "prosemble/tensor.hpp"

namespace prosemble {

// Reverse-mode tape. One tape per training step: ops append nodes, backward()
// walks them in reverse. Node values are immutable once recorded.
template <typename S>
class Tape {
public:
    using Id = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Tracked input; gradients accumulate for it. Values are copied so the
    // caller's parameter storage stays untouched during the step.
    Id leaf(const Tensor<S>& param) { return push(Tensor<S>(param.shape, param.values), true, {}); }

    // Untracked input (data, targets, masks).
    Id constant(Tensor<S> value) { return push(std::move(value), false, {}); }

    const Tensor<S>& value(Id id) const { return nodes_[check(id)].value; }
    const std::vector<int>& shape(Id id) const { return nodes_[check(id)].value.shape; }

    const std::vector<S>& grad(Id id) const {
        const Node& n = nodes_[check(id)];
        if (!n.tracked) throw std::logic_error("grad() on untracked tensor");
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- op catalogue -------------------------------------------------

    Id matmul(Id a, Id b) {
        const Tensor<S>& ta = val(a);
        const Tensor<S>& tb = val(b);
        if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows()) {
            fail_shapes("matmul", ta.shape, tb.shape);
        }
        const int m = ta.rows(), k = ta.cols(), n = tb.cols();
        Tensor<S> out = Tensor<S>::zeros({m, n});
        gemm_nn(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
        return push(std::move(out), tracked(a) || tracked(b), [this, a, b, m, k, n](const std::vector<S>& g) {
            if (tracked(a)) gemm_nt(g.data(), val(b).values.data(), grad_buf(a), m, n, k);
            if (tracked(b)) gemm_tn(val(a).values.data(), g.data(), grad_buf(b), m, k, n);
        });
    }

    // Elementwise add; also accepts a 1-d right operand matching the last
    // dimension of a 2-d left operand (row broadcast, used for biases).
    Id add(Id a, Id b) {
        const Tensor<S>& ta = val(a);
        const Tensor<S>& tb = val(b);
        const bool broadcast = ta.shape.size() == 2 && tb.shape.size() == 1 && tb.shape[0] == ta.cols();
        if (!broadcast && ta.shape != tb.shape) fail_shapes("add", ta.shape, tb.shape);
        Tensor<S> out(ta.shape, ta.values);
        if (broadcast) {
            const int rows = ta.rows(), cols = ta.cols();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) out.values[static_cast<std::size_t>(i) * cols + j] += tb.values[j];
        } else {
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += tb.values[i];
        }
        return push(std::move(out), tracked(a) || tracked(b), [this, a, b, broadcast](const std::vector<S>& g) {
            if (tracked(a)) {
                S* da = grad_buf(a);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (tracked(b)) {
                S* db = grad_buf(b);
                if (broadcast) {
                    const int cols = val(b).numel();
                    const int rows = static_cast<int>(g.size()) / cols;
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j) db[j] += g[static_cast<std::size_t>(i) * cols + j];
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                }
            }
        });
    }

    Id mul(Id a, Id b) {
        const Tensor<S>& ta = val(a);
        const Tensor<S>& tb = val(b);
        if (ta.shape != tb.shape) fail_shapes("mul", ta.shape, tb.shape);
        Tensor<S> out(ta.shape, ta.values);
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= tb.values[i];
        return push(std::move(out), tracked(a) || tracked(b), [this, a, b](const std::vector<S>& g) {
            if (tracked(a)) {
                S* da = grad_buf(a);
                const std::vector<S>& vb = val(b).values;
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * vb[i];
            }
            if (tracked(b)) {
                S* db = grad_buf(b);
                const std::vector<S>& va = val(a).values;
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * va[i];
            }
        });
    }

    Id tanh(Id a) {
        Tensor<S> out(val(a).shape, val(a).values);
        for (S& x : out.values) x = std::tanh(x);
        Id id = push(std::move(out), tracked(a), {});
        nodes_[id].backprop = [this, a, id](const std::vector<S>& g) {
            if (!tracked(a)) return;
            S* da = grad_buf(a);
            const std::vector<S>& y = val(id).values;
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (S(1) - y[i] * y[i]);
        };
        return id;
    }

    Id sigmoid(Id a) {
        Tensor<S> out(val(a).shape, val(a).values);
        for (S& x : out.values) x = S(1) / (S(1) + std::exp(-x));
        Id id = push(std::move(out), tracked(a), {});
        nodes_[id].backprop = [this, a, id](const std::vector<S>& g) {
            if (!tracked(a)) return;
            S* da = grad_buf(a);
            const std::vector<S>& y = val(id).values;
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (S(1) - y[i]);
        };
        return id;
    }

    Id relu(Id a) {
        Tensor<S> out(val(a).shape, val(a).values);
        for (S& x : out.values) x = x > S(0) ? x : S(0);
        return push(std::move(out), tracked(a), [this, a](const std::vector<S>& g) {
            if (!tracked(a)) return;
            S* da = grad_buf(a);
            const std::vector<S>& x = val(a).values;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x[i] > S(0)) da[i] += g[i];
        });
    }

    // n-ary concatenation along axis 0 or 1 (2-d), or axis 0 (1-d)
    Id concat(const std::vector<Id>& parts, int axis) {
        if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
        const std::vector<int>& s0 = val(parts[0]).shape;
        const bool two_d = s0.size() == 2;
        if (!two_d && (s0.size() != 1 || axis != 0)) {
            throw std::invalid_argument("concat supports 1-d axis 0 or 2-d axis 0/1, got shape " + shape_string(s0));
        }
        bool any_tracked = false;
        int total = 0;
        for (Id p : parts) {
            const std::vector<int>& sp = val(p).shape;
            if (sp.size() != s0.size()) fail_shapes("concat", s0, sp);
            if (two_d && axis == 0 && sp[1] != s0[1]) fail_shapes("concat", s0, sp);
            if (two_d && axis == 1 && sp[0] != s0[0]) fail_shapes("concat", s0, sp);
            total += two_d ? sp[axis] : sp[0];
            any_tracked = any_tracked || tracked(p);
        }
        std::vector<int> out_shape = s0;
        (two_d ? out_shape[axis] : out_shape[0]) = total;
        Tensor<S> out = Tensor<S>::zeros(out_shape);
        if (!two_d || axis == 0) {
            std::size_t off = 0;
            for (Id p : parts) {
                const std::vector<S>& v = val(p).values;
                std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(off));
                off += v.size();
            }
        } else {
            const int rows = s0[0];
            int col_off = 0;
            for (Id p : parts) {
                const Tensor<S>& tp = val(p);
                const int pc = tp.cols();
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < pc; ++j) out.values[static_cast<std::size_t>(i) * total + col_off + j] = tp.at(i, j);
                col_off += pc;
            }
        }
        std::vector<Id> parts_copy = parts;
        return push(std::move(out), any_tracked, [this, parts_copy, axis, two_d, total](const std::vector<S>& g) {
            if (!two_d || axis == 0) {
                std::size_t off = 0;
                for (Id p : parts_copy) {
                    const std::size_t n = val(p).values.size();
                    if (tracked(p)) {
                        S* dp = grad_buf(p);
                        for (std::size_t i = 0; i < n; ++i) dp[i] += g[off + i];
                    }
                    off += n;
                }
            } else {
                const int rows = val(parts_copy[0]).rows();
                int col_off = 0;
                for (Id p : parts_copy) {
                    const int pc = val(p).cols();
                    if (tracked(p)) {
                        S* dp = grad_buf(p);
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < pc; ++j)
                                dp[static_cast<std::size_t>(i) * pc + j] += g[static_cast<std::size_t>(i) * total + col_off + j];
                    }
                    col_off += pc;
                }
            }
        });
    }

    // 2-d sub-block [r0, r1) x [c0, c1)
    Id slice(Id a, int r0, int r1, int c0, int c1) {
        const Tensor<S>& ta = val(a);
        if (ta.shape.size() != 2) throw std::invalid_argument("slice expects 2-d, got " + shape_string(ta.shape));
        const int rows = ta.rows(), cols = ta.cols();
        if (r0 < 0 || r1 > rows || c0 < 0 || c1 > cols || r0 > r1 || c0 > c1) {
            throw std::invalid_argument("slice bounds out of range for " + shape_string(ta.shape));
        }
        Tensor<S> out = Tensor<S>::zeros({r1 - r0, c1 - c0});
        for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j) out.values[static_cast<std::size_t>(i - r0) * (c1 - c0) + (j - c0)] = ta.at(i, j);
        return push(std::move(out), tracked(a), [this, a, r0, r1, c0, c1](const std::vector<S>& g) {
            if (!tracked(a)) return;
            S* da = grad_buf(a);
            const int cols = val(a).cols();
            const int w = c1 - c0;
            for (int i = r0; i < r1; ++i)
                for (int j = c0; j < c1; ++j)
                    da[static_cast<std::size_t>(i) * cols + j] += g[static_cast<std::size_t>(i - r0) * w + (j - c0)];
        });
    }

    // Per-row normalization over the feature axis with learned gain/bias.
    Id layer_norm(Id x, Id gain, Id bias, S eps = S(1e-5)) {
        const Tensor<S>& tx = val(x);
        if (tx.shape.size() != 2) throw std::invalid_argument("layer_norm expects 2-d, got " + shape_string(tx.shape));
        const int rows = tx.rows(), cols = tx.cols();
        if (val(gain).shape != std::vector<int>{cols}) fail_shapes("layer_norm gain", tx.shape, val(gain).shape);
        if (val(bias).shape != std::vector<int>{cols}) fail_shapes("layer_norm bias", tx.shape, val(bias).shape);
        Tensor<S> out = Tensor<S>::zeros({rows, cols});
        std::vector<S> xhat(static_cast<std::size_t>(rows) * cols);
        std::vector<S> inv_std(static_cast<std::size_t>(rows));
        const std::vector<S>& gv = val(gain).values;
        const std::vector<S>& bv = val(bias).values;
        for (int i = 0; i < rows; ++i) {
            const S* row = tx.values.data() + static_cast<std::size_t>(i) * cols;
            S mean = 0;
            for (int j = 0; j < cols; ++j) mean += row[j];
            mean /= S(cols);
            S var = 0;
            for (int j = 0; j < cols; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= S(cols);
            const S inv = S(1) / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(i)] = inv;
            for (int j = 0; j < cols; ++j) {
                const S xh = (row[j] - mean) * inv;
                xhat[static_cast<std::size_t>(i) * cols + j] = xh;
                out.values[static_cast<std::size_t>(i) * cols + j] = xh * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
            }
        }
        return push(std::move(out), tracked(x) || tracked(gain) || tracked(bias),
                    [this, x, gain, bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](const std::vector<S>& g) {
            const std::vector<S>& gv = val(gain).values;
            if (tracked(gain)) {
                S* dg = grad_buf(gain);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) dg[j] += g[static_cast<std::size_t>(i) * cols + j] * xhat[static_cast<std::size_t>(i) * cols + j];
            }
            if (tracked(bias)) {
                S* db = grad_buf(bias);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) db[j] += g[static_cast<std::size_t>(i) * cols + j];
            }
            if (tracked(x)) {
                S* dx = grad_buf(x);
                for (int i = 0; i < rows; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * cols;
                    S mean_dxhat = 0, mean_dxhat_xhat = 0;
                    for (int j = 0; j < cols; ++j) {
                        const S dxh = g[base + j] * gv[static_cast<std::size_t>(j)];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[base + j];
                    }
                    mean_dxhat /= S(cols);
                    mean_dxhat_xhat /= S(cols);
                    for (int j = 0; j < cols; ++j) {
                        const S dxh = g[base + j] * gv[static_cast<std::size_t>(j)];
                        dx[base + j] += (dxh - mean_dxhat - xhat[base + j] * mean_dxhat_xhat) * inv_std[static_cast<std::size_t>(i)];
                    }
                }
            }
        });
    }

    // Inverted dropout: train mode scales kept activations by 1/keep_prob,
    // inference mode is the identity.
    Id dropout(Id x, S keep_prob, bool train_mode, Rng& rng) {
        if (!(keep_prob > S(0) && keep_prob <= S(1))) throw std::invalid_argument("dropout keep_prob out of (0,1]");
        if (!train_mode) {
            Tensor<S> out(val(x).shape, val(x).values);
            return push(std::move(out), tracked(x), [this, x](const std::vector<S>& g) {
                if (!tracked(x)) return;
                S* dx = grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
            });
        }
        const Tensor<S>& tx = val(x);
        std::vector<S> mask(tx.values.size());
        const S scale = S(1) / keep_prob;
        for (S& m : mask) m = rng.uniform() < static_cast<double>(keep_prob) ? scale : S(0);
        Tensor<S> out(tx.shape, tx.values);
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= mask[i];
        return push(std::move(out), tracked(x), [this, x, mask = std::move(mask)](const std::vector<S>& g) {
            if (!tracked(x)) return;
            S* dx = grad_buf(x);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
        });
    }

    // 1-d convolution over time with same zero padding. Rows are time-major
    // across a batch: row index = t * batch + b. Weight shape [K, Cin, Cout],
    // K odd; bias shape [Cout].
    Id conv1d(Id x, Id w, Id b, int batch, int time) {
        const Tensor<S>& tx = val(x);
        const Tensor<S>& tw = val(w);
        const Tensor<S>& tb = val(b);
        if (tx.shape.size() != 2 || tw.shape.size() != 3) fail_shapes("conv1d", tx.shape, tw.shape);
        const int cin = tx.cols(), kernel = tw.shape[0], cout = tw.shape[2];
        if (tw.shape[1] != cin || kernel % 2 == 0) fail_shapes("conv1d", tx.shape, tw.shape);
        if (tb.shape != std::vector<int>{cout}) fail_shapes("conv1d bias", tw.shape, tb.shape);
        if (tx.rows() != batch * time) {
            throw std::invalid_argument("conv1d rows " + std::to_string(tx.rows()) + " != batch*time " +
                                        std::to_string(batch * time));
        }
        const int pad = kernel / 2;
        Tensor<S> out = Tensor<S>::zeros({batch * time, cout});
        for (int i = 0; i < batch * time; ++i)
            for (int o = 0; o < cout; ++o) out.values[static_cast<std::size_t>(i) * cout + o] = tb.values[static_cast<std::size_t>(o)];
        for (int k = 0; k < kernel; ++k) {
            const int shift = k - pad;
            const int t_lo = std::max(0, -shift);
            const int t_hi = std::min(time, time - shift);
            if (t_lo >= t_hi) continue;
            const int rows = (t_hi - t_lo) * batch;
            const S* src = tx.values.data() + static_cast<std::size_t>(t_lo + shift) * batch * cin;
            const S* wk = tw.values.data() + static_cast<std::size_t>(k) * cin * cout;
            S* dst = out.values.data() + static_cast<std::size_t>(t_lo) * batch * cout;
            gemm_nn(src, wk, dst, rows, cin, cout);
        }
        return push(std::move(out), tracked(x) || tracked(w) || tracked(b),
                    [this, x, w, b, batch, time, cin, cout, kernel, pad](const std::vector<S>& g) {
            if (tracked(b)) {
                S* db = grad_buf(b);
                for (int i = 0; i < batch * time; ++i)
                    for (int o = 0; o < cout; ++o) db[o] += g[static_cast<std::size_t>(i) * cout + o];
            }
            for (int k = 0; k < kernel; ++k) {
                const int shift = k - pad;
                const int t_lo = std::max(0, -shift);
                const int t_hi = std::min(time, time - shift);
                if (t_lo >= t_hi) continue;
                const int rows = (t_hi - t_lo) * batch;
                const S* gk = g.data() + static_cast<std::size_t>(t_lo) * batch * cout;
                if (tracked(x)) {
                    const S* wk = val(w).values.data() + static_cast<std::size_t>(k) * cin * cout;
                    S* dx = grad_buf(x) + static_cast<std::size_t>(t_lo + shift) * batch * cin;
                    gemm_nt(gk, wk, dx, rows, cout, cin);
                }
                if (tracked(w)) {
                    const S* src = val(x).values.data() + static_cast<std::size_t>(t_lo + shift) * batch * cin;
                    S* dwk = grad_buf(w) + static_cast<std::size_t>(k) * cin * cout;
                    gemm_tn(src, gk, dwk, rows, cin, cout);
                }
            }
        });
    }

    // Row gather from an embedding table.
    Id embedding(Id table, std::vector<int> ids) {
        const Tensor<S>& tt = val(table);
        if (tt.shape.size() != 2) throw std::invalid_argument("embedding table must be 2-d, got " + shape_string(tt.shape));
        const int vocab = tt.rows(), dim = tt.cols();
        for (int id : ids) {
            if (id < 0 || id >= vocab) throw std::invalid_argument("embedding id " + std::to_string(id) + " out of range [0," + std::to_string(vocab) + ")");
        }
        const int n = static_cast<int>(ids.size());
        Tensor<S> out = Tensor<S>::zeros({n, dim});
        for (int i = 0; i < n; ++i) {
            const S* row = tt.values.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * dim;
            std::copy(row, row + dim, out.values.begin() + static_cast<std::ptrdiff_t>(i) * dim);
        }
        return push(std::move(out), tracked(table), [this, table, ids = std::move(ids), dim](const std::vector<S>& g) {
            if (!tracked(table)) return;
            S* dt = grad_buf(table);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                S* drow = dt + static_cast<std::size_t>(ids[i]) * dim;
                const S* grow = g.data() + i * dim;
                for (int j = 0; j < dim; ++j) drow[j] += grow[j];
            }
        });
    }

    // Mean squared error over rows selected by mask (both operands get
    // gradients; mask is data). mask shape [N] for pred/target [N, F].
    Id mse_masked(Id pred, Id target, Id mask) {
        const Tensor<S>& tp = val(pred);
        const Tensor<S>& tt = val(target);
        const Tensor<S>& tm = val(mask);
        if (tp.shape != tt.shape) fail_shapes("mse_masked", tp.shape, tt.shape);
        if (tp.shape.size() != 2 || tm.shape != std::vector<int>{tp.rows()}) fail_shapes("mse_masked mask", tp.shape, tm.shape);
        const int rows = tp.rows(), cols = tp.cols();
        int count = 0;
        for (S m : tm.values) count += m != S(0) ? 1 : 0;
        if (count == 0) throw std::invalid_argument("mse_masked: mask selects zero positions");
        S acc = 0;
        for (int i = 0; i < rows; ++i) {
            if (tm.values[static_cast<std::size_t>(i)] == S(0)) continue;
            for (int j = 0; j < cols; ++j) {
                const S d = tp.at(i, j) - tt.at(i, j);
                acc += d * d;
            }
        }
        const S denom = S(count) * S(cols);
        Tensor<S> out({1}, {acc / denom});
        return push(std::move(out), tracked(pred) || tracked(target),
                    [this, pred, target, mask, rows, cols, denom](const std::vector<S>& g) {
            const S scale = g[0] * S(2) / denom;
            const std::vector<S>& mv = val(mask).values;
            const std::vector<S>& pv = val(pred).values;
            const std::vector<S>& tv = val(target).values;
            S* dp = tracked(pred) ? grad_buf(pred) : nullptr;
            S* dt = tracked(target) ? grad_buf(target) : nullptr;
            for (int i = 0; i < rows; ++i) {
                if (mv[static_cast<std::size_t>(i)] == S(0)) continue;
                for (int j = 0; j < cols; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
                    const S d = scale * (pv[idx] - tv[idx]);
                    if (dp) dp[idx] += d;
                    if (dt) dt[idx] -= d;
                }
            }
        });
    }

    Id mean_all(Id a) {
        const Tensor<S>& ta = val(a);
        S acc = 0;
        for (S x : ta.values) acc += x;
        const S n = S(ta.numel());
        Tensor<S> out({1}, {acc / n});
        return push(std::move(out), tracked(a), [this, a, n](const std::vector<S>& g) {
            if (!tracked(a)) return;
            S* da = grad_buf(a);
            const S s = g[0] / n;
            for (int i = 0; i < val(a).numel(); ++i) da[static_cast<std::size_t>(i)] += s;
        });
    }

    // ---- reverse pass --------------------------------------------------

    void backward(Id loss) {
        const Node& ln = nodes_[check(loss)];
        if (ln.value.numel() != 1) {
            throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_string(ln.value.shape));
        }
        for (Node& n : nodes_) {
            if (n.tracked) n.grad.assign(n.value.values.size(), S(0));
        }
        nodes_[loss].grad.assign(1, S(1));
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.tracked && n.backprop) n.backprop(n.grad);
        }
    }

private:
    struct Node {
        Tensor<S> value;
        std::vector<S> grad;
        bool tracked = false;
        std::function<void(const std::vector<S>&)> backprop;
    };

    std::vector<Node> nodes_;

    Id check(Id id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw std::logic_error("bad tape id");
        return id;
    }

    const Tensor<S>& val(Id id) { return nodes_[check(id)].value; }
    bool tracked(Id id) { return nodes_[check(id)].tracked; }

    S* grad_buf(Id id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad.assign(n.value.values.size(), S(0));
        return n.grad.data();
    }

    Id push(Tensor<S> value, bool tracked, std::function<void(const std::vector<S>&)> backprop) {
        nodes_.push_back(Node{std::move(value), {}, tracked, std::move(backprop)});
        return static_cast<Id>(nodes_.size() - 1);
    }

    [[noreturn]] static void fail_shapes(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
        throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
    }

    // c[m,n] += a[m,k] * b[k,n]
    static void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            S* crow = c + static_cast<std::size_t>(i) * n;
            const S* arow = a + static_cast<std::size_t>(i) * k;
            for (int l = 0; l < k; ++l) {
                const S av = arow[l];
                if (av == S(0)) continue;
                const S* brow = b + static_cast<std::size_t>(l) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    // c[m,q] += a[m,p] * b[q,p]^T
    static void gemm_nt(const S* a, const S* b, S* c, int m, int p, int q) {
        for (int i = 0; i < m; ++i) {
            const S* arow = a + static_cast<std::size_t>(i) * p;
            S* crow = c + static_cast<std::size_t>(i) * q;
            for (int j = 0; j < q; ++j) {
                const S* brow = b + static_cast<std::size_t>(j) * p;
                S acc = 0;
                for (int l = 0; l < p; ++l) acc += arow[l] * brow[l];
                crow[j] += acc;
            }
        }
    }

    // c[k,n] += a[m,k]^T * b[m,n]
    static void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            const S* arow = a + static_cast<std::size_t>(i) * k;
            const S* brow = b + static_cast<std::size_t>(i) * n;
            for (int l = 0; l < k; ++l) {
                const S av = arow[l];
                if (av == S(0)) continue;
                S* crow = c + static_cast<std::size_t>(l) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
};

}  // namespace prosemble
