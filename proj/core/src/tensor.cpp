#include "l2r/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace l2r {

namespace {

thread_local Tape* g_active_tape = nullptr;

int64_t shape_product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

// Records an interior node when a tape is active and any input is in-graph.
TensorPtr record(TensorPtr out, std::vector<TensorPtr> parents,
                 std::function<void(Tensor&)> backward_fn) {
    Tape* tape = Tape::active();
    if (!tape) return out;
    bool tracked = false;
    for (const auto& p : parents)
        if (p->in_graph()) tracked = true;
    if (!tracked) return out;
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward_fn);
    out->tape_index = static_cast<int>(tape->nodes.size());
    tape->nodes.push_back(out);
    return out;
}

void accumulate(Tensor& t, const std::vector<double>& g) {
    t.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
}

}  // namespace

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(shape_product(t->shape), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_product(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("Tensor::from: shape does not match data length");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double v) { return from({1}, {v}); }

int Tensor::rows() const {
    if (shape.size() != 2) throw ShapeError("rows(): tensor is not 2-D: " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (shape.size() != 2) throw ShapeError("cols(): tensor is not 2-D: " + shape_str());
    return shape[1];
}

double Tensor::item() const {
    if (data.size() != 1) throw ContractError("item(): tensor is not scalar-shaped: " + shape_str());
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

// ---- ops ----

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->cols() != b->rows())
        throw ShapeError("matmul: incompatible shapes " + a->shape_str() + " x " + b->shape_str());
    int m = a->rows(), k = a->cols(), n = b->cols();
    auto out = Tensor::create({m, n});
    const double* A = a->data.data();
    const double* B = b->data.data();
    double* C = out->data.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* Brow = B + p * n;
            double* Crow = C + i * n;
            for (int j = 0; j < n; ++j) Crow[j] += av * Brow[j];
        }
    return record(out, {a, b}, [m, k, n](Tensor& self) {
        const auto& a = self.parents[0];
        const auto& b = self.parents[1];
        const double* G = self.grad.data();
        if (a->in_graph()) {
            a->ensure_grad();
            // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += G[i * n + j] * b->data[p * n + j];
                    a->grad[i * k + p] += s;
                }
        }
        if (b->in_graph()) {
            b->ensure_grad();
            // dB = A^T * G
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    double av = a->data[i * k + p];
                    if (av == 0.0) continue;
                    for (int j = 0; j < n; ++j) b->grad[p * n + j] += av * G[i * n + j];
                }
        }
    });
}

TensorPtr transpose(const TensorPtr& a) {
    int m = a->rows(), n = a->cols();
    auto out = Tensor::create({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
    return record(out, {a}, [m, n](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad[i * n + j] += self.grad[j * m + i];
    });
}

namespace {

enum class Pairwise { Add, Sub, Mul };

TensorPtr binary(const TensorPtr& a, const TensorPtr& b, Pairwise kind) {
    bool rowcast = false;
    if (a->shape != b->shape) {
        // allow broadcasting a vector over a's rows
        int64_t last = a->shape.empty() ? 0 : a->shape.back();
        if (kind != Pairwise::Mul && static_cast<int64_t>(b->data.size()) == last &&
            b->shape.size() <= 2) {
            rowcast = true;
        } else {
            throw ShapeError("elementwise: incompatible shapes " + a->shape_str() + " vs " +
                             b->shape_str());
        }
    }
    auto out = Tensor::create(a->shape);
    int64_t n = a->size();
    int64_t w = rowcast ? b->size() : n;
    for (int64_t i = 0; i < n; ++i) {
        double bv = b->data[rowcast ? (i % w) : i];
        switch (kind) {
            case Pairwise::Add: out->data[i] = a->data[i] + bv; break;
            case Pairwise::Sub: out->data[i] = a->data[i] - bv; break;
            case Pairwise::Mul: out->data[i] = a->data[i] * bv; break;
        }
    }
    return record(out, {a, b}, [kind, rowcast, n, w](Tensor& self) {
        const auto& a = self.parents[0];
        const auto& b = self.parents[1];
        if (a->in_graph()) {
            a->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                double g = self.grad[i];
                if (kind == Pairwise::Mul) g *= b->data[i];
                a->grad[i] += g;
            }
        }
        if (b->in_graph()) {
            b->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                double g = self.grad[i];
                if (kind == Pairwise::Sub) g = -g;
                if (kind == Pairwise::Mul) g = self.grad[i] * a->data[i];
                b->grad[rowcast ? (i % w) : i] += g;
            }
        }
    });
}

TensorPtr unary(const TensorPtr& a, const std::function<double(double)>& f,
                const std::function<double(double, double)>& df /* (x, y) -> dy/dx */) {
    auto out = Tensor::create(a->shape);
    for (int64_t i = 0; i < a->size(); ++i) out->data[i] = f(a->data[i]);
    return record(out, {a}, [df](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int64_t i = 0; i < a->size(); ++i)
            a->grad[i] += self.grad[i] * df(a->data[i], self.data[i]);
    });
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return binary(a, b, Pairwise::Add); }
TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return binary(a, b, Pairwise::Sub); }
TensorPtr mul(const TensorPtr& a, const TensorPtr& b) { return binary(a, b, Pairwise::Mul); }

TensorPtr scale(const TensorPtr& a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

TensorPtr scale_by(const TensorPtr& a, const TensorPtr& s) {
    if (s->size() != 1) throw ShapeError("scale_by: scale must be scalar, got " + s->shape_str());
    auto out = Tensor::create(a->shape);
    double c = s->data[0];
    for (int64_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * c;
    return record(out, {a, s}, [](Tensor& self) {
        const auto& a = self.parents[0];
        const auto& s = self.parents[1];
        if (a->in_graph()) {
            a->ensure_grad();
            for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[i] * s->data[0];
        }
        if (s->in_graph()) {
            s->ensure_grad();
            double acc = 0.0;
            for (int64_t i = 0; i < a->size(); ++i) acc += self.grad[i] * a->data[i];
            s->grad[0] += acc;
        }
    });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary(
        a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr ln(const TensorPtr& a) {
    for (double x : a->data)
        if (x <= 0.0) throw DomainError("ln: input must be positive, got " + std::to_string(x));
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

TensorPtr relu(const TensorPtr& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

TensorPtr gelu(const TensorPtr& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

TensorPtr softmax(const TensorPtr& a) {
    int64_t w = a->shape.empty() ? 1 : a->shape.back();
    int64_t rows = a->size() / w;
    auto out = Tensor::create(a->shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * w;
        double* y = out->data.data() + r * w;
        double mx = *std::max_element(x, x + w);
        double z = 0.0;
        for (int64_t j = 0; j < w; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (int64_t j = 0; j < w; ++j) y[j] /= z;
    }
    return record(out, {a}, [w, rows](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * w;
            const double* g = self.grad.data() + r * w;
            double dot = 0.0;
            for (int64_t j = 0; j < w; ++j) dot += y[j] * g[j];
            for (int64_t j = 0; j < w; ++j) a->grad[r * w + j] += y[j] * (g[j] - dot);
        }
    });
}

TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    int64_t w = a->shape.back();
    int64_t rows = a->size() / w;
    if (gamma->size() != w || beta->size() != w)
        throw ShapeError("layer_norm: gamma/beta width mismatch " + a->shape_str());
    auto out = Tensor::create(a->shape);
    std::vector<double> inv_std(rows), means(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * w;
        double mu = std::accumulate(x, x + w, 0.0) / static_cast<double>(w);
        double var = 0.0;
        for (int64_t j = 0; j < w; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(w);
        double is = 1.0 / std::sqrt(var + eps);
        means[r] = mu;
        inv_std[r] = is;
        for (int64_t j = 0; j < w; ++j)
            out->data[r * w + j] = gamma->data[j] * (x[j] - mu) * is + beta->data[j];
    }
    return record(out, {a, gamma, beta},
                  [w, rows, means = std::move(means), inv_std = std::move(inv_std)](Tensor& self) {
        const auto& a = self.parents[0];
        const auto& gamma = self.parents[1];
        const auto& beta = self.parents[2];
        for (int64_t r = 0; r < rows; ++r) {
            const double* x = a->data.data() + r * w;
            const double* g = self.grad.data() + r * w;
            double is = inv_std[r], mu = means[r];
            if (gamma->in_graph() || beta->in_graph()) {
                if (gamma->in_graph()) gamma->ensure_grad();
                if (beta->in_graph()) beta->ensure_grad();
                for (int64_t j = 0; j < w; ++j) {
                    if (gamma->in_graph()) gamma->grad[j] += g[j] * (x[j] - mu) * is;
                    if (beta->in_graph()) beta->grad[j] += g[j];
                }
            }
            if (a->in_graph()) {
                a->ensure_grad();
                double sum_gg = 0.0, sum_ggx = 0.0;
                for (int64_t j = 0; j < w; ++j) {
                    double gg = g[j] * gamma->data[j];
                    double xh = (x[j] - mu) * is;
                    sum_gg += gg;
                    sum_ggx += gg * xh;
                }
                double invw = 1.0 / static_cast<double>(w);
                for (int64_t j = 0; j < w; ++j) {
                    double gg = g[j] * gamma->data[j];
                    double xh = (x[j] - mu) * is;
                    a->grad[r * w + j] += is * (gg - invw * sum_gg - xh * invw * sum_ggx);
                }
            }
        }
    });
}

TensorPtr sum(const TensorPtr& a) {
    auto out = Tensor::scalar(std::accumulate(a->data.begin(), a->data.end(), 0.0));
    return record(out, {a}, [](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (auto& g : a->grad) g += self.grad[0];
    });
}

TensorPtr mean(const TensorPtr& a) { return scale(sum(a), 1.0 / static_cast<double>(a->size())); }

TensorPtr cross_entropy(const TensorPtr& logits, int label) {
    int64_t n = logits->size();
    if (label < 0 || label >= n)
        throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range");
    const double* z = logits->data.data();
    double mx = *std::max_element(z, z + n);
    double lse = 0.0;
    for (int64_t j = 0; j < n; ++j) lse += std::exp(z[j] - mx);
    lse = mx + std::log(lse);
    auto out = Tensor::scalar(lse - z[label]);
    return record(out, {logits}, [label, n, lse](Tensor& self) {
        const auto& logits = self.parents[0];
        if (!logits->in_graph()) return;
        logits->ensure_grad();
        double g = self.grad[0];
        for (int64_t j = 0; j < n; ++j) {
            double p = std::exp(logits->data[j] - lse);
            logits->grad[j] += g * (p - (j == label ? 1.0 : 0.0));
        }
    });
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1) {
    int m = a->rows(), n = a->cols();
    if (c0 < 0 || c1 > n || c0 >= c1)
        throw ShapeError("slice_cols: bad range on " + a->shape_str());
    int w = c1 - c0;
    auto out = Tensor::create({m, w});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out->data[i * w + j] = a->data[i * n + c0 + j];
    return record(out, {a}, [m, n, c0, w](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) a->grad[i * n + c0 + j] += self.grad[i * w + j];
    });
}

TensorPtr slice_rows(const TensorPtr& a, int r0, int r1) {
    int m = a->rows(), n = a->cols();
    if (r0 < 0 || r1 > m || r0 >= r1)
        throw ShapeError("slice_rows: bad range on " + a->shape_str());
    int h = r1 - r0;
    auto out = Tensor::create({h, n});
    std::copy(a->data.begin() + r0 * n, a->data.begin() + r1 * n, out->data.begin());
    return record(out, {a}, [n, r0, h](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < n; ++j) a->grad[(r0 + i) * n + j] += self.grad[i * n + j];
    });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    int m = parts[0]->rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p->rows() != m) throw ShapeError("concat_cols: row mismatch");
        total += p->cols();
    }
    auto out = Tensor::create({m, total});
    int off = 0;
    for (const auto& p : parts) {
        int w = p->cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out->data[i * total + off + j] = p->data[i * w + j];
        off += w;
    }
    return record(out, std::vector<TensorPtr>(parts), [m, total](Tensor& self) {
        int off = 0;
        for (auto& p : self.parents) {
            int w = p->cols();
            if (p->in_graph()) {
                p->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j)
                        p->grad[i * w + j] += self.grad[i * total + off + j];
            }
            off += w;
        }
    });
}

TensorPtr embed(const TensorPtr& table, std::span<const int> ids) {
    int v = table->rows(), d = table->cols();
    auto out = Tensor::create({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || id >= v)
            throw ContractError("embed: token id " + std::to_string(id) + " out of vocab");
        std::copy(table->data.begin() + id * d, table->data.begin() + (id + 1) * d,
                  out->data.begin() + i * d);
    }
    std::vector<int> ids_copy(ids.begin(), ids.end());
    return record(out, {table}, [d, ids_copy = std::move(ids_copy)](Tensor& self) {
        const auto& table = self.parents[0];
        if (!table->in_graph()) return;
        table->ensure_grad();
        for (size_t i = 0; i < ids_copy.size(); ++i)
            for (int j = 0; j < d; ++j)
                table->grad[ids_copy[i] * d + j] += self.grad[i * d + j];
    });
}

TensorPtr dropout(const TensorPtr& a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) return a;
    auto out = Tensor::create(a->shape);
    std::vector<double> mask(a->size());
    double keep = 1.0 - rate;
    for (int64_t i = 0; i < a->size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
        out->data[i] = a->data[i] * mask[i];
    }
    return record(out, {a}, [mask = std::move(mask)](Tensor& self) {
        const auto& a = self.parents[0];
        if (!a->in_graph()) return;
        a->ensure_grad();
        for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[i] * mask[i];
    });
}

void backward(Tape& tape, const TensorPtr& loss) {
    if (loss->size() != 1)
        throw ContractError("backward: loss must be scalar-shaped, got " + loss->shape_str());
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    if (!loss->backward_fn) return;  // loss is a leaf or constant
    for (int i = loss->tape_index; i >= 0; --i) {
        Tensor& node = *tape.nodes[i];
        if (!node.grad.empty() && node.backward_fn) node.backward_fn(node);
    }
}

}  // namespace l2r
