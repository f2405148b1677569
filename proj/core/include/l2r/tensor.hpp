#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "l2r/errors.hpp"
#include "l2r/rng.hpp"

namespace l2r {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of doubles with reverse-mode autodiff.
// Interior graph nodes are recorded on the active Tape; leaves (parameters)
// live outside any tape and keep their grad until zero_grad().
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;  // pushes this->grad into parents
    int tape_index = -1;

    static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr from(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
    static TensorPtr scalar(double v);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rows() const;  // 2-D only
    int cols() const;
    double item() const;  // scalar-shaped only
    bool in_graph() const { return requires_grad || static_cast<bool>(backward_fn); }

    void ensure_grad();
    void zero_grad() { grad.clear(); }
    std::string shape_str() const;
};

// Ordered record of interior nodes for one forward pass.
class Tape {
public:
    std::vector<TensorPtr> nodes;
    void clear() { nodes.clear(); }
    static Tape* active();
};

// RAII: makes a tape the recording target for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// ---- ops ----

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

// b must have the same shape as a, or be a vector matching a's last axis
// (broadcast over rows).
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise, same shape
TensorPtr scale(const TensorPtr& a, double c);
// a scaled by a scalar-shaped graph node; gradient flows into both
TensorPtr scale_by(const TensorPtr& a, const TensorPtr& s);

TensorPtr sigmoid(const TensorPtr& a);
TensorPtr ln(const TensorPtr& a);  // natural log; DomainError on x <= 0
TensorPtr relu(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& a);  // exact erf form
TensorPtr softmax(const TensorPtr& a);  // over last axis
TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps = 1e-5);

TensorPtr sum(const TensorPtr& a);
TensorPtr mean(const TensorPtr& a);
// numerically stable -log softmax(logits)[label]; logits is a vector or 1xC
TensorPtr cross_entropy(const TensorPtr& logits, int label);

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);
TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);

// gathers rows of table for each id; result is ids.size() x d
TensorPtr embed(const TensorPtr& table, std::span<const int> ids);

// inverted dropout on the whole tensor; identity when !training or rate == 0
TensorPtr dropout(const TensorPtr& a, double rate, Rng& rng, bool training);

// loss must be scalar-shaped and recorded on the given tape
void backward(Tape& tape, const TensorPtr& loss);

}  // namespace l2r
