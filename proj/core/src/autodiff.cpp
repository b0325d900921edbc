// SPDX-License-Identifier: Apache-2.0

#include "markboard/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace markboard {

std::atomic<std::uint64_t> GradInstrumentation::nodes_created{0};
std::atomic<std::uint64_t> GradInstrumentation::backward_calls{0};

namespace {

Var make_node(Tensor value) {
    GradInstrumentation::nodes_created.fetch_add(1, std::memory_order_relaxed);
    return std::make_shared<Node>(std::move(value));
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    Var n = make_node(std::move(value));
    n->requires_grad = false;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(back);
    }
    return n;
}

void accumulate(Node& target, const Tensor& g) {
    target.ensure_grad();
    for (std::size_t i = 0; i < g.data.size(); ++i) target.grad.data[i] += g.data[i];
}

}  // namespace

Var Tape::leaf(Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var n = make_node(p.value);
    n->requires_grad = true;
    n->source = &p;
    bound_.emplace(&p, n);
    leaves_.push_back(n);
    return n;
}

Var constant(Tensor value) {
    Var n = make_node(std::move(value));
    n->requires_grad = false;
    return n;
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul(a->value, b->value);
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accumulate(*a, matmul_nt(n.grad, b->value));
        if (b->requires_grad) accumulate(*b, matmul_tn(a->value, n.grad));
    });
}

Var add(const Var& a, const Var& b) {
    Tensor out = add(a->value, b->value);
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
        if (b->requires_grad) accumulate(*b, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    Tensor out = sub(a->value, b->value);
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
        if (b->requires_grad) accumulate(*b, scale(n.grad, -1.0f));
    });
}

Var scale(const Var& a, float s) {
    Tensor out = scale(a->value, s);
    return make_op(std::move(out), {a}, [a, s](Node& n) {
        if (a->requires_grad) accumulate(*a, scale(n.grad, s));
    });
}

Var relu(const Var& a) {
    Tensor out = relu(a->value);
    return make_op(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (a->value.data[i] <= 0.0f) g.data[i] = 0.0f;
        }
        accumulate(*a, g);
    });
}

Var add_row(const Var& a, const Var& row) {
    Tensor out = add_row(a->value, row->value);
    return make_op(std::move(out), {a, row}, [a, row](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
        if (row->requires_grad) {
            const int m = n.grad.rows(), k = n.grad.cols();
            Tensor g = Tensor::zeros(row->value.shape);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < k; ++j) g.data[static_cast<std::size_t>(j)] += n.grad.at(i, j);
            }
            accumulate(*row, g);
        }
    });
}

Var row_scale(const Var& x, const Var& s) {
    Tensor out = row_scale(x->value, s->value);
    return make_op(std::move(out), {x, s}, [x, s](Node& n) {
        const int m = n.grad.rows(), k = n.grad.cols();
        if (x->requires_grad) {
            Tensor gx = n.grad;
            for (int i = 0; i < m; ++i) {
                const float sv = s->value.data[static_cast<std::size_t>(i)];
                float* row = &gx.data[static_cast<std::size_t>(i) * k];
                for (int j = 0; j < k; ++j) row[j] *= sv;
            }
            accumulate(*x, gx);
        }
        if (s->requires_grad) {
            Tensor gs = Tensor::zeros(s->value.shape);
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < k; ++j) {
                    acc += static_cast<double>(n.grad.at(i, j)) * static_cast<double>(x->value.at(i, j));
                }
                gs.data[static_cast<std::size_t>(i)] = static_cast<float>(acc);
            }
            accumulate(*s, gs);
        }
    });
}

Var column(const Var& x, int j) {
    const int m = x->value.rows(), k = x->value.cols();
    if (j < 0 || j >= k) throw DomainError("column: index out of range");
    Tensor out = Tensor::zeros({m, 1});
    for (int i = 0; i < m; ++i) out.data[static_cast<std::size_t>(i)] = x->value.at(i, j);
    return make_op(std::move(out), {x}, [x, j](Node& n) {
        if (!x->requires_grad) return;
        const int m2 = n.grad.rows();
        Tensor g = Tensor::zeros(x->value.shape);
        for (int i = 0; i < m2; ++i) g.at(i, j) = n.grad.data[static_cast<std::size_t>(i)];
        accumulate(*x, g);
    });
}

Var softmax_rows(const Var& logits) {
    Tensor out = softmax_rows(logits->value);
    return make_op(std::move(out), {logits}, [logits](Node& n) {
        if (!logits->requires_grad) return;
        // dz = p * (g - sum_j g_j p_j) per row
        const int m = n.value.rows(), k = n.value.cols();
        Tensor g = Tensor::zeros(logits->value.shape);
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < k; ++j) {
                dot += static_cast<double>(n.grad.at(i, j)) * static_cast<double>(n.value.at(i, j));
            }
            for (int j = 0; j < k; ++j) {
                g.at(i, j) = static_cast<float>(static_cast<double>(n.value.at(i, j)) *
                                                (static_cast<double>(n.grad.at(i, j)) - dot));
            }
        }
        accumulate(*logits, g);
    });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& targets) {
    const int m = logits->value.rows(), c = logits->value.cols();
    if (static_cast<int>(targets.size()) != m) {
        throw DimensionError("cross_entropy: target count does not match batch rows");
    }
    for (int t : targets) {
        if (t < 0 || t >= c) throw DomainError("cross_entropy: target index out of class range");
    }
    // probs kept for the backward pass
    Tensor probs = softmax_rows(logits->value);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const float* z = &logits->value.data[static_cast<std::size_t>(i) * c];
        float zmax = z[0];
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(static_cast<double>(z[j]) - zmax);
        lse = std::log(lse) + zmax;
        total += lse - static_cast<double>(z[targets[static_cast<std::size_t>(i)]]);
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / m));
    auto probs_shared = std::make_shared<Tensor>(std::move(probs));
    return make_op(std::move(out), {logits}, [logits, targets, probs_shared, m, c](Node& n) {
        if (!logits->requires_grad) return;
        const float go = n.grad.data[0];
        Tensor g = *probs_shared;
        for (int i = 0; i < m; ++i) {
            g.at(i, targets[static_cast<std::size_t>(i)]) -= 1.0f;
            float* row = &g.data[static_cast<std::size_t>(i) * c];
            for (int j = 0; j < c; ++j) row[j] *= go / static_cast<float>(m);
        }
        accumulate(*logits, g);
    });
}

Var mse(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) {
        throw DimensionError("mse: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const std::size_t n_elems = a->value.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n_elems; ++i) {
        const double d = static_cast<double>(a->value.data[i]) - static_cast<double>(b->value.data[i]);
        total += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n_elems)));
    return make_op(std::move(out), {a, b}, [a, b, n_elems](Node& n) {
        const float go = n.grad.data[0];
        const float coef = 2.0f * go / static_cast<float>(n_elems);
        if (a->requires_grad || b->requires_grad) {
            Tensor g = Tensor::zeros(a->value.shape);
            for (std::size_t i = 0; i < n_elems; ++i) {
                g.data[i] = coef * (a->value.data[i] - b->value.data[i]);
            }
            if (a->requires_grad) accumulate(*a, g);
            if (b->requires_grad) accumulate(*b, scale(g, -1.0f));
        }
    });
}

Var sum_all(const Var& a) {
    double total = 0.0;
    for (float v : a->value.data) total += v;
    Tensor out = Tensor::scalar(static_cast<float>(total));
    return make_op(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        accumulate(*a, Tensor::full(a->value.shape, n.grad.data[0]));
    });
}

void backward(const Var& loss, const Tape& tape) {
    if (loss->value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + loss->value.shape_str());
    }
    GradInstrumentation::backward_calls.fetch_add(1, std::memory_order_relaxed);

    // Iterative post-order DFS; reverse gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.data[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.data.empty()) node->backward_fn(*node);
    }

    for (const auto& leaf : tape.leaves()) {
        if (leaf->grad.data.empty()) continue;
        Parameter* p = leaf->source;
        for (std::size_t i = 0; i < leaf->grad.data.size(); ++i) p->grad.data[i] += leaf->grad.data[i];
    }
}

}  // namespace markboard
