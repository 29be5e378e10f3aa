#include "tnas/core/tape.hpp"

#include <algorithm>

#include "tnas/core/errors.hpp"

namespace tnas {

namespace {
thread_local Tape* t_current = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(t_current) {
  if (tape.consumed()) throw StaleTapeError("cannot record onto a consumed tape");
  t_current = &tape;
}

Tape::Scope::~Scope() { t_current = previous_; }

NoGradScope::NoGradScope() : previous_(t_current) { t_current = nullptr; }
NoGradScope::~NoGradScope() { t_current = previous_; }

Tape* Tape::current() { return t_current; }

void Tape::push(Record record) {
  if (consumed_) throw StaleTapeError("cannot record onto a consumed tape");
  records_.push_back(std::move(record));
}

void Tape::backward(const DiffArray& loss) {
  if (consumed_) throw StaleTapeError("tape already consumed by a previous backward pass");
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward needs a scalar loss");
  }
  const auto& loss_node = loss.node();
  if (loss_node->is_leaf) {
    // A requires_grad leaf used directly as the loss: d loss / d loss = 1.
    if (loss_node->requires_grad) detail::grad_of(*loss_node)[0] += 1.0;
    consumed_ = true;
    records_.clear();
    return;
  }
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const Record& r) { return r.output == loss_node; });
  if (it == records_.end()) throw PreconditionError("loss was not recorded on this tape");

  detail::grad_of(*loss_node).assign(1, 1.0);
  for (auto r = records_.rbegin(); r != records_.rend(); ++r) {
    if (!r->output->grad.empty()) r->backward();
  }
  for (auto& r : records_) {
    r.output->grad.clear();
    r.output->grad.shrink_to_fit();
  }
  records_.clear();
  records_.shrink_to_fit();
  consumed_ = true;
}

namespace detail {

bool tracking(std::initializer_list<const DiffArray*> inputs) {
  if (t_current == nullptr) return false;
  for (const auto* a : inputs) {
    if (a != nullptr && a->defined() && a->requires_grad()) return true;
  }
  return false;
}

bool tracking(const std::vector<DiffArray>& inputs) {
  if (t_current == nullptr) return false;
  for (const auto& a : inputs) {
    if (a.defined() && a.requires_grad()) return true;
  }
  return false;
}

DiffArray make_output(Shape shape, std::vector<double> values, DType dtype, bool track) {
  auto out = DiffArray::from(std::move(shape), std::move(values), dtype);
  if (track) {
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
  }
  return out;
}

DType promote(std::initializer_list<const DiffArray*> inputs) {
  for (const auto* a : inputs) {
    if (a != nullptr && a->defined() && a->dtype() == DType::F64) return DType::F64;
  }
  return DType::F32;
}

DType promote(const std::vector<DiffArray>& inputs) {
  for (const auto& a : inputs) {
    if (a.defined() && a.dtype() == DType::F64) return DType::F64;
  }
  return inputs.empty() ? default_dtype() : DType::F32;
}

std::vector<double>& grad_of(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.values.size(), 0.0);
  return node.grad;
}

void record(const char* primitive, const std::vector<DiffArray>& inputs, const DiffArray& output,
            Tape::BackwardFn fn) {
  Tape::Record rec;
  rec.primitive = primitive;
  rec.inputs.reserve(inputs.size());
  for (const auto& a : inputs) rec.inputs.push_back(a.node());
  rec.output = output.node();
  rec.backward = std::move(fn);
  t_current->push(std::move(rec));
}

}  // namespace detail

}  // namespace tnas
