#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tnas/core/diff_array.hpp"

namespace tnas {

/// Linear record of the primitives applied while the tape is active.
///
/// Primitives consult Tape::current(); when a tape is active and at least
/// one input requires a gradient, the primitive appends a record holding
/// its inputs, its output and a closure that propagates the output adjoint
/// back to the inputs. With no active tape primitives only compute values.
///
/// A tape is single-use: backward() consumes it, releases every
/// intermediate adjoint and refuses to run a second time.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Record {
    std::string primitive;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  /// RAII activation; restores the previously active tape on destruction.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void push(Record record);
  /// Propagates d(loss)/d(leaf) into the adjoint of every requires_grad leaf.
  void backward(const DiffArray& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

/// Disables recording for its lifetime even if a tape is active.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

bool tracking(std::initializer_list<const DiffArray*> inputs);
bool tracking(const std::vector<DiffArray>& inputs);

/// Builds the output array of a primitive (rounded to dtype). Marks it as a
/// tracked non-leaf when `track` is set.
DiffArray make_output(Shape shape, std::vector<double> values, DType dtype, bool track);

DType promote(std::initializer_list<const DiffArray*> inputs);
DType promote(const std::vector<DiffArray>& inputs);

/// Adjoint buffer of a node, allocated as zeros on first use.
std::vector<double>& grad_of(Node& node);

void record(const char* primitive, const std::vector<DiffArray>& inputs, const DiffArray& output,
            Tape::BackwardFn fn);

}  // namespace detail

}  // namespace tnas
