#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ktts/autodiff.hpp"
#include "ktts/types.hpp"

namespace ktts::nets {

// Named tensor with a logical shape of rank 1-3. Storage is a matrix of
// dims[0] rows; rank-3 tensors (out, in, kernel) lay taps side by side, so
// tap k occupies columns [k*dims[1], (k+1)*dims[1]) -- the layout the
// convolution ops consume directly.
struct Tensor {
  std::vector<Index> dims;
  Mat data;

  static Tensor zeros(std::vector<Index> dims);
  Index rank() const { return static_cast<Index>(dims.size()); }
  Index n_elements() const;
};

class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  // Names in insertion order; every iteration in the project uses this order
  // so runs are reproducible.
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  Index n_parameters() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> tensors_;
};

// True iff both stores hold the same names, shapes and bit-identical payloads.
bool bitwise_equal(const ParameterStore& a, const ParameterStore& b);

// Binds store tensors to tape variables on first use. Trainable bindings
// become leaves that collect gradients; frozen ones enter as constants.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParameterStore& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  ad::Var operator()(const std::string& name);

  // Gradients for every bound tensor, in binding order; unreached tensors
  // report zeros.
  std::map<std::string, Mat> grads() const;

 private:
  ad::Tape* tape_;
  const ParameterStore* store_;
  bool trainable_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, ad::Var> bound_;
};

}  // namespace ktts::nets
