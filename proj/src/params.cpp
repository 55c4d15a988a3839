#include "ktts/params.hpp"

#include <cstring>

namespace ktts::nets {

Tensor Tensor::zeros(std::vector<Index> dims) {
  if (dims.empty() || dims.size() > 3) throw DataError("Tensor: rank must be 1-3");
  Index cols = 1;
  for (size_t i = 1; i < dims.size(); ++i) cols *= dims[i];
  Tensor t;
  t.dims = std::move(dims);
  t.data = Mat::Zero(t.dims[0], cols);
  return t;
}

Index Tensor::n_elements() const { return data.size(); }

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw DataError("ParameterStore: duplicate tensor '" + name + "'");
  order_.push_back(name);
  return tensors_.emplace(name, std::move(t)).first->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("ParameterStore: no tensor '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("ParameterStore: no tensor '" + name + "'");
  return it->second;
}

Index ParameterStore::n_parameters() const {
  Index n = 0;
  for (const auto& name : order_) n += at(name).n_elements();
  return n;
}

bool bitwise_equal(const ParameterStore& a, const ParameterStore& b) {
  if (a.names() != b.names()) return false;
  for (const auto& name : a.names()) {
    const Tensor& ta = a.at(name);
    const Tensor& tb = b.at(name);
    if (ta.dims != tb.dims) return false;
    if (std::memcmp(ta.data.data(), tb.data.data(),
                    sizeof(Scalar) * static_cast<size_t>(ta.data.size())) != 0)
      return false;
  }
  return true;
}

ad::Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& t = store_->at(name);
  ad::Var v = trainable_ ? tape_->leaf(t.data) : tape_->constant(t.data);
  bound_.emplace(name, v);
  order_.push_back(name);
  return v;
}

std::map<std::string, Mat> ParamBinding::grads() const {
  std::map<std::string, Mat> out;
  for (const auto& name : order_) out.emplace(name, tape_->grad(bound_.at(name)));
  return out;
}

}  // namespace ktts::nets
