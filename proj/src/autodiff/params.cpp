#include "fogsight/params.hpp"

#include <cmath>
#include <cstring>

namespace fogsight::ad {

template <typename T>
Tensor<T>& ParamStore<T>::add_parameter(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  value.set_requires_grad(true);
  return tensors_.emplace(name, std::move(value)).first->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::add_buffer(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  buffers_.insert(name);
  return tensors_.emplace(name, std::move(value)).first->second;
}

template <typename T>
void ParamStore<T>::add_batch_norm(const std::string& prefix, std::size_t channels) {
  add_parameter(prefix + ".gamma", Tensor<T>::full({channels}, T(1)));
  add_parameter(prefix + ".beta", Tensor<T>::zeros({channels}));
  auto buffers = BatchNormBuffers<T>::create(channels);
  add_buffer(prefix + ".running_mean", buffers.running_mean);
  add_buffer(prefix + ".running_var", buffers.running_var);
  add_buffer(prefix + ".tracked", buffers.tracked);
}

template <typename T>
BatchNormBuffers<T> ParamStore<T>::batch_norm_buffers(const std::string& prefix) const {
  return {at(prefix + ".running_mean"), at(prefix + ".running_var"), at(prefix + ".tracked")};
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : tensors_) {
    if (!is_buffer(name)) out.push_back(t);
  }
  return out;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : tensors_) {
    if (!is_buffer(name)) t.zero_grad();
  }
}

template <typename T>
std::vector<CheckpointEntry> ParamStore<T>::to_checkpoint(const std::string& prefix) const {
  std::vector<CheckpointEntry> out;
  for (const auto& [name, t] : tensors_) {
    CheckpointEntry e;
    e.name = prefix + name;
    for (auto d : t.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.values.assign(t.data().begin(), t.data().end());
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void ParamStore<T>::load_checkpoint(const std::vector<CheckpointEntry>& entries,
                                    const std::string& prefix) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) {
    if (e.name.rfind(prefix, 0) == 0) by_name.emplace(e.name.substr(prefix.size()), &e);
  }
  // Validate everything before touching any tensor.
  auto own = tensors_.begin();
  auto theirs = by_name.begin();
  while (own != tensors_.end() || theirs != by_name.end()) {
    if (theirs == by_name.end() || (own != tensors_.end() && own->first < theirs->first)) {
      throw CheckpointMismatch(prefix + own->first, "missing from checkpoint");
    }
    if (own == tensors_.end() || theirs->first < own->first) {
      throw CheckpointMismatch(prefix + theirs->first, "not part of the model");
    }
    const auto& shape = own->second.shape();
    const auto& dims = theirs->second->dims;
    bool same = shape.size() == dims.size();
    for (std::size_t i = 0; same && i < dims.size(); ++i) same = shape[i] == dims[i];
    if (!same) {
      throw CheckpointMismatch(prefix + own->first, "model shape " + to_string(shape) +
                                                        " differs from checkpoint");
    }
    ++own;
    ++theirs;
  }
  for (auto& [name, t] : tensors_) {
    const auto& values = by_name.at(name)->values;
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(values[i]);
  }
}

template <typename T>
bool ParamStore<T>::bitwise_equal(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
    if (std::memcmp(a->second.data().data(), b->second.data().data(),
                    a->second.numel() * sizeof(T)) != 0) {
      return false;
    }
  }
  return true;
}

template <typename T>
void kaiming_uniform(Tensor<T>& weight, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : weight.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template class ParamStore<float>;
template class ParamStore<double>;
template void kaiming_uniform<float>(Tensor<float>&, std::size_t, Rng&);
template void kaiming_uniform<double>(Tensor<double>&, std::size_t, Rng&);

}  // namespace fogsight::ad
