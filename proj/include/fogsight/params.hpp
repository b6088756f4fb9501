#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fogsight/checkpoint.hpp"
#include "fogsight/error.hpp"
#include "fogsight/ops.hpp"
#include "fogsight/rng.hpp"
#include "fogsight/tensor.hpp"

namespace fogsight::ad {

// Raised when a checkpoint does not fit a parameter set; names the first
// offending tensor.
class CheckpointMismatch : public Error {
 public:
  CheckpointMismatch(const std::string& layer, const std::string& why)
      : Error("checkpoint mismatch at " + layer + ": " + why), layer_(layer) {}
  const std::string& layer() const { return layer_; }

 private:
  std::string layer_;
};

// Named weights and running statistics of a model, keyed by layer path
// ("rgb.ds1.conv.weight"). Iteration is in name order.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add_parameter(const std::string& name, Tensor<T> value);
  Tensor<T>& add_buffer(const std::string& name, Tensor<T> value);
  // gamma = 1, beta = 0, running stats uninitialised.
  void add_batch_norm(const std::string& prefix, std::size_t channels);
  BatchNormBuffers<T> batch_norm_buffers(const std::string& prefix) const;

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool is_buffer(const std::string& name) const { return buffers_.count(name) != 0; }

  std::vector<std::string> names() const;
  // Trainable tensors only, in name order.
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  std::vector<CheckpointEntry> to_checkpoint(const std::string& prefix = "") const;
  // Entries whose names start with `prefix` must match this store exactly
  // (same names, same shapes); others are ignored.
  void load_checkpoint(const std::vector<CheckpointEntry>& entries, const std::string& prefix = "");

  bool bitwise_equal(const ParamStore& other) const;

 private:
  std::map<std::string, Tensor<T>> tensors_;
  std::set<std::string> buffers_;
};

// Kaiming-uniform fan-in initialisation: U(-b, b), b = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(Tensor<T>& weight, std::size_t fan_in, Rng& rng);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace fogsight::ad
