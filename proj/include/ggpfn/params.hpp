#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ggpfn/errors.hpp"
#include "ggpfn/tensor.hpp"

namespace ggpfn {

// Named parameter tensors in a fixed registration order, each with its Adam
// moment buffers. Training mutates values and moments in place; forward code
// only reads. `opt_step` counts optimizer updates across all stages (it feeds
// Adam's bias correction), `epochs_done` carries epoch numbering across
// resumed runs.
template <class S>
class ParamStoreT {
 public:
  struct Entry {
    Tensor<S> value;
    Tensor<S> m;
    Tensor<S> v;
  };

  void add(const std::string& name, Tensor<S> value) {
    if (index_.count(name)) throw Error("duplicate parameter: " + name);
    index_[name] = order_.size();
    order_.push_back(name);
    Entry e;
    e.m = Tensor<S>::zeros(value.shape());
    e.v = Tensor<S>::zeros(value.shape());
    e.value = std::move(value);
    entries_.push_back(std::move(e));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor<S>& at(const std::string& name) const {
    return entry(name).value;
  }
  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second];
  }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  template <class To>
  ParamStoreT<To> cast() const {
    ParamStoreT<To> out;
    for (std::size_t i = 0; i < order_.size(); ++i) {
      out.add(order_[i], entries_[i].value.template cast<To>());
      auto& e = out.entry(order_[i]);
      e.m = entries_[i].m.template cast<To>();
      e.v = entries_[i].v.template cast<To>();
    }
    out.opt_step = opt_step;
    out.epochs_done = epochs_done;
    return out;
  }

  std::uint64_t opt_step = 0;
  std::uint64_t epochs_done = 0;

 private:
  std::vector<std::string> order_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParamStore = ParamStoreT<float>;

}  // namespace ggpfn
