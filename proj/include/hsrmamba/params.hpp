#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hsrmamba/autodiff.hpp"
#include "hsrmamba/errors.hpp"
#include "hsrmamba/rng.hpp"
#include "hsrmamba/selective_scan.hpp"
#include "hsrmamba/tensor.hpp"

namespace hsr {

/// Named parameter tensors in registration order. Names follow
/// `<stage>.<level>.<block>.<param>` and are stable across versions.
template <class T>
class ParamSet {
public:
    void add(const std::string& name, Tensor<T> value) {
        if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
        index_.emplace(name, values_.size());
        names_.push_back(name);
        values_.push_back(std::move(value));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) { return values_[index_of(name)]; }
    const Tensor<T>& at(const std::string& name) const { return values_[index_of(name)]; }

    std::size_t index_of(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }

    std::size_t size() const noexcept { return values_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::vector<Tensor<T>>& values() noexcept { return values_; }
    const std::vector<Tensor<T>>& values() const noexcept { return values_; }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].template cast<U>());
        return out;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        return a.names_ == b.names_ && a.values_ == b.values_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Parameters wrapped as Vars for one forward pass: tape leaves when training,
/// constants otherwise.
template <class T>
class Bindings {
public:
    explicit Bindings(const ParamSet<T>& params, Tape<T>* tape = nullptr) : params_(&params) {
        vars_.reserve(params.size());
        for (const auto& v : params.values()) vars_.push_back(tape ? tape->leaf(v) : Var<T>(v));
    }

    const Var<T>& operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }
    const std::vector<Var<T>>& vars() const noexcept { return vars_; }

    S6Weights<T> s6(const std::string& prefix) const {
        const auto& b = *this;
        return {b(prefix + ".a_log"),     b(prefix + ".d_skip"),  b(prefix + ".w_b"), b(prefix + ".w_c"),
                b(prefix + ".w_dt_down"), b(prefix + ".w_dt_up"), b(prefix + ".b_dt")};
    }

private:
    const ParamSet<T>* params_;
    std::vector<Var<T>> vars_;
};

namespace init {

template <class T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

/// Conv weight [out x in/groups x k x k] and bias [out], uniform in +-1/sqrt(fan_in).
template <class T>
void conv(ParamSet<T>& ps, const std::string& name, std::size_t out, std::size_t in_per_group, std::size_t k,
          Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_per_group * k * k));
    Tensor<T> w({out, in_per_group, k, k});
    Tensor<T> b({out});
    fill_uniform(w, bound, rng);
    fill_uniform(b, bound, rng);
    ps.add(name + ".weight", std::move(w));
    ps.add(name + ".bias", std::move(b));
}

/// Linear weight [out x in] and bias [out], uniform in +-1/sqrt(in).
template <class T>
void linear(ParamSet<T>& ps, const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor<T> w({out, in});
    Tensor<T> b({out});
    fill_uniform(w, bound, rng);
    fill_uniform(b, bound, rng);
    ps.add(name + ".weight", std::move(w));
    ps.add(name + ".bias", std::move(b));
}

template <class T>
void layernorm(ParamSet<T>& ps, const std::string& name, std::size_t channels) {
    ps.add(name + ".gamma", Tensor<T>({channels}, T{1}));
    ps.add(name + ".beta", Tensor<T>({channels}, T{0}));
}

template <class T>
void s6(ParamSet<T>& ps, const std::string& name, std::size_t d, std::size_t N, Rng& rng) {
    auto p = init_s6<T>(d, N, rng);
    ps.add(name + ".a_log", std::move(p.a_log));
    ps.add(name + ".d_skip", std::move(p.d_skip));
    ps.add(name + ".w_b", std::move(p.w_b));
    ps.add(name + ".w_c", std::move(p.w_c));
    ps.add(name + ".w_dt_down", std::move(p.w_dt_down));
    ps.add(name + ".w_dt_up", std::move(p.w_dt_up));
    ps.add(name + ".b_dt", std::move(p.b_dt));
}

}  // namespace init

}  // namespace hsr
