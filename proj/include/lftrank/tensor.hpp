// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lftrank/errors.hpp"

namespace lftrank {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array. Rank-1 tensors behave as a single row in
/// matrix operations.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.assign(count(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw DimensionError("tensor data has " + std::to_string(data_.size()) +
                                 " elements but shape " + shape_string(shape_) + " needs " +
                                 std::to_string(count(shape_)));
        }
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        std::vector<T> data;
        std::size_t width = 0;
        for (const auto& row : rows) {
            if (width == 0) {
                width = row.size();
            } else if (row.size() != width) {
                throw DimensionError("ragged matrix literal");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({rows.size(), width}, std::move(data));
    }

    static Tensor vector(std::initializer_list<T> values) {
        return Tensor({values.size()}, std::vector<T>(values));
    }

    static Tensor scalar(T value) { return Tensor({1, 1}, std::vector<T>{value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const {
        if (shape_.size() <= 1) {
            return 1;
        }
        std::size_t r = 1;
        for (std::size_t i = 0; i + 1 < shape_.size(); ++i) {
            r *= shape_[i];
        }
        return r;
    }

    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    T item() const {
        if (data_.size() != 1) {
            throw ContractError("item() on tensor of shape " + shape_string(shape_));
        }
        return data_[0];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t count(const Shape& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Named parameter collection. Enumeration order is lexicographic by name.
/// Every mutable access bumps version(), which caches use to detect
/// staleness.
template <typename T>
class ParamStore {
public:
    struct Entry {
        Tensor<T> tensor;
        bool trainable = false;
    };

    void add(const std::string& name, Tensor<T> tensor, bool trainable = false) {
        if (entries_.count(name) != 0) {
            throw ConfigError("duplicate parameter name '" + name + "'");
        }
        entries_.emplace(name, Entry{std::move(tensor), trainable});
        ++version_;
    }

    void erase(const std::string& name) {
        entries_.erase(name);
        ++version_;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    const Tensor<T>& get(const std::string& name) const { return entry(name).tensor; }

    Tensor<T>& mutable_tensor(const std::string& name) {
        ++version_;
        return find(name).tensor;
    }

    bool trainable(const std::string& name) const { return entry(name).trainable; }

    void set_trainable(const std::string& name, bool trainable) { find(name).trainable = trainable; }

    void freeze_all() {
        for (auto& [_, e] : entries_) {
            e.trainable = false;
        }
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [name, _] : entries_) {
            out.push_back(name);
        }
        return out;
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (const auto& [name, e] : entries_) {
            if (e.trainable) {
                out.push_back(name);
            }
        }
        return out;
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) {
            n += e.tensor.numel();
        }
        return n;
    }

    std::uint64_t version() const { return version_; }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [name, e] : entries_) {
            out.add(name, e.tensor.template cast<U>(), e.trainable);
        }
        return out;
    }

private:
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw ConfigError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    Entry& find(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw ConfigError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    std::map<std::string, Entry> entries_;
    std::uint64_t version_ = 0;
};

// Seeding. Every parameter draws from its own stream derived from
// (experiment seed, parameter name), so adding a parameter never perturbs
// the initialization of the others.
std::uint64_t fnv1a(std::string_view text);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);
std::mt19937_64 named_rng(std::uint64_t seed, std::string_view name);

// Fisher-Yates over raw engine output. std::shuffle and the standard
// distributions are implementation-defined, this is not.
inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline double draw_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename V>
void portable_shuffle(V& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[draw_index(rng, i)]);
    }
}

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng) {
    Tensor<T> out(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : out.values()) {
        v = static_cast<T>(dist(rng));
    }
    return out;
}

}  // namespace lftrank
