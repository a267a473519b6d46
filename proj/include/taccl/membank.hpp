#pragma once

#include <deque>
#include <memory>
#include <vector>

#include "core.hpp"

namespace taccl {

struct BankEntry {
    std::vector<double> vec;
    int label = 0;
    long step = 0;
};

/// Immutable copy of the bank contents, oldest entry first.
struct BankView {
    Matrix vecs;  // M x d
    std::vector<int> labels;
    std::size_t size() const { return labels.size(); }
};

/// Fixed-capacity FIFO of (embedding, pseudo-label) pairs from past iterations.
class MemoryBank {
public:
    MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
        if (capacity == 0) throw Error(ErrorKind::InvalidConfig, "bank capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::deque<BankEntry>& entries() const { return entries_; }

    /// Appends a batch, evicting the oldest entries first when full.
    /// Returns the number of evicted entries.
    std::size_t enqueue_batch(std::span<const std::vector<double>> vecs, std::span<const int> labels, long step) {
        if (vecs.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "vecs/labels length mismatch");
        if (vecs.size() > capacity_) {
            throw Error(ErrorKind::BatchTooLarge, "batch of " + std::to_string(vecs.size()) + " exceeds capacity " +
                                                      std::to_string(capacity_));
        }
        for (const auto& v : vecs) {
            if (v.size() != dim_) throw Error(ErrorKind::DimensionMismatch, "bank entry dimension mismatch");
        }
        std::size_t evicted = 0;
        while (entries_.size() + vecs.size() > capacity_) {
            entries_.pop_front();
            ++evicted;
        }
        for (std::size_t i = 0; i < vecs.size(); ++i) entries_.push_back({vecs[i], labels[i], step});
        return evicted;
    }

    void clear() { entries_.clear(); }

    BankView snapshot() const {
        BankView view;
        view.vecs = Matrix(entries_.size(), dim_);
        view.labels.reserve(entries_.size());
        std::size_t i = 0;
        for (const auto& e : entries_) {
            std::copy(e.vec.begin(), e.vec.end(), view.vecs.row(i++).begin());
            view.labels.push_back(e.label);
        }
        return view;
    }

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::deque<BankEntry> entries_;
};

/// Dot-product similarities between batch rows and bank rows. Zero-sentinel rows score 0.
inline Matrix similarity_matrix(const Matrix& batch, const Matrix& bank) {
    if (bank.rows > 0 && batch.cols != bank.cols) throw Error(ErrorKind::DimensionMismatch, "batch/bank dimension mismatch");
    Matrix s(batch.rows, bank.rows, 0.0);
    for (std::size_t i = 0; i < batch.rows; ++i)
        for (std::size_t j = 0; j < bank.rows; ++j) s(i, j) = dot(batch.row(i), bank.row(j));
    return s;
}

}  // namespace taccl
