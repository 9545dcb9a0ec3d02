#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace streamrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// One timestamped implicit user-item event. The stored label is always 1;
// negatives are sampled, never stored.
struct Interaction {
    UserId user = 0;
    ItemId item = 0;
    std::int64_t timestamp = 0;
    std::uint64_t seq = 0;  // global arrival ordinal, strictly increasing

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

/*!
 * Bounded FIFO buffer of historical interactions, oldest first.
 * Inserting into a full buffer evicts the element with the smallest seq.
 */
class Reservoir {
  public:
    explicit Reservoir(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("reservoir capacity must be positive");
    }

    void insert(const Interaction& x) {
        if (!buffer_.empty() && x.seq <= buffer_.back().seq)
            throw std::invalid_argument("reservoir insert out of order: seq " +
                                        std::to_string(x.seq) + " after seq " +
                                        std::to_string(buffer_.back().seq));
        buffer_.push_back(x);
        if (buffer_.size() > capacity_) buffer_.pop_front();
    }

    std::size_t size() const { return buffer_.size(); }
    bool empty() const { return buffer_.empty(); }
    std::size_t capacity() const { return capacity_; }

    //! Element by age, 0 = oldest.
    const Interaction& at(std::size_t i) const { return buffer_.at(i); }

    const std::deque<Interaction>& buffer() const { return buffer_; }

    //! Copy of the newest count elements (or fewer), oldest first.
    std::vector<Interaction> tail(std::size_t count) const {
        std::size_t n = count < buffer_.size() ? count : buffer_.size();
        return std::vector<Interaction>(buffer_.end() - static_cast<std::ptrdiff_t>(n),
                                        buffer_.end());
    }

  private:
    std::size_t capacity_;
    std::deque<Interaction> buffer_;
};

/*!
 * Exact per-user record of every item the system has been fed, training and
 * consumed test data alike. Backs negative sampling and evaluation candidate
 * draws; exact on full history, unlike a bounded reservoir.
 */
class SeenIndex {
  public:
    void record(UserId u, ItemId v) {
        if (u >= by_user_.size()) by_user_.resize(u + 1);
        by_user_[u].insert(v);
    }

    bool contains(UserId u, ItemId v) const {
        if (u >= by_user_.size()) return false;
        return by_user_[u].count(v) > 0;
    }

    std::size_t seen_count(UserId u) const {
        if (u >= by_user_.size()) return 0;
        return by_user_[u].size();
    }

    std::size_t num_users() const { return by_user_.size(); }

  private:
    std::vector<std::unordered_set<ItemId>> by_user_;
};

// Simulated stream speeds: n_r interactions received per training iteration
// against n_p processed. n_r < n_p is underload, n_r > n_p overload.
struct StreamSchedule {
    std::size_t n_processed = 256;  // n_p
    std::size_t n_received = 256;   // n_r

    bool underload() const { return n_received < n_processed; }
    bool overload() const { return n_received > n_processed; }
};

}  // namespace streamrec
