#pragma once

#include <deque>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pistis/util.hpp"

namespace pistis {

// LRU map with a fixed entry capacity. Iteration order (via entries()) runs
// least-recently-used first, which is also the persistence order.
template <typename Value>
class LruMap {
public:
    explicit LruMap(size_t capacity = 10000) : capacity_(capacity) {}

    size_t size() const { return index_.size(); }
    size_t capacity() const { return capacity_; }

    void put(const std::string& key, Value value) {
        if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty cache key");
        auto it = index_.find(key);
        if (it != index_.end()) {
            it->second->second = std::move(value);
            touch(it);
            return;
        }
        if (capacity_ > 0 && index_.size() >= capacity_) {
            auto& oldest = order_.front();
            index_.erase(oldest.first);
            order_.pop_front();
        }
        order_.emplace_back(key, std::move(value));
        index_[key] = std::prev(order_.end());
    }

    std::optional<Value> get(const std::string& key) {
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        touch(it);
        return it->second->second;
    }

    bool contains(const std::string& key) const { return index_.count(key) > 0; }

    std::vector<std::pair<std::string, Value>> entries() const {
        return {order_.begin(), order_.end()};
    }

    void clear() {
        order_.clear();
        index_.clear();
    }

private:
    using Entry = std::pair<std::string, Value>;
    using Order = std::list<Entry>;

    void touch(typename std::unordered_map<std::string, typename Order::iterator>::iterator it) {
        order_.splice(order_.end(), order_, it->second);
        it->second = std::prev(order_.end());
    }

    size_t capacity_;
    Order order_;
    std::unordered_map<std::string, typename Order::iterator> index_;
};

struct SessionTurn {
    std::string query;
    std::string answer;
};

// Session history and prompt->answer caches from the matching service.
// Prompt keys are normalized (lowercase, collapsed whitespace) by callers.
class KvCache {
public:
    explicit KvCache(size_t capacity = 10000, size_t turns_per_session = 32)
        : sessions_(capacity), prompt_answers_(capacity), turns_per_session_(turns_per_session) {}

    void put_session_turn(const std::string& session_id, SessionTurn turn) {
        auto existing = sessions_.get(session_id);
        std::deque<SessionTurn> history = existing ? std::move(*existing) : std::deque<SessionTurn>{};
        history.push_back(std::move(turn));
        while (history.size() > turns_per_session_) history.pop_front();
        sessions_.put(session_id, std::move(history));
    }

    std::optional<std::deque<SessionTurn>> get_session(const std::string& session_id) {
        return sessions_.get(session_id);
    }

    void put_answer(const std::string& normalized_prompt, const std::string& answer) {
        prompt_answers_.put(normalized_prompt, answer);
    }

    std::optional<std::string> get_answer(const std::string& normalized_prompt) {
        return prompt_answers_.get(normalized_prompt);
    }

    LruMap<std::deque<SessionTurn>>& sessions() { return sessions_; }
    LruMap<std::string>& prompt_answers() { return prompt_answers_; }
    const LruMap<std::deque<SessionTurn>>& sessions() const { return sessions_; }
    const LruMap<std::string>& prompt_answers() const { return prompt_answers_; }
    size_t turns_per_session() const { return turns_per_session_; }

private:
    LruMap<std::deque<SessionTurn>> sessions_;
    LruMap<std::string> prompt_answers_;
    size_t turns_per_session_;
};

}  // namespace pistis
