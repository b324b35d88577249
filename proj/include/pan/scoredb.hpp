// scoredb.hpp - shared score database for recorded branch scores.
//
// Plain submissions resolve immediately.  Group submissions enqueue a pending
// handle under a label; flushing re-runs the group's evaluator function over
// *all* targets recorded under each dirty label and overwrites every handle,
// so scores of earlier branches may change as later branches join the group.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pan/errors.hpp"
#include "pan/value.hpp"

namespace pan {

struct ScoreCell {
    std::optional<Value> value;  // unset = not yet scored
};
using ScoreHandle = std::shared_ptr<ScoreCell>;

// Invokes a program function with positional arguments; supplied by the engine
// so flushing can re-enter the interpreter for evaluator calls.
using FnInvoker = std::function<Value(const std::string& fn, const std::vector<Value>& args)>;

class ScoreDb {
public:
    ScoreHandle submit(const Value& score) {
        if (!score.is_number()) {
            throw RuntimeError("TypeError",
                               std::string("recorded score must be a number, got ") + score.type_name());
        }
        auto cell = std::make_shared<ScoreCell>();
        cell->value = score;
        return cell;
    }

    // Target is snapshotted at submission time; later in-place mutation by the
    // submitting branch does not change what the evaluator sees.
    ScoreHandle submit_group(const std::string& evaluator, const Value& target, const Value& label) {
        auto cell = std::make_shared<ScoreCell>();
        std::lock_guard<std::mutex> lock(mu_);
        auto& group = groups_[label.repr()];
        if (group.subs.empty()) group.evaluator = evaluator;
        if (group.evaluator != evaluator) {
            throw RuntimeError("TypeError", "label used with two different group evaluators: " +
                                                group.evaluator + " and " + evaluator);
        }
        group.subs.push_back({target.deep_copy(), cell});
        group.dirty = true;
        return cell;
    }

    // Re-evaluates every dirty group; returns the number of handles rewritten.
    // The evaluator receives one list of all targets under the label and must
    // return a list of numbers of the same length.
    int flush(const FnInvoker& invoke) {
        std::vector<std::pair<std::string, std::vector<Pending>>> work;
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (auto& [key, group] : groups_) {
                if (!group.dirty) continue;
                group.dirty = false;
                work.emplace_back(group.evaluator, group.subs);
            }
        }
        int rewritten = 0;
        for (auto& [evaluator, subs] : work) {
            std::vector<Value> targets;
            targets.reserve(subs.size());
            for (const auto& p : subs) targets.push_back(p.target);
            Value result;
            try {
                result = invoke(evaluator, {Value::list(std::move(targets))});
            } catch (const RuntimeError& e) {
                throw RuntimeError("GroupEvalError",
                                   "group evaluator " + evaluator + " failed: " + e.what(), e.span());
            }
            if (!result.is_list() || result.as_list()->items.size() != subs.size()) {
                throw RuntimeError("TypeError", "group evaluator " + evaluator +
                                                    " must return one score per target");
            }
            const auto& scores = result.as_list()->items;
            for (std::size_t i = 0; i < subs.size(); ++i) {
                if (!scores[i].is_number()) {
                    throw RuntimeError("TypeError", "group evaluator " + evaluator +
                                                        " returned a non-number score");
                }
                subs[i].handle->value = scores[i];
                ++rewritten;
            }
        }
        return rewritten;
    }

    std::size_t group_size(const Value& label) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = groups_.find(label.repr());
        return it == groups_.end() ? 0 : it->second.subs.size();
    }

private:
    struct Pending {
        Value target;
        ScoreHandle handle;
    };
    struct Group {
        std::string evaluator;
        std::vector<Pending> subs;
        bool dirty = false;
    };

    mutable std::mutex mu_;
    std::map<std::string, Group> groups_;  // key: canonical repr of the label value
};

}  // namespace pan
