// frame.hpp - call frames for resumable program states.
//
// A frame holds local variables, temporary slots for lifted primitive results,
// and a stack of active loop iterators.  Frames chain through `caller` (for
// searchover sub-calls) and share one immutable `enclosing` frame that binds
// program function names.  Cloning a frame chain deep-copies every mutable
// value while preserving aliasing across the whole graph; names marked nocopy
// keep their cells shared between original and clone.
#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pan/value.hpp"

namespace pan {

struct IterState {
    std::vector<Value> seq;  // materialized snapshot of the iterated sequence
    std::size_t cursor = 0;  // index of the next element to bind
};

struct Frame;
using FramePtr = std::shared_ptr<Frame>;

struct Frame {
    std::map<std::string, Value> locals;
    std::map<int, Value> tmp;          // lifted primitive results, keyed by slot
    std::vector<IterState> iterables;  // one entry per active for-loop
    FramePtr caller;                   // frame to return into (searchover calls)
    FramePtr enclosing;                // shared, immutable: program fn bindings
};

namespace detail {

// Record identity mappings for every cell reachable from `v`, so deep_copy
// leaves the whole structure shared.  Transitive: anything inside a nocopy
// cell stays shared even when reached through another alias.
inline void seed_identity(const Value& v, std::unordered_map<const void*, Value>& memo) {
    if (v.is_list()) {
        const void* key = v.as_list().get();
        if (memo.count(key)) return;
        memo.emplace(key, v);
        for (const auto& e : v.as_list()->items) seed_identity(e, memo);
    } else if (v.is_map()) {
        const void* key = v.as_map().get();
        if (memo.count(key)) return;
        memo.emplace(key, v);
        for (const auto& [k, e] : v.as_map()->entries) seed_identity(e, memo);
    }
}

}  // namespace detail

// Deep-clones a frame chain (locals, temps, iterator snapshots, and the
// callers recursively) with one shared memo so aliasing between any two
// reachable cells is reproduced in the clone.  Cells bound to a name in
// `nocopy` (in any frame of the chain) are exempted: original and clone keep
// mutating the same cell.  The `enclosing` frame is shared, never copied.
inline FramePtr frame_clone(const FramePtr& frame, const std::set<std::string>& nocopy) {
    std::unordered_map<const void*, Value> memo;
    for (FramePtr f = frame; f; f = f->caller) {
        for (const auto& name : nocopy) {
            auto it = f->locals.find(name);
            if (it != f->locals.end()) detail::seed_identity(it->second, memo);
        }
    }
    FramePtr head;
    Frame* prev = nullptr;
    for (FramePtr f = frame; f; f = f->caller) {
        auto copy = std::make_shared<Frame>();
        copy->enclosing = f->enclosing;
        for (const auto& [name, v] : f->locals) copy->locals.emplace(name, v.deep_copy(memo));
        for (const auto& [slot, v] : f->tmp) copy->tmp.emplace(slot, v.deep_copy(memo));
        copy->iterables.reserve(f->iterables.size());
        for (const auto& it : f->iterables) {
            IterState is;
            is.cursor = it.cursor;
            is.seq.reserve(it.seq.size());
            for (const auto& v : it.seq) is.seq.push_back(v.deep_copy(memo));
            copy->iterables.push_back(std::move(is));
        }
        if (prev) {
            prev->caller = copy;
        } else {
            head = copy;
        }
        prev = copy.get();
    }
    return head;
}

}  // namespace pan
