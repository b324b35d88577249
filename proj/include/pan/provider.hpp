// provider.hpp - deterministic effect provider: the stand-in for stochastic
// external operations (e.g. model calls) dispatched by perform().
//
// Each op name is either Scripted (ordered response list consumed by a cursor)
// or Seeded (candidate list; the draw is a pure function of (session seed, op,
// call-site key, per-(op,site) invocation index)).  An op may also carry an
// error plan: the first `fail_first_n` invocations raise the given tag without
// consuming a scripted response.  Every invocation is appended to a call log
// whose rendering is byte-stable for determinism checks.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pan/errors.hpp"
#include "pan/json_io.hpp"
#include "pan/value.hpp"

namespace pan {

class EffectProvider {
public:
    EffectProvider() = default;

    // Populates this provider from a config document (replacing any previous
    // configuration; the call log and counters reset).
    void load_json_text(const std::string& text) {
        Json j;
        try {
            j = Json::parse(text);
        } catch (const std::exception& e) {
            throw PanError("ProviderConfigError", std::string("invalid provider JSON: ") + e.what());
        }
        std::lock_guard<std::mutex> lock(mu_);
        EffectProvider p;  // staging: parse fully before replacing state
        if (j.contains("ops")) {
            for (auto it = j["ops"].begin(); it != j["ops"].end(); ++it) {
                const Json& spec = it.value();
                OpSpec op;
                std::string mode = spec.value("mode", "scripted");
                if (mode == "scripted") {
                    op.seeded = false;
                    if (!spec.contains("responses") || !spec["responses"].is_array())
                        throw PanError("ProviderConfigError",
                                       "scripted op '" + it.key() + "' needs a \"responses\" array");
                    for (const auto& r : spec["responses"]) op.items.push_back(value_from_json(r));
                } else if (mode == "seeded") {
                    op.seeded = true;
                    if (!spec.contains("candidates") || !spec["candidates"].is_array() ||
                        spec["candidates"].empty())
                        throw PanError("ProviderConfigError",
                                       "seeded op '" + it.key() + "' needs a non-empty \"candidates\" array");
                    for (const auto& r : spec["candidates"]) op.items.push_back(value_from_json(r));
                } else {
                    throw PanError("ProviderConfigError",
                                   "op '" + it.key() + "': unknown mode '" + mode + "'");
                }
                p.ops_.emplace(it.key(), std::move(op));
            }
        }
        if (j.contains("errors")) {
            for (auto it = j["errors"].begin(); it != j["errors"].end(); ++it) {
                ErrSpec e;
                e.fail_first_n = it.value().value("fail_first_n", 0);
                e.tag = it.value().value("tag", "ProviderError");
                p.errors_.emplace(it.key(), e);
            }
        }
        ops_ = std::move(p.ops_);
        errors_ = std::move(p.errors_);
        log_.clear();
    }

    void set_seed(std::uint64_t seed) { seed_ = seed; }

    // `site_key` identifies the textual call site (stable across runs); args
    // are logged but never influence scripted/seeded draws.
    Value call(const std::string& op, const std::vector<Value>& args, std::uint64_t site_key) {
        std::lock_guard<std::mutex> lock(mu_);
        std::ostringstream rec;
        rec << op << "(";
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (i) rec << ", ";
            rec << args[i].repr();
        }
        rec << ")";
        auto err = errors_.find(op);
        if (err != errors_.end() && err->second.calls_failed < err->second.fail_first_n) {
            err->second.calls_failed++;
            rec << " -> raise " << err->second.tag;
            log_.push_back(rec.str());
            throw RuntimeError(err->second.tag, "provider raised for op '" + op + "' (scripted failure " +
                                                    std::to_string(err->second.calls_failed) + "/" +
                                                    std::to_string(err->second.fail_first_n) + ")");
        }
        auto it = ops_.find(op);
        if (it == ops_.end()) {
            rec << " -> raise ProviderExhausted";
            log_.push_back(rec.str());
            throw RuntimeError("ProviderExhausted", "no provider configured for op '" + op + "'");
        }
        OpSpec& spec = it->second;
        Value out;
        if (spec.seeded) {
            std::uint64_t idx = spec.site_counters[site_key]++;
            std::uint64_t h = mix(seed_, op, site_key, idx);
            out = spec.items[h % spec.items.size()];
        } else {
            if (spec.cursor >= spec.items.size()) {
                rec << " -> raise ProviderExhausted";
                log_.push_back(rec.str());
                throw RuntimeError("ProviderExhausted",
                                   "scripted responses for op '" + op + "' exhausted after " +
                                       std::to_string(spec.items.size()) + " calls");
            }
            out = spec.items[spec.cursor++];
        }
        rec << " -> " << out.repr();
        log_.push_back(rec.str());
        return out.deep_copy();  // each call yields an independent mutable value
    }

    std::vector<std::string> log() const {
        std::lock_guard<std::mutex> lock(mu_);
        return log_;
    }

    std::size_t log_size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return log_.size();
    }

private:
    struct OpSpec {
        bool seeded = false;
        std::vector<Value> items;
        std::size_t cursor = 0;                                // scripted
        std::map<std::uint64_t, std::uint64_t> site_counters;  // seeded: per-site invocation index
    };
    struct ErrSpec {
        int fail_first_n = 0;
        std::string tag;
        int calls_failed = 0;
    };

    // FNV-1a over the draw key; platform-independent.
    static std::uint64_t mix(std::uint64_t seed, const std::string& op, std::uint64_t site,
                             std::uint64_t idx) {
        std::uint64_t h = 1469598103934665603ull;
        auto feed = [&h](std::uint64_t x) {
            for (int i = 0; i < 8; ++i) {
                h ^= (x >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        };
        feed(seed);
        for (unsigned char c : op) {
            h ^= c;
            h *= 1099511628211ull;
        }
        feed(site);
        feed(idx);
        return h;
    }

    mutable std::mutex mu_;
    std::uint64_t seed_ = 0;
    std::map<std::string, OpSpec> ops_;
    std::map<std::string, ErrSpec> errors_;
    std::vector<std::string> log_;
};

}  // namespace pan
