// source.hpp - source text bookkeeping: offsets, spans, line/column mapping
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pan {

// Half-open byte range [begin, end) into the original source text.
struct Span {
    size_t begin = 0;
    size_t end = 0;

    bool operator==(const Span&) const = default;
};

struct LineCol {
    size_t line = 1;  // 1-based
    size_t col = 1;   // 1-based, in bytes
};

// Resolves byte offsets to line/column positions for diagnostics.
class SourceMap {
public:
    explicit SourceMap(std::string text) : text_(std::move(text)) {
        line_starts_.push_back(0);
        for (size_t i = 0; i < text_.size(); ++i) {
            if (text_[i] == '\n') line_starts_.push_back(i + 1);
        }
    }

    const std::string& text() const { return text_; }

    LineCol locate(size_t offset) const {
        // Binary search for the last line start <= offset.
        size_t lo = 0, hi = line_starts_.size();
        while (lo + 1 < hi) {
            size_t mid = (lo + hi) / 2;
            if (line_starts_[mid] <= offset) lo = mid;
            else hi = mid;
        }
        return {lo + 1, offset - line_starts_[lo] + 1};
    }

    std::string slice(Span s) const {
        if (s.begin >= text_.size()) return "";
        return text_.substr(s.begin, std::min(s.end, text_.size()) - s.begin);
    }

private:
    std::string text_;
    std::vector<size_t> line_starts_;
};

}  // namespace pan
