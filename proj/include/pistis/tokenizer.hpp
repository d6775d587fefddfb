#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pistis/util.hpp"

namespace pistis {

// Byte range of a token within the original text, plus its normalized form.
struct TokenSpan {
    size_t offset = 0;
    size_t length = 0;
    std::string token;
};

namespace detail {

// Decodes one UTF-8 codepoint at s[i]; advances i past it. Malformed bytes
// decode as U+FFFD one byte at a time, so tokenization is total.
inline uint32_t decode_utf8(std::string_view s, size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    size_t len = 0;
    uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (size_t k = 1; k < len; ++k) {
        unsigned char b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

inline bool is_unicode_space(uint32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
        case 0x00A0: case 0x2028: case 0x2029: case 0x3000: case 0x200B:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

// CJK unified ideographs; C-EVAL-style text has no spaces, so each ideograph
// becomes its own token.
inline bool is_cjk(uint32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0xF900 && cp <= 0xFAFF);
}

inline bool is_ascii_word(uint32_t cp) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
           (cp >= 'A' && cp <= 'Z') || cp == '_';
}

inline bool is_punct_like(uint32_t cp) {
    if (cp < 0x80) return !is_ascii_word(cp);
    // General punctuation, symbols, arrows/shapes, CJK punctuation, fullwidth forms.
    return (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x2190 && cp <= 0x2BFF) ||
           (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFE30 && cp <= 0xFE4F) ||
           (cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
           (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
}

inline void append_lowered(std::string& out, std::string_view s, size_t from, size_t to) {
    for (size_t i = from; i < to; ++i) {
        char c = s[i];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        out.push_back(c);
    }
}

}  // namespace detail

// Lowercased, whitespace/punctuation-split tokens; CJK ideographs split per
// codepoint. Deterministic and idempotent on its own output.
inline std::vector<TokenSpan> tokenize_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    size_t i = 0;
    size_t word_start = std::string_view::npos;
    auto flush = [&](size_t end) {
        if (word_start == std::string_view::npos) return;
        TokenSpan ts;
        ts.offset = word_start;
        ts.length = end - word_start;
        detail::append_lowered(ts.token, text, word_start, end);
        spans.push_back(std::move(ts));
        word_start = std::string_view::npos;
    };
    while (i < text.size()) {
        size_t at = i;
        uint32_t cp = detail::decode_utf8(text, i);
        if (detail::is_unicode_space(cp) || detail::is_punct_like(cp)) {
            flush(at);
        } else if (detail::is_cjk(cp)) {
            flush(at);
            spans.push_back(TokenSpan{at, i - at, std::string(text.substr(at, i - at))});
        } else {
            if (word_start == std::string_view::npos) word_start = at;
        }
    }
    flush(text.size());
    return spans;
}

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    for (auto& s : tokenize_spans(text)) tokens.push_back(std::move(s.token));
    return tokens;
}

inline double token_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

}  // namespace pistis
