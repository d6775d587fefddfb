#pragma once

#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "pistis/document.hpp"
#include "pistis/util.hpp"

namespace pistis {

enum class PromptLanguage { english, chinese };

// Few-shot prompt layout: exemplar blocks ("<text>\nAnswer: <letter>"), the
// question block without an answer, then the instruction tail. Blocks are
// separated by blank lines. Rendering is deterministic.
struct PromptTemplate {
    PromptLanguage language = PromptLanguage::english;
    std::string answer_prefix = "Answer:";
    std::string instruction_tail =
        "Please provide your answer as a single character\n"
        "(e.g., 'A', 'B', 'C', 'D', etc.):";

    static PromptTemplate english() { return PromptTemplate{}; }

    static PromptTemplate chinese() {
        PromptTemplate t;
        t.language = PromptLanguage::chinese;
        t.instruction_tail =
            "\xE8\xAF\xB7\xE4\xBB\xA5\xE5\x8D\x95\xE4\xB8\xAA\xE5\xAD\x97\xE7\xAC\xA6"
            "\xE4\xBD\x9C\xE7\xAD\x94\xEF\xBC\x88\xE4\xBE\x8B\xE5\xA6\x82 'A'\xE3\x80\x81"
            "'B'\xE3\x80\x81'C'\xE3\x80\x81'D' \xE7\xAD\x89\xEF\xBC\x89\xEF\xBC\x9A";
        return t;
    }
};

inline std::string build_prompt(const PromptTemplate& tmpl,
                                const std::vector<const Document*>& examples,
                                const Document& question) {
    std::string out;
    for (const Document* ex : examples) {
        if (!ex->gold_answer) {
            throw Error(ErrorCode::data,
                        "example \"" + ex->id + "\" has no gold answer");
        }
        out += ex->text;
        out += "\n";
        out += tmpl.answer_prefix;
        out += " ";
        out += *ex->gold_answer;
        out += "\n\n";
    }
    out += question.text;
    out += "\n\n";
    out += tmpl.instruction_tail;
    out += "\n";
    return out;
}

// Ordered regex bank; the first matching pattern wins. Patterns are compiled
// once. Each pattern carries one capture group yielding a single letter.
class ExtractorBank {
public:
    enum class Anchor { first_match, last_match, single_letter_line };

    struct Pattern {
        std::regex regex;
        Anchor anchor;
    };

    static ExtractorBank standard() {
        ExtractorBank bank;
        bank.patterns_.push_back(
            {std::regex(R"(Answer:\s*\(?([A-Za-z])\)?)"), Anchor::last_match});
        bank.patterns_.push_back({std::regex(R"(\(([A-Za-z])\))"), Anchor::first_match});
        bank.patterns_.push_back({std::regex(R"(^\s*([A-Za-z])\s*$)"), Anchor::single_letter_line});
        return bank;
    }

    void add_pattern(const std::string& pattern, Anchor anchor = Anchor::first_match) {
        patterns_.push_back({std::regex(pattern), anchor});
    }

    std::optional<char> extract(const std::string& text) const {
        for (const auto& p : patterns_) {
            if (p.anchor == Anchor::single_letter_line) {
                for (const auto& line : split(text, '\n')) {
                    std::smatch m;
                    if (std::regex_match(line, m, p.regex)) {
                        return upper(m[1].str()[0]);
                    }
                }
                continue;
            }
            auto begin = std::sregex_iterator(text.begin(), text.end(), p.regex);
            auto end = std::sregex_iterator();
            if (begin == end) continue;
            if (p.anchor == Anchor::first_match) {
                return upper((*begin)[1].str()[0]);
            }
            std::smatch last;
            for (auto it = begin; it != end; ++it) last = *it;
            return upper(last[1].str()[0]);
        }
        return std::nullopt;
    }

private:
    static char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

    std::vector<Pattern> patterns_;
};

// Listwide label from simulated behavior: correct extraction reads as a copy
// action, an incorrect one as regeneration, no extraction as a dislike.
inline FeedbackLabel assign_label(std::optional<char> extracted, char gold) {
    char g = static_cast<char>(std::toupper(static_cast<unsigned char>(gold)));
    if (g < 'A' || g > 'Z') {
        throw Error(ErrorCode::invalid_argument, "gold answer must be a letter");
    }
    FeedbackLabel label;
    label.source = LabelSource::Simulated;
    if (!extracted) {
        label.value = LabelValue::Negative;
    } else if (std::toupper(static_cast<unsigned char>(*extracted)) == g) {
        label.value = LabelValue::Positive;
    } else {
        label.value = LabelValue::Even;
    }
    return label;
}

}  // namespace pistis
