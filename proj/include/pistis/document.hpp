#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pistis/tokenizer.hpp"
#include "pistis/util.hpp"

namespace pistis {

// A retrievable memory item. `tokens` is always tokenizer(text); `gold_answer`
// is only present for simulation corpora (single option letter).
struct Document {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;
    std::optional<std::string> topic;
    std::optional<std::vector<double>> embedding;
    std::optional<char> gold_answer;
    double trust = 1.0;

    static Document make(std::string id, std::string text,
                         std::optional<std::string> topic = std::nullopt,
                         std::optional<char> gold = std::nullopt) {
        Document d;
        d.id = std::move(id);
        d.text = std::move(text);
        d.tokens = tokenize(d.text);
        d.topic = std::move(topic);
        d.gold_answer = gold;
        return d;
    }
};

enum class LabelValue { Negative = 0, Even = 1, Positive = 2 };
enum class LabelSource { Copy, Regenerate, Dislike, Simulated };

struct FeedbackLabel {
    LabelValue value = LabelValue::Even;
    LabelSource source = LabelSource::Simulated;

    // User actions map one-to-one onto label values.
    static FeedbackLabel from_action(LabelSource action) {
        switch (action) {
            case LabelSource::Copy: return {LabelValue::Positive, action};
            case LabelSource::Regenerate: return {LabelValue::Even, action};
            case LabelSource::Dislike: return {LabelValue::Negative, action};
            case LabelSource::Simulated: break;
        }
        throw Error(ErrorCode::invalid_argument, "Simulated is not a user action");
    }
};

inline const char* label_value_name(LabelValue v) {
    switch (v) {
        case LabelValue::Positive: return "positive";
        case LabelValue::Even: return "even";
        case LabelValue::Negative: return "negative";
    }
    return "even";
}

inline LabelValue label_value_from_name(const std::string& s) {
    if (s == "positive") return LabelValue::Positive;
    if (s == "even") return LabelValue::Even;
    if (s == "negative") return LabelValue::Negative;
    throw Error(ErrorCode::data, "unknown label \"" + s + "\"");
}

// One feedback tuple: intent, the ordered k-shot example list shown to the
// generator, the generated output, and the listwide label.
struct MemoryRecord {
    std::string intent;
    std::vector<std::string> example_ids;
    std::string output;
    FeedbackLabel label;
};

}  // namespace pistis
