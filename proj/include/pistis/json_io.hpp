#pragma once

#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "pistis/util.hpp"

namespace pistis {

using Json = nlohmann::json;

// Streams one parsed JSON object per non-empty line. Parse failures name the
// 1-based line number.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(size_t, const Json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::data, "cannot open " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(ErrorCode::data,
                        path + ": line " + std::to_string(line_no) + ": malformed JSON");
        }
        try {
            fn(line_no, j);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::data,
                        path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline std::ofstream open_for_write(const std::string& path, bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw Error(ErrorCode::data, "cannot write " + path);
    return out;
}

}  // namespace pistis
