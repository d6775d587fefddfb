#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pistis/cascade.hpp"
#include "pistis/matching.hpp"
#include "pistis/pipeline.hpp"
#include "pistis/util.hpp"

namespace pistis {

// Flat key = value configuration. Precedence: built-in defaults < config
// file < PISTIS_* environment variables < CLI flags.
struct PistisConfig {
    std::string corpus;
    std::string queries;
    std::string feedback;
    std::string model_path;
    std::string index_path;

    size_t dim = kDefaultEmbeddingDim;
    size_t p_m = 10;
    size_t p_pr = 5;
    size_t p_r = 5;
    double l_th_ms = 1000.0;
    size_t reason_paths = 3;
    std::string mode = "hybrid";
    std::string generator = "mock";
    std::string language = "english";
    std::string latency = "mock";
    uint64_t seed = 7;

    size_t hidden = 16;
    size_t epochs = 200;
    double learning_rate = 0.05;
    size_t batch = 32;
    size_t quota = 300;

    double dedup_threshold = 0.9;
    size_t minhash_hashes = 128;
    double kl_threshold = -1.0;  // negative = 4 x median

    size_t cache_capacity = 10000;
    std::string blocklist;  // comma-separated lowercase terms
    std::string scorer = "overlap";
    std::string scorer_url;
    size_t eval_workers = 1;
    size_t port = 8080;
    size_t latency_window = 20;
    bool markdown = false;

    double mock_correct_threshold = 0.25;
    double mock_no_answer_rate = 0.05;

    CascadeConfig cascade() const {
        CascadeConfig c;
        c.p_m = p_m;
        c.p_pr = p_pr;
        c.p_r = p_r;
        c.l_th_ms = l_th_ms;
        c.mode = match_mode_from_name(mode);
        c.reason_paths = reason_paths;
        c.validate();
        return c;
    }

    LatencyMode latency_mode() const {
        if (latency == "mock") return LatencyMode::mock;
        if (latency == "wall") return LatencyMode::wall;
        throw Error(ErrorCode::invalid_argument, "latency must be mock or wall");
    }

    std::vector<std::string> blocklist_terms() const {
        std::vector<std::string> out;
        for (auto& t : split(blocklist, ',')) {
            auto trimmed = ascii_lower(trim(t));
            if (!trimmed.empty()) out.push_back(trimmed);
        }
        return out;
    }

    void apply(const std::string& key, const std::string& value) {
        if (key == "corpus") corpus = value;
        else if (key == "queries") queries = value;
        else if (key == "feedback") feedback = value;
        else if (key == "model") model_path = value;
        else if (key == "index") index_path = value;
        else if (key == "dim") dim = parse_size(key, value);
        else if (key == "p_m") p_m = parse_size(key, value);
        else if (key == "p_pr") p_pr = parse_size(key, value);
        else if (key == "p_r") p_r = parse_size(key, value);
        else if (key == "l_th_ms") l_th_ms = parse_real(key, value);
        else if (key == "reason_paths") reason_paths = parse_size(key, value);
        else if (key == "mode") mode = value;
        else if (key == "generator") generator = value;
        else if (key == "language") language = value;
        else if (key == "latency") latency = value;
        else if (key == "seed") seed = parse_size(key, value);
        else if (key == "hidden") hidden = parse_size(key, value);
        else if (key == "epochs") epochs = parse_size(key, value);
        else if (key == "learning_rate") learning_rate = parse_real(key, value);
        else if (key == "batch") batch = parse_size(key, value);
        else if (key == "quota") quota = parse_size(key, value);
        else if (key == "dedup_threshold") dedup_threshold = parse_real(key, value);
        else if (key == "minhash_hashes") minhash_hashes = parse_size(key, value);
        else if (key == "kl_threshold") kl_threshold = parse_real(key, value);
        else if (key == "cache_capacity") cache_capacity = parse_size(key, value);
        else if (key == "blocklist") blocklist = value;
        else if (key == "scorer") scorer = value;
        else if (key == "scorer_url") scorer_url = value;
        else if (key == "eval_workers") eval_workers = parse_size(key, value);
        else if (key == "port") port = parse_size(key, value);
        else if (key == "latency_window") latency_window = parse_size(key, value);
        else if (key == "markdown") markdown = parse_bool(key, value);
        else if (key == "mock_correct_threshold") mock_correct_threshold = parse_real(key, value);
        else if (key == "mock_no_answer_rate") mock_no_answer_rate = parse_real(key, value);
        else throw Error(ErrorCode::invalid_argument, "unknown config key \"" + key + "\"");
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::data, "cannot open config " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            auto eq = stripped.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::data,
                            path + ": line " + std::to_string(line_no) + ": expected key = value");
            }
            auto key = trim(stripped.substr(0, eq));
            auto value = trim(stripped.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
                value = value.substr(1, value.size() - 2);
            }
            apply(key, value);
        }
    }

    // PISTIS_P_M=12 overrides key p_m, and so on for every known key.
    void load_env() {
        static const char* keys[] = {
            "corpus", "queries", "feedback", "model", "index", "dim", "p_m", "p_pr", "p_r",
            "l_th_ms", "reason_paths", "mode", "generator", "language", "latency", "seed",
            "hidden", "epochs", "learning_rate", "batch", "quota", "dedup_threshold",
            "minhash_hashes", "kl_threshold", "cache_capacity", "blocklist", "scorer",
            "scorer_url", "eval_workers", "port", "latency_window", "markdown",
            "mock_correct_threshold", "mock_no_answer_rate"};
        for (const char* key : keys) {
            std::string env_name = "PISTIS_";
            for (const char* c = key; *c; ++c) {
                env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
            }
            if (const char* v = std::getenv(env_name.c_str()); v && *v) {
                apply(key, v);
            }
        }
    }

private:
    static size_t parse_size(const std::string& key, const std::string& value) {
        try {
            return std::stoull(value);
        } catch (const std::exception&) {
            throw Error(ErrorCode::invalid_argument, "config " + key + ": not a count: " + value);
        }
    }

    static double parse_real(const std::string& key, const std::string& value) {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw Error(ErrorCode::invalid_argument, "config " + key + ": not a number: " + value);
        }
    }

    static bool parse_bool(const std::string& key, const std::string& value) {
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        throw Error(ErrorCode::invalid_argument, "config " + key + ": not a boolean: " + value);
    }
};

}  // namespace pistis
