// pistis — content-centric RAG cascade CLI.
//
// Subcommands: index, simulate, train, eval, tune, query, serve.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible tune.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "pistis/pistis.hpp"

namespace fs = std::filesystem;
using namespace pistis;

namespace {

struct CommonOptions {
    std::string config_path;
};

PistisConfig resolve_config(const CommonOptions& common) {
    PistisConfig config;
    if (!common.config_path.empty()) config.load_file(common.config_path);
    config.load_env();
    return config;
}

std::unique_ptr<Generator> make_generator(const PistisConfig& config,
                                          const std::vector<Document>& memory_docs,
                                          const std::vector<Document>& query_docs) {
    if (config.generator == "mock") {
        auto mock = std::make_unique<MockGenerator>(config.mock_correct_threshold,
                                                    config.mock_no_answer_rate);
        mock->register_documents(memory_docs);
        mock->register_documents(query_docs);
        return mock;
    }
    if (config.generator == "http") {
        return std::make_unique<HttpGenerator>(HttpGenerator::from_env());
    }
    throw Error(ErrorCode::invalid_argument, "generator must be mock or http");
}

std::unique_ptr<CrossScorer> make_scorer(const PistisConfig& config) {
    if (config.scorer == "overlap") return std::make_unique<TokenOverlapScorer>();
    if (config.scorer == "http") {
        if (config.scorer_url.empty()) {
            throw Error(ErrorCode::invalid_argument, "scorer_url required for http scorer");
        }
        return std::make_unique<RemoteHttpScorer>(config.scorer_url);
    }
    throw Error(ErrorCode::invalid_argument, "scorer must be overlap or http");
}

PromptTemplate make_template(const PistisConfig& config) {
    if (config.language == "english") return PromptTemplate::english();
    if (config.language == "chinese") return PromptTemplate::chinese();
    throw Error(ErrorCode::invalid_argument, "language must be english or chinese");
}

struct LoadedPipeline {
    MemoryStore store;
    InvertedIndex index;
    VectorIndex vindex;
    std::vector<Document> queries;
};

LoadedPipeline load_pipeline(const PistisConfig& config, bool need_queries) {
    if (config.corpus.empty()) throw Error(ErrorCode::invalid_argument, "--corpus is required");
    LoadedPipeline lp;
    for (auto& d : load_corpus(config.corpus)) lp.store.add_document(std::move(d));
    if (!config.index_path.empty() && fs::exists(config.index_path)) {
        std::tie(lp.index, lp.vindex) = load_indexes(config.index_path);
    } else {
        std::tie(lp.index, lp.vindex) = build_indexes(lp.store.documents(), config.dim);
    }
    if (need_queries) {
        if (config.queries.empty()) throw Error(ErrorCode::invalid_argument, "--queries is required");
        lp.queries = load_corpus(config.queries);
    }
    return lp;
}

int run_index(const PistisConfig& config, const std::string& out_dir, bool no_dedup,
              bool no_filter) {
    if (config.corpus.empty()) throw Error(ErrorCode::invalid_argument, "--corpus is required");
    auto docs = load_corpus(config.corpus);
    size_t loaded = docs.size();

    size_t removed = 0, dropped = 0;
    if (!no_dedup) {
        auto before = docs.size();
        docs = deduplicate(docs, config.dedup_threshold, config.minhash_hashes, config.seed);
        removed = before - docs.size();
    }
    if (!no_filter) {
        auto result = filter_outliers(docs, config.kl_threshold);
        dropped = result.dropped.size();
        docs = std::move(result.kept);
    }
    if (docs.empty()) throw Error(ErrorCode::data, "no documents left after dedup/filter");

    auto [index, vindex] = build_indexes(docs, config.dim);
    fs::create_directories(out_dir);
    save_corpus((fs::path(out_dir) / "corpus.jsonl").string(), docs);
    save_indexes((fs::path(out_dir) / "index.jsonl").string(), index, vindex);

    std::printf("indexed %zu documents (%zu loaded, %zu duplicates, %zu outliers)\n", docs.size(),
                loaded, removed, dropped);
    std::printf("vocabulary %zu terms, dim %zu -> %s\n", index.postings.size(), vindex.dim,
                out_dir.c_str());
    return 0;
}

int run_simulate(const PistisConfig& config, const std::string& plan_spec,
                 const std::string& out_path, bool resume) {
    auto plan = SimulationPlan::parse(plan_spec);
    auto lp = load_pipeline(config, true);
    auto generator = make_generator(config, lp.store.documents(), lp.queries);
    TokenOverlapScorer scorer;
    auto bank = ExtractorBank::standard();

    // Output is append-only: on --resume, queries whose intents already
    // appear in the file are skipped and new records are appended.
    std::vector<Document> pending = lp.queries;
    size_t resumed = 0;
    bool append = resume && fs::exists(out_path);
    if (append) {
        std::set<std::string> done;
        for (const auto& r : load_feedback(out_path)) done.insert(normalize_prompt(r.intent));
        std::erase_if(pending,
                      [&](const Document& q) { return done.count(normalize_prompt(q.text)) > 0; });
        resumed = lp.queries.size() - pending.size();
    }

    SimulationSetup setup{lp.store,
                          lp.index,
                          lp.vindex,
                          scorer,
                          make_template(config),
                          bank,
                          *generator,
                          match_mode_from_name(config.mode),
                          config.p_m};
    SimulationResult result;
    if (!pending.empty()) {
        result = simulate(plan, setup, pending);
        save_feedback(out_path, result.records, append);
    }

    std::printf(
        "simulated %zu records from %zu queries (%zu resumed, %zu skipped, %zu generator "
        "failures)\n",
        result.records.size(), result.queries_processed, resumed, result.queries_skipped,
        result.generator_failures);
    for (auto label : {LabelValue::Positive, LabelValue::Even, LabelValue::Negative}) {
        auto it = result.label_counts.find(label);
        std::printf("  %-8s %zu\n", label_value_name(label),
                    it == result.label_counts.end() ? size_t{0} : it->second);
    }
    return 0;
}

int run_train(const PistisConfig& config, const std::string& out_path) {
    if (config.feedback.empty()) throw Error(ErrorCode::invalid_argument, "--feedback is required");
    auto lp = load_pipeline(config, true);
    auto records = load_feedback(config.feedback);
    auto sampled = config.quota > 0 ? stratified_sample(records, config.quota, config.seed)
                                    : records;

    TokenOverlapScorer scorer;
    TrainingDataOptions opts;
    opts.mode = match_mode_from_name(config.mode);
    opts.p_m = config.p_m;
    opts.p_pr = config.p_pr;
    auto samples = build_training_samples(sampled, lp.store, lp.index, lp.vindex, scorer,
                                          lp.queries, opts);
    if (samples.empty()) throw Error(ErrorCode::data, "no usable training samples");

    size_t k_max = 0;
    for (const auto& s : samples) k_max = std::max(k_max, s.item_features.size());
    k_max = std::max(k_max, config.p_r);

    ListwiseHyperparams hp;
    hp.hidden = config.hidden;
    hp.epochs = config.epochs;
    hp.learning_rate = config.learning_rate;
    hp.batch_size = config.batch;

    auto probe = ListwiseModel::init(k_max, hp, config.seed);
    double initial_loss = probe.mean_loss(samples);
    auto model = ListwiseModel::fit(samples, k_max, hp, config.seed);
    double final_loss = model.mean_loss(samples);
    model.save(out_path);

    std::printf("trained on %zu lists (%zu records loaded, quota %zu)\n", samples.size(),
                records.size(), config.quota);
    std::printf("loss %.4f -> %.4f, model -> %s\n", initial_loss, final_loss, out_path.c_str());
    return 0;
}

PipelineContext make_context(const PistisConfig& config, LoadedPipeline& lp,
                             const CrossScorer& scorer, Generator& generator,
                             const ExtractorBank& bank, const ListwiseModel* model,
                             std::vector<std::string>& blocklist_storage) {
    blocklist_storage = config.blocklist_terms();
    return PipelineContext{lp.store,
                           lp.index,
                           lp.vindex,
                           scorer,
                           generator,
                           bank,
                           model,
                           make_template(config),
                           config.cascade(),
                           config.latency_mode(),
                           {},
                           blocklist_storage,
                           config.markdown,
                           config.seed,
                           nullptr,
                           false,
                           false};
}

int run_eval(const PistisConfig& config, const std::string& mode_name,
             const std::string& report_path) {
    auto lp = load_pipeline(config, true);
    auto generator = make_generator(config, lp.store.documents(), lp.queries);
    auto scorer = make_scorer(config);
    auto bank = ExtractorBank::standard();

    ListwiseModel model;
    if (mode_name != "baseline") {
        if (config.model_path.empty()) {
            throw Error(ErrorCode::invalid_argument, "--model is required for aligned eval");
        }
        model = ListwiseModel::load(config.model_path);
    }

    std::vector<std::string> blocklist;
    auto ctx = make_context(config, lp, *scorer, *generator, bank,
                            model.fitted() ? &model : nullptr, blocklist);

    auto eval_one = [&](PipelineMode mode) {
        auto report = evaluate(ctx, lp.queries, mode, config.eval_workers);
        std::printf("%-8s accuracy %.4f (%zu/%zu)  latency p50 %.2f ms  p95 %.2f ms\n",
                    report.mode.c_str(), report.accuracy, report.correct, report.total,
                    report.latency.p50.total_ms, report.latency.p95.total_ms);
        return report;
    };

    if (mode_name == "baseline") {
        auto report = eval_one(PipelineMode::baseline);
        if (!report_path.empty()) report.save(report_path);
    } else if (mode_name == "aligned") {
        auto report = eval_one(PipelineMode::aligned);
        if (!report_path.empty()) report.save(report_path);
    } else if (mode_name == "both") {
        auto baseline = eval_one(PipelineMode::baseline);
        auto aligned = eval_one(PipelineMode::aligned);
        std::printf("delta    %+0.4f\n", aligned.accuracy - baseline.accuracy);
        if (!report_path.empty()) {
            Json j;
            j["baseline"] = baseline.to_json();
            j["aligned"] = aligned.to_json();
            auto out = open_for_write(report_path);
            out << j.dump(2) << "\n";
        }
    } else {
        throw Error(ErrorCode::invalid_argument, "mode must be baseline, aligned, or both");
    }
    return 0;
}

std::vector<size_t> parse_grid(const std::string& csv) {
    std::vector<size_t> out;
    for (auto& cell : split(csv, ',')) {
        auto t = trim(cell);
        if (t.empty()) continue;
        out.push_back(std::stoull(t));
    }
    if (out.empty()) throw Error(ErrorCode::invalid_argument, "empty grid");
    return out;
}

int run_tune(const PistisConfig& config, const std::string& p_m_csv, const std::string& p_pr_csv,
             const std::string& p_r_csv, const std::string& frontier_path) {
    auto lp = load_pipeline(config, true);
    auto generator = make_generator(config, lp.store.documents(), lp.queries);
    auto scorer = make_scorer(config);
    auto bank = ExtractorBank::standard();

    ListwiseModel model;
    if (!config.model_path.empty()) model = ListwiseModel::load(config.model_path);
    auto mode = model.fitted() ? PipelineMode::aligned : PipelineMode::baseline;

    TuneSpace space;
    space.p_m_grid = parse_grid(p_m_csv);
    space.p_pr_grid = parse_grid(p_pr_csv);
    space.p_r_grid = parse_grid(p_r_csv);
    space.l_th_ms = config.l_th_ms;

    std::vector<std::string> blocklist;
    auto base_ctx = make_context(config, lp, *scorer, *generator, bank,
                                 model.fitted() ? &model : nullptr, blocklist);

    auto result = tune(space, base_ctx.cascade, [&](const CascadeConfig& candidate) {
        PipelineContext ctx = base_ctx;
        ctx.cascade = candidate;
        return evaluate(ctx, lp.queries, mode, config.eval_workers);
    });

    if (!frontier_path.empty()) {
        auto out = open_for_write(frontier_path);
        out << frontier_to_csv(result.frontier);
    }
    std::printf("best p_m=%zu p_pr=%zu p_r=%zu  acc %.4f  p95 %.2f ms (budget %.2f ms)\n",
                result.best.p_m, result.best.p_pr, result.best.p_r, result.best_row.accuracy,
                result.best_row.lat_p95, space.l_th_ms);
    return 0;
}

int run_query_cmd(const PistisConfig& config, const std::string& query_text,
                  const std::string& mode_name) {
    auto lp = load_pipeline(config, false);
    // In mock mode the generator can only answer questions it has seen, so a
    // query corpus, when given, is registered too.
    std::vector<Document> known_queries;
    if (!config.queries.empty()) known_queries = load_corpus(config.queries);
    auto generator = make_generator(config, lp.store.documents(), known_queries);
    auto scorer = make_scorer(config);
    auto bank = ExtractorBank::standard();

    ListwiseModel model;
    if (!config.model_path.empty()) model = ListwiseModel::load(config.model_path);
    auto mode = mode_name == "baseline" || !model.fitted() ? PipelineMode::baseline
                                                           : PipelineMode::aligned;

    std::vector<std::string> blocklist;
    auto ctx = make_context(config, lp, *scorer, *generator, bank,
                            model.fitted() ? &model : nullptr, blocklist);

    // Known questions keep their metadata (topic tag feeds the featurizer).
    auto query_doc = Document::make("query", query_text);
    for (const auto& q : known_queries) {
        if (normalize_prompt(q.text) == normalize_prompt(query_text)) {
            query_doc = q;
            break;
        }
    }
    auto run = run_query(ctx, query_doc, mode);

    std::printf("%s\n", run.answer_text.c_str());
    std::printf("confidence %.3f\n", run.confidence);
    if (!run.citations.empty()) {
        std::printf("citations:");
        for (const auto& c : run.citations) std::printf(" %s", c.c_str());
        std::printf("\n");
    }
    std::printf("timings: match %.2f, pre_rank %.2f, rank %.2f, generate %.2f, total %.2f ms\n",
                run.timing.match_ms, run.timing.pre_rank_ms, run.timing.rank_ms,
                run.timing.generate_ms, run.timing.total_ms);
    return 0;
}

int run_serve(const PistisConfig& config) {
    QueryService service(config.cascade(), config.latency_window);
    int port = service.start("0.0.0.0", static_cast<int>(config.port));
    std::printf("pistis serving on port %d (loading)\n", port);

    auto lp = load_pipeline(config, false);
    std::vector<Document> known_queries;
    if (!config.queries.empty()) known_queries = load_corpus(config.queries);

    QueryService::Components components;
    components.generator = make_generator(config, lp.store.documents(), known_queries);
    for (const auto& q : known_queries) {
        components.query_metadata.emplace(normalize_prompt(q.text), q);
    }
    components.scorer = make_scorer(config);
    components.prompt_template = make_template(config);
    components.blocklist = config.blocklist_terms();
    components.latency = config.latency_mode();
    components.markdown = config.markdown;
    components.seed = config.seed;
    if (!config.model_path.empty()) components.model = ListwiseModel::load(config.model_path);
    components.store = std::move(lp.store);
    components.index = std::move(lp.index);
    components.vindex = std::move(lp.vindex);
    service.load(std::move(components));

    std::printf("ready: %zu documents\n", service.ready() ? size_t{1} : size_t{0});
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Pistis content-centric RAG cascade"};
    app.require_subcommand(1);
    app.fallthrough();
    CommonOptions common;
    app.add_option("--config", common.config_path, "flat key = value config file")
        ->configurable(false);

    // Flag holders; empty string means "not given on the command line".
    std::map<std::string, std::string> flags;
    auto add_config_flag = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                               const std::string& help) {
        cmd->add_option_function<std::string>(
               flag, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };

    auto* index_cmd = app.add_subcommand("index", "build the memory index from a corpus");
    std::string out_dir = "index_out";
    bool no_dedup = false, no_filter = false;
    add_config_flag(index_cmd, "--corpus", "corpus", "corpus JSONL");
    index_cmd->add_option("--out", out_dir, "output directory");
    add_config_flag(index_cmd, "--dim", "dim", "embedding dimension");
    add_config_flag(index_cmd, "--dedup-threshold", "dedup_threshold", "MinHash Jaccard threshold");
    add_config_flag(index_cmd, "--kl-threshold", "kl_threshold", "KL outlier threshold (nats)");
    index_cmd->add_flag("--no-dedup", no_dedup, "skip MinHash de-duplication");
    index_cmd->add_flag("--no-filter", no_filter, "skip KL outlier filtering");

    auto* sim_cmd = app.add_subcommand("simulate", "simulate listwide feedback from a QA corpus");
    std::string plan_spec = "5,3,100,7";
    std::string sim_out = "feedback.jsonl";
    add_config_flag(sim_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(sim_cmd, "--queries", "queries", "query corpus JSONL");
    sim_cmd->add_option("--plan", plan_spec, "n,k,m,seed");
    add_config_flag(sim_cmd, "--generator", "generator", "mock|http");
    add_config_flag(sim_cmd, "--mode", "mode", "matching mode");
    sim_cmd->add_option("--out", sim_out, "output feedback JSONL");
    bool sim_resume = false;
    sim_cmd->add_flag("--resume", sim_resume, "append, skipping intents already in --out");

    auto* train_cmd = app.add_subcommand("train", "train the aligned listwise ranker");
    std::string model_out = "model.json";
    add_config_flag(train_cmd, "--feedback", "feedback", "feedback JSONL");
    add_config_flag(train_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(train_cmd, "--queries", "queries", "query corpus JSONL");
    train_cmd->add_option("--out", model_out, "output model JSON");
    add_config_flag(train_cmd, "--seed", "seed", "training seed");
    add_config_flag(train_cmd, "--quota", "quota", "stratified per-label quota");
    add_config_flag(train_cmd, "--epochs", "epochs", "training epochs");
    add_config_flag(train_cmd, "--mode", "mode", "matching mode");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate accuracy and latency");
    std::string eval_mode = "both";
    std::string report_path;
    add_config_flag(eval_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(eval_cmd, "--queries", "queries", "query corpus JSONL");
    add_config_flag(eval_cmd, "--model", "model", "model JSON");
    eval_cmd->add_option("--eval-mode", eval_mode, "baseline|aligned|both");
    eval_cmd->add_option("--report", report_path, "write JSON report here");
    add_config_flag(eval_cmd, "--mode", "mode", "matching mode");

    auto* tune_cmd = app.add_subcommand("tune", "grid-search truncation parameters");
    std::string p_m_csv = "5,10", p_pr_csv = "3,5", p_r_csv = "1,3,5", frontier_path;
    add_config_flag(tune_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(tune_cmd, "--queries", "queries", "query corpus JSONL");
    add_config_flag(tune_cmd, "--model", "model", "model JSON");
    tune_cmd->add_option("--p-m", p_m_csv, "comma-separated p_m grid");
    tune_cmd->add_option("--p-pr", p_pr_csv, "comma-separated p_pr grid");
    tune_cmd->add_option("--p-r", p_r_csv, "comma-separated p_r grid");
    add_config_flag(tune_cmd, "--l-th", "l_th_ms", "latency budget (ms)");
    add_config_flag(tune_cmd, "--mode", "mode", "matching mode");
    tune_cmd->add_option("--frontier", frontier_path, "write frontier CSV here");

    auto* query_cmd = app.add_subcommand("query", "answer one query");
    std::string query_text, query_mode = "aligned";
    add_config_flag(query_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(query_cmd, "--queries", "queries", "query corpus (mock answers these)");
    add_config_flag(query_cmd, "--model", "model", "model JSON");
    query_cmd->add_option("--query", query_text, "query text")->required();
    query_cmd->add_option("--query-mode", query_mode, "baseline|aligned");
    add_config_flag(query_cmd, "--mode", "mode", "matching mode");

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP query service");
    add_config_flag(serve_cmd, "--corpus", "corpus", "memory corpus JSONL");
    add_config_flag(serve_cmd, "--queries", "queries", "query corpus (mock answers these)");
    add_config_flag(serve_cmd, "--model", "model", "model JSON");
    add_config_flag(serve_cmd, "--port", "port", "listen port");
    add_config_flag(serve_cmd, "--mode", "mode", "matching mode");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    auto config = resolve_config(common);
    for (const auto& [key, value] : flags) config.apply(key, value);

    if (index_cmd->parsed()) return run_index(config, out_dir, no_dedup, no_filter);
    if (sim_cmd->parsed()) return run_simulate(config, plan_spec, sim_out, sim_resume);
    if (train_cmd->parsed()) return run_train(config, model_out);
    if (eval_cmd->parsed()) return run_eval(config, eval_mode, report_path);
    if (tune_cmd->parsed()) return run_tune(config, p_m_csv, p_pr_csv, p_r_csv, frontier_path);
    if (query_cmd->parsed()) return run_query_cmd(config, query_text, query_mode);
    if (serve_cmd->parsed()) return run_serve(config);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case ErrorCode::infeasible: return 3;
            case ErrorCode::invalid_argument: return 1;
            default: return 2;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
