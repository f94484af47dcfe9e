// tokann — command-line frontend for the retrieval engine and evaluation kit.
//
// Subcommands: build, query, eval (retrieval | detection | relevance),
// label-metrics, gen-single-product, serve.
// Exit codes: 0 success, 1 data error, 2 usage/config error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tokann/service.hpp"
#include "tokann/tokann.hpp"

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tokann::DataError("cannot open file: " + path);
    return in;
}

tokann::EngineConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in = open_input(path);
    return tokann::load_engine_config(in);
}

void emit(const nlohmann::json& report) { std::cout << report.dump(2) << "\n"; }

// --- build -------------------------------------------------------------------

struct BuildArgs {
    std::string corpus;
    std::string out;
    std::string config;
};

int run_build(const BuildArgs& args) {
    const tokann::EngineConfig config = load_config(args.config);
    std::ifstream in = open_input(args.corpus);
    const std::vector<tokann::ProductRecord> records = tokann::parse_product_corpus(in);
    const tokann::IndexShardSet set = tokann::build_index(records, config.hasher);
    tokann::save_index(set, args.out);
    emit({{"snapshot", args.out},
          {"shards", set.shards().size()},
          {"documents", set.total_docs()},
          {"dim", set.dim()}});
    return 0;
}

// --- query ---------------------------------------------------------------------

struct QueryArgs {
    std::string snapshot;
    std::string query_file;
    std::string config;
    std::string restrict_text;
    bool restrict_given = false;
    std::optional<std::uint32_t> k;
    std::string metric;
};

int run_query(const QueryArgs& args) {
    const tokann::EngineConfig config = load_config(args.config);
    const tokann::IndexShardSet set = tokann::load_index(args.snapshot);

    std::ifstream in = open_input(args.query_file);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw tokann::DataError("query file is not valid JSON: " + args.query_file);
    tokann::SearchRequest request = tokann::parse_search_request(doc);
    if (args.restrict_given) request.restrict_text = args.restrict_text;
    if (args.k) request.k = args.k;

    tokann::SearchConfig search_config = config.search;
    if (!args.metric.empty()) search_config.metric = tokann::metric_from_text(args.metric);

    const std::vector<tokann::SearchResult> results =
        tokann::execute_search_request(set, request, search_config);
    emit({{"results", tokann::results_to_json(results)}});
    return 0;
}

// --- eval retrieval --------------------------------------------------------------

struct EvalRetrievalArgs {
    std::string pairs;
    std::string corpus;
    std::string config;
    std::uint32_t k = 1;
};

int run_eval_retrieval(const EvalRetrievalArgs& args) {
    const tokann::EngineConfig config = load_config(args.config);
    std::ifstream pairs_in = open_input(args.pairs);
    const std::vector<tokann::MatchPair> pairs = tokann::parse_match_pairs(pairs_in);
    std::ifstream corpus_in = open_input(args.corpus);
    const std::vector<tokann::ProductRecord> records = tokann::parse_product_corpus(corpus_in);

    tokann::SearchConfig search_config = config.search;
    search_config.k = args.k;
    const double precision =
        tokann::retrieval_precision_at_k(pairs, records, config.hasher, search_config);
    emit({{"k", args.k},
          {"pairs", pairs.size()},
          {"corpus_documents", records.size()},
          {"precision_at_k", precision}});
    return 0;
}

// --- eval detection ---------------------------------------------------------------

struct EvalDetectionArgs {
    std::string ground_truth;
    std::string predictions;
    std::string rollup;
    double iou_threshold = 0.5;
    bool per_class = false;
};

int run_eval_detection(const EvalDetectionArgs& args) {
    std::ifstream gt_in = open_input(args.ground_truth);
    tokann::DetectionSet gt = tokann::parse_detection_set(gt_in, false, "ground truth");
    std::ifstream pred_in = open_input(args.predictions);
    tokann::DetectionSet pred = tokann::parse_detection_set(pred_in, true, "predictions");

    if (!args.rollup.empty()) {
        std::ifstream rollup_in = open_input(args.rollup);
        nlohmann::json doc = nlohmann::json::parse(rollup_in, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw tokann::DataError("rollup mapping must be a JSON object: " + args.rollup);
        std::map<std::string, std::string> mapping;
        for (const auto& [fine, coarse] : doc.items()) {
            if (!coarse.is_string())
                throw tokann::DataError("rollup mapping for \"" + fine +
                                        "\" must be a string");
            mapping.emplace(fine, coarse.get<std::string>());
        }
        gt = tokann::rollup_categories(gt, mapping);
        pred = tokann::rollup_categories(pred, mapping);
    }

    nlohmann::json report{{"iou_threshold", args.iou_threshold},
                          {"map", tokann::detection_map(gt, pred, args.iou_threshold)}};
    if (args.per_class) {
        const auto thresholds =
            tokann::select_operating_thresholds_per_class(gt, pred, args.iou_threshold);
        nlohmann::json per_class = nlohmann::json::object();
        for (const auto& [category, threshold] : thresholds) {
            const tokann::DetectionPr pr = tokann::detection_pr(
                tokann::filter_detections_by_category(gt, category),
                tokann::filter_detections_by_category(pred, category), threshold,
                args.iou_threshold);
            per_class[category] = {{"operating_threshold", threshold},
                                   {"precision", pr.precision},
                                   {"recall", pr.recall},
                                   {"f1", pr.f1}};
        }
        report["per_class"] = std::move(per_class);
    } else {
        const double threshold =
            tokann::select_operating_threshold(gt, pred, args.iou_threshold);
        const tokann::DetectionPr pr =
            tokann::detection_pr(gt, pred, threshold, args.iou_threshold);
        report["operating_threshold"] = threshold;
        report["precision"] = pr.precision;
        report["recall"] = pr.recall;
        report["f1"] = pr.f1;
    }
    emit(report);
    return 0;
}

// --- eval relevance ------------------------------------------------------------------

struct EvalRelevanceArgs {
    std::string ratings;
    std::uint32_t k = 5;
};

int run_eval_relevance(const EvalRelevanceArgs& args) {
    std::ifstream in = open_input(args.ratings);
    const std::vector<tokann::RelevanceRating> ratings = tokann::parse_relevance_ratings(in);
    const tokann::RelevanceSummary summary = tokann::relevance_at_k(ratings, args.k);
    emit({{"k", args.k},
          {"similar_p_at_k", summary.similar_p_at_k},
          {"extremely_similar_p_at_k", summary.extremely_similar_p_at_k},
          {"bad_rate", summary.bad_rate},
          {"similar_exclusive_p_at_k", summary.similar_exclusive_p_at_k},
          {"rated_slots", summary.rated_slots},
          {"total_slots", summary.total_slots},
          {"coverage", summary.coverage}});
    return 0;
}

// --- label-metrics ----------------------------------------------------------------------

struct LabelMetricsArgs {
    std::string events;
    std::string golden;
    double agreement_threshold = 0.8;
};

int run_label_metrics(const LabelMetricsArgs& args) {
    std::ifstream in = open_input(args.events);
    const std::vector<tokann::LabelEvent> events = tokann::parse_label_events(in);
    nlohmann::json report{
        {"events", events.size()},
        {"consistency", tokann::label_consistency(events)},
        {"calibration_rate", tokann::calibration_rate(events, args.agreement_threshold)},
        {"agreement_threshold", args.agreement_threshold}};
    if (!args.golden.empty()) {
        std::ifstream golden_in = open_input(args.golden);
        const auto golden = tokann::parse_golden_answers(golden_in);
        report["accuracy"] = tokann::label_accuracy(events, golden);
    }
    emit(report);
    return 0;
}

// --- gen-single-product ----------------------------------------------------------------

struct GenArgs {
    std::string corpus;
    std::string distribution;
    std::string out;
};

int run_gen(const GenArgs& args) {
    std::ifstream corpus_in = open_input(args.corpus);
    const std::vector<tokann::CorpusItem> corpus = tokann::parse_generation_corpus(corpus_in);
    std::ifstream dist_in = open_input(args.distribution);
    const tokann::SceneDistribution dist = tokann::parse_scene_distribution(dist_in);

    const tokann::GenerationResult result = tokann::generate_single_product_dataset(corpus, dist);
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw tokann::DataError("cannot open for writing: " + args.out);
    tokann::write_generated_examples(out, result.examples);
    if (!out) throw tokann::DataError("write failed: " + args.out);
    emit(tokann::summary_to_json(result.summary));
    return 0;
}

// --- serve ------------------------------------------------------------------------------

struct ServeArgs {
    std::string snapshot;
    std::string config;
    std::string address;
    std::optional<std::uint16_t> port;
};

int run_serve(const ServeArgs& args) {
    const tokann::EngineConfig config = load_config(args.config);
    tokann::IndexShardSet set = tokann::load_index(args.snapshot);
    const std::string address = args.address.empty() ? config.bind_address : args.address;
    const std::uint16_t port = args.port.value_or(config.port);

    tokann::SearchService service(std::move(set), config.search);
    std::cerr << "listening on " << address << ":" << port << "\n";
    if (!service.listen(address, port)) {
        std::cerr << "error: cannot listen on " << address << ":" << port << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LSH-token retrieval engine and evaluation kit"};
    app.require_subcommand(1);

    BuildArgs build_args;
    CLI::App* build = app.add_subcommand("build", "Build an index snapshot from a JSONL corpus");
    build->add_option("--corpus", build_args.corpus, "product corpus (JSONL)")->required();
    build->add_option("--out", build_args.out, "snapshot output directory")->required();
    build->add_option("--config", build_args.config, "engine config (JSON)");

    QueryArgs query_args;
    CLI::App* query = app.add_subcommand("query", "Search a snapshot with one query");
    query->add_option("--snapshot", query_args.snapshot, "snapshot directory")->required();
    query->add_option("--query", query_args.query_file, "query JSON file")->required();
    query->add_option("--config", query_args.config, "engine config (JSON)");
    CLI::Option* restrict_opt = query->add_option(
        "--restrict", query_args.restrict_text, "restriction (overrides the query file)");
    std::uint32_t query_k = 0;
    CLI::Option* query_k_opt = query->add_option("--k", query_k, "result count");
    query->add_option("--metric", query_args.metric, "hamming | cosine")
        ->check(CLI::IsMember({"hamming", "cosine"}));

    CLI::App* eval = app.add_subcommand("eval", "Offline evaluation protocols");
    eval->require_subcommand(1);

    EvalRetrievalArgs retrieval_args;
    CLI::App* eval_retrieval =
        eval->add_subcommand("retrieval", "P@K over ground truths plus distractors");
    eval_retrieval->add_option("--pairs", retrieval_args.pairs, "match pairs (JSONL)")
        ->required();
    eval_retrieval->add_option("--corpus", retrieval_args.corpus, "evaluation corpus (JSONL)")
        ->required();
    eval_retrieval->add_option("--k", retrieval_args.k, "precision cutoff (default 1)");
    eval_retrieval->add_option("--config", retrieval_args.config, "engine config (JSON)");

    EvalDetectionArgs detection_args;
    CLI::App* eval_detection =
        eval->add_subcommand("detection", "mAP and F1-selected operating point");
    eval_detection
        ->add_option("--ground-truth", detection_args.ground_truth, "ground-truth boxes (JSONL)")
        ->required();
    eval_detection
        ->add_option("--predictions", detection_args.predictions, "predicted boxes (JSONL)")
        ->required();
    eval_detection->add_option("--rollup", detection_args.rollup,
                               "fine-to-coarse category mapping (JSON)");
    eval_detection->add_option("--iou", detection_args.iou_threshold,
                               "IoU match threshold (default 0.5)");
    eval_detection->add_flag("--per-class", detection_args.per_class,
                             "select operating thresholds per class");

    EvalRelevanceArgs relevance_args;
    CLI::App* eval_relevance = eval->add_subcommand("relevance", "Relevance@K rating rollup");
    eval_relevance->add_option("--ratings", relevance_args.ratings, "ratings (JSONL)")
        ->required();
    eval_relevance->add_option("--k", relevance_args.k, "slots per query (default 5)");

    LabelMetricsArgs label_args;
    CLI::App* label_metrics =
        app.add_subcommand("label-metrics", "Labeler consistency, calibration, and accuracy");
    label_metrics->add_option("--events", label_args.events, "label events (JSONL)")->required();
    label_metrics->add_option("--golden", label_args.golden, "golden answers (JSONL)");
    label_metrics->add_option("--threshold", label_args.agreement_threshold,
                              "calibration agreement threshold (default 0.8)");

    GenArgs gen_args;
    CLI::App* gen =
        app.add_subcommand("gen-single-product", "Weakly supervised dataset generation");
    gen->add_option("--corpus", gen_args.corpus, "generation corpus (JSONL)")->required();
    gen->add_option("--distribution", gen_args.distribution, "category cap map (JSON)")
        ->required();
    gen->add_option("--out", gen_args.out, "output examples (JSONL)")->required();

    ServeArgs serve_args;
    CLI::App* serve = app.add_subcommand("serve", "Run the JSON-over-HTTP search service");
    serve->add_option("--snapshot", serve_args.snapshot, "snapshot directory")->required();
    serve->add_option("--config", serve_args.config, "engine config (JSON)");
    serve->add_option("--address", serve_args.address, "bind address");
    std::uint32_t serve_port = 0;
    CLI::Option* serve_port_opt = serve->add_option("--port", serve_port, "bind port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    query_args.restrict_given = restrict_opt->count() > 0;
    if (query_k_opt->count() > 0) query_args.k = query_k;
    if (serve_port_opt->count() > 0) {
        if (serve_port > 65535) {
            std::cerr << "error: --port must be at most 65535\n";
            return 2;
        }
        serve_args.port = static_cast<std::uint16_t>(serve_port);
    }

    try {
        if (build->parsed()) return run_build(build_args);
        if (query->parsed()) return run_query(query_args);
        if (eval->parsed()) {
            if (eval_retrieval->parsed()) return run_eval_retrieval(retrieval_args);
            if (eval_detection->parsed()) return run_eval_detection(detection_args);
            if (eval_relevance->parsed()) return run_eval_relevance(relevance_args);
        }
        if (label_metrics->parsed()) return run_label_metrics(label_args);
        if (gen->parsed()) return run_gen(gen_args);
        if (serve->parsed()) return run_serve(serve_args);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const tokann::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tokann::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tokann::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
