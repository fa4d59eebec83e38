#include "dfarag/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfarag/automaton.hpp"
#include "dfarag/baselines.hpp"
#include "dfarag/corpus.hpp"
#include "dfarag/evaluation.hpp"
#include "dfarag/merging.hpp"
#include "dfarag/persistence.hpp"
#include "dfarag/routing.hpp"
#include "dfarag/service.hpp"
#include "dfarag/tagging.hpp"

namespace dfarag::cli {

namespace {

struct TaggerFlags {
    std::string kind = "keyword";
    std::string lexicon;
    std::size_t max_tags = 4;
};

struct GeneratorFlags {
    std::string kind = "canned";
    std::string responses;
};

struct RoutingFlags {
    std::string dfa;
    std::string corpus;
    std::uint64_t seed = 0;
    std::size_t k = 5;
    bool deterministic = false;
};

// Owns lazily created LLM clients for the lifetime of one command.
struct Resources {
    std::unique_ptr<HttpChatClient> chat;

    CompletionClient& llm()
    {
        if (!chat) {
            chat = std::make_unique<HttpChatClient>(LlmEndpoint::from_env());
        }
        return *chat;
    }
};

void add_tagger_flags(CLI::App* cmd, TaggerFlags& f)
{
    cmd->add_option("--tagger", f.kind, "Tagger kind")
        ->check(CLI::IsMember({"keyword", "llm"}))
        ->capture_default_str();
    cmd->add_option("--lexicon", f.lexicon, "Keyword lexicon JSON {\"phrase\": \"tag\"}")->check(CLI::ExistingFile);
    cmd->add_option("--max-tags", f.max_tags, "Maximum tags per utterance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_generator_flags(CLI::App* cmd, GeneratorFlags& f)
{
    cmd->add_option("--generator", f.kind, "Response generator")
        ->check(CLI::IsMember({"canned", "replay", "llm"}))
        ->capture_default_str();
    cmd->add_option("--responses", f.responses, "Canned generator fixture JSON")->check(CLI::ExistingFile);
}

void add_routing_flags(CLI::App* cmd, RoutingFlags& f)
{
    cmd->add_option("--dfa", f.dfa, "Automaton JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", f.corpus, "Training corpus (jsonl or transcript)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Sampling seed")->capture_default_str();
    cmd->add_option("--k", f.k, "Exemplars per turn")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_flag("--deterministic", f.deterministic, "Take the k lowest dialogue ids instead of sampling");
}

std::unique_ptr<Tagger> make_cli_tagger(const TaggerFlags& f, Resources& res)
{
    TaggerConfig config;
    config.max_tags_per_utterance = f.max_tags;
    if (f.kind == "llm") {
        config.kind = TaggerKind::llm;
        return make_tagger(config, &res.llm());
    }
    if (f.lexicon.empty()) {
        throw ValidationError("--tagger keyword needs --lexicon");
    }
    config.lexicon = load_lexicon(f.lexicon);
    return make_tagger(config);
}

std::unique_ptr<Generator> make_cli_generator(const GeneratorFlags& f, Resources& res)
{
    if (f.kind == "llm") {
        return std::make_unique<LlmGenerator>(res.llm());
    }
    if (f.kind == "replay") {
        return std::make_unique<ExemplarReplayGenerator>();
    }
    if (f.responses.empty()) {
        throw ValidationError("--generator canned needs --responses");
    }
    return std::make_unique<CannedGenerator>(CannedGenerator::load(f.responses));
}

Corpus load_any_corpus(const std::string& path)
{
    return load_corpus(path, format_from_path(path));
}

void write_output(const std::string& path, const std::string& content, std::ostream& out)
{
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw Error("cannot write " + path);
    }
    file << content;
}

std::string join_tags(const std::vector<Tag>& tags, const char* sep)
{
    std::string out;
    for (const auto& t : tags) {
        if (!out.empty()) {
            out += sep;
        }
        out += t.str();
    }
    return out;
}

std::string join_ids(const std::vector<StateId>& ids)
{
    std::string out;
    for (auto q : ids) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += std::to_string(q.value);
    }
    return out;
}

std::string join_ids(const std::vector<DialogueId>& ids)
{
    std::string out;
    for (auto id : ids) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += std::to_string(id);
    }
    return out;
}

/// Two-line record per exchange plus one annotation line.
std::string format_step(int round, const std::string& user_text, const StepResult& r)
{
    std::string out = std::to_string(round) + " USER: " + user_text + "\n";
    out += "# tags: " + join_tags(r.tags, " ") + " | path: " + join_ids(r.navigation.path) +
           " | matched: " + (r.navigation.matched ? "true" : "false") +
           " | source: " + std::to_string(r.exemplars.source_state.value) +
           " | exemplars: " + join_ids(r.exemplars.dialogue_ids) + "\n";
    out += std::to_string(round) + " SYSTEM: " + r.response + "\n";
    return out;
}

std::vector<std::string> read_script(std::istream& in)
{
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

std::atomic<Service*> g_serving{nullptr};

extern "C" void on_signal(int)
{
    if (auto* s = g_serving.load()) {
        s->request_stop();
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err)
{
    CLI::App app{"DFA-guided exemplar routing for dialogue generation", "dfarag"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // ingest
    std::string ingest_input, ingest_out, ingest_format = "auto", ingest_first_role = "user", ingest_test_out;
    double ingest_split = 0.0;
    std::uint64_t ingest_seed = 0;
    auto* ingest = app.add_subcommand("ingest", "Validate and normalize a dialogue corpus");
    ingest->add_option("--input", ingest_input, "Input corpus")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", ingest_out, "Output corpus (jsonl)")->required();
    ingest->add_option("--format", ingest_format, "Input format")
        ->check(CLI::IsMember({"auto", "jsonl", "transcript"}))
        ->capture_default_str();
    ingest->add_option("--first-role", ingest_first_role, "Role that opens every dialogue")
        ->check(CLI::IsMember({"user", "system"}))
        ->capture_default_str();
    ingest->add_option("--test-fraction", ingest_split, "Hold out this share of dialogues")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    ingest->add_option("--test-out", ingest_test_out, "Where the held-out dialogues go");
    ingest->add_option("--seed", ingest_seed, "Split seed")->capture_default_str();

    // tag
    std::string tag_corpus_path, tag_out;
    bool tag_skip_errors = false;
    TaggerFlags tag_flags;
    auto* tag = app.add_subcommand("tag", "Tag every utterance of a corpus");
    tag->add_option("--corpus", tag_corpus_path, "Corpus")->required()->check(CLI::ExistingFile);
    tag->add_option("--out", tag_out, "Tag table JSON")->required();
    tag->add_flag("--skip-errors", tag_skip_errors, "Drop dialogues whose tagging fails");
    add_tagger_flags(tag, tag_flags);

    // build
    std::string build_tags, build_out, build_report;
    BuildConfig build_config;
    std::optional<int> build_max_rounds;
    bool build_no_merge = false;
    std::size_t build_passes = 1;
    auto* build = app.add_subcommand("build", "Build (and by default merge) the automaton from a tag table");
    build->add_option("--tags", build_tags, "Tag table JSON")->required()->check(CLI::ExistingFile);
    build->add_option("--out", build_out, "Automaton JSON")->required();
    build->add_option("--tau", build_config.tau, "Minimum population for spawning the next round")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    build->add_option("--merge-lambda", build_config.merge_lambda, "Merge similarity threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    build->add_option("--max-rounds", build_max_rounds, "Cap on expanded rounds")->check(CLI::NonNegativeNumber);
    build->add_option("--seed", build_config.seed, "Recorded build seed")->capture_default_str();
    build->add_flag("--no-merge", build_no_merge, "Skip state merging");
    build->add_option("--merge-passes", build_passes, "Plan/apply rounds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    build->add_option("--merge-report", build_report, "Write the merge report JSON here");

    // merge
    std::string merge_dfa, merge_out, merge_report;
    double merge_lambda = 0.1;
    std::size_t merge_passes = 1;
    auto* merge = app.add_subcommand("merge", "Merge similar states of an existing automaton");
    merge->add_option("--dfa", merge_dfa, "Automaton JSON")->required()->check(CLI::ExistingFile);
    merge->add_option("--out", merge_out, "Merged automaton JSON")->required();
    merge->add_option("--merge-lambda", merge_lambda, "Merge similarity threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    merge->add_option("--passes", merge_passes, "Plan/apply rounds")->check(CLI::PositiveNumber)->capture_default_str();
    merge->add_option("--report", merge_report, "Write the merge report JSON here");

    // export
    std::string export_dfa, export_out = "-", export_format = "dot";
    std::optional<std::size_t> export_depth, export_min;
    auto* exp = app.add_subcommand("export", "Export an automaton as DOT or canonical JSON");
    exp->add_option("--dfa", export_dfa, "Automaton JSON")->required()->check(CLI::ExistingFile);
    exp->add_option("--format", export_format, "Output format")
        ->check(CLI::IsMember({"dot", "json"}))
        ->capture_default_str();
    exp->add_option("--out", export_out, "Output path, '-' for stdout")->capture_default_str();
    exp->add_option("--max-depth", export_depth, "DOT: keep states within this many edges of the start");
    exp->add_option("--min-dialogues", export_min, "DOT: keep states tracking more dialogues than this");

    // route
    RoutingFlags route_flags;
    TaggerFlags route_tagger;
    std::string route_text;
    std::uint32_t route_from = 0;
    auto* route = app.add_subcommand("route", "Route one user utterance and print the exemplars");
    add_routing_flags(route, route_flags);
    add_tagger_flags(route, route_tagger);
    route->add_option("--text", route_text, "User utterance")->required();
    route->add_option("--from", route_from, "State to start from")->capture_default_str();

    // chat
    RoutingFlags chat_flags;
    TaggerFlags chat_tagger;
    GeneratorFlags chat_generator;
    std::string chat_script, chat_out = "-";
    auto* chat = app.add_subcommand("chat", "Converse through the router (stdin or --script)");
    add_routing_flags(chat, chat_flags);
    add_tagger_flags(chat, chat_tagger);
    add_generator_flags(chat, chat_generator);
    chat->add_option("--script", chat_script, "One user turn per line")->check(CLI::ExistingFile);
    chat->add_option("--out", chat_out, "Transcript path, '-' for stdout")->capture_default_str();

    // eval
    std::string eval_dfa, eval_train, eval_tags, eval_test, eval_out = "-", eval_csv, eval_judge = "scripted";
    std::string eval_candidate = "dfa", eval_competitor = "random";
    EvalConfig eval_config;
    bool eval_deterministic = false;
    double eval_margin = 0.0;
    TaggerFlags eval_tagger;
    GeneratorFlags eval_generator;
    eval_generator.kind = "replay";
    auto* eval = app.add_subcommand("eval", "Teacher-forced pairwise comparison of two retrieval strategies");
    eval->add_option("--dfa", eval_dfa, "Automaton JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--corpus", eval_train, "Training corpus")->required()->check(CLI::ExistingFile);
    eval->add_option("--tags", eval_tags, "Training tag table")->required()->check(CLI::ExistingFile);
    eval->add_option("--test", eval_test, "Test corpus")->required()->check(CLI::ExistingFile);
    eval->add_option("--judge", eval_judge, "Judge")->check(CLI::IsMember({"scripted", "llm"}))->capture_default_str();
    eval->add_option("--judge-margin", eval_margin, "Scripted judge: minimum F1 gap for a verdict")
        ->capture_default_str();
    eval->add_option("--candidate", eval_candidate, "Candidate strategy")
        ->check(CLI::IsMember({"dfa", "random", "bm25"}))
        ->capture_default_str();
    eval->add_option("--competitor", eval_competitor, "Competitor strategy")
        ->check(CLI::IsMember({"dfa", "random", "bm25"}))
        ->capture_default_str();
    eval->add_option("--k", eval_config.k, "Exemplars per turn")->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--seed", eval_config.seed, "Seed")->capture_default_str();
    eval->add_flag("--deterministic", eval_deterministic, "DFA retrieval takes the k lowest ids");
    eval->add_option("--out", eval_out, "Report JSON, '-' for stdout")->capture_default_str();
    eval->add_option("--csv", eval_csv, "Also write a CSV summary here");
    add_tagger_flags(eval, eval_tagger);
    add_generator_flags(eval, eval_generator);

    // serve
    RoutingFlags serve_flags;
    TaggerFlags serve_tagger;
    GeneratorFlags serve_generator;
    std::string serve_host = "0.0.0.0", serve_cors = "*";
    int serve_port = 8080;
    int serve_idle_minutes = 30;
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    add_routing_flags(serve, serve_flags);
    add_tagger_flags(serve, serve_tagger);
    add_generator_flags(serve, serve_generator);
    serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
    serve->add_option("--port", serve_port, "Port")->check(CLI::Range(0, 65535))->capture_default_str();
    serve->add_option("--cors-origin", serve_cors, "Access-Control-Allow-Origin value, empty to disable")
        ->capture_default_str();
    serve->add_option("--idle-minutes", serve_idle_minutes, "Session idle expiry")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    std::vector<const char*> argv{"dfarag"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        err << app.help();
        return exit_usage;
    }

    Resources res;
    try {
        if (ingest->parsed()) {
            const CorpusFormat format = ingest_format == "auto"         ? format_from_path(ingest_input)
                                        : ingest_format == "transcript" ? CorpusFormat::plain_transcript
                                                                        : CorpusFormat::jsonl;
            auto corpus = load_corpus(ingest_input, format, CorpusOptions{parse_role(ingest_first_role)});
            if (ingest_split > 0.0 || !ingest_test_out.empty()) {
                if (ingest_test_out.empty()) {
                    throw ValidationError("--test-fraction needs --test-out");
                }
                auto [train, test] = split_corpus(corpus, ingest_split, ingest_seed);
                save_corpus(train, ingest_out);
                save_corpus(test, ingest_test_out);
                err << "ingested " << corpus.size() << " dialogues: " << train.size() << " train, " << test.size()
                    << " test\n";
            } else {
                save_corpus(corpus, ingest_out);
                err << "ingested " << corpus.size() << " dialogues\n";
            }
        } else if (tag->parsed()) {
            auto corpus = load_any_corpus(tag_corpus_path);
            auto tagger = make_cli_tagger(tag_flags, res);
            auto result = tag_corpus(corpus, *tagger, TagCorpusOptions{tag_skip_errors});
            save_tag_table(result.table, tag_out);
            err << "tagged " << corpus.size() - result.skipped.size() << " dialogues";
            if (!result.skipped.empty()) {
                err << ", skipped " << result.skipped.size();
            }
            err << "\n";
        } else if (build->parsed()) {
            build_config.max_rounds = build_max_rounds;
            auto table = load_tag_table(build_tags);
            auto automaton = build_automaton(table, build_config);
            if (!build_no_merge) {
                MergeReport report;
                automaton = merge_states(automaton, build_config.merge_lambda, build_passes, &report);
                if (!build_report.empty()) {
                    write_output(build_report, report.to_json(), out);
                }
                err << "merged " << report.states_before << " -> " << report.states_after << " states\n";
            }
            save_automaton(automaton, build_out);
            err << "automaton: " << automaton.size() << " states, " << automaton.transition_count()
                << " transitions\n";
        } else if (merge->parsed()) {
            auto automaton = load_automaton(merge_dfa);
            MergeReport report;
            auto merged = merge_states(automaton, merge_lambda, merge_passes, &report);
            auto config = merged.config();
            config.merge_lambda = merge_lambda;
            merged.set_config(config);
            save_automaton(merged, merge_out);
            if (!merge_report.empty()) {
                write_output(merge_report, report.to_json(), out);
            }
            err << "merged " << report.states_before << " -> " << report.states_after << " states\n";
        } else if (exp->parsed()) {
            auto automaton = load_automaton(export_dfa);
            if (export_format == "json") {
                write_output(export_out, encode_automaton(automaton), out);
            } else {
                write_output(export_out, export_dot(automaton, DotOptions{export_depth, export_min}), out);
            }
        } else if (route->parsed()) {
            auto automaton = load_automaton(route_flags.dfa);
            auto corpus = load_any_corpus(route_flags.corpus);
            auto tagger = make_cli_tagger(route_tagger, res);
            const StateId from{route_from};
            automaton.state(from);
            auto text = trim(route_text);
            auto tags = extract_tags(Utterance{Role::user, text, 0, text.empty()}, *tagger);
            auto step = route_turn(automaton, from, from, tags);
            auto exemplars = retrieve_exemplars(
                automaton, step.source, corpus, route_flags.k, mix_seed(route_flags.seed, 0),
                route_flags.deterministic ? SamplingMode::lowest_ids : SamplingMode::seeded, &step.navigation.path);
            nlohmann::ordered_json doc;
            doc["tags"] = nlohmann::ordered_json::array();
            for (const auto& t : tags) {
                doc["tags"].push_back(t.str());
            }
            doc["consumed"] = nlohmann::ordered_json::array();
            for (const auto& t : step.navigation.consumed) {
                doc["consumed"].push_back(t.str());
            }
            doc["path"] = nlohmann::ordered_json::array();
            for (auto q : step.navigation.path) {
                doc["path"].push_back(q.value);
            }
            doc["state"] = step.navigation.state.value;
            doc["matched"] = step.navigation.matched;
            doc["source_state"] = exemplars.source_state.value;
            doc["exemplar_ids"] = exemplars.dialogue_ids;
            out << doc.dump(2) << "\n";
        } else if (chat->parsed()) {
            auto automaton = std::make_shared<const Automaton>(load_automaton(chat_flags.dfa));
            auto corpus = std::make_shared<const Corpus>(load_any_corpus(chat_flags.corpus));
            auto tagger = make_cli_tagger(chat_tagger, res);
            auto generator = make_cli_generator(chat_generator, res);
            Session session("cli", automaton, corpus,
                            SessionOptions{chat_flags.seed, chat_flags.k,
                                           chat_flags.deterministic ? SamplingMode::lowest_ids
                                                                    : SamplingMode::seeded});
            std::string transcript;
            auto turn = [&](const std::string& line) {
                const int round = static_cast<int>(session.snapshot().history.size() / 2);
                auto result = chat_step(session, line, *tagger, *generator);
                auto block = format_step(round, trim(line), result);
                transcript += block;
                if (chat_script.empty()) {
                    out << block << std::flush;
                }
            };
            if (!chat_script.empty()) {
                std::ifstream script(chat_script);
                for (const auto& line : read_script(script)) {
                    turn(line);
                }
                write_output(chat_out, transcript, out);
            } else {
                std::string line;
                while (std::getline(in, line)) {
                    turn(line);
                }
                if (chat_out != "-") {
                    write_output(chat_out, transcript, out);
                }
            }
        } else if (eval->parsed()) {
            auto automaton = load_automaton(eval_dfa);
            auto train = load_any_corpus(eval_train);
            auto train_tags = load_tag_table(eval_tags);
            auto test = load_any_corpus(eval_test);
            auto tagger = make_cli_tagger(eval_tagger, res);
            auto generator = make_cli_generator(eval_generator, res);
            std::unique_ptr<Judge> judge;
            if (eval_judge == "llm") {
                judge = std::make_unique<LlmJudge>(res.llm());
            } else {
                judge = std::make_unique<ScriptedJudge>(eval_margin);
            }
            eval_config.candidate = parse_strategy(eval_candidate);
            eval_config.competitor = parse_strategy(eval_competitor);
            eval_config.sampling = eval_deterministic ? SamplingMode::lowest_ids : SamplingMode::seeded;
            auto report = run_evaluation(EvalInputs{automaton, train, train_tags, test, *tagger, *generator, *judge},
                                         eval_config);
            write_output(eval_out, report.to_json(), out);
            if (!eval_csv.empty()) {
                write_output(eval_csv, report.to_csv(), out);
            }
        } else if (serve->parsed()) {
            auto automaton = std::make_shared<const Automaton>(load_automaton(serve_flags.dfa));
            auto corpus = std::make_shared<const Corpus>(load_any_corpus(serve_flags.corpus));
            ServiceConfig config;
            config.cors_origin = serve_cors;
            config.idle_timeout = std::chrono::minutes(serve_idle_minutes);
            config.session_defaults = SessionOptions{
                serve_flags.seed, serve_flags.k,
                serve_flags.deterministic ? SamplingMode::lowest_ids : SamplingMode::seeded};
            Service service(config);
            service.load(automaton, corpus);
            service.set_tagger(make_cli_tagger(serve_tagger, res));
            service.set_generator(make_cli_generator(serve_generator, res));
            err << "serving " << automaton->size() << " states on " << serve_host << ":" << serve_port << "\n";
            g_serving.store(&service);
            auto prev_int = std::signal(SIGINT, on_signal);
            auto prev_term = std::signal(SIGTERM, on_signal);
            const bool ok = service.listen(serve_host, serve_port);
            std::signal(SIGINT, prev_int);
            std::signal(SIGTERM, prev_term);
            g_serving.store(nullptr);
            if (!ok) {
                throw Error("cannot listen on " + serve_host + ":" + std::to_string(serve_port));
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        if (auto* se = dynamic_cast<const ServiceError*>(&e); se != nullptr && !se->raw().empty()) {
            err << "raw response:\n" << se->raw() << "\n";
        }
        return exit_runtime;
    }
    return exit_ok;
}

int run(int argc, const char* const* argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cin, std::cout, std::cerr);
}

}  // namespace dfarag::cli
