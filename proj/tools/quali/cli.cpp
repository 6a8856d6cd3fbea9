#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>

#include "mockgen.hpp"
#include "quali/backends.hpp"
#include "quali/error.hpp"
#include "quali/exporter.hpp"
#include "quali/pipeline.hpp"
#include "quali/secret.hpp"
#include "quali/session_service.hpp"
#include "quali/text.hpp"

namespace quali::tools {

namespace {

struct InputArgs {
    std::string input;
    std::string format;
    std::string text_col;
    std::string speaker_col;
    std::string id_col;
    std::string roles;
    bool tab = false;
};

struct RunArgs {
    InputArgs in;
    std::string type = "interview";
    int themes = 10;
    bool role_play = false;
    std::string extra;
    std::string describe;
    std::string backend = "real";
    std::string mock_script;
    std::string model{kDefaultModel};
    double temperature = 0.2;
    std::size_t budget = 4096;
    std::size_t prompt_reserve = 600;
    std::size_t completion_reserve = 1200;
    std::string out = "themes.csv";
    std::string transcript;
    std::string rates;
    std::string endpoint;
    std::size_t parallel = 1;
    bool dry_run = false;
    bool yes = false;
    std::size_t quotes = 2;
};

struct ServeArgs {
    int port = 8641;
    std::string mock_script;
    std::string rates;
    std::string endpoint;
    std::string model{kDefaultModel};
    std::size_t parallel = 1;
};

const std::vector<std::string> kTypes = {"interview", "focus-group", "social-media", "focus_group", "social_media"};
const std::vector<std::string> kFormats = {"txt", "csv", "tsv", "xlsx", "docx", "plain_text", "delimited_table",
                                           "spreadsheet"};

void add_input_options(CLI::App* app, InputArgs& a) {
    app->add_option("--input", a.input, "Dataset file (.txt, .csv, .tsv, .xlsx, .docx)")->required();
    app->add_option("--format", a.format, "Input format; guessed from the extension when omitted")
        ->check(CLI::IsMember(kFormats));
    app->add_option("--text-col", a.text_col, "Column holding the text (header name or #index)");
    app->add_option("--speaker-col", a.speaker_col, "Column holding the speaker label");
    app->add_option("--id-col", a.id_col, "Column holding a record id");
    app->add_option("--roles", a.roles, "Speaker roles, e.g. Moderator=moderator,P1=participant");
    app->add_flag("--tab", a.tab, "Tab-delimited table");
}

void add_run_options(CLI::App* app, RunArgs& a) {
    add_input_options(app, a.in);
    app->add_option("--type", a.type, "Data type")->check(CLI::IsMember(kTypes));
    app->add_option("--themes", a.themes, "Number of themes to report")->check(CLI::Range(kMinThemeCount, kMaxThemeCount));
    app->add_flag("--role-play", a.role_play, "Ask the model to act as an experienced qualitative researcher");
    app->add_option("--extra", a.extra, "Extra instructions appended to the prompt");
    app->add_option("--describe", a.describe, "Short description of the dataset");
    app->add_option("--model", a.model, "Model id");
    app->add_option("--temperature", a.temperature, "Sampling temperature")->check(CLI::Range(0.0, 2.0));
    app->add_option("--budget", a.budget, "Context window in tokens");
    app->add_option("--prompt-reserve", a.prompt_reserve, "Tokens reserved for the prompt");
    app->add_option("--completion-reserve", a.completion_reserve, "Tokens reserved for the reply");
}

ColumnRef column(const std::string& s) {
    if (s.size() > 1 && s[0] == '#' && s.find_first_not_of("0123456789", 1) == std::string::npos) {
        return static_cast<std::size_t>(std::stoul(s.substr(1)));
    }
    return s;
}

IngestSpec ingest_spec(const InputArgs& a, DataType type, const std::string& description) {
    IngestSpec spec;
    spec.data_type = type;
    spec.description = description;
    spec.tab_delimited = a.tab;
    if (a.format == "txt" || a.format == "plain_text") spec.format = InputFormat::plain_text;
    if (a.format == "csv" || a.format == "delimited_table") spec.format = InputFormat::delimited_table;
    if (a.format == "tsv") {
        spec.format = InputFormat::delimited_table;
        spec.tab_delimited = true;
    }
    if (a.format == "xlsx" || a.format == "spreadsheet") spec.format = InputFormat::spreadsheet;
    if (a.format == "docx") spec.word_document = true;
    if (!a.text_col.empty()) spec.mapping.text_column = column(a.text_col);
    if (!a.speaker_col.empty()) spec.mapping.speaker_column = column(a.speaker_col);
    if (!a.id_col.empty()) spec.mapping.id_column = column(a.id_col);
    for (auto pair : text::split(a.roles, ',')) {
        pair = text::trim(pair);
        if (pair.empty()) continue;
        const auto eq = pair.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::bad_request, "--roles entries look like LABEL=role, got '" + std::string(pair) + "'");
        }
        spec.roles[std::string(text::trim(pair.substr(0, eq)))] = parse_role(text::trim(pair.substr(eq + 1)));
    }
    return spec;
}

PromptConfig prompt_config(const RunArgs& a) {
    PromptConfig c;
    c.data_type = parse_data_type(a.type);
    c.role_playing = a.role_play;
    c.theme_count = a.themes;
    c.extra_instructions = a.extra;
    c.dataset_description = a.describe;
    return c;
}

RunOptions run_options(const RunArgs& a) {
    RunOptions o;
    o.model_id = a.model;
    o.temperature = a.temperature;
    o.budget.context_limit = a.budget;
    o.budget.prompt_reserve = a.prompt_reserve;
    o.budget.completion_reserve = a.completion_reserve;
    o.parallelism = std::max<std::size_t>(a.parallel, 1);
    const auto rates = a.rates.empty() ? RatesTable::defaults() : RatesTable::from_file(a.rates);
    o.rates = rates.lookup(a.model);
    return o;
}

std::string rate_text(double r) {
    std::ostringstream s;
    s << '$' << r;
    return s.str();
}

void print_plan(std::ostream& out, const Dataset& ds, const PreparedRun& p) {
    std::size_t words = 0;
    for (const auto& r : ds.records) words += text::count_words(r.text);
    out << "Dataset: " << ds.records.size() << " records, " << words << " words, " << ds.speaker_labels().size()
        << " speakers\n";
    out << "Plan: " << p.plan.batches.size() << " batch" << (p.plan.batches.size() == 1 ? "" : "es")
        << " within " << p.budget.effective_budget() << " tokens each (context " << p.budget.context_limit
        << ", prompt reserve " << p.budget.prompt_reserve << ", reply reserve " << p.budget.completion_reserve
        << ")\n";
    for (const auto& f : p.validation.findings) out << "warning: " << f.message << '\n';
    for (const auto& n : p.notes) out << "note: " << n << '\n';
    out << "Estimated cost: " << format_usd(p.cost.total_micros) << " (" << p.cost.input_tokens << " input + "
        << p.cost.output_tokens << " output tokens at " << rate_text(p.cost.rates.input_per_1k) << " / "
        << rate_text(p.cost.rates.output_per_1k) << " per 1K)\n";
}

int fail(std::ostream& err, const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::bad_request) return static_cast<int>(FailureClass::usage);
    return static_cast<int>(failure_class(e.code()));
}

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err, const CliEnv& env) {
    PromptConfig config;
    RunOptions options;
    IngestSpec spec;
    try {
        config = prompt_config(a);
        options = run_options(a);
        spec = ingest_spec(a.in, config.data_type, a.describe);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(FailureClass::usage);
    }
    if (a.backend == "mock" && a.mock_script.empty() && !a.dry_run) {
        err << "error: --backend mock needs --mock-script\n";
        return static_cast<int>(FailureClass::usage);
    }

    Dataset dataset;
    PreparedRun prepared;
    try {
        dataset = ingest_file(a.in.input, spec);
        prepared = prepare_run(dataset, config, options);
    } catch (const Error& e) {
        return fail(err, e);
    }
    print_plan(out, dataset, prepared);

    if (a.dry_run) {
        out << "\n--- prompt for batch 1 of " << prepared.plan.batches.size() << " ---\n"
            << prepared.first_prompt.assembled << "\n--- dry run: nothing sent, nothing written ---\n";
        return 0;
    }

    std::unique_ptr<Backend> backend;
    SecretString key;
    try {
        if (a.backend == "mock") {
            backend = std::make_unique<MockBackend>(MockScript::from_file(a.mock_script));
        } else {
            if (env.api_key.empty()) {
                err << "error: set QUALI_API_KEY to use the real backend\n";
                return static_cast<int>(FailureClass::usage);
            }
            if (!a.yes) {
                if (!env.interactive || env.in == nullptr) {
                    err << "error: the real backend spends money; pass --yes to confirm\n";
                    return static_cast<int>(FailureClass::usage);
                }
                out << "Send " << prepared.plan.batches.size() << " request(s) for about "
                    << format_usd(prepared.cost.total_micros) << "? [y/N] " << std::flush;
                std::string answer;
                std::getline(*env.in, answer);
                const auto t = text::casefold(text::trim(answer));
                if (t != "y" && t != "yes") {
                    err << "cancelled\n";
                    return static_cast<int>(FailureClass::usage);
                }
            }
            key = SecretString(std::string(env.api_key));
            HttpBackendOptions http;
            if (!a.endpoint.empty()) http.endpoint = a.endpoint;
            backend = std::make_unique<HttpBackend>(SecretString(std::string(env.api_key)), http);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(FailureClass::usage);
    }

    SessionState state;
    auto clock = clock_for(*backend);
    run_analysis(state, [&] { return dataset; }, config, *backend, *clock, options);
    const auto session = state.snapshot();

    for (const auto& r : session.recovery_log) {
        out << "recovery: batch " << r.label << " " << to_string(r.error) << " -> " << to_string(r.action) << '\n';
    }

    if (!a.transcript.empty()) {
        try {
            export_transcript(session, a.transcript, key.reveal());
        } catch (const Error& e) {
            err << "error: " << e.what() << '\n';
            return static_cast<int>(FailureClass::io);
        }
    }

    if (session.status != RunStatus::complete) {
        const auto cause = session.abort.value_or(AbortCause{FailureClass::gateway, "unknown", "the run did not finish"});
        err << "aborted (" << cause.code << "): " << cause.message << '\n';
        if (!a.transcript.empty()) err << "partial transcript written to " << a.transcript << '\n';
        return static_cast<int>(cause.failure);
    }

    try {
        export_csv(*session.merged, a.out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(FailureClass::io);
    }
    out << "Wrote " << session.merged->entries.size() << " themes to " << a.out << '\n';
    if (session.provenance) {
        out << "Quotes verified: " << session.provenance->verified << " of " << session.provenance->total() << '\n';
        for (const auto& [theme, quote] : session.provenance->unmatched) {
            out << "  unverified in '" << theme << "': " << quote << '\n';
        }
    }
    std::set<std::string> shown(prepared.notes.begin(), prepared.notes.end());
    for (const auto& f : prepared.validation.findings) shown.insert(f.message);
    for (const auto& w : session.warnings) {
        if (!shown.contains(w)) out << "warning: " << w << '\n';
    }
    if (!a.transcript.empty()) out << "Transcript written to " << a.transcript << '\n';
    return 0;
}

int do_mock_script(const RunArgs& a, std::ostream& out, std::ostream& err) {
    try {
        const auto config = prompt_config(a);
        const auto options = run_options(a);
        const auto dataset = ingest_file(a.in.input, ingest_spec(a.in, config.data_type, a.describe));
        const auto prepared = prepare_run(dataset, config, options);
        MockGenOptions gen;
        gen.themes = static_cast<std::size_t>(a.themes);
        gen.quotes_per_theme = a.quotes;
        const auto script = generate_mock_script(dataset, prepared.plan, gen);
        write_file(a.out, script.to_json());
        out << "Wrote a " << script.steps.size() << "-step mock script to " << a.out << '\n';
        return 0;
    } catch (const Error& e) {
        return fail(err, e);
    }
}

int do_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    try {
        ServiceOptions opts;
        opts.port = a.port;
        opts.registry.run.model_id = a.model;
        opts.registry.run.parallelism = std::max<std::size_t>(a.parallel, 1);
        if (!a.rates.empty()) opts.registry.rates = RatesTable::from_file(a.rates);
        if (!a.mock_script.empty()) opts.registry.default_mock_script = MockScript::from_file(a.mock_script);
        if (!a.endpoint.empty()) opts.registry.http.endpoint = a.endpoint;
        SessionService service(std::move(opts));
        const auto port = service.bind();
        out << "quali service listening on http://127.0.0.1:" << port << std::endl;
        service.serve();
        return 0;
    } catch (const Error& e) {
        return fail(err, e);
    }
}

}  // namespace

CliEnv process_env() {
    CliEnv env;
    env.in = &std::cin;
    env.interactive = ::isatty(STDIN_FILENO) != 0;
    if (const char* k = std::getenv("QUALI_API_KEY")) env.api_key = k;
    return env;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env) {
    CLI::App app{"Qualitative coding of text data with a chat model", "quali"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Analyse a dataset and write the theme table as CSV");
    add_run_options(run, run_args);
    run->add_option("--backend", run_args.backend, "Model backend")->check(CLI::IsMember({"real", "mock"}));
    run->add_option("--mock-script", run_args.mock_script, "Scripted replies for --backend mock");
    run->add_option("--out", run_args.out, "CSV output path");
    run->add_option("--transcript", run_args.transcript, "Write the full session transcript here");
    run->add_option("--rates", run_args.rates, "JSON file of per-model token rates");
    run->add_option("--endpoint", run_args.endpoint, "Chat-completions URL for the real backend");
    run->add_option("--parallel", run_args.parallel, "Batches sent concurrently");
    run->add_flag("--dry-run", run_args.dry_run, "Plan, compose and estimate cost; send and write nothing");
    run->add_flag("--yes", run_args.yes, "Skip the cost confirmation for the real backend");

    RunArgs gen_args;
    auto* gen = app.add_subcommand("mock-script", "Write a mock script of well-formed replies for a dataset");
    add_run_options(gen, gen_args);
    gen->add_option("--out", gen_args.out, "Script path")->required();
    gen->add_option("--quotes", gen_args.quotes, "Quotes per theme");
    gen->add_option("--rates", gen_args.rates, "JSON file of per-model token rates");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Run the local HTTP service on 127.0.0.1");
    serve->add_option("--port", serve_args.port, "Port (0 picks a free one)");
    serve->add_option("--mock-script", serve_args.mock_script, "Default script for mock sessions");
    serve->add_option("--rates", serve_args.rates, "JSON file of per-model token rates");
    serve->add_option("--endpoint", serve_args.endpoint, "Chat-completions URL for real sessions");
    serve->add_option("--model", serve_args.model, "Default model id");
    serve->add_option("--parallel", serve_args.parallel, "Batches sent concurrently per run");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        out << target->help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << target->help();
        return static_cast<int>(FailureClass::usage);
    }

    if (run->parsed()) return do_run(run_args, out, err, env);
    if (gen->parsed()) return do_mock_script(gen_args, out, err);
    if (serve->parsed()) return do_serve(serve_args, out, err);
    return static_cast<int>(FailureClass::usage);
}

}  // namespace quali::tools
