// ehrsum: one-shot summarization, evaluation, fixture generation, stress suite and the HTTP service.

#include "ehrsum/service.hpp"
#include "ehrsum/stress_suite.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ehrsum;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitUnavailable = 2;
constexpr int kExitEvaluationFailed = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return Json::parse(in);
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-" || path == "stdout") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path);
}

service::ServiceConfig load_config(const std::string& path) {
    auto config = path.empty() ? service::ServiceConfig{} : service::ServiceConfig::load(path);
    config.apply_environment();
    return config;
}

/// Fixture patients served through the in-process source.
struct FixtureSource {
    std::shared_ptr<testkit::MockFhirSource> source;
    std::optional<Instant> reference_time;
};

FixtureSource fixture_source(const std::filesystem::path& dir, const std::vector<std::string>& patient_ids) {
    std::vector<testkit::SyntheticBundleSet> sets;
    testkit::VariabilityProfile profile;
    FixtureSource out;
    for (const auto& id : patient_ids) {
        auto set = testkit::read_fixtures(dir, id);
        if (sets.empty() && set.manifest.is_object()) {
            if (set.manifest.contains("profile")) profile = testkit::VariabilityProfile::from_json(set.manifest["profile"]);
            if (set.manifest.contains("reference_time")) {
                out.reference_time = parse_fhir_datetime(set.manifest["reference_time"].get<std::string>());
            }
        }
        sets.push_back(std::move(set));
    }
    out.source = std::make_shared<testkit::MockFhirSource>(std::move(sets), profile);
    return out;
}

struct SummarizeArgs {
    std::string fhir_base;
    std::string fixtures;
    std::string patient;
    std::string format = "text";
    std::string mode = "notice-empty";
    std::string backend = "deterministic";
    std::string backend_url;
    std::string out;
    std::string emit_ccp;
    std::string config;
};

int run_summarize(const SummarizeArgs& args) {
    auto config = load_config(args.config);
    std::shared_ptr<fhir::HttpTransport> transport;
    PipelineOptions options;
    options.disclaimer = config.disclaimer;
    options.mode = args.mode == "omit-empty" ? summary::RenderMode::OmitEmpty : summary::RenderMode::NoticeEmpty;

    auto endpoint = config.fhir;
    if (!args.fixtures.empty()) {
        FixtureSource fixtures;
        try {
            fixtures = fixture_source(args.fixtures, {args.patient});
        } catch (const std::exception&) {
            std::cerr << "Patient record unavailable from source\n";
            return kExitUnavailable;
        }
        transport = fixtures.source;
        endpoint.base_url = fixtures.source->base_url();
        endpoint.retry_backoff_ms = 0;
        endpoint.max_pages = 1000;
        if (fixtures.reference_time) {
            options.clock = [at = *fixtures.reference_time] { return at; };
        }
    } else {
        endpoint.base_url = args.fhir_base;
        try {
            endpoint.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        transport = std::make_shared<fhir::NetworkTransport>();
    }

    std::unique_ptr<summary::SummaryBackendClient> hosted;
    if (args.backend == "hosted") {
        const auto url = args.backend_url.empty() ? config.backend.endpoint : args.backend_url;
        if (url.empty()) throw UsageError("--backend hosted needs --backend-url or backend.url in the config");
        options.backend = summary::BackendKind::hosted(url, config.backend.model);
        hosted = std::make_unique<summary::HttpSummaryBackend>(url, std::chrono::milliseconds(config.fhir.timeout_ms));
        options.hosted_client = hosted.get();
    }

    const auto result = run_pipeline(*transport, endpoint, args.patient, options);

    if (!args.emit_ccp.empty()) write_output(args.emit_ccp, result.ccp.to_json().dump(2) + "\n");
    std::string rendered;
    if (args.format == "json") rendered = summary::to_json(result.summary).dump(2) + "\n";
    else if (args.format == "markdown") rendered = summary::render_markdown(result.summary);
    else rendered = summary::render_text(result.summary);
    write_output(args.out, rendered);
    if (result.summary.fallback) std::cerr << "note: " << result.summary.fallback->reason << "\n";
    return 0;
}

int run_evaluate(const std::string& ccp_path, const std::string& summary_path, const std::string& checklist_path) {
    std::optional<ccp::ClinicalContextPackage> ccp;
    std::optional<summary::SummaryDocument> doc;
    eval::Checklist checklist = eval::Checklist::defaults();
    try {
        ccp = ccp::ClinicalContextPackage::from_json(read_json_file(ccp_path));
        doc = summary::summary_from_json(read_json_file(summary_path));
        if (!checklist_path.empty()) checklist = eval::Checklist::from_json(read_json_file(checklist_path));
    } catch (const std::exception& e) {
        std::cerr << "cannot load inputs: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const auto report = eval::evaluate(*ccp, *doc, checklist);
        std::cout << report.to_json().dump(2) << "\n";
        return report.overall_pass ? 0 : kExitEvaluationFailed;
    } catch (const summary::FingerprintMismatch& e) {
        std::cerr << "the summary was not generated from this context package: " << e.what() << "\n";
        return kExitUsage;
    }
}

int run_gen_fixtures(std::uint64_t seed, const std::string& profile_name, const std::string& out) {
    const auto profile = testkit::VariabilityProfile::named(profile_name, seed);
    const auto bundles = testkit::generate_patient(profile);
    try {
        testkit::write_fixtures(bundles, out);
    } catch (const std::exception& e) {
        std::cerr << "cannot write fixtures: " << e.what() << "\n";
        return kExitUsage;
    }
    std::cout << bundles.patient_id << "\n";
    return 0;
}

int run_stress(std::uint64_t seed, const std::string& report_path) {
    const auto report = eval::run_stress_suite(eval::in_process_pipeline(), seed);
    std::cout << report.table();
    if (!report_path.empty()) {
        try {
            write_output(report_path, report.to_json().dump(2) + "\n");
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return kExitUsage;
        }
    }
    return report.all_passed() ? 0 : kExitUsage;
}

service::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_serve(const std::string& config_path, const std::string& fixtures, const std::string& host, int port) {
    auto config = load_config(config_path);
    if (!host.empty()) config.listen_host = host;
    if (port >= 0) config.listen_port = port;

    std::shared_ptr<fhir::HttpTransport> transport;
    if (!fixtures.empty()) {
        std::vector<std::string> ids;
        for (const auto& entry : std::filesystem::directory_iterator(fixtures)) {
            if (entry.is_directory()) ids.push_back(entry.path().filename().string());
        }
        std::sort(ids.begin(), ids.end());
        if (ids.empty()) throw UsageError("no fixture patients under " + fixtures);
        auto source = fixture_source(fixtures, ids).source;
        config.fhir.base_url = source->base_url();
        config.fhir.retry_backoff_ms = 0;
        config.fhir.max_pages = 1000;
        transport = source;
    }

    service::Service svc(config, transport);
    service::HttpServer server(svc);
    const int bound = server.bind(config.listen_host, config.listen_port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << config.listen_host << ":" << bound << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grounded clinical summaries from FHIR records"};
    app.require_subcommand(1);
    app.set_version_flag("--version", EHRSUM_VERSION);

    SummarizeArgs sargs;
    auto* summarize = app.add_subcommand("summarize", "Retrieve one patient and print a summary");
    auto* base_opt = summarize->add_option("--fhir-base", sargs.fhir_base, "FHIR server base URL");
    auto* fix_opt = summarize->add_option("--fixtures", sargs.fixtures, "Fixture directory from gen-fixtures");
    base_opt->excludes(fix_opt);
    summarize->add_option("--patient", sargs.patient, "Patient id")->required();
    summarize->add_option("--format", sargs.format)->check(CLI::IsMember({"text", "json", "markdown"}));
    summarize->add_option("--mode", sargs.mode)->check(CLI::IsMember({"omit-empty", "notice-empty"}));
    summarize->add_option("--backend", sargs.backend)->check(CLI::IsMember({"deterministic", "hosted"}));
    summarize->add_option("--backend-url", sargs.backend_url, "Hosted summarization endpoint");
    summarize->add_option("--out", sargs.out, "Output file (default stdout)");
    summarize->add_option("--emit-ccp", sargs.emit_ccp, "Also write the context package JSON here");
    summarize->add_option("--config", sargs.config, "Key-value configuration file");

    std::string ccp_path, summary_path, checklist_path;
    auto* evaluate = app.add_subcommand("evaluate", "Score a summary against its context package");
    evaluate->add_option("--ccp", ccp_path)->required();
    evaluate->add_option("--summary", summary_path)->required();
    evaluate->add_option("--checklist", checklist_path);

    std::uint64_t seed = 1;
    std::string profile = "baseline", out_dir;
    auto* gen = app.add_subcommand("gen-fixtures", "Write a synthetic patient to disk");
    gen->add_option("--seed", seed);
    gen->add_option("--profile", profile)->check(CLI::IsMember(testkit::VariabilityProfile::names()));
    gen->add_option("--out", out_dir)->required();

    std::string report_path;
    auto* stress = app.add_subcommand("stress", "Run the named stress cases");
    stress->add_option("--seed", seed);
    stress->add_option("--report", report_path, "Write the JSON suite report here");

    std::string serve_config, serve_fixtures, host;
    int port = -1;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", serve_config);
    serve->add_option("--fixtures", serve_fixtures, "Serve fixture patients instead of a FHIR server");
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    try {
        app.parse(argc, argv);
        if (summarize->parsed() && sargs.fhir_base.empty() == sargs.fixtures.empty()) {
            throw CLI::ValidationError("exactly one of --fhir-base and --fixtures is required");
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (summarize->parsed()) return run_summarize(sargs);
        if (evaluate->parsed()) return run_evaluate(ccp_path, summary_path, checklist_path);
        if (gen->parsed()) return run_gen_fixtures(seed, profile, out_dir);
        if (stress->parsed()) return run_stress(seed, report_path);
        if (serve->parsed()) return run_serve(serve_config, serve_fixtures, host, port);
    } catch (const fhir::PatientUnavailable&) {
        std::cerr << "Patient record unavailable from source\n";
        return kExitUnavailable;
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
