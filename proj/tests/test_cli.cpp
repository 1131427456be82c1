#include "support.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ehrsum;
using namespace ehrsum::test;
namespace fs = std::filesystem;

namespace {

struct Run {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("ehrsum-cli-" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }

    Run run(const std::string& args) const {
        const auto out = dir / "stdout.txt";
        const auto err = dir / "stderr.txt";
        const std::string command = std::string(EHRSUM_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
        const int status = std::system(command.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    fs::path fixtures(const std::string& profile = "baseline", int seed = 1) const {
        const auto target = dir / ("fx-" + profile + "-" + std::to_string(seed));
        if (!fs::exists(target)) {
            const auto r = run("gen-fixtures --seed " + std::to_string(seed) + " --profile " + profile + " --out '" + target.string() + "'");
            REQUIRE(r.exit_code == 0);
        }
        return target;
    }
};

}  // namespace

TEST_CASE("summarize text output matches the golden rendering") {
    Workspace ws;
    const auto fx = ws.fixtures();
    const auto first = ws.run("summarize --fixtures '" + fx.string() + "' --patient p1 --format text");
    REQUIRE(first.exit_code == 0);
    CHECK(first.out == slurp(fs::path(EHRSUM_GOLDEN_DIR) / "baseline_p1.txt"));
    const auto second = ws.run("summarize --fixtures '" + fx.string() + "' --patient p1 --format text");
    CHECK(second.out == first.out);

    std::size_t last = 0;
    for (auto key : ccp::kAllSections) {
        const auto at = first.out.find("\n" + std::string(ccp::section_label(key)) + "\n");
        REQUIRE(at != std::string::npos);
        CHECK(at > last);
        last = at;
    }
    const auto md = ws.run("summarize --fixtures '" + fx.string() + "' --patient p1 --format markdown --mode omit-empty");
    CHECK(md.exit_code == 0);
    CHECK(md.out.rfind("# Clinical Summary", 0) == 0);
}

TEST_CASE("summarize json feeds evaluate") {
    Workspace ws;
    const auto fx = ws.fixtures();
    const auto summary_path = ws.dir / "summary.json";
    const auto ccp_path = ws.dir / "ccp.json";
    const auto r = ws.run("summarize --fixtures '" + fx.string() + "' --patient p1 --format json --out '" +
                          summary_path.string() + "' --emit-ccp '" + ccp_path.string() + "'");
    REQUIRE(r.exit_code == 0);
    CHECK_NOTHROW(summary::summary_from_json(Json::parse(slurp(summary_path))));

    const auto clean = ws.run("evaluate --ccp '" + ccp_path.string() + "' --summary '" + summary_path.string() + "'");
    CHECK(clean.exit_code == 0);
    CHECK(Json::parse(clean.out)["overall_pass"] == true);

    // seeded allergy deletion
    const auto ccp = ccp::ClinicalContextPackage::from_json(Json::parse(slurp(ccp_path)));
    const auto doc = summary::summary_from_json(Json::parse(slurp(summary_path)));
    std::mt19937_64 rng(3);
    const auto m = mutate(doc, ccp, MutationKind::SafetyDeletion, rng);
    REQUIRE(m);
    const auto mutated_path = ws.dir / "mutated.json";
    std::ofstream(mutated_path) << summary::to_json(m->doc).dump();
    const auto failed = ws.run("evaluate --ccp '" + ccp_path.string() + "' --summary '" + mutated_path.string() + "'");
    CHECK(failed.exit_code == 3);
    const auto report = Json::parse(failed.out);
    REQUIRE(report["omission_findings"].size() == 1);
    CHECK(report["omission_findings"][0]["evidence_id"] == m->site);

    // summary of a different patient
    const auto other_fx = ws.fixtures("baseline", 2);
    const auto other_summary = ws.dir / "other.json";
    REQUIRE(ws.run("summarize --fixtures '" + other_fx.string() + "' --patient p2 --format json --out '" + other_summary.string() + "'").exit_code == 0);
    const auto mismatch = ws.run("evaluate --ccp '" + ccp_path.string() + "' --summary '" + other_summary.string() + "'");
    CHECK(mismatch.exit_code == 1);
    CHECK(mismatch.err.find("not generated from this context package") != std::string::npos);

    std::ofstream(ws.dir / "broken.json") << "{not json";
    CHECK(ws.run("evaluate --ccp '" + (ws.dir / "broken.json").string() + "' --summary '" + summary_path.string() + "'").exit_code == 1);
}

TEST_CASE("usage errors exit 1") {
    Workspace ws;
    const auto fx = ws.fixtures();
    const auto missing = ws.run("summarize --fixtures '" + fx.string() + "'");
    CHECK(missing.exit_code == 1);
    CHECK(missing.err.find("--patient") != std::string::npos);
    CHECK(ws.run("summarize --patient p1").exit_code == 1);
    CHECK(ws.run("summarize --patient p1 --fixtures '" + fx.string() + "' --fhir-base http://x").exit_code == 1);
    CHECK(ws.run("summarize --patient p1 --fixtures '" + fx.string() + "' --format pdf").exit_code == 1);
    CHECK(ws.run("").exit_code == 1);
    CHECK(ws.run("--help").exit_code == 0);
}

TEST_CASE("unavailable patient exits 2") {
    Workspace ws;
    const auto fx = ws.fixtures();
    const auto r = ws.run("summarize --fixtures '" + fx.string() + "' --patient p404");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("Patient record unavailable from source") != std::string::npos);
    CHECK(ws.run("summarize --fhir-base http://127.0.0.1:9/fhir --patient p1").exit_code == 2);
}

TEST_CASE("summarize against a live FHIR endpoint") {
    Workspace ws;
    const auto profile = testkit::VariabilityProfile::named("baseline", 1);
    const auto set = testkit::generate_patient(profile);
    testkit::MockFhirSource source({set}, profile);
    testkit::LoopbackFhirServer server(source);
    const auto config_path = ws.dir / "ehrsum.conf";
    std::ofstream(config_path) << "fhir.max_pages = 1000\nfhir.token = cli-token\n";
    const auto r = ws.run("summarize --config '" + config_path.string() + "' --fhir-base " + server.base_url() +
                          " --patient p1 --format json");
    REQUIRE(r.exit_code == 0);
    const auto doc = summary::summary_from_json(Json::parse(r.out));
    CHECK(doc.patient_header.rfind("Patient: ", 0) == 0);
    CHECK(source.last_authorization() == "Bearer cli-token");
}

TEST_CASE("gen-fixtures is byte-stable and reports unwritable targets") {
    Workspace ws;
    for (const char* name : {"a", "b"}) {
        REQUIRE(ws.run("gen-fixtures --seed 1 --out '" + (ws.dir / name).string() + "'").exit_code == 0);
    }
    std::map<std::string, std::string> a, b;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "a")) {
        if (e.is_regular_file()) a[fs::relative(e.path(), ws.dir / "a").string()] = slurp(e.path());
    }
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "b")) {
        if (e.is_regular_file()) b[fs::relative(e.path(), ws.dir / "b").string()] = slurp(e.path());
    }
    CHECK_FALSE(a.empty());
    CHECK(a == b);

    std::ofstream(ws.dir / "plainfile") << "x";
    CHECK(ws.run("gen-fixtures --seed 1 --out '" + (ws.dir / "plainfile" / "sub").string() + "'").exit_code == 1);
}

TEST_CASE("stress subcommand") {
    Workspace ws;
    const auto report = ws.dir / "stress.json";
    const auto r = ws.run("stress --report '" + report.string() + "'");
    CHECK(r.exit_code == 0);
    const auto json = Json::parse(slurp(report));
    CHECK(json["all_passed"] == true);
    CHECK(json["cases"].size() == 4);
    CHECK(ws.run("stress --report '" + (ws.dir / "missing-dir" / "x.json").string() + "'").exit_code == 1);
}
