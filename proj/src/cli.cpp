#include "valuelens/cli.hpp"

#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "valuelens/api.hpp"
#include "valuelens/platform.hpp"

namespace valuelens {

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void setup_logging(const std::string& level) {
    auto logger = spdlog::get("valuelens");
    if (!logger) logger = spdlog::stderr_color_mt("valuelens");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(level));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs a read endpoint in-process and prints its body.
int print_endpoint(ApiService& service, const std::string& path, std::multimap<std::string, std::string> params,
                   std::ostream& out, std::ostream& err) {
    auto res = service.handle(ApiRequest{"GET", path, std::move(params), {}, {}});
    if (res.status != 200) {
        const auto& e = res.body.at("error");
        err << "error: " << e.at("code").get<std::string>() << ": " << e.at("message").get<std::string>() << "\n";
        return 1;
    }
    out << res.body.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"valuelens: value evaluation of language models", "valuelens"};
    app.require_subcommand(1);

    std::string data_dir = default_data_dir().string();
    std::string taxonomy_dir = default_taxonomy_dir().string();
    std::string log_level = "warn";
    app.add_option("--data-dir", data_dir, "Data directory (env VALUELENS_DATA_DIR)");
    app.add_option("--taxonomy-dir", taxonomy_dir, "Value system definitions");
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    auto* evolve_cmd = app.add_subcommand("evolve", "Evolve an item pool and print its id");
    std::string evolve_config;
    evolve_cmd->add_option("--config", evolve_config, "Evolution config file")->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate the model pool and print the run id");
    std::string run_config;
    std::vector<std::string> pool_overrides;
    bool allow_stale = false;
    evaluate_cmd->add_option("--config", run_config, "Run config file")->required();
    evaluate_cmd->add_option("--pool", pool_overrides, "system=pool_id override (repeatable)");
    evaluate_cmd->add_flag("--allow-stale", allow_stale, "Evaluate on a pool evolved against other models");

    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
    std::string addr = ":8080";
    serve_cmd->add_option("--addr", addr, "host:port; port 0 picks a free port");

    auto* export_cmd = app.add_subcommand("export", "Write leaderboard tables of a run");
    std::string export_run_id, export_system, export_out = ".";
    export_cmd->add_option("--run", export_run_id, "Run id")->required();
    export_cmd->add_option("--system", export_system, "Only this value system");
    export_cmd->add_option("--out", export_out, "Output directory");

    auto* culture_cmd = app.add_subcommand("culture", "Cultural alignment analysis");
    culture_cmd->require_subcommand(1);
    auto* ingest_cmd = culture_cmd->add_subcommand("ingest", "Validate and store culture profiles");
    std::string culture_file;
    ingest_cmd->add_option("--file", culture_file, "Profile table")->required();
    auto* correlate_cmd = culture_cmd->add_subcommand("correlate", "Model x culture correlation matrix");
    std::string method = "pearson";
    correlate_cmd->add_option("--method", method, "pearson|spearman");
    auto* project_cmd = culture_cmd->add_subcommand("project", "3-D projection of models and cultures");

    auto* audit_cmd = app.add_subcommand("audit", "Recompute served numbers from raw artifacts");
    std::string audit_run;
    audit_cmd->add_option("--run", audit_run, "Only this run");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        setup_logging(log_level);
        auto taxonomy = TaxonomyRegistry::load_directory(taxonomy_dir);
        DataStore store(data_dir);

        if (evolve_cmd->parsed()) {
            auto config = load_evolve_config(evolve_config);
            auto result = run_evolution(store, taxonomy, config, make_http_transport());
            for (const auto& w : result.warnings) err << "warning: " << w << "\n";
            out << result.pool.pool_id << "\n";
            return 0;
        }
        if (evaluate_cmd->parsed()) {
            auto config = load_run_config(run_config);
            for (const auto& o : pool_overrides) {
                auto eq = o.find('=');
                if (eq == std::string::npos) throw Error(ErrorCode::invalid_argument, "--pool expects system=pool_id");
                config.pools[o.substr(0, eq)] = o.substr(eq + 1);
            }
            config.allow_stale = config.allow_stale || allow_stale;
            auto record = run_evaluation(store, taxonomy, config, make_http_transport());
            out << record.run_id << "\n";
            return 0;
        }
        if (serve_cmd->parsed()) {
            if (!std::filesystem::is_directory(data_dir)) {
                throw Error(ErrorCode::not_found, "data directory '" + data_dir + "' does not exist");
            }
            ServiceOptions options;
            if (const char* token = std::getenv("VALUELENS_OPERATOR_TOKEN"); token != nullptr && *token != '\0') {
                options.operator_token = token;
            }
            options.transport = make_http_transport();
            ApiService service(store, taxonomy, options);
            ApiServer server(service);
            auto bound = server.bind(addr);
            g_stop = 0;
            auto old_int = std::signal(SIGINT, on_signal);
            auto old_term = std::signal(SIGTERM, on_signal);
            server.start();
            out << "listening on http://" << bound << std::endl;
            while (g_stop == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
            server.stop();
            std::signal(SIGINT, old_int);
            std::signal(SIGTERM, old_term);
            return 0;
        }
        if (export_cmd->parsed()) {
            std::optional<std::string> system;
            if (!export_system.empty()) system = export_system;
            for (const auto& p : export_run(store, taxonomy, export_run_id, system, export_out)) {
                out << p.string() << "\n";
            }
            return 0;
        }
        if (culture_cmd->parsed()) {
            ApiService service(store, taxonomy);
            if (ingest_cmd->parsed()) {
                auto text = read_file(culture_file);
                auto profiles = ingest_culture_profiles(text, taxonomy.system("schwartz"));
                std::filesystem::create_directories(store.culture_profiles_path().parent_path());
                std::ofstream f(store.culture_profiles_path(), std::ios::binary | std::ios::trunc);
                if (!f) throw Error(ErrorCode::io, "cannot write " + store.culture_profiles_path().string());
                f << text;
                out << profiles.size() << " culture profiles stored\n";
                return 0;
            }
            if (correlate_cmd->parsed()) {
                return print_endpoint(service, "/api/v1/culture/correlations", {{"method", method}}, out, err);
            }
            if (project_cmd->parsed()) return print_endpoint(service, "/api/v1/culture/projection", {}, out, err);
        }
        if (audit_cmd->parsed()) {
            std::optional<std::string> run;
            if (!audit_run.empty()) run = audit_run;
            auto report = audit(store, taxonomy, run);
            out << "audited " << report.runs.size() << " runs and " << report.pools.size() << " pools: "
                << report.checks << " checks, " << report.discrepancies.size() << " discrepancies\n";
            for (const auto& n : report.notes) out << "note: " << n << "\n";
            for (const auto& d : report.discrepancies) out << "discrepancy: " << d << "\n";
            if (!report.ok()) {
                err << "error: audit: found " << report.discrepancies.size()
                    << " discrepancies\n";
                return 1;
            }
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << to_string(ErrorCode::io) << ": " << e.what() << "\n";
        return 1;
    }
    err << "error: usage: no command\n" << app.help();
    return 2;
}

}  // namespace valuelens
