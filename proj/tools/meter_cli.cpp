#include "meter/error.hpp"
#include "meter/oracle.hpp"
#include "meter/serialize.hpp"
#include "meter/service.hpp"
#include "meter/simulator.hpp"
#include "meter/store.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace meter;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::authorization: return 3;
    case ErrorKind::state:
    case ErrorKind::conflict: return 4;
    case ErrorKind::not_found: return 5;
    case ErrorKind::storage: return 6;
    }
    return 1;
}

std::vector<double> number_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            invalid("invalid_spec", std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    return out;
}

std::vector<int> int_list(const std::string& text, const char* flag) {
    std::vector<int> out;
    for (double v : number_list(text, flag)) {
        if (v != static_cast<int>(v)) {
            invalid("invalid_spec", std::string(flag) + ": expected integers");
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        invalid("unreadable_file", "cannot read " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        invalid("invalid_request", path + " is not valid JSON: " + e.what());
    }
}

/// Meter parameters shared by plan, session create, simulate and replay.
struct SpecFlags {
    std::string spec_file;
    std::string mode;
    int m = 0;
    int steps = 0;
    bool steps_set = false;
    double epsilon = 0.0;
    std::string epsilons;
    double delta = 0.0;
    std::string bands;
    std::string tenancy;
    std::string reverts;
    int revert_budget = -1;
    bool conservative = false;

    void attach(CLI::App* app) {
        app->add_option("--spec", spec_file, "JSON file with a plan request");
        app->add_option("--mode", mode, "regular or incremental");
        app->add_option("--m", m, "number of signals");
        app->add_option_function<int>("--T", [this](int v) { steps = v; steps_set = true; }, "number of submissions");
        app->add_option("--epsilon", epsilon, "uniform tolerance");
        app->add_option("--epsilons", epsilons, "comma-separated per-signal tolerances");
        app->add_option("--delta", delta, "failure probability");
        app->add_option("--bands", bands, "comma-separated band edges from 0 to 1");
        app->add_option("--tenancy", tenancy, "comma-separated per-tenant submission counts");
        app->add_option("--reverts", reverts, "comma-separated revert steps");
        app->add_option("--revert-budget", revert_budget, "number of reverts (scheduled at step T when --reverts is absent)");
        app->add_flag("--conservative-multitenant", conservative, "multiply regular multitenant counts by m");
    }

    MeterSpec build(CLI::App* app) const {
        json request = spec_file.empty() ? json::object() : read_json_file(spec_file);
        auto given = [&](const char* name) { return app->count(name) > 0; };
        if (given("--mode")) request["mode"] = mode;
        if (given("--m")) request["m"] = m;
        if (steps_set) request["T"] = steps;
        if (given("--epsilon")) request["epsilon"] = epsilon;
        if (given("--epsilons")) request["epsilons"] = number_list(epsilons, "--epsilons");
        if (given("--delta")) request["delta"] = delta;
        if (given("--bands")) {
            const auto edges = number_list(bands, "--bands");
            json list = json::array();
            for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
                list.push_back({edges[i], edges[i + 1]});
            }
            request["bands"] = list;
        }
        if (given("--tenancy")) request["tenancy"] = int_list(tenancy, "--tenancy");
        if (given("--reverts")) request["reverts"] = int_list(reverts, "--reverts");
        if (given("--revert-budget")) request["revert_budget"] = revert_budget;
        if (conservative) request["conservative_multitenant"] = true;
        return spec_from_request(request);
    }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-set sizing and overfitting meter for adaptive model development"};
    app.require_subcommand(1);

    std::string store = process_env("METER_STORE").value_or("meter-store");
    std::string token = process_env("METER_TOKEN").value_or("");
    std::string config_file;
    app.add_option("--store", store, "storage directory (env METER_STORE)");
    app.add_option("--token", token, "credential (env METER_TOKEN)");
    app.add_option("--config", config_file, "JSON config file with principals");

    SpecFlags plan_flags;
    auto* plan_cmd = app.add_subcommand("plan", "compute the required test-set size");
    plan_flags.attach(plan_cmd);

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
    std::string bind;
    int port = -1;
    serve_cmd->add_option("--bind", bind, "bind address");
    serve_cmd->add_option("--port", port, "port (0 picks a free one)");

    auto* dataset_cmd = app.add_subcommand("dataset", "dataset registry");
    dataset_cmd->require_subcommand(1);
    auto* dataset_add = dataset_cmd->add_subcommand("add", "register a JSON-lines label file");
    std::string dataset_file, dataset_id;
    bool sealed = false;
    dataset_add->add_option("--file", dataset_file, "labels, one {\"id\",\"label\"} object per line")->required();
    dataset_add->add_option("--id", dataset_id, "dataset id (generated when absent)");
    dataset_add->add_flag("--sealed", sealed, "seal the labels (labeler or admin only)");
    auto* dataset_show = dataset_cmd->add_subcommand("show", "print a dataset as visible to the caller");
    dataset_show->add_option("--id", dataset_id, "dataset id")->required();

    auto* session_cmd = app.add_subcommand("session", "metering sessions");
    session_cmd->require_subcommand(1);
    auto* session_create = session_cmd->add_subcommand("create", "open a session");
    SpecFlags session_flags;
    session_flags.attach(session_create);
    std::string val_ref, test_ref, key;
    session_create->add_option("--val", val_ref, "validation dataset id")->required();
    session_create->add_option("--test", test_ref, "sealed test dataset id")->required();
    session_create->add_option("--key", key, "idempotency key");
    auto* session_show = session_cmd->add_subcommand("show", "print session status and history");
    std::string session_id;
    session_show->add_option("--session", session_id, "session id")->required();

    std::optional<std::uint64_t> expected_seq;
    auto session_op = [&](const char* name, const char* help) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->add_option("--session", session_id, "session id")->required();
        cmd->add_option("--key", key, "idempotency key");
        cmd->add_option("--expected-seq", expected_seq, "fail unless the session is at this sequence number");
        return cmd;
    };
    auto* submit_cmd = session_op("submit", "submit a JSON-lines predictions file");
    std::string predictions_file;
    submit_cmd->add_option("--file", predictions_file, "predictions, one {\"id\",\"pred\"} object per line")->required();
    auto* revert_cmd = session_op("revert", "undo the latest submission");
    auto* handoff_cmd = session_op("handoff", "pass the session to the next tenant");
    auto* rotate_cmd = session_op("rotate", "replace an exhausted session's test set");
    rotate_cmd->add_option("--test", test_ref, "fresh sealed test dataset id")->required();
    auto* close_cmd = session_op("close", "close a session");
    auto* status_cmd = app.add_subcommand("status", "print a session's current report");
    status_cmd->add_option("--session", session_id, "session id")->required();

    auto* simulate_cmd = app.add_subcommand("simulate", "Monte-Carlo check of the guarantee");
    SpecFlags sim_flags;
    sim_flags.attach(simulate_cmd);
    std::string strategy_file, strategy_kind = "worst-case-tree";
    sim::SimulationOptions sim_options;
    std::int64_t test_size = 0;
    simulate_cmd->add_option("--strategy", strategy_file, "JSON strategy file");
    simulate_cmd->add_option("--kind", strategy_kind, "oblivious, signal-branching or worst-case-tree");
    simulate_cmd->add_option("--trials", sim_options.trials, "number of trials");
    simulate_cmd->add_option("--seed", sim_options.seed, "random seed");
    simulate_cmd->add_option("--test-size", test_size, "override the planned test-set size");
    simulate_cmd->add_option("--threads", sim_options.threads, "worker threads (0: all cores)");

    auto* enumerate_cmd = app.add_subcommand("enumerate", "brute-force the dependency tree");
    int enum_m = 0, enum_t = 0;
    std::string enum_mode = "regular", enum_reverts, enum_tenancy;
    enumerate_cmd->add_option("--m", enum_m, "number of signals")->required();
    enumerate_cmd->add_option("--T", enum_t, "number of submissions")->required();
    enumerate_cmd->add_option("--mode", enum_mode, "regular or incremental");
    enumerate_cmd->add_option("--reverts", enum_reverts, "comma-separated revert steps");
    enumerate_cmd->add_option("--tenancy", enum_tenancy, "comma-separated per-tenant submission counts");

    auto* replay_cmd = app.add_subcommand("replay", "signals for a recorded accuracy trace");
    SpecFlags replay_flags;
    replay_flags.attach(replay_cmd);
    std::string trace_file;
    replay_cmd->add_option("--trace", trace_file,
                           "JSON with val_accuracy and test_accuracy arrays (or an overfitting array)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*plan_cmd) {
            const auto spec = plan_flags.build(plan_cmd);
            json out = plan(spec);
            out["spec"] = spec;
            print(out);
            return 0;
        }
        if (*enumerate_cmd) {
            oracle::EnumerateOptions options;
            if (!enum_reverts.empty()) options.revert_steps = int_list(enum_reverts, "--reverts");
            if (!enum_tenancy.empty()) options.tenancy = int_list(enum_tenancy, "--tenancy");
            print(oracle::enumerate(enum_m, enum_t, parse_mode(enum_mode), options));
            return 0;
        }
        if (*simulate_cmd) {
            const auto spec = sim_flags.build(simulate_cmd);
            sim::AdversaryStrategy strategy;
            if (!strategy_file.empty()) {
                strategy = sim::strategy_from_json(read_json_file(strategy_file));
            } else {
                strategy.kind = sim::parse_strategy_kind(strategy_kind);
            }
            if (test_size > 0) sim_options.test_size = test_size;
            print(sim::to_json(sim::run_trials(spec, strategy, sim_options)));
            return 0;
        }
        if (*replay_cmd) {
            const auto spec = replay_flags.build(replay_cmd);
            const auto trace = read_json_file(trace_file);
            sim::TraceReplay out;
            if (trace.contains("overfitting")) {
                out = sim::replay_overfitting(spec, trace["overfitting"].get<std::vector<double>>());
            } else {
                out = sim::replay_trace(spec, trace.at("val_accuracy").get<std::vector<double>>(),
                                        trace.at("test_accuracy").get<std::vector<double>>());
            }
            print(sim::to_json(out));
            return 0;
        }

        const auto config = load_config(config_file.empty() ? std::nullopt
                                                             : std::optional<std::filesystem::path>(config_file),
                                         process_env);
        Workspace::Options options;
        options.directory = app.count("--store") > 0 || !config.store ? std::filesystem::path(store) : *config.store;
        options.snapshot_every = config.snapshot_every;
        Workspace workspace(options);
        for (const auto& p : config.principals) {
            workspace.registry().add_principal(p);
        }

        if (*serve_cmd) {
            const std::string host = bind.empty() ? config.bind : bind;
            const int listen_port = port >= 0 ? port : config.port;
            Server server(workspace, host, listen_port);
            std::cout << json{{"listening", host}, {"port", server.port()}}.dump() << std::endl;
            static Server* active = &server;
            std::signal(SIGINT, [](int) { active->stop(); });
            std::signal(SIGTERM, [](int) { active->stop(); });
            server.wait();
            workspace.snapshot();
            return 0;
        }

        const Principal who = workspace.registry().authenticate(token);
        auto& engine = workspace.engine();
        Mutation mutation;
        if (!key.empty()) mutation.idempotency_key = key;
        mutation.expected_seq = expected_seq;

        if (*dataset_add) {
            std::ifstream in(dataset_file);
            if (!in) invalid("unreadable_file", "cannot read " + dataset_file);
            auto items = parse_label_lines(in);
            const auto size = items.size();
            const auto id = workspace.mutate([&] {
                return workspace.registry().register_dataset(who, std::move(items), sealed, dataset_id, workspace.now());
            });
            print({{"id", id}, {"size", size}, {"sealed", sealed}});
        } else if (*dataset_show) {
            print(workspace.registry().read_labels(who, dataset_id));
        } else if (*session_create) {
            const auto spec = session_flags.build(session_create);
            const auto report =
                workspace.mutate([&] { return engine.create_session(who, spec, val_ref, test_ref, mutation); });
            print({{"session", session_view(engine.session(report.session_id), who.role)}, {"report", report}});
        } else if (*session_show) {
            const auto report = engine.status(who, session_id);
            print({{"session", session_view(engine.session(session_id), who.role)}, {"report", report}});
        } else if (*submit_cmd) {
            std::ifstream in(predictions_file);
            if (!in) invalid("unreadable_file", "cannot read " + predictions_file);
            const auto predictions = parse_prediction_lines(in);
            print(workspace.mutate([&] { return engine.submit(who, session_id, predictions, mutation); }));
        } else if (*revert_cmd) {
            print(workspace.mutate([&] { return engine.revert(who, session_id, mutation); }));
        } else if (*handoff_cmd) {
            print(workspace.mutate([&] { return engine.handoff_tenant(who, session_id, mutation); }));
        } else if (*rotate_cmd) {
            print(workspace.mutate([&] { return engine.rotate_test_set(who, session_id, test_ref, mutation); }));
        } else if (*close_cmd) {
            print(workspace.mutate([&] { return engine.close_session(who, session_id, mutation); }));
        } else if (*status_cmd) {
            print(engine.status(who, session_id));
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << error_body(e).dump() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "internal_error"}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    }
}
