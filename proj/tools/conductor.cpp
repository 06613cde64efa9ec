// conductor: run one request, serve the HTTP API, or benchmark planning.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "conductor/config.hpp"
#include "conductor/evaluation.hpp"
#include "conductor/executor.hpp"
#include "conductor/http_api.hpp"
#include "conductor/service.hpp"
#include "conductor/stubs.hpp"

namespace {

using namespace conductor;
using namespace conductor::eval;

struct Common {
  std::string config;
  std::string backend;
  std::string script;
  std::string registry;
  std::string data_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--backend", c.backend, "controller backend")->check(CLI::IsMember({"scripted", "http"}));
  cmd->add_option("--script", c.script, "scripted backend rules")->check(CLI::ExistingFile);
  cmd->add_option("--registry", c.registry, "model registry JSON")->check(CLI::ExistingFile);
  cmd->add_option("--data-dir", c.data_dir, "sessions and artifacts");
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (!c.backend.empty()) rc.backend.kind = c.backend;
  if (!c.script.empty()) rc.backend.script = c.script;
  if (!c.registry.empty()) rc.registry = c.registry;
  if (!c.data_dir.empty()) rc.data_dir = c.data_dir;
  return rc;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conductor: plan, dispatch and answer multimodal requests"};
  app.require_subcommand(1);

  Common run_opts;
  std::string request;
  std::vector<std::string> files;
  auto* run = app.add_subcommand("run", "answer one request and print its workflow trace");
  add_common(run, run_opts);
  run->add_option("--request,-r", request, "user request")->required();
  run->add_option("--image,--attach", files, "attach a file")->check(CLI::ExistingFile);

  Common serve_opts;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  add_common(serve, serve_opts);
  serve->add_option("--host", host);
  serve->add_option("--port,-p", port)->check(CLI::Range(1, 65535));

  auto* bench = app.add_subcommand("bench", "planning benchmark");
  bench->require_subcommand(1);
  Common bench_opts;
  std::string dataset, report_path, planner_kind = "controller";
  std::size_t demos = 3;
  std::optional<std::size_t> variety;
  bool with_critic = false, with_passing = false;
  auto* bench_run = bench->add_subcommand("run", "score a dataset and write JSON and CSV reports");
  add_common(bench_run, bench_opts);
  bench_run->add_option("--dataset", dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
  bench_run->add_option("--demos", demos, "demonstrations in the planning prompt");
  bench_run->add_option("--variety", variety, "cap on distinct task types across demonstrations");
  bench_run->add_option("--planner", planner_kind)->check(CLI::IsMember({"controller", "gold", "empty"}));
  bench_run->add_flag("--critic", with_critic, "score graph examples with the controller as critic");
  bench_run->add_flag("--passing-rate", with_passing, "execute predictions on local stubs");
  bench_run->add_option("--report", report_path, "report path (.json; a .csv is written alongside)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto& manifest = TaskManifest::builtin();

    if (*run || *serve) {
      auto rc = resolve(*run ? run_opts : serve_opts);
      auto registry = make_registry(rc, manifest);
      Executor executor(&registry, manifest);
      stubs::register_defaults(executor);
      Service service(make_service_config(rc), registry, executor, manifest);

      if (*run) {
        std::vector<Attachment> attachments;
        for (const auto& f : files) attachments.push_back({fs::path(f).filename().string(), std::nullopt, fs::path(f)});
        auto trace = service.handle_request("", request, attachments);
        std::cout << to_json(trace).dump(2) << "\n";
        return 0;
      }

      httplib::Server server;
      mount_api(server, service);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
      return 0;
    }

    auto rc = resolve(bench_opts);
    auto data = load_dataset(dataset, manifest);
    BenchmarkOptions options;
    options.demo_count = demos;
    options.demo_variety = variety;
    options.concurrency = rc.concurrency;
    ControllerConfig controller = rc.controller;
    if (planner_kind == "gold") {
      options.planner = gold_echo_planner();
    } else if (planner_kind == "empty") {
      options.planner = empty_planner();
    } else {
      controller.backend = make_backend(rc.backend);
      options.planner = controller_planner(controller, DemoPool::builtin().select(demos, variety), manifest);
    }
    if (with_critic) {
      if (!controller.backend) controller.backend = make_backend(rc.backend);
      options.critic = controller;
    }
    Executor executor(nullptr, manifest);
    stubs::register_defaults(executor);
    if (with_passing) {
      ExecutionHarness harness;
      harness.executor = &executor;
      harness.options.artifact_dir = rc.data_dir / "bench-artifacts";
      options.harness = harness;
    }

    auto report = run_benchmark(data, options);
    fs::path out(report_path);
    write_text_file(out, to_json(report).dump(2) + "\n");
    auto csv = out;
    csv.replace_extension(".csv");
    write_text_file(csv, to_csv(report));
    std::cout << to_csv(report);
    return 0;
  } catch (const BackendUnavailable& e) {
    std::cerr << "backend unavailable: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
