#pragma once

// Benchmarking of task planners: datasets, the critic protocol, passing
// rate, and per-category metric reports.

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/backend.hpp"
#include "conductor/controller.hpp"
#include "conductor/error.hpp"
#include "conductor/executor.hpp"
#include "conductor/json_scan.hpp"
#include "conductor/manifest.hpp"
#include "conductor/metrics.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor::eval {

enum class Category { single, sequential, graph };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::single:
      return "single";
    case Category::sequential:
      return "sequential";
    case Category::graph:
      return "graph";
  }
  return "single";
}

inline std::optional<Category> category_from_string(std::string_view s) {
  for (auto c : {Category::single, Category::sequential, Category::graph}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

struct EvalExample {
  std::string request;
  Category category = Category::single;
  TaskGraph gold;  // arguments are not scored
};

// Throws DatasetError when the gold plan's shape contradicts its category.
inline void check_category(const EvalExample& ex) {
  std::vector<std::vector<int>> layers;
  try {
    layers = stages(ex.gold);
  } catch (const GraphError& e) {
    throw DatasetError("gold plan for \"" + ex.request + "\" is not a DAG: " + e.what());
  }
  switch (ex.category) {
    case Category::single:
      if (ex.gold.size() != 1) throw DatasetError("single example \"" + ex.request + "\" needs exactly one gold task");
      break;
    case Category::sequential:
      for (const auto& layer : layers) {
        if (layer.size() != 1) {
          throw DatasetError("sequential example \"" + ex.request + "\" has parallel gold tasks");
        }
      }
      break;
    case Category::graph:
      break;
  }
}

// One JSON object per line: {request, category, gold_tasks: [{task, id, dep, args?}]}.
inline std::vector<EvalExample> parse_dataset(std::string_view text,
                                              const TaskManifest& manifest = TaskManifest::builtin()) {
  std::vector<EvalExample> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = "dataset line " + std::to_string(number) + ": ";
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw DatasetError(where + "not a JSON object");
    EvalExample ex;
    try {
      ex.request = doc.at("request").get<std::string>();
      auto category = category_from_string(doc.at("category").get<std::string>());
      if (!category) throw DatasetError(where + "unknown category " + doc["category"].dump());
      ex.category = *category;
      std::vector<Task> tasks;
      for (const auto& g : doc.at("gold_tasks")) {
        Task t;
        t.task = g.at("task").get<std::string>();
        if (!manifest.contains(t.task)) throw DatasetError(where + "unknown task type \"" + t.task + "\"");
        t.id = g.at("id").get<int>();
        t.dep = g.at("dep").get<std::vector<int>>();
        if (g.contains("args")) t.args = g["args"].get<std::map<std::string, std::string>>();
        tasks.push_back(std::move(t));
      }
      ex.gold = TaskGraph(std::move(tasks));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(where + e.what());
    }
    check_category(ex);
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<EvalExample> load_dataset(const fs::path& path,
                                             const TaskManifest& manifest = TaskManifest::builtin()) {
  return parse_dataset(read_text_file(path), manifest);
}

// ---------------------------------------------------------------------------
// Planners under evaluation

// Returns the predicted plan; throwing counts as an empty prediction.
using Planner = std::function<TaskGraph(const EvalExample&)>;

inline Planner gold_echo_planner() {
  return [](const EvalExample& ex) { return ex.gold; };
}

inline Planner empty_planner() {
  return [](const EvalExample&) { return TaskGraph(); };
}

// Parses a fixed controller reply per request; unknown requests get "[]".
inline Planner scripted_planner(std::map<std::string, std::string> replies,
                                const TaskManifest& manifest = TaskManifest::builtin()) {
  return [replies = std::move(replies), &manifest](const EvalExample& ex) {
    auto it = replies.find(ex.request);
    return parse_plan(it == replies.end() ? "[]" : it->second, manifest);
  };
}

// The real planning stage with a chosen demonstration set.
inline Planner controller_planner(ControllerConfig config, std::vector<Demonstration> demos,
                                  const TaskManifest& manifest = TaskManifest::builtin(),
                                  const PromptBook& prompts = PromptBook::builtin()) {
  return [config = std::move(config), demos = std::move(demos), &manifest, &prompts](const EvalExample& ex) {
    PlanningContext ctx{&manifest, &prompts, demos};
    return plan_request(ex.request, ChatSession(), config, ctx).graph;
  };
}

// ---------------------------------------------------------------------------
// Critic

struct CriticDemo {
  std::string request;
  std::string output;
};

struct CriticDemos {
  std::vector<CriticDemo> positive;
  std::vector<CriticDemo> negative;

  static CriticDemos load(const fs::path& path) {
    auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("critic demonstrations are not valid JSON: " + path.string());
    CriticDemos out;
    auto read = [&](const char* key, std::vector<CriticDemo>& into) {
      for (const auto& d : doc.value(key, nlohmann::json::array())) {
        into.push_back({d.at("request").get<std::string>(), d.at("output").get<std::string>()});
      }
    };
    read("positive", out.positive);
    read("negative", out.negative);
    return out;
  }

  static const CriticDemos& builtin() {
    static const CriticDemos demos = load(asset_dir() / "critic_demos.json");
    return demos;
  }
};

inline std::string render_critic_demos(const std::vector<CriticDemo>& demos) {
  if (demos.empty()) return "[]";
  std::string out;
  for (const auto& d : demos) {
    if (!out.empty()) out += '\n';
    out += "Request: " + d.request + "\nOutput: " + d.output;
  }
  return out;
}

inline std::string build_critic_prompt(const std::string& request, const TaskGraph& pred,
                                       const CriticDemos& demos = CriticDemos::builtin(),
                                       const TaskManifest& manifest = TaskManifest::builtin(),
                                       const PromptBook& prompts = PromptBook::builtin()) {
  auto names = manifest.names();
  return prompts.critic.render({{"Available Task List", render_task_list(names)},
                                {"Positive Demos", render_critic_demos(demos.positive)},
                                {"Negative Demos", render_critic_demos(demos.negative)},
                                {"Input", request},
                                {"Output", serialize_plan(pred)}});
}

struct Judgment {
  bool yes = false;
  std::string reason;
  std::vector<std::string> warnings;
};

// First object whose "choice" is "yes" or "no" (any case). Throws ParseError.
inline Judgment parse_judgment(std::string_view raw) {
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  auto obj = json_scan::first_object_where(raw, [&](const nlohmann::json& o) {
    if (!o.contains("choice") || !o["choice"].is_string()) return false;
    auto c = lower(o["choice"].get<std::string>());
    return c == "yes" || c == "no";
  });
  if (!obj) throw ParseError("no {\"choice\": \"yes\"/\"no\"} object in critic output");
  Judgment j;
  j.yes = lower((*obj)["choice"].get<std::string>()) == "yes";
  if (auto it = obj->find("reason"); it != obj->end()) j.reason = it->is_string() ? it->get<std::string>() : it->dump();
  return j;
}

struct CriticContext {
  const CriticDemos* demos = &CriticDemos::builtin();
  const TaskManifest* manifest = &TaskManifest::builtin();
  const PromptBook* prompts = &PromptBook::builtin();
};

// An unparseable verdict after retries counts as "no" and carries a warning.
inline Judgment critic_score(const std::string& request, const TaskGraph& pred, const ControllerConfig& critic,
                             const CriticContext& ctx = {}) {
  auto prompt = build_critic_prompt(request, pred, *ctx.demos, *ctx.manifest, *ctx.prompts);
  try {
    return ask_and_parse(prompt, critic, [](const std::string& reply) { return parse_judgment(reply); });
  } catch (const ParseError& e) {
    Judgment j;
    j.reason = "unparseable critic verdict";
    j.warnings.push_back(std::string("critic reply unusable, counted as no: ") + e.what());
    return j;
  }
}

// ---------------------------------------------------------------------------
// Passing rate

struct ExecutionHarness {
  const Executor* executor = nullptr;
  // Defaults to the executor's stub model for the task type.
  std::function<Assignment(const Task&)> assign;
  ExecutionOptions options;

  Assignment assignment_for(const Task& t) const {
    if (assign) return assign(t);
    Assignment a;
    a.task_id = t.id;
    a.model_id = default_stub_model(executor->manifest().canonical(t.task));
    a.method = AssignmentMethod::short_circuit;
    a.candidates = {a.model_id};
    return a;
  }
};

// A prediction passes when it validates and every task executes ok. An empty
// prediction passes only for an empty gold plan.
inline bool plan_passes(const TaskGraph& pred, const EvalExample& ex, const ExecutionHarness& harness) {
  if (pred.empty()) return ex.gold.empty();
  if (!validate(pred, harness.executor->manifest()).ok()) return false;
  std::map<int, Assignment> assignments;
  for (const auto& t : pred.tasks()) assignments.emplace(t.id, harness.assignment_for(t));
  auto outcome = harness.executor->execute_graph(pred, assignments, harness.options);
  return std::all_of(outcome.results.begin(), outcome.results.end(),
                     [](const auto& kv) { return kv.second.ok(); });
}

// Percent of examples whose predicted plan passes.
inline double passing_rate(const std::vector<EvalExample>& dataset, const Planner& planner,
                           const ExecutionHarness& harness) {
  if (dataset.empty()) return 0.0;
  std::size_t passed = 0;
  for (const auto& ex : dataset) {
    try {
      if (plan_passes(planner(ex), ex, harness)) ++passed;
    } catch (const Error&) {
      // planner failure: not passed
    }
  }
  return 100.0 * static_cast<double>(passed) / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// Benchmark

struct ExampleRecord {
  std::string request;
  Category category = Category::single;
  std::vector<std::string> predicted;
  std::vector<std::string> gold;
  bool accurate = false;
  metrics::PRF prf;
  double ned = 0.0;
  std::optional<bool> critic_yes;
  std::optional<bool> passed;
  std::string error;
  std::vector<std::string> warnings;
};

// Percentages except `ned`, which stays in [0, 1].
struct CategoryMetrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ned = 0.0;
  std::optional<double> critic_score;
  std::optional<double> passing_rate;
};

struct MetricsReport {
  std::size_t demo_count = 0;
  std::optional<std::size_t> demo_variety;
  std::vector<ExampleRecord> records;
  std::map<Category, CategoryMetrics> categories;
};

struct BenchmarkOptions {
  Planner planner;
  std::optional<ControllerConfig> critic;  // graph examples only
  std::optional<ExecutionHarness> harness;  // enables passing rate
  std::size_t demo_count = 0;  // recorded in the report
  std::optional<std::size_t> demo_variety;
  std::size_t concurrency = 1;
  const TaskManifest* manifest = &TaskManifest::builtin();
};

inline ExampleRecord evaluate_example(const EvalExample& ex, const BenchmarkOptions& options) {
  const auto& manifest = *options.manifest;
  ExampleRecord rec;
  rec.request = ex.request;
  rec.category = ex.category;
  rec.gold = metrics::canonical_names(ex.gold, manifest);

  TaskGraph pred;
  try {
    pred = options.planner(ex);
  } catch (const Error& e) {
    rec.error = e.what();
  }
  rec.predicted = metrics::canonical_names(pred, manifest);
  rec.warnings = pred.warnings();
  rec.prf = metrics::multiset_prf(rec.predicted, rec.gold);
  rec.ned = metrics::normalized_edit_distance(rec.predicted, rec.gold);
  switch (ex.category) {
    case Category::single:
      rec.accurate = metrics::single_match(pred, ex.gold, manifest);
      break;
    case Category::sequential:
      rec.accurate = metrics::sequence_match(pred, ex.gold, manifest);
      break;
    case Category::graph:
      rec.accurate = metrics::graph_match(pred, ex.gold, manifest);
      if (options.critic) {
        auto judgment = critic_score(ex.request, pred, *options.critic, CriticContext{&CriticDemos::builtin(), &manifest});
        rec.critic_yes = judgment.yes;
        rec.warnings.insert(rec.warnings.end(), judgment.warnings.begin(), judgment.warnings.end());
      }
      break;
  }
  if (options.harness) rec.passed = rec.error.empty() && plan_passes(pred, ex, *options.harness);
  return rec;
}

inline MetricsReport aggregate(std::vector<ExampleRecord> records, std::size_t demo_count,
                               std::optional<std::size_t> demo_variety) {
  MetricsReport report;
  report.demo_count = demo_count;
  report.demo_variety = demo_variety;
  struct Sums {
    double acc = 0, p = 0, r = 0, f1 = 0, ned = 0, critic = 0, pass = 0;
    std::size_t n = 0, critic_n = 0, pass_n = 0;
  };
  std::map<Category, Sums> sums;
  for (const auto& rec : records) {
    auto& s = sums[rec.category];
    ++s.n;
    s.acc += rec.accurate ? 1.0 : 0.0;
    s.p += rec.prf.precision;
    s.r += rec.prf.recall;
    s.f1 += rec.prf.f1;
    s.ned += rec.ned;
    if (rec.critic_yes) {
      ++s.critic_n;
      s.critic += *rec.critic_yes ? 1.0 : 0.0;
    }
    if (rec.passed) {
      ++s.pass_n;
      s.pass += *rec.passed ? 1.0 : 0.0;
    }
  }
  for (const auto& [category, s] : sums) {
    const double n = static_cast<double>(s.n);
    CategoryMetrics m;
    m.count = s.n;
    m.accuracy = 100.0 * s.acc / n;
    m.precision = 100.0 * s.p / n;
    m.recall = 100.0 * s.r / n;
    m.f1 = 100.0 * s.f1 / n;
    m.ned = s.ned / n;
    if (s.critic_n) m.critic_score = 100.0 * s.critic / static_cast<double>(s.critic_n);
    if (s.pass_n) m.passing_rate = 100.0 * s.pass / static_cast<double>(s.pass_n);
    report.categories[category] = m;
  }
  report.records = std::move(records);
  return report;
}

// Examples are scored independently, `options.concurrency` at a time; record
// order follows the dataset.
inline MetricsReport run_benchmark(const std::vector<EvalExample>& dataset, const BenchmarkOptions& options) {
  std::vector<ExampleRecord> records(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < dataset.size(); i = next.fetch_add(1)) {
      records[i] = evaluate_example(dataset[i], options);
    }
  };
  const auto workers = std::min(dataset.size(), std::max<std::size_t>(1, options.concurrency));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return aggregate(std::move(records), options.demo_count, options.demo_variety);
}

// ---------------------------------------------------------------------------
// Report output

inline nlohmann::ordered_json to_json(const CategoryMetrics& m) {
  nlohmann::ordered_json j;
  j["count"] = m.count;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["ned"] = m.ned;
  j["ned_percent"] = 100.0 * m.ned;
  j["critic_score"] = m.critic_score ? nlohmann::ordered_json(*m.critic_score) : nlohmann::ordered_json();
  j["passing_rate"] = m.passing_rate ? nlohmann::ordered_json(*m.passing_rate) : nlohmann::ordered_json();
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["demo_count"] = report.demo_count;
  j["demo_variety"] = report.demo_variety ? nlohmann::ordered_json(*report.demo_variety) : nlohmann::ordered_json();
  auto& cats = j["categories"] = nlohmann::ordered_json::object();
  for (const auto& [c, m] : report.categories) cats[std::string(to_string(c))] = to_json(m);
  auto& recs = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json item;
    item["request"] = r.request;
    item["category"] = to_string(r.category);
    item["predicted"] = r.predicted;
    item["gold"] = r.gold;
    item["accurate"] = r.accurate;
    item["precision"] = r.prf.precision;
    item["recall"] = r.prf.recall;
    item["f1"] = r.prf.f1;
    item["ned"] = r.ned;
    item["critic"] = r.critic_yes ? nlohmann::ordered_json(*r.critic_yes ? "yes" : "no") : nlohmann::ordered_json();
    item["passed"] = r.passed ? nlohmann::ordered_json(*r.passed) : nlohmann::ordered_json();
    if (!r.error.empty()) item["error"] = r.error;
    if (!r.warnings.empty()) item["warnings"] = r.warnings;
    recs.push_back(std::move(item));
  }
  return j;
}

inline std::string format_number(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(2);
  ss << v;
  return ss.str();
}

// One row per category: acc/pre/recall/f1/critic/passing in percent, ned in [0, 1].
inline std::string to_csv(const MetricsReport& report) {
  std::string out = "category,count,accuracy,precision,recall,f1,ned,critic_score,passing_rate\n";
  for (const auto& [c, m] : report.categories) {
    out += std::string(to_string(c)) + "," + std::to_string(m.count) + "," + format_number(m.accuracy) + "," +
           format_number(m.precision) + "," + format_number(m.recall) + "," + format_number(m.f1) + "," +
           format_number(m.ned) + "," + (m.critic_score ? format_number(*m.critic_score) : "") + "," +
           (m.passing_rate ? format_number(*m.passing_rate) : "") + "\n";
  }
  return out;
}

}  // namespace conductor::eval
