// cfx: train, inspect and query counterfactual explanations for decision trees.
// Exit codes: 0 ok, 1 error, 2 fail-safe answer.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cfx/cfx.hpp"
#include "cfx/service.hpp"

namespace {

struct EngineOptions {
  std::string model;
  std::string personas;
  std::string locale;
  int budget = 50;
  bool obfuscate = false;
  bool echo = false;
  bool context = false;
};

void add_engine_options(CLI::App* cmd, EngineOptions& o) {
  cmd->add_option("--model", o.model, "Model file written by 'train'")->required()->envname("CFX_MODEL");
  cmd->add_option("--personas", o.personas, "Persona list (JSON)")->envname("CFX_PERSONAS");
  cmd->add_option("--budget", o.budget, "Explanation query budget per session")->envname("CFX_BUDGET");
  cmd->add_flag("--obfuscate", o.obfuscate, "Replace numbers with quantitative adjectives")->envname("CFX_OBFUSCATE");
  cmd->add_flag("--echo-constraints", o.echo, "Repeat the active constraints in each explanation");
  cmd->add_flag("--show-context", o.context, "Append the range in which each explanation holds");
  cmd->add_option("--locale", o.locale, "Template overrides (key = template lines)");
}

std::shared_ptr<cfx::Engine> make_engine(const EngineOptions& o) {
  auto engine = std::make_shared<cfx::Engine>();
  engine->model = cfx::load_bundle(cfx::read_file(o.model));
  if (!o.personas.empty()) engine->personas = cfx::load_personas(cfx::read_file(o.personas), engine->schema());
  engine->config.budget = o.budget;
  auto& r = engine->config.render;
  r.obfuscate = o.obfuscate;
  r.echo_constraints = o.echo;
  r.show_context = o.context;
  if (!o.locale.empty()) r.locale = cfx::Locale::with_overrides(cfx::read_file(o.locale));
  r.validate();
  return engine;
}

// Inline JSON object, a JSON file, or a "k=v,..." literal.
cfx::Instance read_instance(const cfx::DatasetSchema& schema, const std::string& spec) {
  auto t = cfx::trim(spec);
  if (!t.empty() && t.front() == '{') return cfx::instance_from_json(schema, cfx::json::parse(t));
  if (std::filesystem::is_regular_file(std::string(t)))
    return cfx::instance_from_json(schema, cfx::json::parse(cfx::read_file(std::string(t))));
  return cfx::parse_instance_literal(schema, t);
}

cfx::Session start_session(const std::shared_ptr<cfx::Engine>& engine, const std::string& instance,
                           const std::string& persona) {
  if (!persona.empty()) return cfx::Session::from_persona(engine, "local", persona);
  if (!instance.empty()) return cfx::Session(engine, "local", read_instance(engine->schema(), instance));
  if (!engine->personas.empty()) return cfx::Session::from_persona(engine, "local", engine->personas.front().id);
  throw cfx::Error("no instance given: use --instance or --persona");
}

int cmd_train(const std::string& data, const std::string& schema_path, const cfx::TrainConfig& config,
              const std::string& out) {
  auto schema = cfx::load_schema(cfx::read_file(schema_path));
  auto dataset = cfx::load_dataset(cfx::read_file(data), schema);
  auto bundle = cfx::ModelBundle::from_training(dataset, config);
  cfx::write_file(out, cfx::serialize_bundle(bundle));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    correct += bundle.tree.predict(dataset.rows[i]).class_index == dataset.labels[i];
  std::printf("leaves: %zu\ntraining accuracy: %.4f\n", bundle.tree.leaf_ids().size(),
              dataset.size() ? static_cast<double>(correct) / dataset.size() : 0.0);
  return 0;
}

int cmd_inspect(const std::string& model, bool meta) {
  auto bundle = cfx::load_bundle(cfx::read_file(model));
  std::cout << cfx::visualise(bundle.tree).text;
  if (meta) std::cout << bundle.space.dump(bundle.schema());
  return 0;
}

int cmd_explain(const EngineOptions& o, const std::string& instance, const std::string& persona,
                const std::vector<std::string>& queries) {
  auto engine = make_engine(o);
  auto session = start_session(engine, instance, persona);
  int code = 0;
  for (const auto& q : queries) {
    auto r = session.handle(q);
    std::cout << r.text << "\n";
    if (!r.payload.is_null()) std::cout << r.payload.dump() << "\n";
    if (r.failsafe) code = 2;
  }
  return code;
}

int cmd_repl(const EngineOptions& o, const std::string& instance, const std::string& persona,
             const std::string& transcript_out) {
  auto engine = make_engine(o);
  auto session = start_session(engine, instance, persona);
  std::cout << session.transcript().front().text << "\n";
  std::string line;
  while (true) {
    std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    auto t = cfx::trim(line);
    if (t.empty()) continue;
    if (t == "quit" || t == "exit") break;
    std::cout << session.handle(t).text << "\n";
  }
  std::cout << "\n";
  if (!transcript_out.empty()) cfx::write_file(transcript_out, session.transcript_json().dump(2));
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const EngineOptions& o, const std::string& host, int port, const std::string& snapshots) {
  auto engine = make_engine(o);
  std::optional<std::filesystem::path> snap;
  if (!snapshots.empty()) snap = snapshots;
  cfx::Service service(engine, snap);
  httplib::Server server;
  service.bind(server);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) throw cfx::Error("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for decision-tree classifiers"};
  app.require_subcommand(1);

  std::string data, schema, out;
  cfx::TrainConfig config;
  auto* train = app.add_subcommand("train", "Train a tree and write a model file");
  train->add_option("--data", data, "Training CSV")->required();
  train->add_option("--schema", schema, "Schema JSON")->required();
  train->add_option("--max-depth", config.max_depth);
  train->add_option("--min-split", config.min_samples_split);
  train->add_option("--min-leaf", config.min_samples_leaf);
  train->add_option("--out", out, "Model output path")->required();

  std::string model;
  bool meta = false;
  auto* inspect = app.add_subcommand("inspect", "Print the tree");
  inspect->add_option("--model", model)->required();
  inspect->add_flag("--meta", meta, "Also print partitions and leaf codes");

  EngineOptions eo;
  std::string instance, persona;
  std::vector<std::string> queries;
  auto* explain = app.add_subcommand("explain", "Answer queries about one instance");
  add_engine_options(explain, eo);
  explain->add_option("--instance", instance, "JSON object, JSON file or name=value,...");
  explain->add_option("--persona", persona);
  explain->add_option("--query", queries, "Query text; repeat for a scripted dialogue")->required();

  std::string transcript_out;
  auto* repl = app.add_subcommand("repl", "Interactive dialogue on stdin/stdout");
  add_engine_options(repl, eo);
  repl->add_option("--instance", instance);
  repl->add_option("--persona", persona);
  repl->add_option("--transcript", transcript_out, "Write the transcript (JSON) on exit");

  std::string host = "127.0.0.1", snapshots;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  add_engine_options(serve, eo);
  serve->add_option("--host", host)->envname("CFX_HOST");
  serve->add_option("--port", port)->envname("CFX_PORT");
  serve->add_option("--snapshots", snapshots, "Directory for session snapshots")->envname("CFX_SNAPSHOTS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(data, schema, config, out);
    if (*inspect) return cmd_inspect(model, meta);
    if (*explain) return cmd_explain(eo, instance, persona, queries);
    if (*repl) return cmd_repl(eo, instance, persona, transcript_out);
    if (*serve) return cmd_serve(eo, host, port, snapshots);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
