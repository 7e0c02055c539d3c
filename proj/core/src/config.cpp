#include <fstream>
#include <set>
#include <sstream>

#include "fedala/error.hpp"
#include "fedala/experiment.hpp"
#include <nlohmann/json.hpp>

namespace fedala {

namespace {

using nlohmann::json;

// Reads one JSON object, tracking which keys were consumed so leftovers can
// be reported as typos.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? kEmpty : *it, key_path(key));
  }

  double number(const std::string& key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(key_path(key), "must be a number");
    return v->get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(key_path(key), "must be an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return v->get<std::uint64_t>();
    throw ConfigError(key_path(key), "must be a non-negative integer");
  }

  std::size_t positive(const std::string& key, std::size_t def) {
    const std::int64_t v = integer(key, static_cast<std::int64_t>(def));
    if (v < 1) throw ConfigError(key_path(key), "must be a positive integer");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(key_path(key), "must be true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(key_path(key), "must be a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto enum_value(const std::string& key, const std::string& value, Fn parse) {
  try {
    return parse(value);
  } catch (const InvalidArgument& e) {
    throw ConfigError(key, e.what());
  }
}

AlaConfig parse_ala(Section s) {
  AlaConfig a;
  a.p = static_cast<int>(s.integer("p", a.p));
  a.s_percent = s.number("s_percent", a.s_percent);
  a.eta = s.number("eta", a.eta);
  a.init_stage_round = static_cast<int>(s.integer("init_stage_round", a.init_stage_round));
  a.init_max_epochs = static_cast<int>(s.integer("init_max_epochs", a.init_max_epochs));
  a.init_min_epochs = static_cast<int>(s.integer("init_min_epochs", a.init_min_epochs));
  a.init_converge_window = static_cast<int>(s.integer("init_converge_window", a.init_converge_window));
  a.init_converge_tol = s.number("init_converge_tol", a.init_converge_tol);
  s.finish();
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(s.key_path(e.key()), std::string(e.what()).substr(e.key().size() + 2));
  }
  return a;
}

}  // namespace

ExperimentConfig parse_config_string(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section top(root, "");
  cfg.repeats = static_cast<int>(top.positive("repeats", 1));
  cfg.seed = top.unsigned_integer("seed", 0);
  cfg.output_dir = top.string("output_dir", cfg.output_dir.string());
  cfg.record_wall_time = top.boolean("record_wall_time", false);

  {
    Section d = top.child("data");
    cfg.data.source = enum_value("data.source", d.string("source", "synthetic"), [](const std::string& v) {
      if (v == "synthetic") return DataSource::kSynthetic;
      if (v == "csv") return DataSource::kCsv;
      throw InvalidArgument("must be 'synthetic' or 'csv'");
    });
    {
      Section syn = d.child("synthetic");
      auto& s = cfg.data.synthetic;
      s.num_classes = syn.positive("num_classes", s.num_classes);
      s.input_dim = syn.positive("input_dim", s.input_dim);
      s.samples_per_class = syn.positive("samples_per_class", s.samples_per_class);
      s.class_sep = syn.number("class_sep", s.class_sep);
      if (!(s.class_sep > 0.0)) throw ConfigError("data.synthetic.class_sep", "must be positive");
      syn.finish();
    }
    const std::string csv = d.string("csv_path", "");
    if (cfg.data.source == DataSource::kCsv) {
      if (csv.empty()) throw ConfigError("data.csv_path", "required when source is 'csv'");
      std::filesystem::path p(csv);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw ConfigError("data.csv_path", "file not found: " + p.string());
      cfg.data.csv_path = p;
    } else {
      cfg.data.csv_path = csv;
    }
    {
      Section part = d.child("partition");
      cfg.data.scheme = enum_value("data.partition.scheme", part.string("scheme", "dirichlet"),
                                   partition_scheme_from_string);
      cfg.data.dirichlet_beta = part.number("dirichlet_beta", cfg.data.dirichlet_beta);
      if (!(cfg.data.dirichlet_beta > 0.0))
        throw ConfigError("data.partition.dirichlet_beta", "must be positive");
      cfg.data.classes_per_client = part.positive("classes_per_client", cfg.data.classes_per_client);
      part.finish();
    }
    cfg.data.test_fraction = d.number("test_fraction", cfg.data.test_fraction);
    if (!(cfg.data.test_fraction > 0.0 && cfg.data.test_fraction < 1.0))
      throw ConfigError("data.test_fraction", "must be in (0, 1)");
    d.finish();
  }

  {
    Section m = top.child("model");
    cfg.model_kind = enum_value("model.kind", m.string("kind", to_string(cfg.model_kind)), arch_kind_from_string);
    cfg.hidden_dim = m.positive("hidden_dim", cfg.hidden_dim);
    m.finish();
  }

  {
    Section f = top.child("fl");
    FlConfig& fl = cfg.fl;
    fl.num_clients = f.positive("num_clients", fl.num_clients);
    fl.join_ratio = f.number("join_ratio", fl.join_ratio);
    fl.rounds = static_cast<int>(f.positive("rounds", static_cast<std::size_t>(fl.rounds)));
    fl.local_lr = f.number("local_lr", fl.local_lr);
    fl.local_epochs = static_cast<int>(f.positive("local_epochs", static_cast<std::size_t>(fl.local_epochs)));
    fl.batch_size = f.positive("batch_size", fl.batch_size);
    {
      Section s = f.child("strategy");
      fl.strategy.kind = enum_value("fl.strategy.kind", s.string("kind", "fedala"), strategy_kind_from_string);
      fl.strategy.prox_mu = s.number("prox_mu", fl.strategy.prox_mu);
      fl.strategy.finetune_epochs = static_cast<int>(s.integer("finetune_epochs", fl.strategy.finetune_epochs));
      fl.strategy.attach_ala = s.boolean("attach_ala", false);
      s.finish();
    }
    if (f.has("ala") || fl.strategy.uses_ala()) fl.ala = parse_ala(f.child("ala"));
    f.finish();
    fl.seed = cfg.seed;

    // Cross-field checks need the layer count, which depends only on the kind.
    ModelArch probe;
    probe.kind = cfg.model_kind;
    try {
      fl.validate(probe);
    } catch (const ConfigError& e) {
      const std::set<std::string> ala_keys = {"p", "eta", "s_percent"};
      const std::set<std::string> strategy_keys = {"prox_mu", "finetune_epochs", "attach_ala"};
      const std::string prefix = ala_keys.count(e.key())        ? "fl.ala."
                                 : strategy_keys.count(e.key()) ? "fl.strategy."
                                                                : "fl.";
      throw ConfigError(prefix + e.key(),
                        std::string(e.what()).substr(e.key().size() + 2));
    }
  }

  cfg.run_name = top.string("run_name", cfg.fl.strategy.label());
  if (cfg.run_name.empty() || cfg.run_name.find_first_of("/\\,") != std::string::npos)
    throw ConfigError("run_name", "must be non-empty and contain no '/', '\\' or ','");
  top.finish();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["run_name"] = cfg.run_name;
  j["output_dir"] = cfg.output_dir.string();
  j["repeats"] = cfg.repeats;
  j["seed"] = cfg.seed;
  j["record_wall_time"] = cfg.record_wall_time;
  j["data"] = {
      {"source", cfg.data.source == DataSource::kSynthetic ? "synthetic" : "csv"},
      {"synthetic",
       {{"num_classes", cfg.data.synthetic.num_classes},
        {"input_dim", cfg.data.synthetic.input_dim},
        {"samples_per_class", cfg.data.synthetic.samples_per_class},
        {"class_sep", cfg.data.synthetic.class_sep}}},
      {"csv_path", cfg.data.csv_path.string()},
      {"partition",
       {{"scheme", to_string(cfg.data.scheme)},
        {"dirichlet_beta", cfg.data.dirichlet_beta},
        {"classes_per_client", cfg.data.classes_per_client}}},
      {"test_fraction", cfg.data.test_fraction}};
  j["model"] = {{"kind", to_string(cfg.model_kind)}, {"hidden_dim", cfg.hidden_dim}};
  const FlConfig& fl = cfg.fl;
  json f = {{"num_clients", fl.num_clients},
            {"join_ratio", fl.join_ratio},
            {"rounds", fl.rounds},
            {"local_lr", fl.local_lr},
            {"local_epochs", fl.local_epochs},
            {"batch_size", fl.batch_size},
            {"strategy",
             {{"kind", to_string(fl.strategy.kind)},
              {"prox_mu", fl.strategy.prox_mu},
              {"finetune_epochs", fl.strategy.finetune_epochs},
              {"attach_ala", fl.strategy.attach_ala}}}};
  if (fl.ala) {
    const AlaConfig& a = *fl.ala;
    f["ala"] = {{"p", a.p},
                {"s_percent", a.s_percent},
                {"eta", a.eta},
                {"init_stage_round", a.init_stage_round},
                {"init_max_epochs", a.init_max_epochs},
                {"init_min_epochs", a.init_min_epochs},
                {"init_converge_window", a.init_converge_window},
                {"init_converge_tol", a.init_converge_tol}};
  }
  j["fl"] = f;
  return j.dump(2);
}

}  // namespace fedala
