#include "sweepkit/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json_util.hpp"
#include "sweepkit/error.hpp"
#include "sweepkit/formats.hpp"
#include "sweepkit/rng.hpp"
#include "text_table.hpp"

namespace sweepkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunSchema = "sweepkit.run/v1";
constexpr const char* kReportSchema = "sweepkit.report/v1";
constexpr const char* kDefendedSchema = "sweepkit.defended/v1";
constexpr const char* kPoisonSchema = "sweepkit.poison/v1";

void say(const Logger& log, const std::string& msg)
{
    if (log)
        log(msg);
}

// ---------------------------------------------------------------------------
// Strict JSON reading for run configs
// ---------------------------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!obj.is_object())
        throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end())
        return;
    const std::string name = where + "." + key;
    if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string())
            throw ConfigError(name + " must be a string");
        out = it->template get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number())
            throw ConfigError(name + " must be a number");
        out = it->template get<double>();
    } else if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned())
            throw ConfigError(name + " must be a non-negative integer");
        out = it->template get<T>();
    } else {
        if (!it->is_number_integer())
            throw ConfigError(name + " must be an integer");
        out = it->template get<T>();
    }
}

json train_json(const TrainConfig& t)
{
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"hidden1", t.hidden1},
            {"hidden2", t.hidden2},
            {"learning_rate", t.optimizer.learning_rate},
            {"rho", t.optimizer.rho},
            {"epsilon", t.optimizer.epsilon}};
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

void RunConfig::validate() const
{
    const auto& d = dataset;
    if (d.source != "shapes" && d.source != "cifar10" && d.source != "pnm")
        throw ConfigError("dataset.source must be shapes, cifar10 or pnm");
    if (d.num_classes < 2)
        throw ConfigError("dataset.num_classes must be at least 2");
    if (d.source == "shapes") {
        if (d.num_classes > 20)
            throw ConfigError("shapes datasets support at most 20 classes");
        if (d.dims.height < 1 || d.dims.width < 1 || (d.dims.channels != 1 && d.dims.channels != 3))
            throw ConfigError("dataset dims need positive height and width and 1 or 3 channels");
        const auto k = static_cast<std::size_t>(d.num_classes);
        if (d.train_size < k || d.test_size < k || d.clean_pool_size < k)
            throw ConfigError("dataset sizes must be at least num_classes");
    } else {
        if (d.train_path.empty() || d.test_path.empty())
            throw ConfigError("dataset.train_path and dataset.test_path are required for file sources");
        if (d.source == "cifar10" && d.num_classes > 10)
            throw ConfigError("CIFAR-10 data has at most 10 classes");
    }
    if (attack.empty())
        throw ConfigError("attack must name an attack database entry");
    std::set<std::string> known;
    for (const auto& inst : attack_db_default({32, 32, 3}, 10))
        known.insert(inst.name);
    if (!known.contains(attack))
        throw ConfigError("unknown attack '" + attack + "'");
    std::set<std::string> seen;
    for (const auto& a : attacks) {
        if (!known.contains(a))
            throw ConfigError("unknown attack '" + a + "' in attacks");
        if (!seen.insert(a).second)
            throw ConfigError("attack '" + a + "' listed twice");
    }
    try {
        train.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    const Registry registry = registry_default();
    sweep.validate(registry.size());
    if (finetune_samples && *finetune_samples < 1)
        throw ConfigError("sweep.finetune_samples must be positive");
    if (pf)
        static_cast<void>(CompiledPolicy{registry, *pf});
    if (pi)
        static_cast<void>(CompiledPolicy{registry, *pi});
}

std::string run_config_to_json(const RunConfig& cfg)
{
    const auto& d = cfg.dataset;
    const auto& s = cfg.sweep;
    json doc = {
        {"schema", kRunSchema},
        {"seed", cfg.seed},
        {"dataset",
         {{"source", d.source},
          {"num_classes", d.num_classes},
          {"height", d.dims.height},
          {"width", d.dims.width},
          {"channels", d.dims.channels},
          {"train_size", d.train_size},
          {"test_size", d.test_size},
          {"clean_pool_size", d.clean_pool_size},
          {"train_path", d.train_path},
          {"test_path", d.test_path},
          {"clean_pool_path", d.clean_pool_path}}},
        {"attack", cfg.attack},
        {"attacks", cfg.attacks.empty() ? json("default") : json(cfg.attacks)},
        {"train", train_json(cfg.train)},
        {"sweep",
         {{"eps_acc", s.eps_acc},
          {"eps_asr", s.eps_asr},
          {"n", s.n},
          {"eval_samples", s.eval_samples},
          {"finetune_samples", cfg.finetune_samples ? json(*cfg.finetune_samples) : json(nullptr)},
          {"finetune_epochs", s.finetune_epochs},
          {"batch_size", s.batch_size},
          {"learning_rate", s.optimizer.learning_rate},
          {"rho", s.optimizer.rho},
          {"epsilon", s.optimizer.epsilon}}},
        {"pf", cfg.pf ? detail::policy_json(*cfg.pf) : json(nullptr)},
        {"pi", cfg.pi ? detail::policy_json(*cfg.pi) : json(nullptr)},
    };
    return doc.dump(2);
}

RunConfig run_config_from_json(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    check_keys(doc, {"schema", "seed", "dataset", "attack", "attacks", "train", "sweep", "pf", "pi"}, "run config");
    if (doc.value("schema", std::string{}) != kRunSchema)
        throw ConfigError(std::string("run config schema must be '") + kRunSchema + "'");
    if (!doc.contains("seed"))
        throw ConfigError("run config needs a master seed");
    read(doc, "seed", cfg.seed, "config");
    read(doc, "attack", cfg.attack, "config");

    if (doc.contains("dataset")) {
        const auto& d = doc["dataset"];
        check_keys(d,
                   {"source", "num_classes", "height", "width", "channels", "train_size", "test_size",
                    "clean_pool_size", "train_path", "test_path", "clean_pool_path"},
                   "dataset");
        auto& o = cfg.dataset;
        read(d, "source", o.source, "dataset");
        read(d, "num_classes", o.num_classes, "dataset");
        read(d, "height", o.dims.height, "dataset");
        read(d, "width", o.dims.width, "dataset");
        read(d, "channels", o.dims.channels, "dataset");
        read(d, "train_size", o.train_size, "dataset");
        read(d, "test_size", o.test_size, "dataset");
        read(d, "clean_pool_size", o.clean_pool_size, "dataset");
        read(d, "train_path", o.train_path, "dataset");
        read(d, "test_path", o.test_path, "dataset");
        read(d, "clean_pool_path", o.clean_pool_path, "dataset");
    }
    if (doc.contains("attacks")) {
        const auto& a = doc["attacks"];
        if (a.is_string() && a.get<std::string>() == "default") {
            cfg.attacks.clear();
        } else if (a.is_array()) {
            for (const auto& name : a) {
                if (!name.is_string())
                    throw ConfigError("attacks must list attack names");
                cfg.attacks.push_back(name.get<std::string>());
            }
        } else {
            throw ConfigError("attacks must be \"default\" or a list of names");
        }
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        check_keys(t, {"epochs", "batch_size", "hidden1", "hidden2", "learning_rate", "rho", "epsilon"}, "train");
        read(t, "epochs", cfg.train.epochs, "train");
        read(t, "batch_size", cfg.train.batch_size, "train");
        read(t, "hidden1", cfg.train.hidden1, "train");
        read(t, "hidden2", cfg.train.hidden2, "train");
        read(t, "learning_rate", cfg.train.optimizer.learning_rate, "train");
        read(t, "rho", cfg.train.optimizer.rho, "train");
        read(t, "epsilon", cfg.train.optimizer.epsilon, "train");
    }
    if (doc.contains("sweep")) {
        const auto& s = doc["sweep"];
        check_keys(s,
                   {"eps_acc", "eps_asr", "n", "eval_samples", "finetune_samples", "finetune_epochs", "batch_size",
                    "learning_rate", "rho", "epsilon"},
                   "sweep");
        auto& o = cfg.sweep;
        read(s, "eps_acc", o.eps_acc, "sweep");
        read(s, "eps_asr", o.eps_asr, "sweep");
        read(s, "n", o.n, "sweep");
        read(s, "eval_samples", o.eval_samples, "sweep");
        read(s, "finetune_epochs", o.finetune_epochs, "sweep");
        read(s, "batch_size", o.batch_size, "sweep");
        read(s, "learning_rate", o.optimizer.learning_rate, "sweep");
        read(s, "rho", o.optimizer.rho, "sweep");
        read(s, "epsilon", o.optimizer.epsilon, "sweep");
        if (s.contains("finetune_samples") && !s["finetune_samples"].is_null()) {
            std::size_t n = 0;
            read(s, "finetune_samples", n, "sweep");
            cfg.finetune_samples = n;
        }
    }
    for (const char* key : {"pf", "pi"}) {
        if (!doc.contains(key) || doc[key].is_null())
            continue;
        (std::string(key) == "pf" ? cfg.pf : cfg.pi) = detail::policy_from_value(doc[key]);
    }
    cfg.validate();
    return cfg;
}

std::string config_digest(const RunConfig& cfg)
{
    return hex64(fnv1a64(run_config_to_json(cfg)));
}

SweepConfig effective_sweep_config(const RunConfig& cfg, std::size_t clean_pool)
{
    SweepConfig s = cfg.sweep;
    s.seed = derive_seed(cfg.seed, "sweep");
    s.finetune_samples = cfg.finetune_samples.value_or(desk_finetune_samples(clean_pool));
    return s;
}

Policy reference_pf()
{
    return Policy::of({"OD", "RSPA", "SAT", "GCSM", "GESM", "DSSM"});
}

Policy reference_pi()
{
    return Policy::of({"SAT", "GCSM", "DSSM"});
}

// ---------------------------------------------------------------------------
// Data, attacks, training
// ---------------------------------------------------------------------------

Datasets make_datasets(const RunConfig& cfg)
{
    const auto& d = cfg.dataset;
    Datasets out;
    if (d.source == "shapes") {
        out.train = gen_shapes_dataset(d.train_size, d.num_classes, d.dims, derive_seed(cfg.seed, "data/train"));
        out.test = gen_shapes_dataset(d.test_size, d.num_classes, d.dims, derive_seed(cfg.seed, "data/test"));
        out.clean_pool =
            gen_shapes_dataset(d.clean_pool_size, d.num_classes, d.dims, derive_seed(cfg.seed, "data/pool"));
        return out;
    }
    out.train = load_dataset(d.train_path, d.num_classes);
    out.test = load_dataset(d.test_path, d.num_classes);
    out.clean_pool = d.clean_pool_path.empty() ? out.train : load_dataset(d.clean_pool_path, d.num_classes);
    if (out.test.dims() != out.train.dims() || out.clean_pool.dims() != out.train.dims())
        throw FormatError("train, test and clean pool images differ in dimensions");
    return out;
}

std::vector<AttackInstance> selected_attacks(const RunConfig& cfg, Dims dims, int num_classes)
{
    auto db = attack_db_default(dims, num_classes);
    if (cfg.attacks.empty())
        return db;
    for (const auto& name : cfg.attacks)
        if (std::none_of(db.begin(), db.end(), [&](const AttackInstance& a) { return a.name == name; }))
            throw ConfigError("unknown attack '" + name + "'");
    std::erase_if(db, [&](const AttackInstance& a) {
        return std::find(cfg.attacks.begin(), cfg.attacks.end(), a.name) == cfg.attacks.end();
    });
    return db;
}

AttackInstance find_attack(const std::string& name, Dims dims, int num_classes)
{
    for (auto& inst : attack_db_default(dims, num_classes))
        if (inst.name == name)
            return inst;
    throw ConfigError("unknown attack '" + name + "'");
}

PoisonResult poison_for(const RunConfig& cfg, const LabeledDataset& train, const AttackInstance& inst)
{
    Rng rng(derive_seed(cfg.seed, "poison/" + inst.name));
    return poison_dataset(train, inst, rng);
}

TinyClassifier train_for(const RunConfig& cfg, const LabeledDataset& poisoned, const std::string& attack_name)
{
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train/" + attack_name);
    return train(poisoned, tc);
}

namespace {

TriggeredSet take_triggered(const TriggeredSet& t, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Rng rng(seed);
    const std::size_t take = std::min(count, order.size());
    for (std::size_t i = 0; i < take; ++i)
        std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(order.size() - i))]);
    TriggeredSet out;
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t k = order[i];
        out.images.push_back(t.images[k]);
        out.true_labels.push_back(t.true_labels[k]);
        out.desired_labels.push_back(t.desired_labels[k]);
        out.source_indices.push_back(t.source_indices[k]);
    }
    return out;
}

} // namespace

EvaluatorList build_evaluators(const RunConfig& cfg, const Datasets& data, std::shared_ptr<const Registry> registry,
                               const std::vector<AttackInstance>& attacks, const Logger& log)
{
    const std::size_t n = cfg.sweep.eval_samples;
    const LabeledDataset clean = sample_subset(data.test, n, derive_seed(cfg.seed, "eval-clean"));
    EvaluatorList out;
    for (const auto& inst : attacks) {
        say(log, "training infected model for " + inst.name);
        const PoisonResult p = poison_for(cfg, data.train, inst);
        TinyClassifier model = train_for(cfg, p.dataset, inst.name);
        TriggeredSet triggered = take_triggered(make_triggered_set(data.test, inst), n,
                                                derive_seed(cfg.seed, "eval-triggered/" + inst.name));
        out.push_back(std::make_unique<ModelEvaluator>(inst.name, std::move(model), clean, std::move(triggered),
                                                       registry, derive_seed(cfg.seed, "sweep-preprocess")));
    }
    return out;
}

SweepResult sweep_attack_db(const RunConfig& cfg, const Datasets& data, std::shared_ptr<const Registry> registry,
                            const Logger& log)
{
    const auto attacks = selected_attacks(cfg, data.train.dims(), data.train.num_classes);
    std::vector<AttackInstance> search;
    std::vector<AttackInstance> validation;
    for (const auto& a : attacks)
        (a.role == Role::Search ? search : validation).push_back(a);
    if (search.empty())
        throw ConfigError("the selected attacks contain no search-set instance");
    const EvaluatorList s = build_evaluators(cfg, data, registry, search, log);
    const EvaluatorList v = build_evaluators(cfg, data, registry, validation, log);
    say(log, "running policy search");
    return run_sweep(*registry, s, v, data.clean_pool, effective_sweep_config(cfg, data.clean_pool.size()));
}

// ---------------------------------------------------------------------------
// Defense
// ---------------------------------------------------------------------------

DefendedModel defend(const Registry& registry, const TinyClassifier& infected, const LabeledDataset& clean,
                     const Policy& pf, const Policy& pi, const SweepConfig& cfg, Provenance provenance)
{
    if (pf.empty() || pi.empty())
        throw InvalidArgument("defend needs non-empty P_f and P_i");
    static_cast<void>(CompiledPolicy{registry, pi});
    const LabeledDataset tuned = make_finetune_set(registry, clean, pf, cfg);
    TrainConfig tc;
    tc.optimizer = cfg.optimizer;
    tc.batch_size = cfg.batch_size;
    tc.seed = derive_seed(cfg.seed, "defend");
    return {fine_tune(infected, tuned, cfg.finetune_epochs, tc), pf, pi, std::move(provenance)};
}

int defended_predict(const DefendedModel& dm, const Image& img, std::uint64_t sample_seed, const Registry& registry)
{
    const CompiledPolicy p(registry, dm.pi);
    return dm.model.predict(p.apply(img, sample_seed));
}

void save_defended(const DefendedModel& dm, const fs::path& dir, const std::string& stem)
{
    save_model(dm.model, dir / (stem + ".swkm"));
    const json doc = {{"schema", kDefendedSchema},
                      {"model", stem + ".swkm"},
                      {"pf", detail::policy_json(dm.pf)},
                      {"pi", detail::policy_json(dm.pi)},
                      {"provenance",
                       {{"seed", dm.provenance.seed},
                        {"config_digest", dm.provenance.config_digest},
                        {"attack", dm.provenance.attack}}}};
    write_text(dir / (stem + ".json"), doc.dump(2) + "\n");
}

DefendedModel load_defended(const fs::path& dir, const std::string& stem)
{
    const fs::path meta = dir / (stem + ".json");
    try {
        const json doc = json::parse(read_text(meta));
        if (doc.value("schema", std::string{}) != kDefendedSchema)
            throw FormatError(std::string("schema must be '") + kDefendedSchema + "'");
        DefendedModel dm{load_model(dir / doc.at("model").get<std::string>()),
                         detail::policy_from_value(doc.at("pf")),
                         detail::policy_from_value(doc.at("pi")),
                         {}};
        const auto& p = doc.at("provenance");
        dm.provenance = {p.at("seed").get<std::uint64_t>(), p.at("config_digest").get<std::string>(),
                         p.at("attack").get<std::string>()};
        if (dm.pi.empty())
            throw FormatError("P_i is empty");
        return dm;
    } catch (const json::exception& e) {
        throw FormatError(meta.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(meta.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(meta.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

DefenseReport evaluate_defense(const Registry& registry, const TinyClassifier& infected, const DefendedModel& dm,
                               const LabeledDataset& test, const AttackInstance& inst, std::uint64_t eval_seed)
{
    auto shared = std::make_shared<const Registry>(registry);
    const TriggeredSet triggered = make_triggered_set(test, inst);
    const ModelEvaluator original(inst.name, infected, test, triggered, shared, eval_seed);
    const ModelEvaluator tuned(inst.name, dm.model, test, triggered, shared, eval_seed);
    DefenseReport r;
    r.attack = inst.name;
    r.seed = dm.provenance.seed;
    r.config_digest = dm.provenance.config_digest;
    r.pf = dm.pf;
    r.pi = dm.pi;
    r.baseline = original.report(nullptr);
    r.defended = tuned.report(&dm.pi);
    r.strategies = strategy_row(original, tuned, dm.pf, dm.pi);
    return r;
}

namespace {

json eval_json(const EvalReport& e)
{
    return {{"acc", e.acc()},
            {"asr", e.asr()},
            {"clean_total", e.clean_total},
            {"clean_correct", e.clean_correct},
            {"triggered_total", e.triggered_total},
            {"triggered_hits", e.triggered_hits},
            {"confusion", e.confusion}};
}

EvalReport eval_from(const json& j)
{
    EvalReport e;
    e.clean_total = j.at("clean_total").get<std::size_t>();
    e.clean_correct = j.at("clean_correct").get<std::size_t>();
    e.triggered_total = j.at("triggered_total").get<std::size_t>();
    e.triggered_hits = j.at("triggered_hits").get<std::size_t>();
    e.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    return e;
}

} // namespace

std::string report_to_json(const DefenseReport& r)
{
    json doc = {{"schema", kReportSchema},
                {"attack", r.attack},
                {"seed", r.seed},
                {"config_digest", r.config_digest},
                {"pf", detail::policy_json(r.pf)},
                {"pi", detail::policy_json(r.pi)},
                {"baseline", eval_json(r.baseline)},
                {"defended", eval_json(r.defended)},
                {"strategies", detail::strategy_row_json(r.strategies)}};
    if (r.sweep)
        doc["sweep"] = detail::sweep_json(*r.sweep);
    return doc.dump(2) + "\n";
}

DefenseReport report_from_json(const std::string& text)
{
    try {
        const json doc = json::parse(text);
        if (doc.value("schema", std::string{}) != kReportSchema)
            throw FormatError(std::string("report schema must be '") + kReportSchema + "'");
        DefenseReport r;
        r.attack = doc.at("attack").get<std::string>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        r.config_digest = doc.at("config_digest").get<std::string>();
        r.pf = detail::policy_from_value(doc.at("pf"));
        r.pi = detail::policy_from_value(doc.at("pi"));
        r.baseline = eval_from(doc.at("baseline"));
        r.defended = eval_from(doc.at("defended"));
        r.strategies = detail::strategy_row_from(doc.at("strategies"));
        if (doc.contains("sweep"))
            r.sweep = detail::sweep_from_value(doc.at("sweep"));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
}

namespace {

std::string join(const std::vector<std::string>& ids)
{
    std::string out;
    for (const auto& id : ids)
        out += (out.empty() ? "" : ", ") + id;
    return "{" + out + "}";
}

} // namespace

std::string render_report(const DefenseReport& r)
{
    using detail::fixed3;
    std::string out;
    out += "Attack: " + r.attack + "\n";
    out += "Seed: " + std::to_string(r.seed) + "   config digest: " + r.config_digest + "\n";
    out += "P_f = " + join(r.pf.ids()) + "\n";
    out += "P_i = " + join(r.pi.ids()) + "\n\n";

    detail::TextTable t;
    t.row({"", "ACC", "ASR"});
    t.rule();
    t.row({"Infected model", fixed3(r.baseline.acc()), fixed3(r.baseline.asr())});
    t.row({"Defended (P_f tune + P_i infer)", fixed3(r.defended.acc()), fixed3(r.defended.asr())});
    out += t.str() + "\n";

    out += "Strategies\n" + render_search_table({r.strategies});
    if (r.sweep) {
        const auto& s = *r.sweep;
        out += "\nShortlisted functions (ACC > " + fixed3(s.config.eps_acc) + " on every search attack)\n";
        out += render_shortlist_table(s.shortlist, s.pf.policy);
        if (s.pf.deficient)
            out += "warning: fewer than n functions passed the ACC threshold\n";
        out += "\nInference policy selection: avg_base " + fixed3(s.pi.avg_base) + ", selected " +
               join(s.pi.policy.ids()) + (s.pi.fallback ? " (no subset qualified, fell back to P_f)" : "") + "\n";
        out += "\nSearch set\n" + render_search_table(s.search_rows);
        out += "\nValidation set\n" + render_validation_table(s.validation_rows);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File-level stages
// ---------------------------------------------------------------------------

namespace {

bool cifar_compatible(const LabeledDataset& ds)
{
    return ds.dims() == Dims{32, 32, 3} && ds.num_classes <= 10;
}

fs::path dataset_path(const fs::path& out, const std::string& name, const LabeledDataset& ds)
{
    return out / "data" / (cifar_compatible(ds) ? name + ".bin" : name);
}

LabeledDataset load_stage_dataset(const RunConfig& cfg, const fs::path& out, const std::string& name,
                                  const char* producer)
{
    const fs::path bin = out / "data" / (name + ".bin");
    const fs::path dir = out / "data" / name;
    if (fs::exists(bin))
        return load_dataset(bin, cfg.dataset.num_classes);
    if (fs::is_directory(dir))
        return load_dataset(dir, cfg.dataset.num_classes);
    throw IoError("missing " + bin.string() + "; run " + producer + " first");
}

Datasets load_stage_datasets(const RunConfig& cfg, const fs::path& out)
{
    return {load_stage_dataset(cfg, out, "train", "gen-data"), load_stage_dataset(cfg, out, "test", "gen-data"),
            load_stage_dataset(cfg, out, "pool", "gen-data")};
}

std::optional<SweepResult> stored_sweep(const fs::path& out)
{
    const fs::path p = out / "sweep.json";
    if (!fs::exists(p))
        return std::nullopt;
    return sweep_from_json(read_text(p));
}

} // namespace

namespace stages {

void gen_data(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const Datasets d = make_datasets(cfg);
    for (const auto& [name, ds] : {std::pair{"train", &d.train}, {"test", &d.test}, {"pool", &d.clean_pool}}) {
        const fs::path p = dataset_path(out, name, *ds);
        say(log, "writing " + std::to_string(ds->size()) + " samples to " + p.string());
        save_dataset(*ds, p);
    }
}

void poison(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const LabeledDataset train = load_stage_dataset(cfg, out, "train", "gen-data");
    const AttackInstance inst = find_attack(cfg.attack, train.dims(), train.num_classes);
    const PoisonResult p = poison_for(cfg, train, inst);
    const fs::path path = dataset_path(out, "poisoned", p.dataset);
    say(log, "poisoned " + std::to_string(p.indices.size()) + " samples with " + inst.name);
    save_dataset(p.dataset, path);
    const json doc = {{"schema", kPoisonSchema},
                      {"attack", inst.name},
                      {"trigger", trigger_kind(inst.trigger)},
                      {"poison_ratio", inst.poison_ratio},
                      {"poisoned", p.indices.size()},
                      {"unchanged_labels", p.unchanged_labels},
                      {"indices", p.indices}};
    write_text(out / "poison.json", doc.dump(2) + "\n");
}

void train(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const LabeledDataset poisoned = load_stage_dataset(cfg, out, "poisoned", "poison");
    RunConfig c = cfg;
    if (log)
        c.train.on_epoch = [&](int epoch, const TinyClassifier&) {
            say(log, "epoch " + std::to_string(epoch) + "/" + std::to_string(c.train.epochs));
        };
    const TinyClassifier m = train_for(c, poisoned, cfg.attack);
    save_model(m, out / "model.swkm");
}

void sweep(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const Datasets d = load_stage_datasets(cfg, out);
    auto registry = std::make_shared<const Registry>(registry_default());
    const SweepResult r = sweep_attack_db(cfg, d, registry, log);
    write_text(out / "sweep.json", sweep_to_json(r) + "\n");
    write_text(out / "shortlist.txt", render_shortlist_table(r.shortlist, r.pf.policy));
    write_text(out / "sweep_tables.txt", "Search set\n" + render_search_table(r.search_rows) + "\nValidation set\n" +
                                             render_validation_table(r.validation_rows));
    say(log, "P_f = " + join(r.pf.policy.ids()) + ", P_i = " + join(r.pi.policy.ids()));
}

void defend(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const TinyClassifier infected = load_model(out / "model.swkm");
    const LabeledDataset pool = load_stage_dataset(cfg, out, "pool", "gen-data");
    const Registry registry = registry_default();
    const auto swept = stored_sweep(out);
    const Policy pf = cfg.pf ? *cfg.pf : swept ? swept->pf.policy : reference_pf();
    const Policy pi = cfg.pi ? *cfg.pi : swept ? swept->pi.policy : reference_pi();
    say(log, "fine-tuning with P_f = " + join(pf.ids()) + ", binding P_i = " + join(pi.ids()));
    const DefendedModel dm = sweepkit::defend(registry, infected, pool, pf, pi,
                                              effective_sweep_config(cfg, pool.size()),
                                              {cfg.seed, config_digest(cfg), cfg.attack});
    save_defended(dm, out);
}

void eval(const RunConfig& cfg, const fs::path& out, const Logger& log)
{
    const TinyClassifier infected = load_model(out / "model.swkm");
    const DefendedModel dm = load_defended(out);
    const std::string digest = config_digest(cfg);
    if (dm.provenance.config_digest != digest)
        throw ConfigError("defended model was produced by config " + dm.provenance.config_digest +
                          ", current config is " + digest);
    const LabeledDataset test = load_stage_dataset(cfg, out, "test", "gen-data");
    const AttackInstance inst = find_attack(cfg.attack, test.dims(), test.num_classes);
    say(log, "evaluating on " + std::to_string(test.size()) + " test samples");
    DefenseReport r = evaluate_defense(registry_default(), infected, dm, test, inst, derive_seed(cfg.seed, "eval"));
    r.sweep = stored_sweep(out);
    write_text(out / "report.json", report_to_json(r));
    say(log, "ACC " + detail::fixed3(r.baseline.acc()) + " -> " + detail::fixed3(r.defended.acc()) + ", ASR " +
                 detail::fixed3(r.baseline.asr()) + " -> " + detail::fixed3(r.defended.asr()));
}

std::string report(const fs::path& out)
{
    const std::string text = render_report(report_from_json(read_text(out / "report.json")));
    write_text(out / "report.txt", text);
    return text;
}

} // namespace stages

} // namespace sweepkit
