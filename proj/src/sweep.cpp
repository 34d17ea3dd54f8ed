#include "sweepkit/sweep.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "sweepkit/error.hpp"
#include "sweepkit/parallel.hpp"
#include "sweepkit/rng.hpp"
#include "text_table.hpp"

namespace sweepkit {

void SweepConfig::validate(std::size_t registry_size) const
{
    if (!(eps_acc > 0.0 && eps_acc < 1.0))
        throw ConfigError("eps_acc must lie in (0, 1)");
    if (!(eps_asr > 0.0 && eps_asr < 1.0))
        throw ConfigError("eps_asr must lie in (0, 1)");
    if (n < 1 || static_cast<std::size_t>(n) > registry_size)
        throw ConfigError("n must lie in [1, " + std::to_string(registry_size) + "]");
    if (n > 20)
        throw ConfigError("n above 20 makes the subset search intractable");
    if (eval_samples < 1)
        throw ConfigError("eval_samples must be positive");
    if (finetune_epochs < 1)
        throw ConfigError("finetune_epochs must be positive");
    if (batch_size < 1)
        throw ConfigError("batch_size must be positive");
    if (!(optimizer.rho > 0.0 && optimizer.rho < 1.0) || !(optimizer.epsilon > 0.0) ||
        !(optimizer.learning_rate > 0.0))
        throw ConfigError("optimizer needs rho in (0, 1), epsilon > 0 and learning_rate > 0");
}

std::size_t desk_finetune_samples(std::size_t clean_pool)
{
    return std::min<std::size_t>(10000, clean_pool * 4 / 5);
}

// ---------------------------------------------------------------------------
// ModelEvaluator
// ---------------------------------------------------------------------------

ModelEvaluator::ModelEvaluator(std::string name, TinyClassifier model, LabeledDataset clean, TriggeredSet triggered,
                               std::shared_ptr<const Registry> registry, std::uint64_t eval_seed)
    : name_(std::move(name)),
      model_(std::move(model)),
      clean_(std::move(clean)),
      triggered_(std::move(triggered)),
      registry_(std::move(registry)),
      eval_seed_(eval_seed)
{
    if (!registry_)
        throw InvalidArgument("evaluator needs a registry");
    if (clean_.empty() || triggered_.empty())
        throw InvalidArgument("evaluator '" + name_ + "' needs clean and triggered samples");
}

double ModelEvaluator::acc(const Policy* preprocess) const
{
    if (!preprocess)
        return accuracy(model_, clean_, nullptr, eval_seed_);
    const CompiledPolicy p(*registry_, *preprocess);
    return accuracy(model_, clean_, &p, eval_seed_);
}

double ModelEvaluator::asr(const Policy* preprocess) const
{
    if (!preprocess)
        return attack_success_rate(model_, triggered_, nullptr, eval_seed_);
    const CompiledPolicy p(*registry_, *preprocess);
    return attack_success_rate(model_, triggered_, &p, eval_seed_);
}

EvalReport ModelEvaluator::report(const Policy* preprocess) const
{
    if (!preprocess)
        return evaluate(model_, clean_, triggered_, nullptr, eval_seed_);
    const CompiledPolicy p(*registry_, *preprocess);
    return evaluate(model_, clean_, triggered_, &p, eval_seed_);
}

std::unique_ptr<AttackEvaluator> ModelEvaluator::fine_tuned(const LabeledDataset& finetune_set,
                                                            const SweepConfig& cfg) const
{
    TrainConfig tc;
    tc.optimizer = cfg.optimizer;
    tc.batch_size = cfg.batch_size;
    tc.seed = derive_seed(cfg.seed, "finetune/" + name_);
    return std::make_unique<ModelEvaluator>(name_, fine_tune(model_, finetune_set, cfg.finetune_epochs, tc), clean_,
                                            triggered_, registry_, eval_seed_);
}

// ---------------------------------------------------------------------------
// Search steps
// ---------------------------------------------------------------------------

namespace {

double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

ShortlistEntry measure(const std::string& id, const EvaluatorList& attacks, const Policy* p)
{
    ShortlistEntry e;
    e.id = id;
    for (const auto& a : attacks) {
        e.acc.push_back(a->acc(p));
        e.asr.push_back(a->asr(p));
    }
    e.avg_asr = mean(e.asr);
    return e;
}

} // namespace

Shortlist shortlist(const Registry& registry, const EvaluatorList& search, const SweepConfig& cfg)
{
    if (search.empty())
        throw InvalidArgument("shortlist needs at least one search attack");
    Shortlist s;
    for (const auto& a : search)
        s.attacks.push_back(a->name());
    s.baseline = measure("Baseline", search, nullptr);
    for (const auto& fn : registry.functions()) {
        const Policy p{{PolicyStep{fn.id, {}}}};
        ShortlistEntry e = measure(fn.id, search, &p);
        if (std::all_of(e.acc.begin(), e.acc.end(), [&](double acc) { return acc > cfg.eps_acc; }))
            s.entries.push_back(std::move(e));
    }
    std::stable_sort(s.entries.begin(), s.entries.end(),
                     [](const ShortlistEntry& a, const ShortlistEntry& b) { return a.avg_asr < b.avg_asr; });
    return s;
}

PfSelection build_pf(const Registry& registry, const Shortlist& s, int n)
{
    if (n < 1)
        throw InvalidArgument("P_f needs n >= 1");
    PfSelection r;
    const auto take = std::min(static_cast<std::size_t>(n), s.entries.size());
    r.deficient = take < static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < take; ++i)
        r.policy.steps.push_back({s.entries[i].id, {}});
    r.policy = canonical_order(registry, std::move(r.policy));
    return r;
}

LabeledDataset make_finetune_set(const Registry& registry, const LabeledDataset& clean_pool, const Policy& pf,
                                 const SweepConfig& cfg)
{
    if (clean_pool.empty())
        throw InvalidArgument("fine-tuning needs a non-empty clean pool");
    const CompiledPolicy p(registry, pf);
    LabeledDataset ds = sample_subset(clean_pool, cfg.finetune_samples, derive_seed(cfg.seed, "finetune-subset"));
    parallel_for(ds.size(), [&](std::size_t i) {
        ds.images[i] = p.apply(ds.images[i], derive_seed(cfg.seed, "finetune-transform", i));
    });
    return ds;
}

EvaluatorList finetune_per_attack(const EvaluatorList& attacks, const LabeledDataset& finetune_set,
                                  const SweepConfig& cfg)
{
    EvaluatorList out;
    out.reserve(attacks.size());
    for (const auto& a : attacks)
        out.push_back(a->fine_tuned(finetune_set, cfg));
    return out;
}

PiSelection select_pi(const Policy& pf, const EvaluatorList& finetuned, const SweepConfig& cfg)
{
    if (pf.empty())
        throw InvalidArgument("P_f is empty");
    if (finetuned.empty())
        throw InvalidArgument("P_i selection needs at least one fine-tuned attack");
    if (pf.steps.size() > 20)
        throw InvalidArgument("P_f too long for exhaustive subset search");

    PiSelection r;
    std::vector<double> base;
    for (const auto& a : finetuned)
        base.push_back(a->asr(&pf));
    r.avg_base = mean(base);

    const std::uint32_t count = 1u << pf.steps.size();
    const SubsetScore* best = nullptr;
    r.candidates.reserve(count - 1);
    for (std::uint32_t mask = 1; mask < count; ++mask) {
        SubsetScore s;
        s.mask = mask;
        for (std::size_t i = 0; i < pf.steps.size(); ++i)
            if (mask & (1u << i))
                s.policy.steps.push_back(pf.steps[i]);
        for (const auto& a : finetuned)
            s.asr.push_back(a->asr(&s.policy));
        s.mean_asr = mean(s.asr);
        s.qualified = r.avg_base - s.mean_asr > cfg.eps_asr;
        r.candidates.push_back(std::move(s));
    }
    for (const auto& s : r.candidates)
        if (s.qualified && (!best || s.mean_asr < best->mean_asr))
            best = &s;
    if (best) {
        r.policy = best->policy;
    } else {
        r.policy = pf;
        r.fallback = true;
    }
    return r;
}

StrategyRow strategy_row(const AttackEvaluator& original, const AttackEvaluator& finetuned, const Policy& pf,
                         const Policy& pi)
{
    StrategyRow row;
    row.attack = original.name();
    row.baseline = {original.acc(nullptr), original.asr(nullptr)};
    row.pf_pi = {finetuned.acc(&pi), finetuned.asr(&pi)};
    row.pf_inference = {original.acc(&pf), original.asr(&pf)};
    row.pf_finetune = {finetuned.acc(nullptr), finetuned.asr(nullptr)};
    row.pf_pf = {finetuned.acc(&pf), finetuned.asr(&pf)};
    return row;
}

std::vector<StrategyRow> validate(const EvaluatorList& validation, const Policy& pf, const Policy& pi,
                                  const LabeledDataset& finetune_set, const SweepConfig& cfg)
{
    std::vector<StrategyRow> rows;
    for (const auto& a : validation) {
        const auto ft = a->fine_tuned(finetune_set, cfg);
        rows.push_back(strategy_row(*a, *ft, pf, pi));
    }
    return rows;
}

SweepResult run_sweep(const Registry& registry, const EvaluatorList& search, const EvaluatorList& validation,
                      const LabeledDataset& clean_pool, const SweepConfig& cfg)
{
    cfg.validate(registry.size());
    SweepResult r;
    r.config = cfg;
    r.shortlist = shortlist(registry, search, cfg);
    r.pf = build_pf(registry, r.shortlist, cfg.n);
    if (r.pf.policy.empty())
        throw ConfigError("no augmentation function passed the ACC threshold; P_f is empty");
    const LabeledDataset finetune_set = make_finetune_set(registry, clean_pool, r.pf.policy, cfg);
    const EvaluatorList tuned = finetune_per_attack(search, finetune_set, cfg);
    r.pi = select_pi(r.pf.policy, tuned, cfg);
    for (std::size_t j = 0; j < search.size(); ++j)
        r.search_rows.push_back(strategy_row(*search[j], *tuned[j], r.pf.policy, r.pi.policy));
    r.validation_rows = validate(validation, r.pf.policy, r.pi.policy, finetune_set, cfg);
    return r;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

constexpr const char* kSweepSchema = "sweepkit.sweep/v1";

json entry_json(const ShortlistEntry& e)
{
    return {{"id", e.id}, {"acc", e.acc}, {"asr", e.asr}, {"avg_asr", e.avg_asr}};
}

ShortlistEntry entry_from(const json& j)
{
    return {j.at("id").get<std::string>(), j.at("acc").get<std::vector<double>>(),
            j.at("asr").get<std::vector<double>>(), j.at("avg_asr").get<double>()};
}

json pair_json(const AccAsr& p)
{
    return {{"acc", p.acc}, {"asr", p.asr}};
}

AccAsr pair_from(const json& j)
{
    return {j.at("acc").get<double>(), j.at("asr").get<double>()};
}

json config_json(const SweepConfig& c)
{
    return {{"eps_acc", c.eps_acc},
            {"eps_asr", c.eps_asr},
            {"n", c.n},
            {"eval_samples", c.eval_samples},
            {"finetune_samples", c.finetune_samples},
            {"finetune_epochs", c.finetune_epochs},
            {"learning_rate", c.optimizer.learning_rate},
            {"rho", c.optimizer.rho},
            {"epsilon", c.optimizer.epsilon},
            {"batch_size", c.batch_size},
            {"seed", c.seed}};
}

SweepConfig config_from(const json& j)
{
    SweepConfig c;
    c.eps_acc = j.at("eps_acc").get<double>();
    c.eps_asr = j.at("eps_asr").get<double>();
    c.n = j.at("n").get<int>();
    c.eval_samples = j.at("eval_samples").get<std::size_t>();
    c.finetune_samples = j.at("finetune_samples").get<std::size_t>();
    c.finetune_epochs = j.at("finetune_epochs").get<int>();
    c.optimizer.learning_rate = j.at("learning_rate").get<double>();
    c.optimizer.rho = j.at("rho").get<double>();
    c.optimizer.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

std::vector<StrategyRow> rows_from(const json& j)
{
    std::vector<StrategyRow> rows;
    for (const auto& r : j)
        rows.push_back(detail::strategy_row_from(r));
    return rows;
}

} // namespace

nlohmann::json detail::strategy_row_json(const StrategyRow& r)
{
    return {{"attack", r.attack},
            {"baseline", pair_json(r.baseline)},
            {"pf_pi", pair_json(r.pf_pi)},
            {"pf_inference", pair_json(r.pf_inference)},
            {"pf_finetune", pair_json(r.pf_finetune)},
            {"pf_pf", pair_json(r.pf_pf)}};
}

StrategyRow detail::strategy_row_from(const nlohmann::json& j)
{
    return {j.at("attack").get<std::string>(), pair_from(j.at("baseline")),    pair_from(j.at("pf_pi")),
            pair_from(j.at("pf_inference")),   pair_from(j.at("pf_finetune")), pair_from(j.at("pf_pf"))};
}

nlohmann::json detail::sweep_json(const SweepResult& r)
{
    json entries = json::array();
    for (const auto& e : r.shortlist.entries)
        entries.push_back(entry_json(e));
    json candidates = json::array();
    for (const auto& c : r.pi.candidates)
        candidates.push_back({{"mask", c.mask},
                              {"ids", c.policy.ids()},
                              {"asr", c.asr},
                              {"mean_asr", c.mean_asr},
                              {"qualified", c.qualified}});
    json search = json::array();
    for (const auto& row : r.search_rows)
        search.push_back(detail::strategy_row_json(row));
    json validation = json::array();
    for (const auto& row : r.validation_rows)
        validation.push_back(detail::strategy_row_json(row));

    const json doc = {{"schema", kSweepSchema},
                      {"config", config_json(r.config)},
                      {"shortlist",
                       {{"attacks", r.shortlist.attacks},
                        {"baseline", entry_json(r.shortlist.baseline)},
                        {"entries", entries}}},
                      {"pf", detail::policy_json(r.pf.policy)},
                      {"pf_deficient", r.pf.deficient},
                      {"avg_base", r.pi.avg_base},
                      {"subsets", candidates},
                      {"pi", detail::policy_json(r.pi.policy)},
                      {"pi_fallback", r.pi.fallback},
                      {"search", search},
                      {"validation", validation}};
    return doc;
}

SweepResult detail::sweep_from_value(const nlohmann::json& doc)
{
    try {
        if (doc.value("schema", std::string{}) != kSweepSchema)
            throw FormatError(std::string("sweep result schema must be '") + kSweepSchema + "'");
        SweepResult r;
        r.config = config_from(doc.at("config"));
        const auto& sl = doc.at("shortlist");
        r.shortlist.attacks = sl.at("attacks").get<std::vector<std::string>>();
        r.shortlist.baseline = entry_from(sl.at("baseline"));
        for (const auto& e : sl.at("entries"))
            r.shortlist.entries.push_back(entry_from(e));
        r.pf.policy = detail::policy_from_value(doc.at("pf"));
        r.pf.deficient = doc.at("pf_deficient").get<bool>();
        r.pi.avg_base = doc.at("avg_base").get<double>();
        for (const auto& c : doc.at("subsets")) {
            SubsetScore s;
            s.mask = c.at("mask").get<std::uint32_t>();
            for (const auto& id : c.at("ids"))
                s.policy.steps.push_back({id.get<std::string>(), {}});
            s.asr = c.at("asr").get<std::vector<double>>();
            s.mean_asr = c.at("mean_asr").get<double>();
            s.qualified = c.at("qualified").get<bool>();
            r.pi.candidates.push_back(std::move(s));
        }
        r.pi.policy = detail::policy_from_value(doc.at("pi"));
        r.pi.fallback = doc.at("pi_fallback").get<bool>();
        r.search_rows = rows_from(doc.at("search"));
        r.validation_rows = rows_from(doc.at("validation"));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed sweep result: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed sweep result: ") + e.what());
    }
}

std::string sweep_to_json(const SweepResult& r)
{
    return detail::sweep_json(r).dump(2);
}

SweepResult sweep_from_json(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed sweep result: ") + e.what());
    }
    return detail::sweep_from_value(doc);
}

// ---------------------------------------------------------------------------
// Text tables
// ---------------------------------------------------------------------------

std::string render_shortlist_table(const Shortlist& s, const Policy& pf)
{
    using detail::fixed3;
    detail::TextTable t;
    std::vector<std::string> head{"Function", "Average ASR"};
    std::vector<std::string> sub{"", ""};
    for (const auto& a : s.attacks) {
        head.push_back(a);
        head.emplace_back("");
        sub.emplace_back("ASR");
        sub.emplace_back("ACC");
    }
    t.row(head);
    t.row(sub);
    t.rule();
    const auto ids = pf.ids();
    const auto add = [&](const ShortlistEntry& e, bool mark) {
        std::vector<std::string> r{e.id + (mark ? " *" : ""), fixed3(e.avg_asr)};
        for (std::size_t j = 0; j < e.acc.size(); ++j) {
            r.push_back(fixed3(e.asr[j]));
            r.push_back(fixed3(e.acc[j]));
        }
        t.row(r);
    };
    add(s.baseline, false);
    for (const auto& e : s.entries)
        add(e, std::find(ids.begin(), ids.end(), e.id) != ids.end());
    return t.str() + "(* = member of P_f)\n";
}

namespace {

std::string render_rows(const std::vector<StrategyRow>& rows,
                        const std::vector<std::pair<std::string, AccAsr StrategyRow::*>>& cols)
{
    using detail::fixed3;
    detail::TextTable t;
    std::vector<std::string> head{"Attack"};
    std::vector<std::string> sub{""};
    for (const auto& [title, member] : cols) {
        head.push_back(title);
        head.emplace_back("");
        sub.emplace_back("ACC");
        sub.emplace_back("ASR");
    }
    t.row(head);
    t.row(sub);
    t.rule();
    for (const auto& r : rows) {
        std::vector<std::string> line{r.attack};
        for (const auto& [title, member] : cols) {
            line.push_back(fixed3((r.*member).acc));
            line.push_back(fixed3((r.*member).asr));
        }
        t.row(line);
    }
    return t.str();
}

} // namespace

std::string render_search_table(const std::vector<StrategyRow>& rows)
{
    return render_rows(rows, {{"Baseline", &StrategyRow::baseline},
                              {"P_f tune + P_i infer", &StrategyRow::pf_pi},
                              {"P_f infer", &StrategyRow::pf_inference},
                              {"P_f tune", &StrategyRow::pf_finetune},
                              {"P_f tune + P_f infer", &StrategyRow::pf_pf}});
}

std::string render_validation_table(const std::vector<StrategyRow>& rows)
{
    return render_rows(rows, {{"Baseline", &StrategyRow::baseline},
                              {"P_f tune + P_i infer", &StrategyRow::pf_pi},
                              {"P_f tune + P_f infer", &StrategyRow::pf_pf}});
}

} // namespace sweepkit
