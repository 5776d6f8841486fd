#include "lkp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "lkp/dataset.hpp"
#include "lkp/diversity.hpp"
#include "lkp/embedding.hpp"
#include "lkp/error.hpp"
#include "lkp/eval.hpp"
#include "lkp/log.hpp"
#include "lkp/rng.hpp"
#include "lkp/sampling.hpp"
#include "lkp/train.hpp"
#include "lkp/verify.hpp"

namespace lkp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
    return json{
        {"data", ""},
        {"out", "runs"},
        {"ratings", ""},
        {"categories", ""},
        {"model", ""},
        {"kernel", ""},
        {"variant", ""},
        {"objective", "lkp_nps"},
        {"sampler", "S"},
        {"kernel_mode", "pretrained"},
        {"k", 5},
        {"n", 5},
        {"dim", 64},
        {"lr", 1e-3},
        {"lr_grid", {1e-2, 3e-3, 1e-3}},
        {"l2", 1e-4},
        {"epochs", 50},
        {"seed", 0},
        {"threads", 1},
        {"batch_size", 64},
        {"eval_interval", 5},
        {"patience", 20},
        {"select_best", true},
        {"threshold", 5.0},
        {"min_degree", 10},
        {"split_ratios", {0.7, 0.1, 0.2}},
        {"synth_users", 1000},
        {"synth_items", 2000},
        {"synth_categories", 20},
        {"kernel_rank", 64},
        {"kernel_epochs", 10},
        {"kernel_lr", 1e-2},
        {"kernel_set_size", 5},
        {"kernel_unit_rows", true},
        {"cutoffs", {5, 10, 20}},
        {"split", "test"},
        {"trend_epochs", {0, 50, 100, 150, 200}},
        {"trend_instances", 100},
        {"param", "k"},
        {"values", json::array()},
        {"log_level", "warning"},
    };
}

namespace {

bool same_kind(const json& def, const json& v) {
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_number_integer()) return v.is_number_integer() || v.is_number_unsigned();
    if (def.is_number()) return v.is_number();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    return false;
}

const char* kind_name(const json& def) {
    if (def.is_boolean()) return "a boolean";
    if (def.is_number_integer()) return "an integer";
    if (def.is_number()) return "a number";
    if (def.is_string()) return "a string";
    return "a list of numbers";
}

} // namespace

void merge_config(json& config, const json& overrides) {
    if (!overrides.is_object()) throw ContractViolation("config file must hold a JSON object");
    const json defaults = default_config();
    for (const auto& [key, value] : overrides.items()) {
        if (!defaults.contains(key)) throw ContractViolation("unknown config key '" + key + "'");
        if (!same_kind(defaults[key], value)) {
            throw ContractViolation("config key '" + key + "' expects " + kind_name(defaults[key]));
        }
        if (defaults[key].is_number_integer() && value.is_number_integer() && value.get<long long>() < 0) {
            throw ContractViolation("config key '" + key + "' must be non-negative");
        }
        config[key] = value;
    }
}

json parse_flag_value(const std::string& key, const std::string& text) {
    const json defaults = default_config();
    if (!defaults.contains(key)) throw ContractViolation("unknown option '" + key + "'");
    const json& def = defaults[key];
    auto number = [&](const std::string& s) -> json {
        std::size_t used = 0;
        try {
            if (def.is_number_integer()) {
                if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
                const unsigned long long v = std::stoull(s, &used);
                if (used == s.size()) return json(v);
            } else {
                const double v = std::stod(s, &used);
                if (used == s.size()) return json(v);
            }
        } catch (const std::exception&) {
        }
        throw ContractViolation("--" + key + ": '" + s + "' is not " + kind_name(def));
    };
    if (def.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw ContractViolation("--" + key + " expects true or false");
    }
    if (def.is_string()) return text;
    if (def.is_array()) {
        json arr = json::array();
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != item.size() || used == 0) throw ContractViolation("--" + key + ": bad list entry '" + item + "'");
            if (v == std::floor(v) && std::abs(v) < 1e15) {
                arr.push_back(static_cast<long long>(v));
            } else {
                arr.push_back(v);
            }
        }
        return arr;
    }
    return number(text);
}

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VerificationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Context {
    std::string command;
    json config;
    std::set<std::string> explicit_keys;
    fs::path out_dir;
    std::string stamp;

    fs::path output(const std::string& ext) const { return out_dir / (command + "-" + stamp + "." + ext); }

    std::string str(const char* key) const { return config.at(key).get<std::string>(); }
    std::size_t size(const char* key) const { return config.at(key).get<std::size_t>(); }
    double real(const char* key) const { return config.at(key).get<double>(); }
    std::vector<std::size_t> sizes(const char* key) const {
        std::vector<std::size_t> out;
        for (const auto& v : config.at(key)) {
            const double x = v.get<double>();
            if (x < 0 || x != std::floor(x)) throw UsageError(std::string(key) + " must hold non-negative integers");
            out.push_back(static_cast<std::size_t>(x));
        }
        return out;
    }
};

std::string utc_stamp() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%dT%H%M%S") << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

InteractionDataset require_data(const Context& ctx) {
    const std::string path = ctx.str("data");
    if (path.empty()) throw UsageError(ctx.command + " needs --data <dataset.json>");
    auto data = load_dataset(path);
    if (!data.has_splits()) throw DataError(path + ": dataset has no train/validation/test split");
    return data;
}

TrainConfig train_config(const Context& ctx) {
    TrainConfig c;
    const std::string variant = ctx.str("variant");
    if (!variant.empty()) {
        c = variant_config(variant);
    } else {
        c.objective = parse_objective(ctx.str("objective"));
        c.sampler = parse_sampler(ctx.str("sampler"));
        c.kernel_mode = parse_kernel_mode(ctx.str("kernel_mode"));
    }
    c.k = ctx.size("k");
    c.n = ctx.size("n");
    c.dim = ctx.size("dim");
    c.learning_rate = ctx.real("lr");
    c.l2 = ctx.real("l2");
    c.epochs = ctx.size("epochs");
    c.seed = ctx.config.at("seed").get<std::uint64_t>();
    c.threads = std::max<std::size_t>(1, ctx.size("threads"));
    c.batch_size = ctx.size("batch_size");
    c.eval_interval = ctx.size("eval_interval");
    c.patience = ctx.size("patience");
    c.select_best = ctx.config.at("select_best").get<bool>();
    return c;
}

// An explicit --lr means one run; otherwise every lr_grid entry is tried.
std::vector<double> learning_rates(const Context& ctx) {
    auto grid = ctx.config.at("lr_grid").get<std::vector<double>>();
    if (ctx.explicit_keys.count("lr") || grid.empty()) return {ctx.real("lr")};
    for (double lr : grid) {
        if (!(lr > 0.0)) throw UsageError("lr_grid entries must be positive");
    }
    return grid;
}

bool needs_pretrained_kernel(const TrainConfig& c) {
    return (c.objective == Objective::lkp_ps || c.objective == Objective::lkp_nps) &&
           c.kernel_mode == KernelMode::pretrained;
}

KernelTrainOptions kernel_options(const Context& ctx) {
    KernelTrainOptions o;
    o.rank = ctx.size("kernel_rank");
    o.epochs = ctx.size("kernel_epochs");
    o.learning_rate = ctx.real("kernel_lr");
    o.unit_rows = ctx.config.at("kernel_unit_rows").get<bool>();
    o.seed = ctx.config.at("seed").get<std::uint64_t>();
    return o;
}

DiversityKernel fit_kernel(const Context& ctx, const InteractionDataset& data,
                           const std::function<void(std::size_t, double)>& on_epoch = {}) {
    const std::size_t set_size = ctx.size("kernel_set_size");
    const auto opts = kernel_options(ctx);
    const auto pairs = build_diverse_training_pairs(data, set_size, default_min_categories(set_size), opts.seed);
    return train_diversity_kernel(pairs, data.num_items, opts, on_epoch);
}

// A kernel from --kernel, or one fitted on the spot when none is given.
DiversityKernel obtain_kernel(const Context& ctx, const InteractionDataset& data, const TrainConfig& c) {
    if (!needs_pretrained_kernel(c)) return DiversityKernel::gaussian(1.0);
    const std::string path = ctx.str("kernel");
    if (!path.empty()) return load_kernel(path);
    log_warning("no --kernel given; fitting a diversity kernel on the training histories first");
    return fit_kernel(ctx, data);
}

int cmd_ingest(const Context& ctx, std::ostream& out) {
    if (ctx.str("ratings").empty()) throw UsageError("ingest needs --ratings <ratings.csv>");
    IngestOptions opts;
    opts.threshold = ctx.real("threshold");
    opts.min_degree = ctx.size("min_degree");
    auto raw = ingest(ctx.str("ratings"), ctx.str("categories"), opts);
    const auto ratios = ctx.config.at("split_ratios").get<std::vector<double>>();
    if (ratios.size() != 3) throw UsageError("split_ratios needs three values");
    auto data = split(std::move(raw), {ratios[0], ratios[1], ratios[2]}, ctx.config.at("seed").get<std::uint64_t>());
    const auto path = ctx.output("json");
    save_dataset(data, path);
    out << "users " << data.num_users << ", items " << data.num_items << ", categories " << data.num_categories
        << ", interactions " << data.num_interactions() << "\n" << path.string() << "\n";
    return kOk;
}

int cmd_synth(const Context& ctx, std::ostream& out) {
    auto data = make_synthetic(ctx.size("synth_users"), ctx.size("synth_items"), ctx.size("synth_categories"),
                               ctx.config.at("seed").get<std::uint64_t>());
    const auto path = ctx.output("json");
    save_dataset(data, path);
    out << "users " << data.num_users << ", items " << data.num_items << ", categories " << data.num_categories
        << ", interactions " << data.num_interactions() << "\n" << path.string() << "\n";
    return kOk;
}

int cmd_train_kernel(const Context& ctx, std::ostream& out) {
    const auto data = require_data(ctx);
    std::ostringstream csv;
    csv << "epoch,objective\n" << std::setprecision(17);
    const auto kernel = fit_kernel(ctx, data, [&](std::size_t epoch, double obj) { csv << epoch << ',' << obj << '\n'; });
    const auto bin = ctx.output("bin");
    save_kernel(kernel, bin);
    std::ofstream(ctx.output("csv")) << csv.str();
    out << bin.string() << "\n" << ctx.output("csv").string() << "\n";
    return kOk;
}

int cmd_train(const Context& ctx, std::ostream& out) {
    const auto data = require_data(ctx);
    const TrainConfig cfg = train_config(ctx);
    cfg.validate();
    const auto kernel = obtain_kernel(ctx, data, cfg);
    const auto rates = learning_rates(ctx);
    std::vector<std::pair<double, double>> per_rate;
    const auto result = train_lr_search(cfg, data, kernel, rates, &per_rate);
    if (per_rate.size() > 1) {
        for (const auto& [lr, score] : per_rate) out << "lr " << lr << ": validation NDCG@5 " << score << "\n";
    }
    save_model(result.model, ctx.output("bin"));
    write_train_log(result.log, ctx.output("json"));
    out << variant_name(cfg) << ": lr " << result.learning_rate << ", best epoch " << result.best_epoch
        << ", validation NDCG@5 "
        << result.best_val_ndcg5 << (result.stopped_early ? " (stopped early)" : "") << "\n"
        << ctx.output("bin").string() << "\n" << ctx.output("json").string() << "\n";
    return kOk;
}

EvalSplit parse_split(const std::string& s) {
    if (s == "test") return EvalSplit::test;
    if (s == "validation") return EvalSplit::validation;
    throw UsageError("split must be test or validation");
}

int cmd_evaluate(const Context& ctx, std::ostream& out) {
    const auto data = require_data(ctx);
    if (ctx.str("model").empty()) throw UsageError("evaluate needs --model <checkpoint.bin>");
    const auto model = load_model(ctx.str("model"));
    if (model.num_users() != data.num_users || model.num_items() != data.num_items) {
        throw DataError("checkpoint shape does not match the dataset");
    }
    const auto cutoffs = ctx.sizes("cutoffs");
    const auto report =
        evaluate(model, data, parse_split(ctx.str("split")), cutoffs, std::max<std::size_t>(1, ctx.size("threads")));
    write_json(ctx.output("json"), report.to_json());
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        const auto& m = report.metrics[c];
        out << "@" << cutoffs[c] << "  recall " << m.recall << "  ndcg " << m.ndcg << "  cc " << m.cc << "  f "
            << m.f << "\n";
    }
    out << ctx.output("json").string() << "\n";
    return kOk;
}

int cmd_trend(const Context& ctx, std::ostream& out) {
    const auto data = require_data(ctx);
    TrainConfig cfg = train_config(ctx);
    if (!ctx.explicit_keys.count("objective") && ctx.str("variant").empty()) cfg.objective = Objective::lkp_ps;
    if (cfg.objective != Objective::lkp_ps && cfg.objective != Objective::lkp_nps) {
        throw UsageError("trend needs an lkp_ps or lkp_nps objective");
    }
    auto epochs = ctx.sizes("trend_epochs");
    if (epochs.empty()) throw UsageError("trend_epochs is empty");
    std::sort(epochs.begin(), epochs.end());
    cfg.epochs = epochs.back();
    cfg.patience = 0;
    cfg.validate();
    const auto kernel = obtain_kernel(ctx, data, cfg);
    const auto pool = make_schedule(cfg.sampler, data, cfg.k, cfg.n, derive_seed(cfg.seed, stream::kTrend)).instances;
    const auto instances = sample_instances(pool, std::min(ctx.size("trend_instances"), pool.size()),
                                            derive_seed(cfg.seed, stream::kTrend, 1));
    std::vector<TrendReport> reports;
    TrainHooks hooks;
    hooks.on_epoch = [&](std::size_t epoch, const EmbeddingTable& model, const DiversityKernel& active) {
        if (std::binary_search(epochs.begin(), epochs.end(), epoch)) {
            reports.push_back(probability_trend(model, active, instances, cfg.k, epoch));
        }
    };
    train(cfg, data, kernel, hooks);
    std::ofstream csv(ctx.output("csv"));
    write_trend_csv(reports, csv);
    csv.close();
    for (const auto& r : reports) out << r.to_json().dump() << "\n";
    out << ctx.output("csv").string() << "\n";
    return kOk;
}

int cmd_sweep(const Context& ctx, std::ostream& out) {
    const auto data = require_data(ctx);
    const std::string param = ctx.str("param");
    if (param != "k" && param != "n") throw UsageError("--param must be k or n");
    std::vector<std::size_t> values = ctx.sizes("values");
    if (values.empty()) values = param == "k" ? std::vector<std::size_t>{2, 3, 4, 5, 6, 7}
                                              : std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8};
    TrainConfig base = train_config(ctx);
    if (param == "n" && !ctx.explicit_keys.count("objective") && ctx.str("variant").empty()) {
        base.objective = Objective::lkp_ps;
    }
    if (param == "n" && !ctx.explicit_keys.count("k")) base.k = 5;
    // Validate the whole grid before any training starts.
    for (std::size_t v : values) {
        TrainConfig c = base;
        if (param == "k") c.k = c.n = v;
        else c.n = v;
        c.validate();
    }
    const auto kernel = obtain_kernel(ctx, data, base);
    const auto rates = learning_rates(ctx);
    const auto cutoffs = ctx.sizes("cutoffs");
    std::ofstream csv(ctx.output("csv"));
    csv << "param,value,cutoff,metric,score\n" << std::setprecision(10);
    for (std::size_t v : values) {
        TrainConfig c = base;
        if (param == "k") c.k = c.n = v;
        else c.n = v;
        const auto result = train_lr_search(c, data, kernel, rates);
        const auto report = evaluate(result.model, data, EvalSplit::test, cutoffs, c.threads);
        for (std::size_t i = 0; i < cutoffs.size(); ++i) {
            const auto& m = report.metrics[i];
            const std::pair<const char*, double> rows[] = {
                {"recall", m.recall}, {"ndcg", m.ndcg}, {"cc", m.cc}, {"f", m.f}};
            for (const auto& [name, score] : rows) {
                csv << param << ',' << v << ',' << cutoffs[i] << ',' << name << ',' << score << '\n';
            }
        }
        csv.flush();
        out << param << "=" << v << "  lr " << result.learning_rate << "  ndcg@" << cutoffs.front() << " " << report.metrics.front().ndcg << "\n";
    }
    out << ctx.output("csv").string() << "\n";
    return kOk;
}

int cmd_verify(const Context& ctx, std::ostream& out) {
    const auto report = run_verify(ctx.config.at("seed").get<std::uint64_t>());
    write_json(ctx.output("json"), report.to_json());
    for (const auto& c : report.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << c.name << " cases " << std::setw(4)
            << c.cases << " max_err " << std::setw(12) << c.max_error << " tol " << c.tolerance << "  "
            << std::fixed << std::setprecision(2) << c.seconds << "s\n"
            << std::defaultfloat << std::setprecision(6);
    }
    out << ctx.output("json").string() << "\n";
    if (!report.passed()) throw VerificationFailed("verification failed");
    return kOk;
}

LogLevel parse_log_level(const std::string& s) {
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "warning") return LogLevel::warning;
    if (s == "error") return LogLevel::error;
    if (s == "silent") return LogLevel::silent;
    throw UsageError("log_level must be debug, info, warning, error or silent");
}

const std::map<std::string, std::pair<int (*)(const Context&, std::ostream&), const char*>>& commands() {
    static const std::map<std::string, std::pair<int (*)(const Context&, std::ostream&), const char*>> table = {
        {"ingest", {cmd_ingest, "Binarize, filter and split a ratings CSV into a dataset container"}},
        {"synth", {cmd_synth, "Generate the block-structured synthetic dataset"}},
        {"train-kernel", {cmd_train_kernel, "Fit the low-rank diversity kernel"}},
        {"train", {cmd_train, "Train embeddings with the chosen objective"}},
        {"evaluate", {cmd_evaluate, "Score a checkpoint on the validation or test split"}},
        {"trend", {cmd_trend, "Track subset probabilities by target count during training"}},
        {"sweep", {cmd_sweep, "Train and evaluate over a grid of k or n"}},
        {"verify", {cmd_verify, "Run the numerical self-check suite"}},
    };
    return table;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Set-level k-DPP ranking for top-N recommendation", "lkp"};
    app.require_subcommand(1);
    app.fallthrough();
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands()) subs[name] = app.add_subcommand(name, entry.second);

    std::string config_path;
    app.add_option("--config", config_path, "JSON file of config keys (flags take precedence)");
    const json defaults = default_config();
    std::map<std::string, std::string> flag_text;
    for (const auto& [key, def] : defaults.items()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        std::string help = "default " + def.dump();
        app.add_option("--" + flag, flag_text[key], help);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    Context ctx;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) ctx.command = name;
    try {
        ctx.config = defaults;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw UsageError("cannot read config file " + config_path);
            json file;
            try {
                file = json::parse(in);
            } catch (const json::parse_error& e) {
                throw UsageError(config_path + ": " + e.what());
            }
            merge_config(ctx.config, file);
            for (const auto& [key, value] : file.items()) ctx.explicit_keys.insert(key);
        }
        for (const auto& [key, text] : flag_text) {
            std::string flag = key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            if (app.count("--" + flag) == 0) continue;
            ctx.config[key] = parse_flag_value(key, text);
            ctx.explicit_keys.insert(key);
        }
        set_log_level(parse_log_level(ctx.str("log_level")));
        ctx.out_dir = ctx.str("out");
        fs::create_directories(ctx.out_dir);
        ctx.stamp = utc_stamp();
        write_json(ctx.out_dir / "config-echo.json", json{{"command", ctx.command}, {"config", ctx.config}});
        return commands().at(ctx.command).first(ctx, std::cout);
    } catch (const UsageError& e) {
        std::cerr << "lkp " << ctx.command << ": " << e.what() << "\n";
        return kUsage;
    } catch (const ContractViolation& e) {
        std::cerr << "lkp " << ctx.command << ": " << e.what() << "\n";
        return kUsage;
    } catch (const VerificationFailed& e) {
        std::cerr << "lkp verify: " << e.what() << "\n";
        return kVerifyFailed;
    } catch (const DataError& e) {
        std::cerr << "lkp " << ctx.command << ": data error: " << e.what() << "\n";
        return kDataError;
    } catch (const LookupError& e) {
        std::cerr << "lkp " << ctx.command << ": data error: " << e.what() << "\n";
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "lkp " << ctx.command << ": " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "lkp " << ctx.command << ": " << e.what() << "\n";
        return kRuntimeFailure;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

} // namespace lkp::cli
