#include "ncd/experiment.hpp"

#include "ncd/evaluate.hpp"
#include "ncd/hash.hpp"
#include "ncd/pipeline.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace ncd {

// ---- config parsing ------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config key '" + key + "': cannot use '" + value + "' (expected " + expected + ")");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
    return x;
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
    return x;
}

double to_probability(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (!(x >= 0.0 && x <= 1.0)) bad_value(key, v, "a probability in [0, 1]");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "true or false");
}

template <class T>
std::vector<T> to_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        T x{};
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (ec != std::errc() || p != item.data() + item.size()) bad_value(key, v, "a comma-separated integer list");
        out.push_back(x);
    }
    return out;
}

struct KeyHelp {
    const char* key;
    const char* help;
};

constexpr KeyHelp kKeys[] = {
    {"seed", "master seed for data, split, initialization and noise (default 0)"},
    {"out", "output directory (default runs/default)"},
    {"reference", "'cora-gcn' prints the published Cora SWORD/GCN row next to the result"},
    {"data.source", "sbm | files (default sbm)"},
    {"data.edges", "edge list path (files source)"},
    {"data.features", "feature matrix path (files source)"},
    {"data.labels", "label path (files source)"},
    {"data.row_normalize", "L2-normalize feature rows (default false)"},
    {"sbm.blocks", "nodes per class, comma-separated (default 100,100,100,100,100)"},
    {"sbm.p_in", "within-class edge probability (default 0.15)"},
    {"sbm.p_out", "between-class edge probability (default 0.01)"},
    {"sbm.feat_dim", "feature dimension (default 16)"},
    {"sbm.feat_shift", "class mean offset (default 1.0)"},
    {"split.file", "split JSON to load instead of generating one"},
    {"split.old", "old class ids, comma-separated (default: chosen by seed)"},
    {"split.new", "new class ids, comma-separated"},
    {"split.num_new", "number of new classes when split.old/new are unset (default 2)"},
    {"split.train", "per-class train fraction (default 0.6)"},
    {"split.val", "per-class validation fraction (default 0.2)"},
    {"split.test", "per-class test fraction (default 0.2)"},
    {"model.backbone", "gcn | sage (default gcn)"},
    {"model.hidden", "hidden and representation size (default 32)"},
    {"model.layers", "encoder depth (default 2)"},
    {"train.lr", "Adam learning rate (default 0.01)"},
    {"train.weight_decay", "L2 coefficient added to gradients (default 5e-4)"},
    {"train.pretrain_epochs", "pre-training epochs (default 200)"},
    {"train.ncd_epochs", "discovery epochs (default 600)"},
    {"train.patience", "early-stopping patience in epochs (default 50)"},
    {"train.replay_per_class", "replayed prototype samples per old class per epoch (default 32)"},
    {"train.head_init_scale", "std of new joint-head columns (default 0.01)"},
    {"train.smoothing", "smoothing of the monitored total loss (default 0.9)"},
    {"train.min_improvement", "smallest decrease that resets patience (default 1e-4)"},
    {"train.debug_checks", "assert replay gradients never reach the encoder (default false)"},
    {"loss.alpha1", "self-training weight after ramp-up (default 0.1)"},
    {"loss.alpha2", "perturbation weight after ramp-up (default 4.0)"},
    {"loss.rampup_length", "ramp-up epochs (default 80)"},
    {"loss.eta", "perturbation scale (default 0.5)"},
    {"loss.lambda", "weight of replay + distillation (default 1.0)"},
    {"loss.omega_fd", "distillation weight inside the base term (default 10)"},
    {"loss.top_k", "rank-statistics depth (default 5)"},
    {"loss.perturb_head", "novel | joint head for the perturbation loss (default novel)"},
    {"loss.sigma_mode", "empirical | unit noise scale per dimension (default empirical)"},
    {"ablation.pseudo", "pairwise pseudo-label loss on (default true)"},
    {"ablation.self", "joint-head self-training on (default true)"},
    {"ablation.perturb", "perturbation consistency on (default true)"},
    {"ablation.replay", "prototype replay on (default true)"},
    {"ablation.distill", "feature distillation on (default true)"},
    {"sweep.layers", "depths for sweep-depth (default 2,4,8,16,32,64)"},
};

void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
        return;
    }
    std::string value;
    if (j.is_string()) {
        value = j.get<std::string>();
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) value += (i ? "," : "") + j[i].dump();
    } else {
        value = j.dump();
    }
    out.emplace_back(prefix, value);
}

} // namespace

void set_config_key(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    TrainConfig& t = c.train;
    LossWeights& w = t.loss;
    if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "out") c.out = v;
    else if (key == "reference") {
        if (!v.empty() && !reference_row(v)) bad_value(key, v, "cora-gcn or empty");
        c.reference = v;
    }
    else if (key == "data.source") {
        if (v == "sbm") c.source = DataSource::sbm;
        else if (v == "files") c.source = DataSource::files;
        else bad_value(key, v, "sbm or files");
    }
    else if (key == "data.edges") c.edges_path = v;
    else if (key == "data.features") c.features_path = v;
    else if (key == "data.labels") c.labels_path = v;
    else if (key == "data.row_normalize") c.row_normalize = to_bool(key, v);
    else if (key == "sbm.blocks") c.sbm.blocks = to_list<std::size_t>(key, v);
    else if (key == "sbm.p_in") c.sbm.p_in = to_probability(key, v);
    else if (key == "sbm.p_out") c.sbm.p_out = to_probability(key, v);
    else if (key == "sbm.feat_dim") c.sbm.feat_dim = to_u64(key, v);
    else if (key == "sbm.feat_shift") c.sbm.feat_shift = to_double(key, v);
    else if (key == "split.file") c.split_path = v;
    else if (key == "split.old") c.old_classes = to_list<int>(key, v);
    else if (key == "split.new") c.new_classes = to_list<int>(key, v);
    else if (key == "split.num_new") c.num_new = to_u64(key, v);
    else if (key == "split.train") c.ratios.train = to_double(key, v);
    else if (key == "split.val") c.ratios.val = to_double(key, v);
    else if (key == "split.test") c.ratios.test = to_double(key, v);
    else if (key == "model.backbone") {
        try {
            t.backbone = parse_backbone(v);
        } catch (const std::invalid_argument&) {
            bad_value(key, v, "gcn or sage");
        }
    }
    else if (key == "model.hidden") t.hidden = to_u64(key, v);
    else if (key == "model.layers") t.layers = to_u64(key, v);
    else if (key == "train.lr") t.lr = to_double(key, v);
    else if (key == "train.weight_decay") t.weight_decay = to_double(key, v);
    else if (key == "train.pretrain_epochs") t.pretrain_epochs = to_u64(key, v);
    else if (key == "train.ncd_epochs") t.ncd_epochs = to_u64(key, v);
    else if (key == "train.patience") t.patience = to_u64(key, v);
    else if (key == "train.replay_per_class") t.replay_per_class = to_u64(key, v);
    else if (key == "train.head_init_scale") t.head_init_scale = to_double(key, v);
    else if (key == "train.smoothing") t.smoothing = to_double(key, v);
    else if (key == "train.min_improvement") t.min_improvement = to_double(key, v);
    else if (key == "train.debug_checks") t.debug_checks = to_bool(key, v);
    else if (key == "loss.alpha1") w.alpha1 = to_double(key, v);
    else if (key == "loss.alpha2") w.alpha2 = to_double(key, v);
    else if (key == "loss.rampup_length") w.rampup_length = to_u64(key, v);
    else if (key == "loss.eta") w.eta = to_double(key, v);
    else if (key == "loss.lambda") w.lambda = to_double(key, v);
    else if (key == "loss.omega_fd") w.omega_fd = to_double(key, v);
    else if (key == "loss.top_k") w.top_k = to_u64(key, v);
    else if (key == "loss.perturb_head") {
        try {
            t.perturb_head = parse_perturb_head(v);
        } catch (const std::invalid_argument&) {
            bad_value(key, v, "novel or joint");
        }
    }
    else if (key == "loss.sigma_mode") {
        try {
            t.sigma_mode = parse_sigma_mode(v);
        } catch (const std::invalid_argument&) {
            bad_value(key, v, "empirical or unit");
        }
    }
    else if (key == "ablation.pseudo") t.ablation.pseudo = to_bool(key, v);
    else if (key == "ablation.self") t.ablation.self = to_bool(key, v);
    else if (key == "ablation.perturb") t.ablation.perturb = to_bool(key, v);
    else if (key == "ablation.replay") t.ablation.replay = to_bool(key, v);
    else if (key == "ablation.distill") t.ablation.distill = to_bool(key, v);
    else if (key == "sweep.layers") c.sweep_layers = to_list<std::size_t>(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    const std::string body = trim(text);
    if (!body.empty() && body.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(origin + ": " + e.what());
        }
        std::vector<std::pair<std::string, std::string>> entries;
        flatten(j, "", entries);
        for (const auto& [k, v] : entries) {
            try {
                set_config_key(cfg, k, v);
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ": " + e.what());
            }
        }
        return cfg;
    }
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        try {
            set_config_key(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string config_keys_help() {
    std::string out = "Config keys (key=value lines, '#' comments; JSON objects with nested sections also accepted):\n";
    for (const auto& k : kKeys) {
        std::string name = k.key;
        name.resize(std::max<std::size_t>(name.size() + 2, 26), ' ');
        out += "  " + name + k.help + "\n";
    }
    return out;
}

nlohmann::ordered_json RunConfig::to_json() const {
    const TrainConfig& t = train;
    const LossWeights& w = t.loss;
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["reference"] = reference;
    j["data"] = {{"source", source == DataSource::sbm ? "sbm" : "files"},
                 {"edges", edges_path.string()},
                 {"features", features_path.string()},
                 {"labels", labels_path.string()},
                 {"row_normalize", row_normalize}};
    j["sbm"] = {{"blocks", sbm.blocks}, {"p_in", sbm.p_in}, {"p_out", sbm.p_out},
                {"feat_dim", sbm.feat_dim}, {"feat_shift", sbm.feat_shift}};
    j["split"] = {{"file", split_path.string()}, {"old", old_classes}, {"new", new_classes}, {"num_new", num_new},
                  {"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}};
    j["model"] = {{"backbone", to_string(t.backbone)}, {"hidden", t.hidden}, {"layers", t.layers}};
    j["train"] = {{"lr", t.lr},
                  {"weight_decay", t.weight_decay},
                  {"pretrain_epochs", t.pretrain_epochs},
                  {"ncd_epochs", t.ncd_epochs},
                  {"patience", t.patience},
                  {"replay_per_class", t.replay_per_class},
                  {"head_init_scale", t.head_init_scale},
                  {"smoothing", t.smoothing},
                  {"min_improvement", t.min_improvement},
                  {"debug_checks", t.debug_checks}};
    j["loss"] = {{"alpha1", w.alpha1},       {"alpha2", w.alpha2},
                 {"rampup_length", w.rampup_length}, {"eta", w.eta},
                 {"lambda", w.lambda},       {"omega_fd", w.omega_fd},
                 {"top_k", w.top_k},         {"perturb_head", to_string(t.perturb_head)},
                 {"sigma_mode", to_string(t.sigma_mode)}};
    j["ablation"] = {{"pseudo", t.ablation.pseudo},
                     {"self", t.ablation.self},
                     {"perturb", t.ablation.perturb},
                     {"replay", t.ablation.replay},
                     {"distill", t.ablation.distill}};
    j["sweep"] = {{"layers", sweep_layers}};
    return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::string RunConfig::pretrain_hash() const {
    const auto full = to_json();
    nlohmann::ordered_json j;
    for (const char* k : {"seed", "data", "sbm", "split", "model"}) j[k] = full[k];
    j["train"] = {{"lr", train.lr}, {"weight_decay", train.weight_decay}, {"pretrain_epochs", train.pretrain_epochs}};
    return sha256_hex(j.dump());
}

// ---- datasets ------------------------------------------------------------------------

std::string graph_hash(const Graph& g) {
    std::string bytes = std::to_string(g.num_nodes) + ";" + std::to_string(g.feature_dim()) + ";";
    for (const auto& [u, v] : g.edges) bytes += std::to_string(u) + " " + std::to_string(v) + "\n";
    for (double x : g.features.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(x);
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    for (int l : g.labels) bytes += std::to_string(l) + "\n";
    return sha256_hex(bytes);
}

Dataset resolve_dataset(const RunConfig& cfg) {
    Dataset ds;
    if (cfg.source == DataSource::files) {
        if (cfg.edges_path.empty() || cfg.features_path.empty() || cfg.labels_path.empty())
            throw ConfigError("data.source=files needs data.edges, data.features and data.labels");
        ds.graph = load_graph(cfg.edges_path, cfg.features_path, cfg.labels_path);
    } else {
        if (cfg.sbm.blocks.empty()) throw ConfigError("sbm.blocks must list at least one block");
        SbmParams p = cfg.sbm;
        p.seed = cfg.seed;
        ds.graph = sbm_generate(p);
    }
    if (cfg.row_normalize) l2_normalize_rows(ds.graph.features);

    if (!cfg.split_path.empty()) {
        ds.split = load_split(cfg.split_path);
        ds.split.validate(ds.graph);
    } else {
        std::vector<int> old_classes = cfg.old_classes;
        std::vector<int> new_classes = cfg.new_classes;
        if (old_classes.empty() && new_classes.empty()) {
            const int c = static_cast<int>(ds.graph.num_classes());
            if (static_cast<int>(cfg.num_new) >= c)
                throw ConfigError("split.num_new=" + std::to_string(cfg.num_new) + " leaves no old class among " +
                                  std::to_string(c));
            std::tie(old_classes, new_classes) =
                choose_class_partition(c, static_cast<int>(cfg.num_new), cfg.seed);
        }
        ds.split = split_classes(ds.graph, old_classes, new_classes, cfg.ratios, cfg.seed);
    }
    ds.hash = sha256_hex(graph_hash(ds.graph) + ds.split.to_json());
    return ds;
}

std::optional<ReferenceRow> reference_row(const std::string& name) {
    if (name == "cora-gcn") return ReferenceRow{"Cora, SWORD, GCN backbone", 60.67, 37.97, 53.50};
    return std::nullopt;
}

// ---- artifacts -----------------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = cfg.seed;
    return t;
}

std::string metrics_json(MetricsReport report, const RunConfig& cfg) {
    report.seed = cfg.seed;
    report.config_hash = cfg.hash();
    auto j = report.to_json();
    j["ablation"] = cfg.to_json()["ablation"];
    return j.dump(2) + "\n";
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg, const Dataset& ds,
                    const std::vector<std::string>& artifacts, nlohmann::ordered_json extra = {}) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["created_utc"] = utc_timestamp();
    m["config_hash"] = cfg.hash();
    m["pretrain_hash"] = cfg.pretrain_hash();
    m["dataset_hash"] = ds.hash;
    m["config"] = cfg.to_json();
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& name : artifacts) files[name] = sha256_file(dir / name);
    m["artifacts"] = files;
    if (!extra.is_null())
        for (auto& [k, v] : extra.items()) m[k] = v;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void stamp(Checkpoint& ckpt, const RunConfig& cfg, const Dataset& ds) {
    ckpt.meta["dataset_hash"] = ds.hash;
    ckpt.meta["config_hash"] = cfg.hash();
    ckpt.meta["pretrain_hash"] = cfg.pretrain_hash();
}

void print_report(const std::string& label, const MetricsReport& r) {
    std::printf("%s: old_acc=%.4f new_acc=%.4f all_acc=%.4f aa=%.4f af=%.4f\n", label.c_str(), r.old_acc, r.new_acc,
                r.all_acc, r.aa, r.af);
}

void check_compatible(const ModelState& state, const Checkpoint& ckpt, const Dataset& ds,
                      const fs::path& path) {
    const std::string where = "checkpoint '" + path.string() + "'";
    if (state.encoder.in_dim() != ds.graph.feature_dim())
        throw MismatchError(where + " expects " + std::to_string(state.encoder.in_dim()) +
                            " input features, dataset has " + std::to_string(ds.graph.feature_dim()));
    if (state.num_old() != ds.split.num_old())
        throw MismatchError(where + " has " + std::to_string(state.num_old()) + " old classes, split has " +
                            std::to_string(ds.split.num_old()));
    if (state.joint_head && state.num_slots() != ds.split.num_all())
        throw MismatchError(where + " has " + std::to_string(state.num_slots()) + " joint outputs, split has " +
                            std::to_string(ds.split.num_all()) + " classes");
    if (ckpt.meta.value("dataset_hash", std::string()) != ds.hash)
        throw MismatchError(where + " was trained on a different dataset or split");
}

} // namespace

void cmd_gen_data(const RunConfig& cfg, bool force) {
    if (cfg.source != DataSource::sbm) throw ConfigError("gen-data needs data.source=sbm");
    const fs::path dir = cfg.out / "data";
    const std::vector<std::string> names{"edges.txt", "features.txt", "labels.txt", "split.json", "dataset.json"};
    if (!force) {
        for (const auto& n : names)
            if (fs::exists(dir / n))
                throw IoError("refusing to overwrite '" + (dir / n).string() + "' (pass --force)");
    }
    const Dataset ds = resolve_dataset(cfg);
    make_dir(dir);
    save_graph(ds.graph, dir / "edges.txt", dir / "features.txt", dir / "labels.txt");
    save_split(ds.split, dir / "split.json");
    nlohmann::ordered_json info;
    info["source"] = "sbm";
    info["num_nodes"] = ds.graph.num_nodes;
    info["num_edges"] = ds.graph.num_undirected_edges();
    info["feature_dim"] = ds.graph.feature_dim();
    info["num_classes"] = ds.graph.num_classes();
    info["seed"] = cfg.seed;
    info["sbm"] = cfg.to_json()["sbm"];
    info["dataset_hash"] = ds.hash;
    write_text(dir / "dataset.json", info.dump(2) + "\n");
    std::printf("wrote %s (%zu nodes, %zu edges)\n", dir.string().c_str(), ds.graph.num_nodes,
                ds.graph.num_undirected_edges());
}

void cmd_pretrain(const RunConfig& cfg) {
    const Dataset ds = resolve_dataset(cfg);
    const TrainConfig t = train_config(cfg);
    const PretrainResult r = pretrain(ds.graph, ds.split, t);
    const MetricsReport report = evaluate_joint(r.state, ds.graph, ds.split);

    const fs::path dir = cfg.out / "pretrain";
    make_dir(dir);
    Checkpoint ckpt = r.state.to_checkpoint();
    stamp(ckpt, cfg, ds);
    save_checkpoint(ckpt, dir / "checkpoint.bin");
    write_text(dir / "prototypes.json", r.prototypes.to_json());
    write_text(dir / "metrics.json", metrics_json(report, cfg));
    std::string log = std::string(kPretrainLogHeader) + "\n";
    for (const auto& e : r.log) log += to_csv_row(e) + "\n";
    write_text(dir / "loss.csv", log);
    write_manifest(dir, "pretrain", cfg, ds, {"checkpoint.bin", "prototypes.json", "metrics.json", "loss.csv"},
                   {{"best_epoch", r.best_epoch}, {"epochs_run", r.log.size()}});
    print_report("pretrain (best epoch " + std::to_string(r.best_epoch) + ")", report);
}

void cmd_ncd(const RunConfig& cfg) {
    const Dataset ds = resolve_dataset(cfg);
    const fs::path pre = cfg.out / "pretrain";
    for (const char* name : {"manifest.json", "checkpoint.bin", "prototypes.json"})
        if (!fs::exists(pre / name))
            throw StaleArtifactError("missing phase-1 artifact '" + (pre / name).string() + "' (run pretrain first)");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text(pre / "manifest.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw StaleArtifactError("unreadable '" + (pre / "manifest.json").string() + "': " + e.what());
    }
    if (manifest.value("pretrain_hash", std::string()) != cfg.pretrain_hash() ||
        manifest.value("dataset_hash", std::string()) != ds.hash)
        throw StaleArtifactError("phase-1 artifacts in '" + pre.string() +
                                 "' were produced by a different config (rerun pretrain)");
    for (const char* name : {"checkpoint.bin", "prototypes.json"}) {
        if (manifest["artifacts"].value(name, std::string()) != sha256_file(pre / name))
            throw StaleArtifactError("'" + (pre / name).string() + "' changed since pretrain wrote it");
    }

    const ModelState state = ModelState::from_checkpoint(load_checkpoint(pre / "checkpoint.bin"));
    const Prototypes protos = Prototypes::from_json(read_text(pre / "prototypes.json"));
    const TrainConfig t = train_config(cfg);
    const NcdResult r = ncd_train(state, protos, ds.graph, ds.split, t);
    const MetricsReport report = evaluate_joint(r.best, ds.graph, ds.split);
    const MetricsReport final_report = evaluate_joint(r.final, ds.graph, ds.split);

    const fs::path dir = cfg.out / "ncd";
    make_dir(dir);
    Checkpoint best = r.best.to_checkpoint();
    stamp(best, cfg, ds);
    save_checkpoint(best, dir / "checkpoint.bin");
    Checkpoint last = r.final.to_checkpoint();
    stamp(last, cfg, ds);
    save_checkpoint(last, dir / "checkpoint_final.bin");
    std::string log = std::string(kLossLogHeader) + "\n";
    for (const auto& e : r.log) log += to_csv_row(e) + "\n";
    write_text(dir / "loss.csv", log);
    write_text(dir / "metrics.json", metrics_json(report, cfg));
    write_text(dir / "confusion.csv", report.confusion_csv());
    write_text(dir / "perf_matrix.csv", report.perf_csv());

    nlohmann::ordered_json extra;
    extra["best_epoch"] = r.best_epoch;
    extra["epochs_run"] = r.log.size();
    extra["stopped_early"] = r.stopped_early;
    extra["final_checkpoint_metrics"] = {
        {"old_acc", final_report.old_acc}, {"new_acc", final_report.new_acc}, {"all_acc", final_report.all_acc}};
    std::vector<std::string> artifacts{"checkpoint.bin", "checkpoint_final.bin", "loss.csv",
                                       "metrics.json",   "confusion.csv",        "perf_matrix.csv"};
    if (const auto ref = reference_row(cfg.reference)) {
        nlohmann::ordered_json cmp;
        cmp["reference_only"] = true;
        cmp["reference"] = {{"name", ref->name},
                            {"old_acc_pct", ref->old_acc},
                            {"new_acc_pct", ref->new_acc},
                            {"all_acc_pct", ref->all_acc}};
        cmp["measured"] = {{"old_acc_pct", 100.0 * report.old_acc},
                           {"new_acc_pct", 100.0 * report.new_acc},
                           {"all_acc_pct", 100.0 * report.all_acc}};
        write_text(dir / "reference.json", cmp.dump(2) + "\n");
        artifacts.push_back("reference.json");
        std::printf("reference only, not a pass criterion (%s): old %.2f / new %.2f / all %.2f; measured %.2f / %.2f / %.2f\n",
                    ref->name.c_str(), ref->old_acc, ref->new_acc, ref->all_acc, 100.0 * report.old_acc,
                    100.0 * report.new_acc, 100.0 * report.all_acc);
    }
    write_manifest(dir, "ncd", cfg, ds, artifacts, extra);
    print_report("ncd (best epoch " + std::to_string(r.best_epoch) + " of " + std::to_string(r.log.size()) + ")",
                 report);
}

void cmd_eval(const RunConfig& cfg, const fs::path& checkpoint) {
    const Dataset ds = resolve_dataset(cfg);
    fs::path path = checkpoint;
    if (path.empty()) {
        path = cfg.out / "ncd" / "checkpoint.bin";
        if (!fs::exists(path)) path = cfg.out / "pretrain" / "checkpoint.bin";
    }
    const Checkpoint ckpt = load_checkpoint(path);
    const ModelState state = ModelState::from_checkpoint(ckpt);
    check_compatible(state, ckpt, ds, path);
    const MetricsReport report = evaluate_joint(state, ds.graph, ds.split);
    const GraphOps ops = GraphOps::from(ds.graph);

    const fs::path dir = cfg.out / "eval";
    make_dir(dir);
    write_text(dir / "metrics.json", metrics_json(report, cfg));
    write_text(dir / "confusion.csv", report.confusion_csv());
    write_text(dir / "nodes.csv", nodes_csv(ds.graph, node_representations(state, ops, ds.graph.features)));
    print_report("eval " + path.string(), report);
}

void cmd_sweep_depth(const RunConfig& cfg) {
    const Dataset ds = resolve_dataset(cfg);
    const auto rows = run_depth_sweep(ds.graph, ds.split, train_config(cfg), cfg.sweep_layers);
    const fs::path dir = cfg.out / "sweep";
    make_dir(dir);
    std::string csv = "layers,old_acc,new_acc,all_acc,aa,af\n";
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    char buf[200];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.layers, row.report.old_acc,
                      row.report.new_acc, row.report.all_acc, row.report.aa, row.report.af);
        csv += buf;
        MetricsReport r = row.report;
        r.seed = cfg.seed;
        r.config_hash = cfg.hash();
        auto j = r.to_json();
        j["layers"] = row.layers;
        all.push_back(j);
        print_report("depth " + std::to_string(row.layers), row.report);
    }
    write_text(dir / "depth.csv", csv);
    write_text(dir / "sweep.json", all.dump(2) + "\n");
    write_manifest(dir, "sweep-depth", cfg, ds, {"depth.csv", "sweep.json"});
}

void cmd_run(const RunConfig& cfg) {
    cmd_pretrain(cfg);
    cmd_ncd(cfg);
    cmd_eval(cfg);
}

int cli_exit_code(const std::exception& e) {
    if (dynamic_cast<const TrainingDiverged*>(&e)) return 1;
    if (dynamic_cast<const StaleArtifactError*>(&e)) return 3;
    if (dynamic_cast<const MismatchError*>(&e)) return 4;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const std::invalid_argument*>(&e))
        return 2;
    return 1;
}

} // namespace ncd
