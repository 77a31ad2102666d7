#include "condlab/config.hpp"

#include "condlab/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace condlab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

template <class T>
bool parse_integer(const std::string& s, T& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig kv;
    kv.origin_ = origin;
    std::stringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (kv.values_.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.values_[key] = value;
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

const std::string* KeyValueConfig::find(const std::string& key) {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

void KeyValueConfig::bad(const std::string& key, const std::string& why) const {
    throw ConfigError(origin_ + ": key '" + key + "': " + why);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::optional<std::string>& fallback) {
    if (const std::string* v = find(key)) return *v;
    if (!fallback) bad(key, "missing");
    return *fallback;
}

double KeyValueConfig::get_double(const std::string& key, const std::optional<double>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    double d = 0;
    if (!parse_double(*v, d)) bad(key, "'" + *v + "' is not a number");
    return d;
}

long KeyValueConfig::get_long(const std::string& key, const std::optional<long>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    long x = 0;
    if (!parse_integer(*v, x)) bad(key, "'" + *v + "' is not an integer");
    return x;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, const std::optional<std::uint64_t>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    std::uint64_t x = 0;
    if (!parse_integer(*v, x)) bad(key, "'" + *v + "' is not an unsigned 64-bit integer");
    return x;
}

bool KeyValueConfig::get_bool(const std::string& key, const std::optional<bool>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    bad(key, "'" + *v + "' is not a boolean");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::optional<std::vector<double>>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    std::vector<double> out;
    for (const std::string& item : split_list(*v)) {
        double d = 0;
        if (!parse_double(item, d)) bad(key, "'" + item + "' is not a number");
        out.push_back(d);
    }
    return out;
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key,
                                                   const std::optional<std::vector<std::size_t>>& fallback) {
    const std::string* v = find(key);
    if (!v) {
        if (!fallback) bad(key, "missing");
        return *fallback;
    }
    std::vector<std::size_t> out;
    for (const std::string& item : split_list(*v)) {
        std::size_t x = 0;
        if (!parse_integer(item, x)) bad(key, "'" + item + "' is not a nonnegative integer");
        out.push_back(x);
    }
    return out;
}

void KeyValueConfig::reject_unused() const {
    std::string unknown;
    for (const auto& [k, v] : values_)
        if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

ExperimentConfig experiment_config_from(KeyValueConfig& kv) {
    ExperimentConfig c;
    try {
        DatasetSpec& d = c.dataset;
        d.source = kv.get_string("dataset.source", "synthetic");
        if (d.source != "synthetic" && d.source != "idx" && d.source != "cifar10" && d.source != "csv")
            throw ConfigError("dataset.source must be synthetic, idx, cifar10 or csv");
        d.n = std::size_t(kv.get_long("dataset.n", 0));
        d.offset = kv.get_double("dataset.offset", 0.0);
        d.label_kind = label_kind_from_string(kv.get_string("dataset.labels", "scalar"));
        d.classes = std::size_t(kv.get_long("dataset.classes", 10));
        if (d.source == "synthetic") {
            d.width = std::size_t(kv.get_long("dataset.width", 8));
            d.height = std::size_t(kv.get_long("dataset.height", long(d.width)));
            d.channels = std::size_t(kv.get_long("dataset.channels", 1));
            d.bound = kv.get_double("dataset.bound", 2.0);
            d.sign = sign_mode_from_string(kv.get_string("dataset.sign", "symmetric"));
            if (d.n == 0) throw ConfigError("dataset.n must be positive for synthetic data");
        } else {
            d.path = kv.get_string("dataset.path");
            if (d.source == "idx") d.labels_path = kv.get_string("dataset.labels_path");
        }

        CnnConfig& m = c.model;
        m.m = std::size_t(kv.get_long("model.m", 3));
        const std::vector<std::size_t> hidden = kv.get_sizes("model.channels");
        m.act = activation_from_string(kv.get_string("model.activation", "tanh"));
        const std::string head = kv.get_string("model.head", "direct");
        if (head == "direct") {
            m.head.kind = HeadSpec::Kind::Direct;
        } else if (head == "fc") {
            m.head.kind = HeadSpec::Kind::Fc;
            m.head.width = std::size_t(kv.get_long("model.head_width"));
            m.head.out_dim = std::size_t(kv.get_long("model.out_dim", 1));
        } else {
            throw ConfigError("model.head must be direct or fc");
        }
        const std::string init = kv.get_string("model.init", "theory");
        if (init == "theory") m.init.kind = InitSpec::Kind::TheoryEps;
        else if (init == "experiment") m.init.kind = InitSpec::Kind::ExperimentSigma;
        else throw ConfigError("model.init must be theory or experiment");
        m.init.gamma = kv.get_double("model.gamma", 2.0);
        m.init.sigma2 = kv.get_double("model.sigma2", 1e-4);
        m.init.epsilon = kv.get_double("model.epsilon", -1.0);

        OptimizerSpec& o = c.optimizer;
        const std::string kind = kv.get_string("optim.kind", "gd");
        if (kind == "gd") o.kind = OptimizerSpec::Kind::Gd;
        else if (kind == "adam") o.kind = OptimizerSpec::Kind::Adam;
        else throw ConfigError("optim.kind must be gd or adam");
        o.lr = kv.get_double("optim.lr", 1e-3);
        o.steps = kv.get_long("optim.steps", 100);
        o.record_stride = kv.get_long("optim.record_stride", 1);
        if (o.steps < 1) throw ConfigError("optim.steps must be >= 1");
        if (o.record_stride < 1) throw ConfigError("optim.record_stride must be >= 1");
        if (!(o.lr > 0)) throw ConfigError("optim.lr must be positive");
        c.loss = loss_kind_from_string(kv.get_string("optim.loss", "mse"));

        AnalysisSpec& a = c.analysis;
        a.trials = std::size_t(kv.get_long("analysis.trials", 1));
        a.top_k = std::size_t(kv.get_long("analysis.top_k", 15));
        a.include_bias = kv.get_bool("analysis.include_bias", false);
        a.cluster_threshold = kv.get_double("analysis.cluster_threshold", 0.95);
        a.condense_report = kv.get_bool("analysis.condense_report", true);
        if (a.trials == 0) throw ConfigError("analysis.trials must be >= 1");

        c.sweep.gammas = kv.get_doubles("sweep.gammas", std::vector<double>{});
        c.sweep.channel_counts = kv.get_sizes("sweep.channels", std::vector<std::size_t>{});

        c.out_dir = kv.get_string("output.dir", "runs");
        c.seed = kv.get_u64("seed", 0);

        // Input geometry comes from the dataset; synthetic dims are known now,
        // file-backed ones are filled in once the data is loaded.
        const std::size_t c0 = d.source == "synthetic" ? d.channels : (d.source == "cifar10" ? 3 : 1);
        m.channels = {c0};
        m.channels.insert(m.channels.end(), hidden.begin(), hidden.end());
        if (d.source == "synthetic") {
            m.input_w = d.width;
            m.input_h = d.height;
        } else {
            m.input_w = d.source == "cifar10" ? 32 : 28;
            m.input_h = m.input_w;
        }
        m.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(kv.origin() + ": " + e.what());
    }
    kv.reject_unused();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    KeyValueConfig kv = KeyValueConfig::parse(ss.str(), path.string());
    ExperimentConfig c = experiment_config_from(kv);
    c.source_text = ss.str();
    return c;
}

} // namespace condlab
