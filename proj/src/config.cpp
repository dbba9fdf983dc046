#include "focus/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace focus {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Visits every config field once; both the parser and the writer derive from
// this single list so they cannot drift apart.
template <class F>
void fields(RunConfig& c, F&& f) {
    f("seed", c.seed);
    f("image_size", c.image_size);
    f("model.c", c.c);
    f("model.d", c.d);
    f("model.cb", c.cb);
    f("model.s", c.s);
    f("model.l_dec", c.l_dec);
    f("model.n_enc", c.n_enc);
    f("model.heads", c.heads);
    f("model.points", c.points);
    f("model.backbone_blocks", c.backbone_blocks);
    f("model.backbone_heads", c.backbone_heads);
    f("model.patch", c.patch);
    f("clip.enabled", c.clip_enabled);
    f("clip.tau", c.clip_tau);
    f("clip.image_size", c.clip_image_size);
    f("prompt.foreground", c.prompt_foreground);
    f("prompt.background", c.prompt_background);
    f("edge.canny_sigma", c.canny_sigma);
    f("edge.canny_low", c.canny_low);
    f("edge.canny_high", c.canny_high);
    f("edge.overlay_strength", c.overlay_strength);
    f("loss.lambda_clip", c.lambda_clip);
    f("loss.lambda_label", c.lambda_label);
    f("loss.lambda_mask", c.lambda_mask);
    f("loss.lambda_bbox", c.lambda_bbox);
    f("loss.deep_supervision", c.deep_supervision);
    f("optim.lr", c.lr);
    f("optim.weight_decay", c.weight_decay);
    f("optim.grad_clip", c.grad_clip);
    f("train.iterations", c.iterations);
    f("train.batch_size", c.batch_size);
    f("train.checkpoint_every", c.checkpoint_every);
    f("synth.mode", c.synth_mode);
    f("synth.train_count", c.synth_train);
    f("synth.test_count", c.synth_test);
    f("synth.contrast_bound", c.synth_contrast_bound);
    f("data.train", c.data_train);
    f("data.test", c.data_test);
    f("metrics.e_variant", c.e_variant);
    f("metrics.f_variant", c.f_variant);
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long r = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected unsigned integer, got '" +
                                    v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Setter {
    const std::string& key;
    const std::string& value;
    bool hit = false;
    void operator()(const char* name, uint64_t& ref) {
        if (key == name) { ref = parse_u64(key, value); hit = true; }
    }
    void operator()(const char* name, long& ref) {
        if (key == name) { ref = parse_long(key, value); hit = true; }
    }
    void operator()(const char* name, double& ref) {
        if (key == name) { ref = parse_double(key, value); hit = true; }
    }
    void operator()(const char* name, bool& ref) {
        if (key == name) { ref = parse_bool(key, value); hit = true; }
    }
    void operator()(const char* name, std::string& ref) {
        if (key == name) { ref = value; hit = true; }
    }
};

struct Emitter {
    std::map<std::string, std::string> out;
    void operator()(const char* name, uint64_t& ref) { out[name] = std::to_string(ref); }
    void operator()(const char* name, long& ref) { out[name] = std::to_string(ref); }
    void operator()(const char* name, double& ref) { out[name] = fmt_double(ref); }
    void operator()(const char* name, bool& ref) { out[name] = ref ? "true" : "false"; }
    void operator()(const char* name, std::string& ref) { out[name] = ref; }
};

}  // namespace

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    if (name == "desk") return c;
    if (name == "paper") {
        c.image_size = 512;
        c.lr = 1e-5;
        c.weight_decay = 0.05;
        c.grad_clip = 0.01;
        c.iterations = 20000;
        c.batch_size = 8;
        return c;
    }
    throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    Setter s{key, value};
    fields(cfg, s);
    if (!s.hit) throw std::invalid_argument("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::string line;
    long lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected 'key = value'");
        apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

std::string config_to_text(const RunConfig& cfg) {
    Emitter e;
    fields(const_cast<RunConfig&>(cfg), e);
    std::ostringstream os;
    for (const auto& [k, v] : e.out) os << k << " = " << v << "\n";
    return os.str();
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected 'key = value': " + t);
        apply_config_entry(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (c.image_size <= 0 || c.image_size % 32 != 0)
        fail("image_size must be a positive multiple of 32");
    if (c.patch != 16) fail("model.patch must be 16");
    if (c.c <= 0 || c.d <= 0 || c.cb <= 0 || c.s <= 0) fail("model widths must be positive");
    if (c.heads <= 0 || c.d % c.heads != 0) fail("model.heads must divide model.d");
    if (c.backbone_heads <= 0 || c.cb % c.backbone_heads != 0)
        fail("model.backbone_heads must divide model.cb");
    if (c.backbone_blocks <= 0) fail("model.backbone_blocks must be positive");
    if (c.points <= 0) fail("model.points must be positive");
    if (c.l_dec < 1) fail("model.l_dec must be at least 1");
    if (c.n_enc < 0) fail("model.n_enc must be non-negative");
    if (c.clip_tau <= 0) fail("clip.tau must be positive");
    if (c.clip_image_size <= 0) fail("clip.image_size must be positive");
    if (c.canny_sigma <= 0) fail("edge.canny_sigma must be positive");
    if (!(c.canny_low >= 0 && c.canny_low < c.canny_high && c.canny_high <= 1))
        fail("edge thresholds need 0 <= low < high <= 1");
    if (c.lambda_clip < 0 || c.lambda_label < 0 || c.lambda_mask < 0 || c.lambda_bbox < 0)
        fail("loss weights must be non-negative");
    if (c.lr <= 0) fail("optim.lr must be positive");
    if (c.weight_decay < 0) fail("optim.weight_decay must be non-negative");
    if (c.iterations < 0) fail("train.iterations must be non-negative");
    if (c.batch_size < 1) fail("train.batch_size must be at least 1");
    if (c.checkpoint_every < 1) fail("train.checkpoint_every must be at least 1");
    if (c.synth_mode != "salient" && c.synth_mode != "camouflage")
        fail("synth.mode must be salient or camouflage");
    if (c.synth_train < 0 || c.synth_test < 0) fail("synth counts must be non-negative");
    if (!(c.synth_contrast_bound > 0.0 && c.synth_contrast_bound < 2.0))
        fail("synth.contrast_bound must lie in (0,2)");
    if (c.e_variant != "adaptive" && c.e_variant != "sweep_mean" && c.e_variant != "sweep_max")
        fail("metrics.e_variant must be adaptive, sweep_mean or sweep_max");
    if (c.f_variant != "max" && c.f_variant != "mean" && c.f_variant != "adaptive")
        fail("metrics.f_variant must be max, mean or adaptive");
}

}  // namespace focus
