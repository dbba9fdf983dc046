#include "focus/checkpoint.hpp"

#include <filesystem>
#include <stdexcept>

namespace fs = std::filesystem;

namespace focus {

namespace {

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 8);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

std::string json_unescape(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\' || i + 1 >= s.size()) {
            out += s[i];
            continue;
        }
        char c = s[++i];
        switch (c) {
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'u':
                if (i + 4 < s.size()) {
                    out += static_cast<char>(std::stoi(s.substr(i + 1, 4), nullptr, 16));
                    i += 4;
                }
                break;
            default: out += c;
        }
    }
    return out;
}

// pull "key": out of a flat one-level JSON object
std::string json_field(const std::string& text, const std::string& key) {
    std::string needle = "\"" + key + "\":";
    size_t p = text.find(needle);
    if (p == std::string::npos) return "";
    p += needle.size();
    while (p < text.size() && (text[p] == ' ')) ++p;
    if (p >= text.size()) return "";
    if (text[p] == '"') {
        size_t q = ++p;
        while (q < text.size() && !(text[q] == '"' && text[q - 1] != '\\')) ++q;
        return json_unescape(text.substr(p, q - p));
    }
    size_t q = p;
    while (q < text.size() && text[q] != ',' && text[q] != '}') ++q;
    return text.substr(p, q - p);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW* opt,
                     const CheckpointMeta& meta) {
    Archive ar;
    for (const auto& [name, t] : ps.all()) ar.tensors[name] = t;
    if (opt) opt->save(ar);
    ar.meta = "{\"schema_version\":" + std::to_string(meta.schema_version) +
              ",\"step\":" + std::to_string(meta.step) + ",\"config\":\"" +
              json_escape(meta.config_text) + "\"}";
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    save_archive(tmp.string(), ar);
    fs::rename(tmp, target);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    LoadedCheckpoint lc;
    lc.archive = load_archive(path);
    std::string sv = json_field(lc.archive.meta, "schema_version");
    std::string step = json_field(lc.archive.meta, "step");
    if (sv.empty() || step.empty())
        throw std::runtime_error("checkpoint " + path + " has no readable meta header");
    lc.meta.schema_version = std::stol(sv);
    if (lc.meta.schema_version != 1)
        throw std::runtime_error("checkpoint schema_version " + sv + " is not supported");
    lc.meta.step = std::stol(step);
    lc.meta.config_text = json_field(lc.archive.meta, "config");
    return lc;
}

void restore_params(ParamStore& ps, const Archive& ar) {
    for (const auto& [name, t] : ps.all()) {
        auto it = ar.tensors.find(name);
        if (it == ar.tensors.end())
            throw std::runtime_error("checkpoint is missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        const_cast<Tensor&>(t).raw() = it->second.values();
    }
}

}  // namespace focus
