#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "pix2surf/common.hpp"

namespace pix2surf {

// Flat sectioned key=value configuration with a fixed schema. Every key has a
// declared type and default; unknown keys are rejected; each resolved value
// remembers where it came from (default, file, or flag).
class RunConfig {
 public:
  enum class Type { Int, Real, Bool, Str };
  using Value = std::variant<int64_t, double, bool, std::string>;

  struct Entry {
    Type type;
    Value value;
    std::string provenance = "default";
    bool positive = false;  // numeric values must be > 0
  };

  static RunConfig defaults() {
    RunConfig c;
    auto I = [&](const std::string& k, int64_t v, bool pos = false) {
      c.entries_[k] = {Type::Int, v, "default", pos};
    };
    auto R = [&](const std::string& k, double v, bool pos = false) {
      c.entries_[k] = {Type::Real, v, "default", pos};
    };
    auto B = [&](const std::string& k, bool v) { c.entries_[k] = {Type::Bool, v, "default", false}; };
    auto S = [&](const std::string& k, const std::string& v) {
      c.entries_[k] = {Type::Str, v, "default", false};
    };

    I("data.shapes", 8, true);
    I("data.views", 5, true);
    I("data.res", 64, true);
    I("data.seed", 0);
    S("data.out", "data");
    B("data.noise_background", false);
    S("data.families", "box-union,superellipsoid,swept-profile");
    R("data.min_coverage", 0.10);
    R("data.max_coverage", 0.90);

    I("net.latent_dim", 1024, true);
    I("net.amp_dim", 256, true);
    I("net.sp_hidden", 512, true);
    I("net.sp_depth", 9, true);
    R("net.channel_scale", 0.25, true);
    B("net.predict_hidden", false);
    B("net.multiview", false);

    R("loss.w1", 0.1);
    R("loss.w2", 0.9);
    R("loss.wn", 0.7);
    R("loss.wm", 0.3);
    R("loss.w3", 0.9);
    I("loss.K", 4096, true);
    R("loss.eps_corr", 1e-3, true);

    S("train.data", "data");
    S("train.run", "runs/run");
    I("train.epochs1", 30);
    I("train.epochs2", 150);
    R("train.lr1", 1e-4, true);
    R("train.lr2", 1e-4, true);
    I("train.views", 5, true);
    I("train.mv_warmup", 20);
    I("train.seed", 0);
    R("train.clip", 10.0);
    I("train.max_pairs", 4096, true);
    R("train.adam_beta1", 0.9);
    R("train.adam_beta2", 0.999);
    R("train.adam_eps", 1e-8, true);
    B("train.multiview", false);
    B("train.cosine_decay", false);
    S("train.ablate", "");
    S("train.resume", "");

    S("infer.ckpt", "");
    S("infer.images", "");
    S("infer.out", "infer_out");
    S("infer.mode", "single");
    R("infer.uv_grad_thresh", 0.05, true);
    I("infer.upsample", 4, true);
    I("infer.uv_res", 128, true);
    I("infer.final_res", 512, true);
    R("infer.outlier_t", 0.02, true);
    R("infer.edge_thresh", 0.05, true);
    I("infer.knn", 4, true);
    I("infer.closing_iters", 2);

    S("eval.data", "data");
    S("eval.pred", "");
    S("eval.pred_kind", "mesh");  // mesh | maps
    S("eval.out", "eval_out");
    R("eval.eps", 1e-3, true);
    B("eval.hidden", false);

    return c;
  }

  void set_from_string(const std::string& key, const std::string& raw, const std::string& provenance) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key: " + key);
    Entry& e = it->second;
    try {
      switch (e.type) {
        case Type::Int: e.value = int64_t(std::stoll(raw)); break;
        case Type::Real: e.value = std::stod(raw); break;
        case Type::Bool: {
          if (raw == "true" || raw == "1" || raw == "on") e.value = true;
          else if (raw == "false" || raw == "0" || raw == "off") e.value = false;
          else throw ConfigError("key " + key + ": expected boolean, got '" + raw + "'");
          break;
        }
        case Type::Str: e.value = raw; break;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": cannot parse '" + raw + "'");
    }
    e.provenance = provenance;
    validate_entry(key, e);
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[' && s.back() == ']') {
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string val = s.substr(eq + 1);
      auto comment = val.find(" #");
      if (comment != std::string::npos) val = val.substr(0, comment);
      val = trim(val);
      if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
      set_from_string(key, val, "file:" + path);
    }
  }

  int64_t geti(const std::string& k) const { return std::get<int64_t>(at(k, Type::Int).value); }
  double getd(const std::string& k) const {
    const Entry& e = entry(k);
    if (e.type == Type::Int) return double(std::get<int64_t>(e.value));
    return std::get<double>(at(k, Type::Real).value);
  }
  bool getb(const std::string& k) const { return std::get<bool>(at(k, Type::Bool).value); }
  const std::string& gets(const std::string& k) const {
    return std::get<std::string>(at(k, Type::Str).value);
  }
  const std::string& provenance(const std::string& k) const { return entry(k).provenance; }
  bool has(const std::string& k) const { return entries_.count(k) > 0; }

  // Sectioned text with provenance comments; reloadable via load_file.
  std::string serialize_resolved() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, e] : entries_) {
      std::string sec = key.substr(0, key.find('.'));
      std::string name = key.substr(key.find('.') + 1);
      if (sec != section) {
        if (!section.empty()) out << "\n";
        out << "[" << sec << "]\n";
        section = sec;
      }
      out << name << " = " << value_string(e) << "  # " << e.provenance << "\n";
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [key, e] : entries_) {
      switch (e.type) {
        case Type::Int: j[key] = std::get<int64_t>(e.value); break;
        case Type::Real: j[key] = std::get<double>(e.value); break;
        case Type::Bool: j[key] = std::get<bool>(e.value); break;
        case Type::Str: j[key] = std::get<std::string>(e.value); break;
      }
    }
    return j;
  }

 private:
  std::map<std::string, Entry> entries_;

  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  const Entry& entry(const std::string& k) const {
    auto it = entries_.find(k);
    if (it == entries_.end()) throw ConfigError("unknown config key: " + k);
    return it->second;
  }

  const Entry& at(const std::string& k, Type t) const {
    const Entry& e = entry(k);
    if (e.type != t) throw ConfigError("config key " + k + " has a different type");
    return e;
  }

  static void validate_entry(const std::string& key, const Entry& e) {
    if (!e.positive) return;
    double v = e.type == Type::Int ? double(std::get<int64_t>(e.value))
                                   : (e.type == Type::Real ? std::get<double>(e.value) : 1.0);
    if (v <= 0) throw ConfigError("config key " + key + " must be positive");
  }

  static std::string value_string(const Entry& e) {
    switch (e.type) {
      case Type::Int: return std::to_string(std::get<int64_t>(e.value));
      case Type::Real: return format_double(std::get<double>(e.value));
      case Type::Bool: return std::get<bool>(e.value) ? "true" : "false";
      case Type::Str: return std::get<std::string>(e.value);
    }
    return "";
  }
};

}  // namespace pix2surf
