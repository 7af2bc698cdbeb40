// SPDX-License-Identifier: Apache-2.0
#include "mimk/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mimk/errors.hpp"

namespace mimk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw UsageError("config key '" + key + "': bad value '" + value + "' (expected " + expected +
                   ")");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a number");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true|false");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) bad_value(key, v, "comma-separated integers");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct KeyDef {
  const char* name;
  Setter set;
  Getter get;
};

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {"preset",
       [](RunConfig& c, const std::string&, const std::string& v) {
         const RunConfig fresh = preset_config(v);
         c = fresh;
       },
       [](const RunConfig& c) { return c.preset; }},
      {"encoder",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "swin") {
           c.model.encoder = EncoderKind::kSwin;
         } else if (v == "vit") {
           c.model.encoder = EncoderKind::kViT;
         } else {
           bad_value(k, v, "vit|swin");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.model.encoder == EncoderKind::kSwin ? "swin" : "vit");
       }},
      {"image_size",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.image_size = to_size(k, v);
         c.train.items.image_size = c.model.image_size;
       },
       [](const RunConfig& c) { return std::to_string(c.model.image_size); }},
      {"patch_size",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.patch_size = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.patch_size); }},
      {"window_size",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.window_size = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.window_size); }},
      {"embed_dim",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.embed_dim = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.embed_dim); }},
      {"depths",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.depths = to_list(k, v);
       },
       [](const RunConfig& c) { return fmt_list(c.model.depths); }},
      {"heads",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.heads = to_list(k, v);
       },
       [](const RunConfig& c) { return fmt_list(c.model.heads); }},
      {"encoder_stride",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.encoder_stride = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.encoder_stride); }},
      {"mlp_ratio",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.mlp_ratio = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.model.mlp_ratio); }},
      {"position_embedding",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.position_embedding = to_bool(k, v);
       },
       [](const RunConfig& c) { return std::string(c.model.position_embedding ? "true" : "false"); }},
      {"input_norm",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.input_norm = to_bool(k, v);
       },
       [](const RunConfig& c) { return std::string(c.model.input_norm ? "true" : "false"); }},
      {"head",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "linear") {
           c.model.head = HeadKind::kLinear;
         } else if (v == "conv") {
           c.model.head = HeadKind::kConv;
         } else {
           bad_value(k, v, "linear|conv");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.model.head == HeadKind::kLinear ? "linear" : "conv");
       }},
      {"loss_mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "masked_only") {
           c.train.loss_mode = LossMode::kMaskedOnly;
         } else if (v == "full") {
           c.train.loss_mode = LossMode::kFull;
         } else {
           bad_value(k, v, "masked_only|full");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.loss_mode == LossMode::kMaskedOnly ? "masked_only" : "full");
       }},
      {"mask",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "patch") {
           c.train.mask = MaskKind::kPatch;
         } else if (v == "line") {
           c.train.mask = MaskKind::kLine;
         } else {
           bad_value(k, v, "patch|line");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.mask == MaskKind::kPatch ? "patch" : "line");
       }},
      {"mask_ratio",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.mask_ratio = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.train.mask_ratio); }},
      {"mask_mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "token") {
           c.train.mask_mode = MaskMode::kToken;
         } else if (v == "pixel") {
           c.train.mask_mode = MaskMode::kPixel;
         } else {
           bad_value(k, v, "token|pixel");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.mask_mode == MaskMode::kToken ? "token" : "pixel");
       }},
      {"line_acceleration",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.line_acceleration = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.line_acceleration); }},
      {"line_center_fraction",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.line_center_fraction = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.train.line_center_fraction); }},
      {"epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.epochs = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"batch_size",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.batch_size = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"base_lr",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.base_lr = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.train.base_lr); }},
      {"min_lr",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.min_lr = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.train.min_lr); }},
      {"warmup_epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.warmup_epochs = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.warmup_epochs); }},
      {"weight_decay",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.weight_decay = to_real(k, v);
       },
       [](const RunConfig& c) { return fmt(c.train.weight_decay); }},
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.seed = to_u64(k, v);
         c.model.seed = c.train.seed;
       },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"data_source",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "phantom") {
           c.source = DataSource::kPhantom;
         } else if (v == "png_dir") {
           c.source = DataSource::kPngDir;
         } else {
           bad_value(k, v, "phantom|png_dir");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.source == DataSource::kPhantom ? "phantom" : "png_dir");
       }},
      {"data_dir",
       [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
       [](const RunConfig& c) { return c.data_dir.string(); }},
      {"n_phantoms",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.n_phantoms = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.n_phantoms); }},
      {"target",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "kspace") {
           c.train.items.target = TargetKind::kKSpace;
         } else if (v == "image") {
           c.train.items.target = TargetKind::kImage;
         } else {
           bad_value(k, v, "kspace|image");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.train.items.target == TargetKind::kKSpace ? "kspace" : "image");
       }},
      {"n_coils",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.items.n_coils = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.items.n_coils); }},
      {"augment",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.train.augment = parse_augment_policy(v);
         } catch (const ContractError&) {
           bad_value(k, v, "none|flip_crop|normalize");
         }
       },
       [](const RunConfig& c) { return std::string(augment_policy_name(c.train.augment)); }},
      {"out_dir",
       [](RunConfig& c, const std::string&, const std::string& v) { c.train.out_dir = v; },
       [](const RunConfig& c) { return c.train.out_dir.string(); }},
      {"checkpoint_every",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.checkpoint_every = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); }},
      {"keep_checkpoints",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.keep_checkpoints = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.keep_checkpoints); }},
      {"sample_every",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.sample_every = to_size(k, v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.sample_every); }},
  };
  return defs;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& d : key_defs()) {
    if (key == d.name) return &d;
  }
  return nullptr;
}

}  // namespace

DatasetManifest RunConfig::manifest() const {
  if (source == DataSource::kPngDir) {
    if (data_dir.empty()) throw UsageError("config key 'data_dir' is required for png_dir data");
    return png_dir_manifest(data_dir, train.seed);
  }
  if (n_phantoms < 2) throw UsageError("config key 'n_phantoms' must be >= 2");
  return phantom_manifest(n_phantoms, model.image_size, train.seed);
}

std::vector<std::string> preset_names() { return {"desk", "desk-vit", "tiny", "paper"}; }

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.train.epochs = 30;
  c.train.warmup_epochs = 3;
  c.train.out_dir = "run";
  if (name == "desk") return c;
  if (name == "desk-vit") {
    c.model.encoder = EncoderKind::kViT;
    c.model.patch_size = 8;
    c.model.depths = {4};
    c.model.heads = {2};
    return c;
  }
  if (name == "tiny") {
    c.model.image_size = 16;
    c.train.items.image_size = 16;
    c.model.patch_size = 2;
    c.model.window_size = 2;
    c.model.embed_dim = 8;
    c.model.depths = {1, 1};
    c.model.heads = {1, 2};
    c.model.encoder_stride = 4;
    c.n_phantoms = 4;
    c.train.epochs = 2;
    c.train.warmup_epochs = 1;
    c.train.checkpoint_every = 1;
    c.train.sample_every = 1;
    return c;
  }
  if (name == "paper") {
    c.model.image_size = 192;
    c.train.items.image_size = 192;
    c.model.patch_size = 1;
    c.model.window_size = 6;
    c.model.depths = {2, 2, 2, 2, 2, 2};
    c.model.heads = {1, 2, 4, 8, 16, 32};
    c.model.encoder_stride = 32;
    c.train.epochs = 100;
    c.train.warmup_epochs = 5;
    return c;
  }
  throw UsageError("config key 'preset': unknown preset '" + name + "'");
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const KeyDef* def = find_key(key);
  if (!def) throw UsageError("unknown config key '" + key + "'");
  def->set(cfg, key, value);
}

RunConfig parse_run_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!find_key(key)) throw UsageError("unknown config key '" + key + "'");
    for (const auto& e : entries) {
      if (e.first == key) throw UsageError("config key '" + key + "' given twice");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  RunConfig cfg = preset_config("desk");
  for (const auto& [k, v] : entries) {
    if (k == "preset") set_config_value(cfg, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "preset") set_config_value(cfg, k, v);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config '" + path.string() + "'");
  return parse_run_config(in);
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& d : key_defs()) {
    out += d.name;
    out += " = ";
    out += d.get(cfg);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& d : key_defs()) out.emplace_back(d.name);
  return out;
}

}  // namespace mimk
