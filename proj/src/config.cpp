#include "pep/config.hpp"

#include <charconv>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <sstream>

namespace pep {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string bad(std::string_view key, std::string_view value, std::string_view want) {
  return "config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
         std::string(want);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(bad(key, v, "a count"));
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(bad(key, v, "an integer"));
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  // from_chars for double is available in libstdc++ 11.
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(bad(key, v, "a number"));
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(bad(key, v, "true/false"));
}

std::vector<std::size_t> to_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_size(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(bad(key, v, "a list of counts"));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Member>
Field size_field(std::string_view key, Member m) {
  return {key, [=](RunConfig& c, std::string_view v) { m(c) = to_size(key, v); },
          [=](const RunConfig& c) { return fmt(m(const_cast<RunConfig&>(c))); }};
}
template <class Member>
Field double_field(std::string_view key, Member m) {
  return {key, [=](RunConfig& c, std::string_view v) { m(c) = to_double(key, v); },
          [=](const RunConfig& c) { return fmt(m(const_cast<RunConfig&>(c))); }};
}
template <class Member>
Field bool_field(std::string_view key, Member m) {
  return {key, [=](RunConfig& c, std::string_view v) { m(c) = to_bool(key, v); },
          [=](const RunConfig& c) { return fmt(m(const_cast<RunConfig&>(c))); }};
}
template <class Member>
Field string_field(std::string_view key, Member m) {
  return {key, [=](RunConfig& c, std::string_view v) { m(c) = std::string(v); },
          [=](const RunConfig& c) { return m(const_cast<RunConfig&>(c)); }};
}

void stage_fields(std::vector<Field>& f, std::string_view prefix,
                  StageSchedule& (*stage)(RunConfig&)) {
  static std::deque<std::string> keys;  // push_back keeps earlier names in place
  auto name = [&](const char* leaf) -> std::string_view {
    keys.push_back(std::string(prefix) + leaf);
    return keys.back();
  };
  f.push_back(size_field(name(".steps"), [=](RunConfig& c) -> auto& { return stage(c).steps; }));
  f.push_back(double_field(name(".warmup_fraction"),
                           [=](RunConfig& c) -> auto& { return stage(c).warmup_fraction; }));
  f.push_back(double_field(name(".peak_lr"), [=](RunConfig& c) -> auto& { return stage(c).peak_lr; }));
  f.push_back(size_field(name(".batch_size"),
                         [=](RunConfig& c) -> auto& { return stage(c).batch_size; }));
  const std::string_view dkey = name(".decay");
  f.push_back({dkey,
               [=](RunConfig& c, std::string_view v) {
                 try {
                   stage(c).decay = parse_decay_shape(v);
                 } catch (const std::invalid_argument&) {
                   throw ConfigError(bad(dkey, v, "linear|constant"));
                 }
               },
               [=](const RunConfig& c) {
                 return std::string(to_string(stage(const_cast<RunConfig&>(c)).decay));
               }});
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("encoder.layers", [](RunConfig& c) -> auto& { return c.encoder.layers; }));
    f.push_back(size_field("encoder.heads", [](RunConfig& c) -> auto& { return c.encoder.heads; }));
    f.push_back(size_field("encoder.hidden", [](RunConfig& c) -> auto& { return c.encoder.hidden; }));
    f.push_back(size_field("encoder.ffn", [](RunConfig& c) -> auto& { return c.encoder.ffn; }));
    f.push_back(size_field("encoder.max_positions",
                           [](RunConfig& c) -> auto& { return c.encoder.max_positions; }));
    f.push_back(size_field("encoder.vocab_size",
                           [](RunConfig& c) -> auto& { return c.encoder.vocab_size; }));
    f.push_back(size_field("encoder.task_proj_dim",
                           [](RunConfig& c) -> auto& { return c.encoder.task_proj_dim; }));
    f.push_back(bool_field("encoder.task_projection",
                           [](RunConfig& c) -> auto& { return c.encoder.task_projection; }));

    f.push_back(double_field("pep.alpha", [](RunConfig& c) -> auto& { return c.pep.alpha; }));
    f.push_back(double_field("pep.beta", [](RunConfig& c) -> auto& { return c.pep.beta; }));
    f.push_back(double_field("pep.gamma", [](RunConfig& c) -> auto& { return c.pep.gamma; }));
    f.push_back(bool_field("pep.mlm", [](RunConfig& c) -> auto& { return c.pep.mlm; }));
    f.push_back(bool_field("pep.rop", [](RunConfig& c) -> auto& { return c.pep.rop; }));
    f.push_back(bool_field("pep.brp", [](RunConfig& c) -> auto& { return c.pep.brp; }));
    f.push_back(bool_field("pep.pap", [](RunConfig& c) -> auto& { return c.pep.pap; }));
    f.push_back(double_field("pep.mask_rate", [](RunConfig& c) -> auto& { return c.pep.mask_rate; }));
    f.push_back(double_field("pep.pap_pos_weight",
                             [](RunConfig& c) -> auto& { return c.pep.pap_pos_weight; }));

    stage_fields(f, "stage1", [](RunConfig& c) -> StageSchedule& { return c.stage1; });
    stage_fields(f, "stage2", [](RunConfig& c) -> StageSchedule& { return c.stage2; });

    f.push_back(double_field("optim.beta1", [](RunConfig& c) -> auto& { return c.optim.beta1; }));
    f.push_back(double_field("optim.beta2", [](RunConfig& c) -> auto& { return c.optim.beta2; }));
    f.push_back(double_field("optim.eps", [](RunConfig& c) -> auto& { return c.optim.eps; }));
    f.push_back(double_field("optim.weight_decay",
                             [](RunConfig& c) -> auto& { return c.optim.weight_decay; }));
    f.push_back(bool_field("optim.decay_mask", [](RunConfig& c) -> auto& { return c.decay_mask; }));

    f.push_back({"train.seed",
                 [](RunConfig& c, std::string_view v) { c.seed = to_u64("train.seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(size_field("train.threads", [](RunConfig& c) -> auto& { return c.threads; }));
    f.push_back(size_field("train.checkpoint_every",
                           [](RunConfig& c) -> auto& { return c.checkpoint_every; }));
    f.push_back(size_field("train.tree_cap", [](RunConfig& c) -> auto& { return c.tree_cap; }));
    f.push_back(double_field("train.init_std", [](RunConfig& c) -> auto& { return c.init_std; }));

    f.push_back(size_field("vocab.size", [](RunConfig& c) -> auto& { return c.vocab_size; }));
    f.push_back(size_field("vocab.max", [](RunConfig& c) -> auto& { return c.vocab_max; }));

    f.push_back({"eval.k_values",
                 [](RunConfig& c, std::string_view v) { c.eval.k_values = to_list("eval.k_values", v); },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t k : c.eval.k_values) s += (s.empty() ? "" : ",") + fmt(k);
                   return s;
                 }});
    f.push_back(size_field("eval.repetitions", [](RunConfig& c) -> auto& { return c.eval.repetitions; }));
    f.push_back(double_field("eval.test_fraction",
                             [](RunConfig& c) -> auto& { return c.eval.test_fraction; }));
    f.push_back(bool_field("eval.balanced", [](RunConfig& c) -> auto& { return c.eval.balanced; }));
    f.push_back({"eval.pooling",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "mean") c.eval.pooling = Pooling::kMean;
                   else if (v == "max") c.eval.pooling = Pooling::kMax;
                   else throw ConfigError(bad("eval.pooling", v, "mean|max"));
                 },
                 [](const RunConfig& c) {
                   return std::string(c.eval.pooling == Pooling::kMean ? "mean" : "max");
                 }});
    f.push_back(bool_field("eval.gcn", [](RunConfig& c) -> auto& { return c.eval.gcn; }));
    f.push_back(double_field("eval.l2", [](RunConfig& c) -> auto& { return c.eval.l2; }));
    f.push_back(double_field("eval.tolerance", [](RunConfig& c) -> auto& { return c.eval.tolerance; }));
    f.push_back(size_field("eval.max_iterations",
                           [](RunConfig& c) -> auto& { return c.eval.max_iterations; }));

    f.push_back(string_field("paths.corpus", [](RunConfig& c) -> auto& { return c.paths.corpus; }));
    f.push_back(string_field("paths.conversations",
                             [](RunConfig& c) -> auto& { return c.paths.conversations; }));
    f.push_back(string_field("paths.vocab", [](RunConfig& c) -> auto& { return c.paths.vocab; }));
    f.push_back(string_field("paths.labeled", [](RunConfig& c) -> auto& { return c.paths.labeled; }));
    f.push_back(string_field("paths.checkpoint",
                             [](RunConfig& c) -> auto& { return c.paths.checkpoint; }));
    f.push_back(string_field("paths.out_dir", [](RunConfig& c) -> auto& { return c.paths.out_dir; }));
    return f;
  }();
  return table;
}

}  // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields())
    if (f.key == key) return f.set(config, value);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

std::vector<std::string_view> config_keys() {
  std::vector<std::string_view> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace pep
