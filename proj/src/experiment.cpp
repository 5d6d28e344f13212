#include "crl/experiment.hpp"

#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

namespace crl {

// ---------------------------------------------------------------------------
// Presets

AgentConfig preset_agent_config(const std::string& preset, const std::string& algorithm) {
  static const std::set<std::string> known{"random", "td0",  "q_learning", "relative_q", "dqn",
                                           "ddpg",   "td3",  "sac",        "sac_discrete", "ppo"};
  if (!known.contains(algorithm)) {
    throw ConfigError("unknown algorithm '" + algorithm + "'");
  }
  AgentConfig c;
  c.algorithm = algorithm;
  const bool tabular = algorithm == "td0" || algorithm == "q_learning" || algorithm == "relative_q";
  if (tabular || algorithm == "random" || algorithm == "ppo") {
    c.warmup_steps = 0;
    c.learning_starts = 0;
  }
  if (algorithm == "ppo") {
    c.activation = Activation::tanh;
    c.critic_lr = 3e-4;
    c.grad_clip.reset();
  }

  if (preset == "desk") {
    return c;
  }
  if (preset == "paper_mujoco") {
    if (algorithm == "ddpg" || algorithm == "td3") {
      c.hidden = {256, 256};
      c.actor_lr = 3e-4;
      c.critic_lr = 3e-4;
      c.tau = 0.005;
      c.batch_size = 256;
      c.replay_capacity = 1'000'000;
      c.exploration_std = 0.1;
      c.warmup_steps = 25'000;
      c.learning_starts = 25'000;
    } else if (algorithm == "sac") {
      c.hidden = {256, 256};
      c.actor_lr = 3e-4;
      c.critic_lr = 1e-3;
      c.autotune = true;
      c.tau = 0.005;
      c.batch_size = 256;
      c.replay_capacity = 1'000'000;
      c.warmup_steps = 5'000;
      c.learning_starts = 5'000;
    } else if (algorithm == "ppo") {
      c.hidden = {64, 64};
      c.activation = Activation::tanh;
      c.actor_lr = 3e-4;
      c.critic_lr = 3e-4;
      c.gae_lambda = 0.95;
      c.clip_range = 0.2;
      c.round_length = 2048;
      c.minibatch_size = 64;
      c.epochs = 10;
      c.max_grad_norm = 0.5;
      c.normalize_advantage = true;
      c.ppo_entropy_coef = 0.0;
    } else if (!tabular && algorithm != "random") {
      throw ConfigError("preset paper_mujoco has no settings for " + algorithm);
    }
    return c;
  }
  if (preset == "paper_atari") {
    if (algorithm == "dqn") {
      c.hidden = {512};
      c.critic_lr = 1e-4;
      c.replay_capacity = 800'000;
      c.train_every = 4;
      c.target_update_every = 1'000;
      c.batch_size = 64;
      c.grad_clip = 0.5;
      c.epsilon_start = 1.0;
      c.epsilon_end = 0.01;
      c.epsilon_decay_steps = 1'000'000;
      c.warmup_steps = 80'000;
      c.learning_starts = 80'000;
    } else if (algorithm == "ppo") {
      c.hidden = {512};
      c.activation = Activation::relu;
      c.actor_lr = 3e-4;
      c.critic_lr = 3e-4;
      c.gae_lambda = 0.95;
      c.clip_range = 0.1;
      c.round_length = 1024;
      c.minibatch_size = 256;
      c.epochs = 8;
      c.max_grad_norm = 0.5;
      c.ppo_entropy_coef = 0.01;
    } else if (algorithm == "sac_discrete") {
      c.hidden = {512};
      c.actor_lr = 3e-4;
      c.critic_lr = 3e-4;
      c.autotune = false;
      c.entropy_coef = 0.2;
      c.train_every = 4;
      c.target_update_every = 2'000;
      c.batch_size = 64;
      c.replay_capacity = 800'000;
      c.warmup_steps = 20'000;
      c.learning_starts = 20'000;
    } else if (!tabular && algorithm != "random") {
      throw ConfigError("preset paper_atari has no settings for " + algorithm);
    }
    return c;
  }
  throw ConfigError("unknown preset '" + preset + "' (expected desk, paper_mujoco or paper_atari)");
}

// ---------------------------------------------------------------------------
// Names

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::catch_game: return "catch";
    case EnvKind::pendulum: return "pendulum";
    case EnvKind::tabular: return "tabular";
  }
  return "catch";
}

std::string to_string(WrapperKind kind) {
  switch (kind) {
    case WrapperKind::random_reset: return "random_reset";
    case WrapperKind::reset_as_transition: return "reset_as_transition";
    case WrapperKind::agent_controlled_reset: return "agent_controlled_reset";
    case WrapperKind::reward_offset: return "reward_offset";
    case WrapperKind::angle_wrap: return "angle_wrap";
  }
  return "reward_offset";
}

namespace {

// ---------------------------------------------------------------------------
// YAML helpers

std::string where(const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  if (mark.is_null()) {
    return "";
  }
  return " (line " + std::to_string(mark.line + 1) + ", column " + std::to_string(mark.column + 1) + ")";
}

[[noreturn]] void fail(const YAML::Node& node, const std::string& message) { throw ConfigError(message + where(node)); }

void require_map(const YAML::Node& node, const std::string& context) {
  if (!node.IsMap()) {
    fail(node, context + " must be a mapping");
  }
}

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& context) {
  require_map(node, context);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) {
      fail(kv.first, "unknown key '" + key + "' in " + context);
    }
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) {
    fail(node, "'" + key + "' must be a scalar");
  }
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, "'" + key + "' has an invalid value '" + node.Scalar() + "'");
  }
}

template <typename T>
std::vector<T> sequence(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) {
    fail(node, "'" + key + "' must be a list");
  }
  std::vector<T> out;
  for (const auto& item : node) {
    out.push_back(scalar<T>(item, key));
  }
  return out;
}

YAML::Node merge_nodes(const YAML::Node& base, const YAML::Node& over) {
  if (!base.IsMap() || !over.IsMap()) {
    return YAML::Clone(over);
  }
  YAML::Node out = YAML::Clone(base);
  for (const auto& kv : over) {
    const auto key = kv.first.as<std::string>();
    if (out[key]) {
      out[key] = merge_nodes(out[key], kv.second);
    } else {
      out[key] = YAML::Clone(kv.second);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AgentConfig fields

using FieldPtr = std::variant<double AgentConfig::*, int AgentConfig::*, bool AgentConfig::*,
                              std::optional<double> AgentConfig::*, std::vector<int> AgentConfig::*>;

struct AgentField {
  const char* name;
  FieldPtr ptr;
};

const std::vector<AgentField>& agent_fields() {
  static const std::vector<AgentField> fields{
      {"gamma", &AgentConfig::gamma},
      {"actor_lr", &AgentConfig::actor_lr},
      {"critic_lr", &AgentConfig::critic_lr},
      {"batch_size", &AgentConfig::batch_size},
      {"replay_capacity", &AgentConfig::replay_capacity},
      {"warmup_steps", &AgentConfig::warmup_steps},
      {"learning_starts", &AgentConfig::learning_starts},
      {"train_every", &AgentConfig::train_every},
      {"hidden", &AgentConfig::hidden},
      {"grad_clip", &AgentConfig::grad_clip},
      {"epsilon_start", &AgentConfig::epsilon_start},
      {"epsilon_end", &AgentConfig::epsilon_end},
      {"epsilon_decay_steps", &AgentConfig::epsilon_decay_steps},
      {"target_update_every", &AgentConfig::target_update_every},
      {"tau", &AgentConfig::tau},
      {"exploration_std", &AgentConfig::exploration_std},
      {"reset_exploration_std", &AgentConfig::reset_exploration_std},
      {"target_noise_std", &AgentConfig::target_noise_std},
      {"target_noise_clip", &AgentConfig::target_noise_clip},
      {"policy_delay", &AgentConfig::policy_delay},
      {"entropy_coef", &AgentConfig::entropy_coef},
      {"autotune", &AgentConfig::autotune},
      {"target_entropy", &AgentConfig::target_entropy},
      {"target_entropy_offset", &AgentConfig::target_entropy_offset},
      {"round_length", &AgentConfig::round_length},
      {"epochs", &AgentConfig::epochs},
      {"minibatch_size", &AgentConfig::minibatch_size},
      {"clip_range", &AgentConfig::clip_range},
      {"gae_lambda", &AgentConfig::gae_lambda},
      {"normalize_advantage", &AgentConfig::normalize_advantage},
      {"ppo_entropy_coef", &AgentConfig::ppo_entropy_coef},
      {"max_grad_norm", &AgentConfig::max_grad_norm},
      {"initial_log_std", &AgentConfig::initial_log_std},
      {"alpha", &AgentConfig::alpha},
      {"alpha_decay_steps", &AgentConfig::alpha_decay_steps},
      {"eta", &AgentConfig::eta},
      {"tabular_epsilon", &AgentConfig::tabular_epsilon},
      {"agent_controlled_reset", &AgentConfig::agent_controlled_reset},
  };
  return fields;
}

void parse_agent_field(AgentConfig& c, const AgentField& field, const YAML::Node& node) {
  const std::string key = field.name;
  std::visit(
      [&](auto ptr) {
        using T = std::remove_cvref_t<decltype(c.*ptr)>;
        if constexpr (std::is_same_v<T, std::optional<double>>) {
          if (node.IsNull()) {
            (c.*ptr).reset();
          } else {
            c.*ptr = scalar<double>(node, key);
          }
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          c.*ptr = sequence<int>(node, key);
        } else {
          c.*ptr = scalar<T>(node, key);
        }
      },
      field.ptr);
}

void emit_agent_field(YAML::Emitter& out, const AgentConfig& c, const AgentField& field) {
  out << YAML::Key << field.name << YAML::Value;
  std::visit(
      [&](auto ptr) {
        using T = std::remove_cvref_t<decltype(c.*ptr)>;
        if constexpr (std::is_same_v<T, std::optional<double>>) {
          if (c.*ptr) {
            out << *(c.*ptr);
          } else {
            out << YAML::Null;
          }
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          out << YAML::Flow << YAML::BeginSeq;
          for (int v : c.*ptr) out << v;
          out << YAML::EndSeq;
        } else {
          out << c.*ptr;
        }
      },
      field.ptr);
}

AgentConfig parse_agent(const YAML::Node& node, const std::string& preset) {
  std::set<std::string> allowed{"algorithm", "activation", "relative_mode", "reference_pairs", "centering"};
  for (const auto& f : agent_fields()) {
    allowed.insert(f.name);
  }
  check_keys(node, allowed, "agent");
  if (!node["algorithm"]) {
    fail(node, "agent.algorithm is required");
  }
  AgentConfig c;
  try {
    c = preset_agent_config(preset, scalar<std::string>(node["algorithm"], "algorithm"));
  } catch (const ConfigError& e) {
    fail(node["algorithm"], e.what());
  }
  for (const auto& f : agent_fields()) {
    if (node[f.name]) {
      parse_agent_field(c, f, node[f.name]);
    }
  }
  try {
    if (node["activation"]) c.activation = activation_from_string(scalar<std::string>(node["activation"], "activation"));
    if (node["relative_mode"])
      c.relative_mode = relative_mode_from_string(scalar<std::string>(node["relative_mode"], "relative_mode"));
  } catch (const std::invalid_argument& e) {
    fail(node, e.what());
  }
  if (const auto pairs = node["reference_pairs"]) {
    if (!pairs.IsSequence()) fail(pairs, "'reference_pairs' must be a list of [state, action] pairs");
    c.reference_pairs.clear();
    for (const auto& p : pairs) {
      const auto v = sequence<int>(p, "reference_pairs");
      if (v.size() != 2) fail(p, "each reference pair needs exactly two entries");
      c.reference_pairs.emplace_back(v[0], v[1]);
    }
  }
  if (const auto centering = node["centering"]) {
    check_keys(centering, {"mode", "beta", "initial_rbar"}, "agent.centering");
    if (centering["mode"]) {
      try {
        c.centering.mode = centering_mode_from_string(scalar<std::string>(centering["mode"], "mode"));
      } catch (const std::invalid_argument& e) {
        fail(centering["mode"], e.what());
      }
    }
    if (centering["beta"]) c.centering.beta = scalar<double>(centering["beta"], "beta");
    if (centering["initial_rbar"]) c.centering.initial_rbar = scalar<double>(centering["initial_rbar"], "initial_rbar");
  }
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    fail(node, std::string("invalid agent settings: ") + e.what());
  }
  return c;
}

EnvSpec parse_env(const YAML::Node& node) {
  check_keys(node, {"kind", "mdp_seed", "num_states", "num_actions", "reward_span", "reward_noise_std"}, "env");
  EnvSpec env;
  const auto kind = node["kind"] ? scalar<std::string>(node["kind"], "kind") : std::string("catch");
  if (kind == "catch") env.kind = EnvKind::catch_game;
  else if (kind == "pendulum") env.kind = EnvKind::pendulum;
  else if (kind == "tabular") env.kind = EnvKind::tabular;
  else fail(node["kind"], "unknown env kind '" + kind + "' (expected catch, pendulum or tabular)");
  if (env.kind != EnvKind::tabular) {
    for (const char* key : {"mdp_seed", "num_states", "num_actions", "reward_span", "reward_noise_std"}) {
      if (node[key]) fail(node[key], std::string("'") + key + "' only applies to tabular environments");
    }
  }
  if (node["mdp_seed"]) env.mdp_seed = scalar<std::uint64_t>(node["mdp_seed"], "mdp_seed");
  if (node["num_states"]) env.num_states = scalar<int>(node["num_states"], "num_states");
  if (node["num_actions"]) env.num_actions = scalar<int>(node["num_actions"], "num_actions");
  if (node["reward_span"]) env.reward_span = scalar<double>(node["reward_span"], "reward_span");
  if (node["reward_noise_std"]) env.reward_noise_std = scalar<double>(node["reward_noise_std"], "reward_noise_std");
  if (env.num_states < 2 || env.num_actions < 1) fail(node, "tabular env needs num_states >= 2 and num_actions >= 1");
  if (env.reward_noise_std < 0.0) fail(node, "reward_noise_std must be non-negative");
  return env;
}

WrapperSpec parse_wrapper(const YAML::Node& node) {
  require_map(node, "wrapper");
  if (!node["kind"]) fail(node, "every wrapper needs a 'kind'");
  const auto kind = scalar<std::string>(node["kind"], "kind");
  WrapperSpec w;
  if (kind == "random_reset") {
    w.kind = WrapperKind::random_reset;
    check_keys(node, {"kind", "probability"}, "random_reset wrapper");
    if (node["probability"]) w.probability = scalar<double>(node["probability"], "probability");
    if (!(w.probability >= 0.0 && w.probability <= 1.0)) fail(node, "reset probability must lie in [0, 1]");
  } else if (kind == "reset_as_transition") {
    w.kind = WrapperKind::reset_as_transition;
    check_keys(node, {"kind", "reset_cost", "failure_states"}, "reset_as_transition wrapper");
    if (node["reset_cost"]) w.reset_cost = scalar<double>(node["reset_cost"], "reset_cost");
    if (!node["failure_states"]) fail(node, "reset_as_transition needs 'failure_states'");
    w.failure_states = sequence<int>(node["failure_states"], "failure_states");
  } else if (kind == "agent_controlled_reset") {
    w.kind = WrapperKind::agent_controlled_reset;
    check_keys(node, {"kind", "reset_cost"}, "agent_controlled_reset wrapper");
    if (node["reset_cost"]) w.reset_cost = scalar<double>(node["reset_cost"], "reset_cost");
  } else if (kind == "reward_offset") {
    w.kind = WrapperKind::reward_offset;
    check_keys(node, {"kind", "offset"}, "reward_offset wrapper");
    if (node["offset"]) w.offset = scalar<double>(node["offset"], "offset");
  } else if (kind == "angle_wrap") {
    w.kind = WrapperKind::angle_wrap;
    check_keys(node, {"kind", "indices", "centered"}, "angle_wrap wrapper");
    w.angle_indices = node["indices"] ? sequence<int>(node["indices"], "indices") : std::vector<int>{0};
    if (node["centered"]) w.centered = scalar<bool>(node["centered"], "centered");
  } else {
    fail(node["kind"], "unknown wrapper kind '" + kind + "'");
  }
  if (!(w.reset_cost >= 0.0)) fail(node, "reset_cost must be non-negative");
  return w;
}

const std::set<std::string> kArmKeys{"preset", "env", "wrappers", "agent", "steps", "logging", "evaluation"};

ArmSettings parse_arm_settings(const YAML::Node& node) {
  check_keys(node, kArmKeys, "arm settings");
  ArmSettings s;
  if (node["preset"]) s.preset = scalar<std::string>(node["preset"], "preset");
  if (node["env"]) s.env = parse_env(node["env"]);
  if (const auto wrappers = node["wrappers"]) {
    if (!wrappers.IsSequence() && !wrappers.IsNull()) fail(wrappers, "'wrappers' must be a list");
    for (const auto& w : wrappers) s.wrappers.push_back(parse_wrapper(w));
  }
  if (!node["agent"]) fail(node, "'agent' is required");
  s.agent = parse_agent(node["agent"], s.preset);
  if (node["steps"]) s.steps = scalar<long>(node["steps"], "steps");
  if (const auto logging = node["logging"]) {
    check_keys(logging, {"stride", "trace_states"}, "logging");
    if (logging["stride"]) s.log_stride = scalar<long>(logging["stride"], "stride");
    if (logging["trace_states"]) s.trace_states = scalar<bool>(logging["trace_states"], "trace_states");
  }
  if (const auto evaluation = node["evaluation"]) {
    check_keys(evaluation, {"window"}, "evaluation");
    if (evaluation["window"]) s.window = scalar<long>(evaluation["window"], "window");
  }
  if (s.steps < 1) fail(node, "steps must be positive");
  if (s.steps < s.agent.warmup_steps) fail(node, "steps must be at least the warmup length");
  if (s.log_stride < 1) fail(node, "logging.stride must be positive");
  if (s.window < 1 || s.window > s.steps) fail(node, "evaluation.window must lie in [1, steps]");
  if (s.window % s.log_stride != 0) fail(node, "logging.stride must divide evaluation.window");
  if (s.steps % s.log_stride != 0) fail(node, "logging.stride must divide steps");
  return s;
}

bool valid_arm_name(const std::string& name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  });
}

void emit_arm_settings(YAML::Emitter& out, const ArmSettings& s) {
  out << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << s.preset;
  out << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.env.kind);
  if (s.env.kind == EnvKind::tabular) {
    out << YAML::Key << "mdp_seed" << YAML::Value << s.env.mdp_seed;
    out << YAML::Key << "num_states" << YAML::Value << s.env.num_states;
    out << YAML::Key << "num_actions" << YAML::Value << s.env.num_actions;
    out << YAML::Key << "reward_span" << YAML::Value << s.env.reward_span;
    out << YAML::Key << "reward_noise_std" << YAML::Value << s.env.reward_noise_std;
  }
  out << YAML::EndMap;
  out << YAML::Key << "wrappers" << YAML::Value << YAML::BeginSeq;
  for (const auto& w : s.wrappers) {
    out << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << to_string(w.kind);
    switch (w.kind) {
      case WrapperKind::random_reset: out << YAML::Key << "probability" << YAML::Value << w.probability; break;
      case WrapperKind::reset_as_transition:
        out << YAML::Key << "reset_cost" << YAML::Value << w.reset_cost;
        out << YAML::Key << "failure_states" << YAML::Value << YAML::Flow << w.failure_states;
        break;
      case WrapperKind::agent_controlled_reset: out << YAML::Key << "reset_cost" << YAML::Value << w.reset_cost; break;
      case WrapperKind::reward_offset: out << YAML::Key << "offset" << YAML::Value << w.offset; break;
      case WrapperKind::angle_wrap:
        out << YAML::Key << "indices" << YAML::Value << YAML::Flow << w.angle_indices;
        out << YAML::Key << "centered" << YAML::Value << w.centered;
        break;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  const AgentConfig& a = s.agent;
  out << YAML::Key << "agent" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "algorithm" << YAML::Value << a.algorithm;
  out << YAML::Key << "activation" << YAML::Value << to_string(a.activation);
  out << YAML::Key << "relative_mode" << YAML::Value << to_string(a.relative_mode);
  out << YAML::Key << "reference_pairs" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& [st, ac] : a.reference_pairs) {
    out << YAML::Flow << YAML::BeginSeq << st << ac << YAML::EndSeq;
  }
  out << YAML::EndSeq;
  for (const auto& f : agent_fields()) {
    emit_agent_field(out, a, f);
  }
  out << YAML::Key << "centering" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << to_string(a.centering.mode);
  out << YAML::Key << "beta" << YAML::Value << a.centering.beta;
  out << YAML::Key << "initial_rbar" << YAML::Value << a.centering.initial_rbar;
  out << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "steps" << YAML::Value << s.steps;
  out << YAML::Key << "logging" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "stride" << YAML::Value << s.log_stride;
  out << YAML::Key << "trace_states" << YAML::Value << s.trace_states;
  out << YAML::EndMap;
  out << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "window" << YAML::Value << s.window;
  out << YAML::EndMap;
  out << YAML::EndMap;
}

void check_compatible(const ArmSettings& settings, const std::string& arm) {
  try {
    auto env = make_environment(settings, 0);
    make_agent(effective_agent_config(settings), env->observation_space(), env->action_space(), 0);
  } catch (const std::exception& e) {
    throw ConfigError("arm '" + arm + "': " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

ExperimentConfig parse_config_string(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ": " + e.what());
  }
  try {
    std::set<std::string> allowed{"name", "seeds", "output_dir", "arms", "comparisons"};
    allowed.insert(kArmKeys.begin(), kArmKeys.end());
    check_keys(root, allowed, "the top level");

    ExperimentConfig config;
    if (root["name"]) config.name = scalar<std::string>(root["name"], "name");
    if (root["output_dir"]) config.output_dir = scalar<std::string>(root["output_dir"], "output_dir");
    if (const auto seeds = root["seeds"]) {
      if (seeds.IsScalar()) {
        const int n = scalar<int>(seeds, "seeds");
        if (n < 1) fail(seeds, "seeds must be positive");
        config.seeds.clear();
        for (int i = 0; i < n; ++i) config.seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        config.seeds = sequence<std::uint64_t>(seeds, "seeds");
      }
      if (config.seeds.empty()) fail(seeds, "seeds must not be empty");
      if (std::set<std::uint64_t>(config.seeds.begin(), config.seeds.end()).size() != config.seeds.size()) {
        fail(seeds, "seeds must be distinct");
      }
    }

    YAML::Node base(YAML::NodeType::Map);
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (kArmKeys.contains(key)) base[key] = kv.second;
    }

    if (const auto arms = root["arms"]) {
      if (!arms.IsSequence() || arms.size() == 0) fail(arms, "'arms' must be a non-empty list");
      for (const auto& arm : arms) {
        check_keys(arm, {"name", "overrides"}, "arm");
        if (!arm["name"]) fail(arm, "every arm needs a name");
        Arm a;
        a.name = scalar<std::string>(arm["name"], "name");
        const YAML::Node merged = arm["overrides"] ? merge_nodes(base, arm["overrides"]) : base;
        if (arm["overrides"]) check_keys(arm["overrides"], kArmKeys, "arm overrides");
        a.settings = parse_arm_settings(merged);
        config.arms.push_back(std::move(a));
      }
    } else {
      config.arms.push_back({config.name, parse_arm_settings(base)});
    }

    std::set<std::string> names;
    for (const auto& arm : config.arms) {
      if (!valid_arm_name(arm.name)) throw ConfigError("arm name '" + arm.name + "' must use [A-Za-z0-9_.-]");
      if (!names.insert(arm.name).second) throw ConfigError("duplicate arm name '" + arm.name + "'");
    }

    if (const auto comparisons = root["comparisons"]) {
      if (!comparisons.IsSequence()) fail(comparisons, "'comparisons' must be a list");
      for (const auto& c : comparisons) {
        check_keys(c, {"candidate", "reference", "baseline"}, "comparison");
        ComparisonSpec spec;
        for (auto [key, field] : {std::pair{"candidate", &spec.candidate}, std::pair{"reference", &spec.reference},
                                  std::pair{"baseline", &spec.baseline}}) {
          if (!c[key]) fail(c, std::string("comparison needs '") + key + "'");
          *field = scalar<std::string>(c[key], key);
          if (!names.contains(*field)) fail(c[key], "comparison names unknown arm '" + *field + "'");
        }
        config.comparisons.push_back(spec);
      }
    }

    for (const auto& arm : config.arms) {
      check_compatible(arm.settings, arm.name);
    }
    return config;
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_string(buffer.str(), path.string());
}

std::string emit_config(const ExperimentConfig& config) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << config.name;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << config.seeds;
  out << YAML::Key << "output_dir" << YAML::Value << config.output_dir;
  out << YAML::Key << "arms" << YAML::Value << YAML::BeginSeq;
  for (const auto& arm : config.arms) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << arm.name;
    out << YAML::Key << "overrides" << YAML::Value;
    emit_arm_settings(out, arm.settings);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "comparisons" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : config.comparisons) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "candidate" << YAML::Value << c.candidate << YAML::Key
        << "reference" << YAML::Value << c.reference << YAML::Key << "baseline" << YAML::Value << c.baseline
        << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : emit_config(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Running

std::unique_ptr<Environment> make_environment(const ArmSettings& settings, std::uint64_t seed) {
  std::unique_ptr<Environment> env;
  const Rng dynamics = child_stream(seed, "env");
  switch (settings.env.kind) {
    case EnvKind::catch_game: env = std::make_unique<CatchEnv>(dynamics); break;
    case EnvKind::pendulum: env = std::make_unique<PendulumEnv>(dynamics); break;
    case EnvKind::tabular: {
      auto mdp = std::make_shared<const DiscreteMdp>(generate_random_mdp(
          settings.env.mdp_seed, settings.env.num_states, settings.env.num_actions, settings.env.reward_span));
      env = std::make_unique<TabularEnv>(std::move(mdp), dynamics, settings.env.reward_noise_std);
      break;
    }
  }
  for (std::size_t i = 0; i < settings.wrappers.size(); ++i) {
    const WrapperSpec& w = settings.wrappers[i];
    const Rng rng = child_stream(seed, "reset/" + std::to_string(i));
    switch (w.kind) {
      case WrapperKind::random_reset:
        env = std::make_unique<RandomResetWrapper>(std::move(env), w.probability, rng);
        break;
      case WrapperKind::reset_as_transition:
        if (!is_discrete(env->observation_space())) {
          throw std::invalid_argument("reset_as_transition failure states need a tabular environment");
        }
        for (int s : w.failure_states) {
          if (s < 0 || s >= space_size(env->observation_space())) {
            throw std::invalid_argument("failure state out of range");
          }
        }
        env = std::make_unique<ResetAsTransitionWrapper>(std::move(env), failure_states(w.failure_states),
                                                         ResetConfig{w.reset_cost}, rng);
        break;
      case WrapperKind::agent_controlled_reset:
        env = std::make_unique<AgentControlledResetWrapper>(std::move(env), ResetConfig{w.reset_cost}, rng);
        break;
      case WrapperKind::reward_offset: env = std::make_unique<RewardOffsetWrapper>(std::move(env), w.offset); break;
      case WrapperKind::angle_wrap:
        env = std::make_unique<AngleWrapWrapper>(std::move(env), w.angle_indices, w.centered);
        break;
    }
  }
  return env;
}

AgentConfig effective_agent_config(const ArmSettings& settings) {
  AgentConfig agent = settings.agent;
  for (const auto& w : settings.wrappers) {
    if (w.kind == WrapperKind::agent_controlled_reset) {
      agent.agent_controlled_reset = true;
    }
  }
  return agent;
}

std::vector<const RunResult*> SweepResult::runs_for(const std::string& arm) const {
  std::vector<const RunResult*> out;
  for (const auto& r : runs) {
    if (r.arm == arm) out.push_back(&r);
  }
  return out;
}

RunResult run_single(const std::string& arm, const ArmSettings& settings, std::uint64_t seed, const std::string& hash) {
  RunResult result{arm, seed, RunLog(settings.log_stride, settings.trace_states), false, 0, {}};
  result.log.seed = seed;
  result.log.config_hash = hash;
  auto env = make_environment(settings, seed);
  auto agent = make_agent(effective_agent_config(settings), env->observation_space(), env->action_space(), seed);
  Observation obs = env->observation();
  long t = 1;
  try {
    for (; t <= settings.steps; ++t) {
      const ActMode mode = t <= settings.agent.warmup_steps ? ActMode::warmup : ActMode::explore;
      const Action action = agent->act(obs, mode);
      EnvStep step = env->step(action);
      agent->observe(Transition{obs, action, step.reward, step.observation});
      const auto& estimator = agent->estimator();
      result.log.append(t, step.reward, step.reset_occurred,
                        estimator.enabled() ? std::optional<double>(estimator.value()) : std::nullopt, &obs);
      obs = std::move(step.observation);
    }
  } catch (const std::runtime_error& e) {
    result.failed = true;
    result.failure_step = t;
    result.failure_message = e.what();
    spdlog::warn("run {} seed {} failed at step {}: {}", arm, seed, t, e.what());
  }
  result.log.finish();
  return result;
}

SweepResult run_experiment(const ExperimentConfig& config, int workers) {
  struct Task {
    const Arm* arm;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& arm : config.arms) {
    for (auto seed : config.seeds) tasks.push_back({&arm, seed});
  }
  SweepResult sweep;
  sweep.config_hash = config_hash(config);
  std::vector<std::optional<RunResult>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = run_single(tasks[i].arm->name, tasks[i].arm->settings, tasks[i].seed, sweep.config_hash);
        spdlog::info("finished {} seed {}", tasks[i].arm->name, tasks[i].seed);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < count; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (error) std::rethrow_exception(error);
  for (auto& r : results) sweep.runs.push_back(std::move(*r));
  return sweep;
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<ArmSummary> summarize_arms(const SweepResult& sweep, const std::map<std::string, long>& windows) {
  std::vector<ArmSummary> arms;
  for (const auto& run : sweep.runs) {
    auto it = std::find_if(arms.begin(), arms.end(), [&](const ArmSummary& a) { return a.name == run.arm; });
    if (it == arms.end()) {
      arms.push_back({run.arm, {}, {}, {}, 0});
      it = std::prev(arms.end());
    }
    it->seeds.push_back(run.seed);
    if (run.failed) {
      ++it->failures;
      continue;
    }
    const auto w = windows.find(run.arm);
    it->finals.push_back(windowed_reward_rate(run.log, w == windows.end() ? 10'000 : w->second));
  }
  for (auto& a : arms) a.final_rate = summarize(a.finals);
  return arms;
}

std::vector<ComparisonReport> aggregate(const std::vector<ArmSummary>& arms,
                                        const std::vector<ComparisonSpec>& comparisons) {
  const auto find = [&](const std::string& name) -> const ArmSummary& {
    for (const auto& a : arms) {
      if (a.name == name) return a;
    }
    throw std::invalid_argument("comparison names unknown arm '" + name + "'");
  };
  std::vector<ComparisonReport> reports;
  for (const auto& spec : comparisons) {
    const ArmSummary& cand = find(spec.candidate);
    const ArmSummary& ref = find(spec.reference);
    const ArmSummary& base = find(spec.baseline);
    ComparisonReport r;
    r.arms = spec;
    r.candidate = cand.final_rate;
    r.reference = ref.final_rate;
    r.baseline = base.final_rate;
    r.improvement = percent_improvement(r.candidate.mean, r.reference.mean, r.baseline.mean);
    r.welch = welch_t_test(cand.finals, ref.finals);
    r.significant = r.welch.p < 0.05;
    reports.push_back(r);
  }
  return reports;
}

std::string best_arm(const std::vector<ArmSummary>& arms, const std::vector<std::string>& names) {
  const ArmSummary* best = nullptr;
  for (const auto& a : arms) {
    if (std::find(names.begin(), names.end(), a.name) == names.end() || a.finals.empty()) continue;
    if (!best || a.final_rate.mean > best->final_rate.mean) best = &a;
  }
  if (!best) throw std::invalid_argument("no successful arm among the candidates");
  return best->name;
}

std::vector<ComparisonSpec> parse_comparisons(const std::string& spec) {
  std::vector<ComparisonSpec> out;
  std::stringstream items(spec);
  std::string item;
  while (std::getline(items, item, ',')) {
    std::vector<std::string> parts;
    std::stringstream fields(item);
    std::string part;
    while (std::getline(fields, part, ':')) parts.push_back(part);
    if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
      throw std::invalid_argument("comparison '" + item + "' must look like candidate:reference:baseline");
    }
    out.push_back({parts[0], parts[1], parts[2]});
  }
  if (out.empty()) throw std::invalid_argument("empty comparison spec");
  return out;
}

ComparisonSpec resolve_best(const std::vector<ArmSummary>& arms, const ComparisonSpec& spec) {
  const auto pick = [&](const std::string& field) {
    std::vector<std::string> names;
    std::stringstream alternatives(field);
    std::string name;
    while (std::getline(alternatives, name, '|')) names.push_back(name);
    if (names.size() == 1) return names[0];
    return best_arm(arms, names);
  };
  return {pick(spec.candidate), pick(spec.reference), pick(spec.baseline)};
}

}  // namespace crl
