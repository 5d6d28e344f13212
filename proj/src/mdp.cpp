#include "crl/mdp.hpp"

#include "crl/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

namespace crl {

namespace {

constexpr double kProbTolerance = 1e-12;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& row, const std::string& what) {
  if ((row.array() < 0.0).any()) {
    throw std::invalid_argument(what + " has a negative entry");
  }
  if (std::abs(row.sum() - 1.0) > kProbTolerance) {
    throw std::invalid_argument(what + " does not sum to 1");
  }
}

}  // namespace

TabularPolicy TabularPolicy::uniform(int num_states, int num_actions) {
  return {Eigen::MatrixXd::Constant(num_states, num_actions, 1.0 / num_actions)};
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int num_actions) {
  TabularPolicy policy{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), num_actions)};
  for (std::size_t s = 0; s < actions.size(); ++s) {
    policy.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return policy;
}

void validate(const DiscreteMdp& mdp) {
  if (mdp.num_states < 1 || mdp.num_actions < 1) {
    throw std::invalid_argument("MDP needs at least one state and one action");
  }
  if (static_cast<int>(mdp.transition.size()) != mdp.num_actions) {
    throw std::invalid_argument("transition tensor has the wrong number of actions");
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    const auto& p = mdp.transition[static_cast<std::size_t>(a)];
    if (p.rows() != mdp.num_states || p.cols() != mdp.num_states) {
      throw std::invalid_argument("transition matrix has the wrong shape");
    }
    for (int s = 0; s < mdp.num_states; ++s) {
      check_distribution(p.row(s).transpose(),
                         "transition row (s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")");
    }
  }
  if (mdp.reward.rows() != mdp.num_states || mdp.reward.cols() != mdp.num_actions) {
    throw std::invalid_argument("reward matrix has the wrong shape");
  }
  if (!mdp.reward.allFinite()) {
    throw std::invalid_argument("reward matrix has non-finite entries");
  }
  if (mdp.initial_dist.size() != mdp.num_states) {
    throw std::invalid_argument("initial distribution has the wrong length");
  }
  check_distribution(mdp.initial_dist, "initial distribution");
}

void validate(const TabularPolicy& policy, const DiscreteMdp& mdp) {
  if (policy.probs.rows() != mdp.num_states || policy.probs.cols() != mdp.num_actions) {
    throw std::invalid_argument("policy has the wrong shape");
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    check_distribution(policy.probs.row(s).transpose(), "policy row " + std::to_string(s));
  }
}

Eigen::MatrixXd policy_transition(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a) {
    p += policy.probs.col(a).asDiagonal() * mdp.transition[static_cast<std::size_t>(a)];
  }
  return p;
}

Eigen::VectorXd policy_reward(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  return (policy.probs.array() * mdp.reward.array()).rowwise().sum();
}

Eigen::VectorXd exact_discounted_values(const DiscreteMdp& mdp, const TabularPolicy& policy, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("discounted values need gamma in [0, 1)");
  }
  validate(mdp);
  validate(policy, mdp);
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(mdp.num_states, mdp.num_states) - gamma * policy_transition(mdp, policy);
  return system.partialPivLu().solve(policy_reward(mdp, policy));
}

Eigen::VectorXd stationary_distribution(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  validate(mdp);
  validate(policy, mdp);
  const int n = mdp.num_states;
  const Eigen::MatrixXd p = policy_transition(mdp, policy);

  // Rows 0..n-1: (P^T - I) d = 0, row n: 1^T d = 1.
  Eigen::MatrixXd system(n + 1, n);
  system.topRows(n) = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  system.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
  qr.setThreshold(1e-10);
  if (qr.rank() < n) {
    throw SolverError("stationary distribution is not unique (policy chain has several recurrent classes)");
  }
  Eigen::VectorXd d = qr.solve(rhs);
  const double residual = (system * d - rhs).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10) {
    throw SolverError("stationary distribution solve did not converge (residual " + std::to_string(residual) +
                      ")");
  }
  // Clean up round-off so d is a probability vector.
  d = d.cwiseMax(0.0);
  d /= d.sum();
  return d;
}

double reward_rate_exact(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  return stationary_distribution(mdp, policy).dot(policy_reward(mdp, policy));
}

ExactSolution solve_exact(const DiscreteMdp& mdp, const TabularPolicy& policy, double gamma) {
  ExactSolution solution;
  solution.gamma = gamma;
  solution.v_pi = exact_discounted_values(mdp, policy, gamma);
  solution.d_pi = stationary_distribution(mdp, policy);
  solution.reward_rate = solution.d_pi.dot(policy_reward(mdp, policy));
  return solution;
}

Eigen::MatrixXd optimal_action_values(const DiscreteMdp& mdp, double gamma, double tolerance,
                                      int max_iterations) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("value iteration needs gamma in [0, 1)");
  }
  validate(mdp);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd v = q.rowwise().maxCoeff();
    Eigen::MatrixXd next(mdp.num_states, mdp.num_actions);
    for (int a = 0; a < mdp.num_actions; ++a) {
      next.col(a) = mdp.reward.col(a) + gamma * mdp.transition[static_cast<std::size_t>(a)] * v;
    }
    const double residual = (next - q).lpNorm<Eigen::Infinity>();
    q = std::move(next);
    if (residual < tolerance) {
      return q;
    }
  }
  throw SolverError("value iteration did not reach the requested tolerance");
}

std::vector<int> greedy_actions(const Eigen::MatrixXd& q) {
  std::vector<int> actions(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a) {
      if (q(s, a) > q(s, best)) {
        best = static_cast<int>(a);
      }
    }
    actions[static_cast<std::size_t>(s)] = best;
  }
  return actions;
}

bool is_weakly_communicating(const DiscreteMdp& mdp) {
  const int n = mdp.num_states;
  std::vector<std::vector<int>> edges(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    for (int next = 0; next < n; ++next) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        if (mdp.p(s, a, next) > 0.0) {
          edges[static_cast<std::size_t>(s)].push_back(next);
          break;
        }
      }
    }
  }

  // Tarjan's strongly connected components.
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  std::vector<int> low(static_cast<std::size_t>(n), 0);
  std::vector<int> component(static_cast<std::size_t>(n), -1);
  std::vector<bool> on_stack(static_cast<std::size_t>(n), false);
  std::vector<int> stack;
  int counter = 0;
  int num_components = 0;

  std::function<void(int)> visit = [&](int v) {
    const auto vi = static_cast<std::size_t>(v);
    index[vi] = low[vi] = counter++;
    stack.push_back(v);
    on_stack[vi] = true;
    for (int w : edges[vi]) {
      const auto wi = static_cast<std::size_t>(w);
      if (index[wi] < 0) {
        visit(w);
        low[vi] = std::min(low[vi], low[wi]);
      } else if (on_stack[wi]) {
        low[vi] = std::min(low[vi], index[wi]);
      }
    }
    if (low[vi] == index[vi]) {
      int w = -1;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<std::size_t>(w)] = false;
        component[static_cast<std::size_t>(w)] = num_components;
      } while (w != v);
      ++num_components;
    }
  };
  for (int s = 0; s < n; ++s) {
    if (index[static_cast<std::size_t>(s)] < 0) {
      visit(s);
    }
  }

  std::vector<bool> has_exit(static_cast<std::size_t>(num_components), false);
  for (int s = 0; s < n; ++s) {
    for (int next : edges[static_cast<std::size_t>(s)]) {
      if (component[static_cast<std::size_t>(s)] != component[static_cast<std::size_t>(next)]) {
        has_exit[static_cast<std::size_t>(component[static_cast<std::size_t>(s)])] = true;
      }
    }
  }
  return std::count(has_exit.begin(), has_exit.end(), false) == 1;
}

DiscreteMdp generate_random_mdp(std::uint64_t seed, int num_states, int num_actions, double reward_span,
                                double mixing) {
  if (num_states < 2 || num_actions < 1) {
    throw std::invalid_argument("random MDP needs at least 2 states and 1 action");
  }
  if (!(mixing > 0.0 && mixing <= 1.0)) {
    throw std::invalid_argument("mixing weight must lie in (0, 1]");
  }
  Rng rng = child_stream(seed, "random_mdp");
  DiscreteMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.transition.assign(static_cast<std::size_t>(num_actions), Eigen::MatrixXd::Zero(num_states, num_states));
  for (int a = 0; a < num_actions; ++a) {
    auto& p = mdp.transition[static_cast<std::size_t>(a)];
    for (int s = 0; s < num_states; ++s) {
      // Exponential weights give a flat Dirichlet draw.
      Eigen::VectorXd weights(num_states);
      for (int next = 0; next < num_states; ++next) {
        weights(next) = -std::log(1.0 - uniform01(rng));
      }
      weights /= weights.sum();
      p.row(s) = ((1.0 - mixing) * weights.array() + mixing / num_states).matrix().transpose();
      p.row(s) /= p.row(s).sum();
    }
  }
  mdp.reward.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      mdp.reward(s, a) = reward_span * (2.0 * uniform01(rng) - 1.0);
    }
  }
  mdp.initial_dist = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  return mdp;
}

TabularPolicy generate_random_policy(std::uint64_t seed, int num_states, int num_actions) {
  Rng rng = child_stream(seed, "random_policy");
  TabularPolicy policy{Eigen::MatrixXd(num_states, num_actions)};
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      policy.probs(s, a) = 0.1 + uniform01(rng);
    }
    policy.probs.row(s) /= policy.probs.row(s).sum();
  }
  return policy;
}

std::string mdp_to_json(const DiscreteMdp& mdp) {
  using nlohmann::json;
  json transition = json::array();
  for (int s = 0; s < mdp.num_states; ++s) {
    json per_action = json::array();
    for (int a = 0; a < mdp.num_actions; ++a) {
      json row = json::array();
      for (int next = 0; next < mdp.num_states; ++next) {
        row.push_back(mdp.p(s, a, next));
      }
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  json reward = json::array();
  for (int s = 0; s < mdp.num_states; ++s) {
    json row = json::array();
    for (int a = 0; a < mdp.num_actions; ++a) {
      row.push_back(mdp.reward(s, a));
    }
    reward.push_back(std::move(row));
  }
  json initial = json::array();
  for (int s = 0; s < mdp.num_states; ++s) {
    initial.push_back(mdp.initial_dist(s));
  }
  json doc{{"num_states", mdp.num_states},
           {"num_actions", mdp.num_actions},
           {"transition", std::move(transition)},
           {"reward", std::move(reward)},
           {"initial_dist", std::move(initial)}};
  return doc.dump(2);
}

DiscreteMdp mdp_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("MDP JSON: ") + e.what());
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "num_states" && key != "num_actions" && key != "transition" && key != "reward" &&
        key != "initial_dist") {
      throw std::invalid_argument("MDP JSON: unknown key '" + key + "'");
    }
  }
  DiscreteMdp mdp;
  try {
    mdp.num_states = doc.at("num_states").get<int>();
    mdp.num_actions = doc.at("num_actions").get<int>();
    if (mdp.num_states < 1 || mdp.num_actions < 1) {
      throw std::invalid_argument("MDP JSON: sizes must be positive");
    }
    const auto& transition = doc.at("transition");
    const auto& reward = doc.at("reward");
    const auto& initial = doc.at("initial_dist");
    if (transition.size() != static_cast<std::size_t>(mdp.num_states) ||
        reward.size() != static_cast<std::size_t>(mdp.num_states) ||
        initial.size() != static_cast<std::size_t>(mdp.num_states)) {
      throw std::invalid_argument("MDP JSON: array lengths do not match num_states");
    }
    mdp.transition.assign(static_cast<std::size_t>(mdp.num_actions),
                          Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states));
    mdp.reward.resize(mdp.num_states, mdp.num_actions);
    mdp.initial_dist.resize(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
      const auto& per_action = transition.at(static_cast<std::size_t>(s));
      if (per_action.size() != static_cast<std::size_t>(mdp.num_actions) ||
          reward.at(static_cast<std::size_t>(s)).size() != static_cast<std::size_t>(mdp.num_actions)) {
        throw std::invalid_argument("MDP JSON: array lengths do not match num_actions");
      }
      for (int a = 0; a < mdp.num_actions; ++a) {
        const auto& row = per_action.at(static_cast<std::size_t>(a));
        if (row.size() != static_cast<std::size_t>(mdp.num_states)) {
          throw std::invalid_argument("MDP JSON: transition row length does not match num_states");
        }
        for (int next = 0; next < mdp.num_states; ++next) {
          mdp.transition[static_cast<std::size_t>(a)](s, next) = row.at(static_cast<std::size_t>(next)).get<double>();
        }
        mdp.reward(s, a) = reward.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(a)).get<double>();
      }
      mdp.initial_dist(s) = initial.at(static_cast<std::size_t>(s)).get<double>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("MDP JSON: ") + e.what());
  }
  validate(mdp);
  return mdp;
}

}  // namespace crl
