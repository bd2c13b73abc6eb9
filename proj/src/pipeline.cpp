#include "ranklab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "ranklab/diffusion.hpp"
#include "ranklab/errors.hpp"

namespace ranklab {

ToyWorld WorldSpec::build() const {
  return ToyWorld::ring(dim, num_conditions, radius, variance);
}

void RunConfig::validate() const {
  if (threads < 1) throw std::invalid_argument("config: threads < 1");
  if (world.dim < 2) throw std::invalid_argument("config: world dim < 2");
  if (world.num_conditions < 1)
    throw std::invalid_argument("config: num_conditions < 1");
  if (!(world.radius > 0.0) || !(world.variance > 0.0))
    throw std::invalid_argument("config: world radius/variance must be positive");
  if (schedule_steps < 1) throw std::invalid_argument("config: schedule steps < 1");
  if (time_embed_dim < 1 || cond_embed_dim < 1)
    throw std::invalid_argument("config: embedding dims must be positive");
  if (generators.size() < 2)
    throw std::invalid_argument("config: need at least 2 generators");
  std::set<std::string> ids;
  for (const GeneratorSpec& gen : generators) {
    if (gen.id.empty()) throw std::invalid_argument("config: empty generator id");
    if (!ids.insert(gen.id).second)
      throw std::invalid_argument("config: duplicate generator id " + gen.id);
    if (gen.train_steps < 1 || gen.batch_size < 1)
      throw std::invalid_argument("config: generator budget must be positive");
    if (!(gen.learning_rate > 0.0))
      throw std::invalid_argument("config: generator learning rate must be positive");
    if (gen.hidden.empty())
      throw std::invalid_argument("config: generator needs hidden layers");
  }
  if (ensemble.n < 1) throw std::invalid_argument("config: ensemble n < 1");
  if (!(ensemble.noise_scale >= 0.0))
    throw std::invalid_argument("config: ensemble noise scale < 0");
  if (data.num_prompts < 1) throw std::invalid_argument("config: num_prompts < 1");
  if (data.file.empty()) throw std::invalid_argument("config: empty dataset file");
  if (out_dir.empty()) throw std::invalid_argument("config: empty out_dir");
  train.validate();
  if (eval.samples_per_condition < 1)
    throw std::invalid_argument("config: eval samples_per_condition < 1");
  if (eval.ranking_trials < 1)
    throw std::invalid_argument("config: eval ranking_trials < 1");
  if (checkpoint_every < 0)
    throw std::invalid_argument("config: checkpoint_every < 0");
}

Architecture RunConfig::architecture(const std::vector<int>& hidden) const {
  Architecture arch;
  arch.dim = world.dim;
  arch.num_conditions = world.num_conditions;
  arch.total_steps = schedule_steps;
  arch.time_embed_dim = time_embed_dim;
  arch.cond_embed_dim = cond_embed_dim;
  arch.hidden = hidden;
  arch.validate();
  return arch;
}

RunConfig default_toy_config() {
  RunConfig config;
  config.seed = 42;
  config.threads = 1;
  config.out_dir = "out";
  config.world = WorldSpec{};
  config.schedule_kind = ScheduleKind::linear_vp;
  config.schedule_steps = 100;

  // Budget spread: the first generator is the strongest and becomes the base
  // model; the rest trail off so candidate quality genuinely varies.
  const int budgets[] = {4000, 2000, 1000, 500};
  for (int i = 0; i < 4; ++i) {
    GeneratorSpec gen;
    gen.id = "gen" + std::to_string(i);
    gen.seed = static_cast<std::uint64_t>(i);
    gen.train_steps = budgets[i];
    config.generators.push_back(std::move(gen));
  }

  config.ensemble = EnsembleSpec{};
  config.data = DataSpec{};

  config.train.objective = Objective::rankdpo;
  config.train.steps = 400;
  config.train.batch_size = 64;
  // Calibrated once on the default world and frozen: the pairwise margins
  // beta * (s_w - s_l) stay in the sigmoid's responsive range through
  // training, and the tuned policy clearly beats the frozen reference under
  // the held-out judge. Larger divergence penalties (beta >= 100) pin the
  // policy to the reference and the win rate never leaves ~0.5.
  config.train.learning_rate = 3e-4;
  config.train.beta = 0.5;

  config.eval = EvalSpec{};
  return config;
}

namespace {

using Json = nlohmann::json;

void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                const char* context) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end())
      throw std::invalid_argument(std::string("config: unknown key '") + key +
                                  "' in " + context);
  }
}

template <typename T>
void maybe(const Json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  if (!root.is_object())
    throw std::invalid_argument("config: top level must be an object");

  RunConfig config = default_toy_config();
  check_keys(root,
             {"seed", "threads", "out_dir", "world", "schedule", "model",
              "generators", "ensemble", "data", "train", "eval",
              "checkpoint_every"},
             "top level");
  maybe(root, "seed", config.seed);
  maybe(root, "threads", config.threads);
  maybe(root, "out_dir", config.out_dir);
  maybe(root, "checkpoint_every", config.checkpoint_every);

  if (root.contains("world")) {
    const Json& world = root.at("world");
    check_keys(world, {"dim", "num_conditions", "radius", "variance"}, "world");
    maybe(world, "dim", config.world.dim);
    maybe(world, "num_conditions", config.world.num_conditions);
    maybe(world, "radius", config.world.radius);
    maybe(world, "variance", config.world.variance);
  }
  if (root.contains("schedule")) {
    const Json& schedule = root.at("schedule");
    check_keys(schedule, {"kind", "steps"}, "schedule");
    if (schedule.contains("kind"))
      config.schedule_kind =
          schedule_kind_from_string(schedule.at("kind").get<std::string>());
    maybe(schedule, "steps", config.schedule_steps);
  }
  if (root.contains("model")) {
    const Json& model = root.at("model");
    check_keys(model, {"time_embed_dim", "cond_embed_dim"}, "model");
    maybe(model, "time_embed_dim", config.time_embed_dim);
    maybe(model, "cond_embed_dim", config.cond_embed_dim);
  }
  if (root.contains("generators")) {
    const Json& generators = root.at("generators");
    if (!generators.is_array())
      throw std::invalid_argument("config: generators must be an array");
    config.generators.clear();
    for (const Json& g : generators) {
      check_keys(g,
                 {"id", "seed", "hidden", "train_steps", "batch_size",
                  "learning_rate"},
                 "generator");
      GeneratorSpec gen;
      if (!g.contains("id"))
        throw std::invalid_argument("config: generator without id");
      gen.id = g.at("id").get<std::string>();
      maybe(g, "seed", gen.seed);
      maybe(g, "hidden", gen.hidden);
      maybe(g, "train_steps", gen.train_steps);
      maybe(g, "batch_size", gen.batch_size);
      maybe(g, "learning_rate", gen.learning_rate);
      config.generators.push_back(std::move(gen));
    }
  }
  if (root.contains("ensemble")) {
    const Json& ensemble = root.at("ensemble");
    check_keys(ensemble, {"n", "noise_scale"}, "ensemble");
    maybe(ensemble, "n", config.ensemble.n);
    maybe(ensemble, "noise_scale", config.ensemble.noise_scale);
  }
  if (root.contains("data")) {
    const Json& data = root.at("data");
    check_keys(data, {"num_prompts", "file"}, "data");
    maybe(data, "num_prompts", config.data.num_prompts);
    maybe(data, "file", config.data.file);
  }
  if (root.contains("train")) {
    const Json& train = root.at("train");
    check_keys(train,
               {"objective", "steps", "batch_size", "learning_rate", "beta",
                "normalize_pairs"},
               "train");
    if (train.contains("objective"))
      config.train.objective =
          objective_from_string(train.at("objective").get<std::string>());
    maybe(train, "steps", config.train.steps);
    maybe(train, "batch_size", config.train.batch_size);
    maybe(train, "learning_rate", config.train.learning_rate);
    maybe(train, "beta", config.train.beta);
    maybe(train, "normalize_pairs", config.train.normalize_pairs);
  }
  if (root.contains("eval")) {
    const Json& eval = root.at("eval");
    check_keys(eval, {"samples_per_condition", "ranking_trials"}, "eval");
    maybe(eval, "samples_per_condition", config.eval.samples_per_condition);
    maybe(eval, "ranking_trials", config.eval.ranking_trials);
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("config: cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::filesystem::path generator_checkpoint_path(const RunConfig& config,
                                                const std::string& id) {
  return std::filesystem::path(config.out_dir) / (id + ".ckpt");
}

std::filesystem::path dataset_file_path(const RunConfig& config) {
  return std::filesystem::path(config.out_dir) / config.data.file;
}

std::filesystem::path policy_checkpoint_path(const RunConfig& config,
                                             Objective objective) {
  return std::filesystem::path(config.out_dir) /
         (to_string(objective) + ".ckpt");
}

std::filesystem::path metrics_file_path(const RunConfig& config,
                                        Objective objective) {
  return std::filesystem::path(config.out_dir) /
         (to_string(objective) + "_metrics.jsonl");
}

namespace {

// The derived seed for the preference-training stream; shared by every
// objective so baseline comparisons see identical batches and noise.
std::uint64_t train_stream_seed(const RunConfig& config) {
  return Rng(config.seed).stream("train").base_seed();
}

NoiseSchedule config_schedule(const RunConfig& config) {
  return make_schedule(config.schedule_steps, config.schedule_kind);
}

DenoiserParams load_params_checked(const RunConfig& config,
                                   const std::filesystem::path& path,
                                   const char* what) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error(std::string("missing ") + what + " checkpoint " +
                             path.string() + " (run the earlier stages first)");
  Checkpoint checkpoint = load_checkpoint(path);
  if (checkpoint.params.arch.dim != config.world.dim ||
      checkpoint.params.arch.num_conditions != config.world.num_conditions ||
      checkpoint.params.arch.total_steps != config.schedule_steps)
    throw std::runtime_error(std::string(what) + " checkpoint " +
                             path.string() + " does not match the config");
  return std::move(checkpoint.params);
}

std::vector<Generator> load_generators(const RunConfig& config) {
  std::vector<Generator> generators;
  generators.reserve(config.generators.size());
  for (const GeneratorSpec& spec : config.generators)
    generators.push_back(Generator{
        spec.id,
        load_params_checked(config, generator_checkpoint_path(config, spec.id),
                            "generator")});
  return generators;
}

std::vector<int> prompt_conditions(const RunConfig& config) {
  // Round-robin over conditions: balanced coverage, deterministic.
  std::vector<int> prompts(static_cast<std::size_t>(config.data.num_prompts));
  for (std::size_t p = 0; p < prompts.size(); ++p)
    prompts[p] = static_cast<int>(p % static_cast<std::size_t>(
                                          config.world.num_conditions));
  return prompts;
}

}  // namespace

void cmd_pretrain(const RunConfig& config, std::ostream& log) {
  config.validate();
  const ToyWorld world = config.world.build();
  std::filesystem::create_directories(config.out_dir);
  const Rng base(config.seed);
  for (const GeneratorSpec& spec : config.generators) {
    BaseTrainConfig train_config;
    train_config.arch = config.architecture(spec.hidden);
    train_config.steps = spec.train_steps;
    train_config.batch_size = spec.batch_size;
    train_config.learning_rate = spec.learning_rate;
    Rng rng = base.stream("pretrain", spec.seed);
    const DenoiserParams params = train_base(world, train_config, rng);

    CheckpointInfo info;
    info.seed = config.seed;
    info.schedule_kind = to_string(config.schedule_kind);
    info.schedule_steps = config.schedule_steps;
    const auto path = generator_checkpoint_path(config, spec.id);
    save_checkpoint(path, params, info);
    log << "pretrained " << spec.id << ": steps=" << spec.train_steps
        << " params=" << params.values.size() << " -> " << path.string()
        << "\n";
  }
}

DatagenSummary dataset_summary(const PreferenceDataset& dataset) {
  DatagenSummary summary;
  summary.num_records = static_cast<int>(dataset.records.size());
  summary.k = dataset.meta.k;
  summary.n = dataset.meta.n;
  double phi_sum = 0.0;
  long long phi_count = 0;
  long long tied_pairs = 0;
  long long total_pairs = 0;
  for (const RankedPreferenceRecord& record : dataset.records) {
    for (double phi : record.phi) {
      phi_sum += phi;
      ++phi_count;
    }
    const int k = record.k();
    for (int i = 0; i < k; ++i) {
      for (int j = i + 1; j < k; ++j) {
        ++total_pairs;
        if (record.phi[static_cast<std::size_t>(i)] ==
            record.phi[static_cast<std::size_t>(j)])
          ++tied_pairs;
      }
    }
  }
  summary.mean_phi = phi_sum / static_cast<double>(phi_count);
  summary.tie_fraction =
      static_cast<double>(tied_pairs) / static_cast<double>(total_pairs);
  return summary;
}

DatagenSummary cmd_datagen(const RunConfig& config, std::ostream& log) {
  config.validate();
  const ToyWorld world = config.world.build();
  const NoiseSchedule schedule = config_schedule(config);
  const std::vector<Generator> generators = load_generators(config);
  const RewardEnsemble ensemble =
      make_ensemble(config.ensemble.n, config.ensemble.noise_scale, config.seed);

  const PreferenceDataset dataset =
      datagen(prompt_conditions(config), generators, ensemble, world, schedule,
              config.seed, config.threads);
  const auto path = dataset_file_path(config);
  std::filesystem::create_directories(config.out_dir);
  write_dataset(path.string(), dataset);

  const DatagenSummary summary = dataset_summary(dataset);
  log << "dataset: records=" << summary.num_records << " k=" << summary.k
      << " n=" << summary.n << " mean_phi=" << summary.mean_phi
      << " tie_fraction=" << summary.tie_fraction << " -> " << path.string()
      << "\n";
  return summary;
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const NoiseSchedule schedule = config_schedule(config);
  const auto dataset_path = dataset_file_path(config);
  if (!std::filesystem::exists(dataset_path))
    throw std::runtime_error("missing dataset " + dataset_path.string() +
                             " (run datagen first)");
  const PreferenceDataset dataset = read_dataset(dataset_path.string());

  // The policy starts from the strongest generator; the reference is a frozen
  // copy of the same weights.
  const DenoiserParams theta_base = load_params_checked(
      config, generator_checkpoint_path(config, config.generators.front().id),
      "base");

  TrainConfig train_config = config.train;
  train_config.seed = train_stream_seed(config);

  const auto metrics_path = metrics_file_path(config, train_config.objective);
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics)
    throw std::runtime_error("cannot open metrics log " + metrics_path.string());

  CheckpointInfo info;
  info.seed = train_config.seed;
  info.schedule_kind = to_string(config.schedule_kind);
  info.schedule_steps = config.schedule_steps;

  StepObserver observer;
  if (config.checkpoint_every > 0) {
    observer = [&](int step, const DenoiserParams& params) {
      if ((step + 1) % config.checkpoint_every != 0) return;
      const auto path =
          std::filesystem::path(config.out_dir) /
          (to_string(train_config.objective) + "_step" +
           std::to_string(step + 1) + ".ckpt");
      save_checkpoint(path, params, info);
    };
  }

  const DenoiserParams policy = train_preference(
      dataset, theta_base, theta_base, schedule, train_config, config.threads,
      [&](const StepMetrics& m) { metrics << format_metrics_line(m) << "\n"; },
      observer);
  metrics.flush();
  if (!metrics)
    throw std::runtime_error("failed writing metrics log " +
                             metrics_path.string());

  const auto path = policy_checkpoint_path(config, train_config.objective);
  save_checkpoint(path, policy, info);
  log << "trained " << to_string(train_config.objective)
      << ": steps=" << train_config.steps << " -> " << path.string() << "\n";
}

EvalSummary cmd_eval(const RunConfig& config, std::ostream& log) {
  config.validate();
  const ToyWorld world = config.world.build();
  const NoiseSchedule schedule = config_schedule(config);
  const DenoiserParams policy = load_params_checked(
      config, policy_checkpoint_path(config, config.train.objective), "policy");
  const DenoiserParams reference = load_params_checked(
      config, generator_checkpoint_path(config, config.generators.front().id),
      "base");
  const auto dataset_path = dataset_file_path(config);
  if (!std::filesystem::exists(dataset_path))
    throw std::runtime_error("missing dataset " + dataset_path.string() +
                             " (run datagen first)");
  const PreferenceDataset dataset = read_dataset(dataset_path.string());

  std::vector<int> conditions(static_cast<std::size_t>(config.world.num_conditions));
  std::iota(conditions.begin(), conditions.end(), 0);

  const Rng base(config.seed);
  EvalSummary summary;
  summary.policy_vs_ref = win_rate(
      policy, reference, to_string(config.train.objective),
      "ref:" + config.generators.front().id, held_out_judge(), world, schedule,
      conditions, config.eval.samples_per_condition, base.stream("eval.win"),
      config.threads);
  summary.agreement_before =
      ranking_agreement(reference, reference, dataset, schedule,
                        config.eval.ranking_trials, base.stream("eval.rank"),
                        config.threads);
  summary.agreement_after =
      ranking_agreement(policy, reference, dataset, schedule,
                        config.eval.ranking_trials, base.stream("eval.rank"),
                        config.threads);

  const auto out = std::filesystem::path(config.out_dir);
  write_win_rate_report((out / "eval_win_rate.json").string(),
                        summary.policy_vs_ref);
  write_comparison_log((out / "eval_comparisons.tsv").string(),
                       summary.policy_vs_ref);
  {
    std::ofstream file(out / "eval_ranking.json",
                       std::ios::binary | std::ios::trunc);
    file << format_ranking_agreement(summary.agreement_before) << "\n"
         << format_ranking_agreement(summary.agreement_after) << "\n";
  }
  write_series((out / "tau_series.tsv").string(),
               {{0, summary.agreement_before.mean_kendall_tau},
                {config.train.steps, summary.agreement_after.mean_kendall_tau}});

  log << "win_rate " << summary.policy_vs_ref.model_a << " vs "
      << summary.policy_vs_ref.model_b << ": "
      << summary.policy_vs_ref.win_fraction_a << " +/- "
      << summary.policy_vs_ref.half_width << "\n";
  log << "kendall_tau: before=" << summary.agreement_before.mean_kendall_tau
      << " after=" << summary.agreement_after.mean_kendall_tau << "\n";
  log << "ndcg: before=" << summary.agreement_before.mean_ndcg
      << " after=" << summary.agreement_after.mean_ndcg << "\n";
  return summary;
}

namespace {

RankedPreferenceRecord random_record(int k, int dim, int num_conditions,
                                     int n_rewards, Rng& rng) {
  RankedPreferenceRecord record;
  record.prompt_id = 0;
  record.condition = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_conditions)));
  record.candidates.resize(static_cast<std::size_t>(k));
  for (auto& x : record.candidates) {
    x.resize(static_cast<std::size_t>(dim));
    for (double& v : x) v = 2.0 * rng.normal();
  }
  record.generator_ids.assign(static_cast<std::size_t>(k), "");
  for (int i = 0; i < k; ++i)
    record.generator_ids[static_cast<std::size_t>(i)] = "g" + std::to_string(i);
  std::vector<int> wins(static_cast<std::size_t>(k));
  for (int& w : wins)
    w = static_cast<int>(
        rng.below(static_cast<std::uint64_t>(n_rewards * (k - 1) + 1)));
  record.phi = aggregate_phi(wins, n_rewards);
  record.tau = rank_from_phi(record.phi);
  return record;
}

}  // namespace

double max_fd_rel_error(const DenoiserParams& theta,
                        const std::function<double(const DenoiserParams&)>& loss_of,
                        std::span<const double> analytic_grad, int count,
                        double h, Rng& rng) {
  if (analytic_grad.size() != theta.values.size())
    throw std::invalid_argument("fd check: gradient length mismatch");
  const std::size_t total = theta.values.size();
  // Distinct indices via a partial shuffle, so `count` genuinely different
  // parameters are exercised.
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), 0);
  const std::size_t checks = std::min<std::size_t>(
      static_cast<std::size_t>(count), total);
  for (std::size_t i = 0; i < checks; ++i) {
    const std::size_t j = i + rng.below(static_cast<std::uint64_t>(total - i));
    std::swap(indices[i], indices[j]);
  }

  DenoiserParams work = theta;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < checks; ++i) {
    const std::size_t idx = indices[i];
    const double original = work.values[idx];
    work.values[idx] = original + h;
    const double loss_plus = loss_of(work);
    work.values[idx] = original - h;
    const double loss_minus = loss_of(work);
    work.values[idx] = original;
    const double numeric = (loss_plus - loss_minus) / (2.0 * h);
    const double analytic = analytic_grad[idx];
    // The floor keeps finite-difference roundoff on near-zero gradients from
    // registering as a relative error.
    const double denom =
        std::max({1e-6, std::abs(numeric), std::abs(analytic)});
    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
  }
  return max_rel;
}

GradCheckReport run_gradient_checks(std::uint64_t seed, double tolerance,
                                    int params_to_check) {
  Architecture arch;
  arch.dim = 2;
  arch.num_conditions = 3;
  arch.total_steps = 10;
  arch.time_embed_dim = 4;
  arch.cond_embed_dim = 3;
  arch.hidden = {8, 8};

  const Rng base(seed);
  Rng init_rng = base.stream("gradcheck.theta");
  Rng ref_rng = base.stream("gradcheck.ref");
  const DenoiserParams theta = DenoiserParams::init(arch, init_rng);
  const DenoiserParams theta_ref = DenoiserParams::init(arch, ref_rng);
  const NoiseSchedule schedule =
      make_schedule(arch.total_steps, ScheduleKind::linear_vp);

  Rng record_rng = base.stream("gradcheck.records");
  std::vector<RankedPreferenceRecord> batch;
  for (int r = 0; r < 3; ++r)
    batch.push_back(random_record(4, arch.dim, arch.num_conditions, 5, record_rng));
  std::vector<RecordDraw> draws;
  Rng draw_rng = base.stream("gradcheck.draws");
  for (const auto& record : batch)
    draws.push_back(
        make_record_draw(record.k(), arch.dim, arch.total_steps, draw_rng));

  // A moderate beta keeps the pairwise sigmoids away from saturation, where
  // vanishing gradients would drown the comparison in roundoff.
  const double beta = 2.5;
  RankDpoOptions rank_options;
  rank_options.beta = beta;

  struct Case {
    const char* name;
    std::function<PrefLossResult(const DenoiserParams&)> eval;
  };
  const std::vector<Case> cases = {
      {"rankdpo",
       [&](const DenoiserParams& p) {
         return rankdpo_loss_and_grad_at(p, theta_ref, batch, schedule, draws,
                                         rank_options);
       }},
      {"dpo",
       [&](const DenoiserParams& p) {
         return dpo_loss_and_grad_at(p, theta_ref, batch, schedule, draws, beta);
       }},
      {"sft",
       [&](const DenoiserParams& p) {
         return sft_loss_and_grad_at(p, batch, schedule, draws);
       }},
      {"weighted_sft",
       [&](const DenoiserParams& p) {
         return weighted_sft_loss_and_grad_at(p, batch, schedule, draws);
       }},
      {"dpo_gain",
       [&](const DenoiserParams& p) {
         return dpo_gain_loss_and_grad_at(p, theta_ref, batch, schedule, draws,
                                          beta);
       }},
  };

  GradCheckReport report;
  report.all_pass = true;
  Rng pick_rng = base.stream("gradcheck.pick");
  for (const Case& test_case : cases) {
    const PrefLossResult at_theta = test_case.eval(theta);
    const double max_rel = max_fd_rel_error(
        theta, [&](const DenoiserParams& p) { return test_case.eval(p).loss; },
        at_theta.grad, params_to_check, 1e-5, pick_rng);
    GradCheckEntry entry;
    entry.objective = test_case.name;
    entry.max_rel_error = max_rel;
    entry.pass = max_rel <= tolerance;
    report.all_pass = report.all_pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }

  // Zero-score anchor: with identical policies the ranking loss reduces to
  // ln(2) times the mean total pair weight.
  const PrefLossResult anchor = rankdpo_loss_and_grad_at(
      theta_ref, theta_ref, batch, schedule, draws, rank_options);
  report.anchor_loss = anchor.loss;
  report.anchor_expected = std::log(2.0) * anchor.sum_delta;
  return report;
}

bool cmd_gradcheck(const RunConfig& config, std::ostream& log) {
  const GradCheckReport report = run_gradient_checks(config.seed, 1e-4);
  for (const GradCheckEntry& entry : report.entries)
    log << "gradcheck " << entry.objective << ": max_rel_error="
        << entry.max_rel_error << (entry.pass ? " pass" : " FAIL") << "\n";
  log << "anchor: loss=" << report.anchor_loss
      << " expected=" << report.anchor_expected << "\n";
  return report.all_pass;
}

void cmd_inspect(const std::string& dataset_file, std::ostream& out) {
  const PreferenceDataset dataset = read_dataset(dataset_file);
  const DatagenSummary summary = dataset_summary(dataset);
  out << "records: " << summary.num_records << "\n"
      << "candidates per record (k): " << summary.k << "\n"
      << "reward models (n): " << summary.n << "\n"
      << "conditions: " << dataset.meta.num_conditions << "\n"
      << "schedule: " << to_string(dataset.meta.schedule_kind) << "/"
      << dataset.meta.schedule_steps << "\n"
      << "seed: " << dataset.meta.seed << "\n"
      << "mean phi: " << summary.mean_phi << "\n"
      << "tie fraction: " << summary.tie_fraction << "\n";
  // Mean rank per generator slot: shows whether the budget spread produced
  // the intended quality ordering.
  std::vector<double> rank_sum(static_cast<std::size_t>(dataset.meta.k), 0.0);
  for (const RankedPreferenceRecord& record : dataset.records)
    for (int i = 0; i < record.k(); ++i)
      rank_sum[static_cast<std::size_t>(i)] +=
          record.tau[static_cast<std::size_t>(i)];
  for (int i = 0; i < dataset.meta.k; ++i)
    out << "mean rank of " << dataset.meta.generators[static_cast<std::size_t>(i)].id
        << ": "
        << rank_sum[static_cast<std::size_t>(i)] /
               static_cast<double>(dataset.records.size())
        << "\n";
}

PipelineSummary run_pipeline(const RunConfig& config, std::ostream& log) {
  config.validate();
  PipelineSummary summary;
  cmd_pretrain(config, log);
  summary.datagen = cmd_datagen(config, log);
  cmd_train(config, log);
  summary.eval = cmd_eval(config, log);
  return summary;
}

}  // namespace ranklab
