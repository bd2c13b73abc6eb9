#include "ranklab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "ranklab/diffusion.hpp"
#include "ranklab/errors.hpp"
#include "ranklab/parallel.hpp"

namespace ranklab {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

void CandidateSet::validate(int dim) const {
  if (k() < 2) throw std::invalid_argument("candidate set: fewer than 2 candidates");
  if (generator_ids.size() != candidates.size())
    throw std::invalid_argument("candidate set: generator ids misaligned");
  for (const auto& x : candidates) {
    if (x.size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("candidate set: candidate has wrong dimension");
    if (!all_finite(x))
      throw std::invalid_argument("candidate set: non-finite candidate");
  }
}

void RankedPreferenceRecord::validate(int dim) const {
  const int kk = k();
  if (kk < 2) throw std::invalid_argument("record: fewer than 2 candidates");
  if (prompt_id < 0) throw std::invalid_argument("record: negative prompt id");
  if (generator_ids.size() != candidates.size() ||
      phi.size() != candidates.size() || tau.size() != candidates.size())
    throw std::invalid_argument("record: field lengths disagree");
  for (const auto& x : candidates) {
    if (x.size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("record: candidate has wrong dimension");
    if (!all_finite(x)) throw std::invalid_argument("record: non-finite candidate");
  }
  for (double p : phi)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("record: phi outside [0, 1]");
  std::vector<bool> seen(static_cast<std::size_t>(kk), false);
  for (int r : tau) {
    if (r < 1 || r > kk || seen[static_cast<std::size_t>(r - 1)])
      throw std::invalid_argument("record: tau is not a permutation of 1..k");
    seen[static_cast<std::size_t>(r - 1)] = true;
  }
  // phi must be non-increasing when candidates are visited best rank first.
  std::vector<int> by_rank(static_cast<std::size_t>(kk));
  for (int i = 0; i < kk; ++i)
    by_rank[static_cast<std::size_t>(tau[static_cast<std::size_t>(i)] - 1)] = i;
  for (int r = 1; r < kk; ++r) {
    const double prev = phi[static_cast<std::size_t>(by_rank[static_cast<std::size_t>(r - 1)])];
    const double cur = phi[static_cast<std::size_t>(by_rank[static_cast<std::size_t>(r)])];
    if (prev < cur)
      throw std::invalid_argument("record: phi increases along worsening rank");
  }
}

void PreferenceDataset::validate() const {
  if (meta.dim < 1) throw std::invalid_argument("dataset: dim < 1");
  if (meta.num_conditions < 1)
    throw std::invalid_argument("dataset: num_conditions < 1");
  if (meta.k < 2) throw std::invalid_argument("dataset: k < 2");
  if (meta.n < 1) throw std::invalid_argument("dataset: n < 1");
  if (meta.schedule_steps < 1)
    throw std::invalid_argument("dataset: schedule_steps < 1");
  if (static_cast<int>(meta.generators.size()) != meta.k)
    throw std::invalid_argument("dataset: generator descriptor count != k");
  meta.ensemble.validate();
  if (meta.ensemble.size() != meta.n)
    throw std::invalid_argument("dataset: ensemble size != n");
  meta.world.validate();
  if (meta.world.dim != meta.dim)
    throw std::invalid_argument("dataset: world dim mismatch");
  if (meta.world.num_conditions() != meta.num_conditions)
    throw std::invalid_argument("dataset: world condition count mismatch");
  if (records.empty()) throw std::invalid_argument("dataset: no records");
  for (const auto& record : records) {
    record.validate(meta.dim);
    if (record.k() != meta.k)
      throw std::invalid_argument("dataset: record k differs from metadata");
    if (record.condition < 0 || record.condition >= meta.num_conditions)
      throw std::invalid_argument("dataset: record condition out of range");
    for (int i = 0; i < meta.k; ++i)
      if (record.generator_ids[static_cast<std::size_t>(i)] !=
          meta.generators[static_cast<std::size_t>(i)].id)
        throw std::invalid_argument(
            "dataset: record generator ids disagree with metadata");
  }
}

int best_index(const RankedPreferenceRecord& record) {
  for (std::size_t i = 0; i < record.tau.size(); ++i)
    if (record.tau[i] == 1) return static_cast<int>(i);
  throw std::invalid_argument("record: no rank-1 candidate");
}

int worst_index(const RankedPreferenceRecord& record) {
  for (std::size_t i = 0; i < record.tau.size(); ++i)
    if (record.tau[i] == record.k()) return static_cast<int>(i);
  throw std::invalid_argument("record: no rank-k candidate");
}

CandidateSet generate_candidates(const std::vector<Generator>& generators,
                                 const NoiseSchedule& schedule, int condition,
                                 Rng& rng) {
  if (generators.size() < 2)
    throw std::invalid_argument("generate_candidates: need at least 2 generators");
  CandidateSet set;
  set.condition = condition;
  set.candidates.reserve(generators.size());
  set.generator_ids.reserve(generators.size());
  const int dim = generators.front().params.arch.dim;
  for (const Generator& gen : generators) {
    if (gen.params.arch.dim != dim)
      throw std::invalid_argument("generate_candidates: generator dim mismatch");
    if (gen.params.arch.total_steps != schedule.total_steps)
      throw std::invalid_argument(
          "generate_candidates: generator step count differs from schedule");
    set.candidates.push_back(
        ancestral_sample(gen.params, schedule, condition, rng));
    set.generator_ids.push_back(gen.id);
  }
  set.validate(dim);
  return set;
}

std::vector<int> count_wins(
    const std::vector<std::vector<double>>& reward_scores) {
  if (reward_scores.empty())
    throw std::invalid_argument("count_wins: empty score matrix");
  const std::size_t k = reward_scores.front().size();
  if (k < 1) throw std::invalid_argument("count_wins: no candidates");
  for (const auto& row : reward_scores) {
    if (row.size() != k)
      throw std::invalid_argument("count_wins: ragged score matrix");
    if (!all_finite(row))
      throw std::invalid_argument("count_wins: non-finite score");
  }
  std::vector<int> wins(k, 0);
  for (const auto& row : reward_scores) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        if (row[i] > row[j])
          ++wins[i];
        else if (row[j] > row[i])
          ++wins[j];
        // equal scores: no win either way
      }
    }
  }
  return wins;
}

std::vector<double> aggregate_phi(const std::vector<int>& wins, int n_rewards) {
  const int k = static_cast<int>(wins.size());
  if (k < 2) throw std::invalid_argument("aggregate_phi: need k >= 2");
  if (n_rewards < 1) throw std::invalid_argument("aggregate_phi: need n >= 1");
  const int max_wins = n_rewards * (k - 1);
  std::vector<double> phi(wins.size());
  for (std::size_t i = 0; i < wins.size(); ++i) {
    if (wins[i] < 0 || wins[i] > max_wins)
      throw std::invalid_argument("aggregate_phi: win count out of range");
    phi[i] = static_cast<double>(wins[i]) / static_cast<double>(max_wins);
  }
  return phi;
}

std::vector<int> rank_from_phi(const std::vector<double>& phi) {
  const int k = static_cast<int>(phi.size());
  if (k < 2) throw std::invalid_argument("rank_from_phi: need k >= 2");
  if (!all_finite(phi))
    throw std::invalid_argument("rank_from_phi: non-finite phi");
  std::vector<int> order(phi.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable sort keeps ascending-index order among ties.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return phi[static_cast<std::size_t>(a)] > phi[static_cast<std::size_t>(b)];
  });
  std::vector<int> tau(phi.size());
  for (int r = 0; r < k; ++r)
    tau[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
  return tau;
}

PreferenceDataset datagen(const std::vector<int>& prompt_conditions,
                          const std::vector<Generator>& generators,
                          const RewardEnsemble& ensemble, const ToyWorld& world,
                          const NoiseSchedule& schedule, std::uint64_t seed,
                          int threads) {
  if (prompt_conditions.empty())
    throw std::invalid_argument("datagen: need at least one prompt");
  if (generators.size() < 2)
    throw std::invalid_argument("datagen: need at least 2 generators");
  ensemble.validate();
  world.validate();
  schedule.validate();
  for (const Generator& gen : generators) {
    gen.params.validate();
    if (gen.id.empty())
      throw std::invalid_argument("datagen: generator with empty id");
    for (const Generator& other : generators) {
      if (&other != &gen && other.id == gen.id)
        throw std::invalid_argument("datagen: duplicate generator id " +
                                    gen.id);
    }
    if (gen.params.arch.dim != world.dim)
      throw std::invalid_argument("datagen: generator dim differs from world");
    if (gen.params.arch.num_conditions != world.num_conditions())
      throw std::invalid_argument(
          "datagen: generator condition count differs from world");
    if (gen.params.arch.total_steps != schedule.total_steps)
      throw std::invalid_argument(
          "datagen: generator step count differs from schedule");
  }
  for (int c : prompt_conditions)
    if (!world.valid_condition(c))
      throw std::invalid_argument("datagen: prompt condition out of range");

  PreferenceDataset dataset;
  dataset.meta.seed = seed;
  dataset.meta.dim = world.dim;
  dataset.meta.num_conditions = world.num_conditions();
  dataset.meta.k = static_cast<int>(generators.size());
  dataset.meta.n = ensemble.size();
  dataset.meta.schedule_kind = schedule.kind;
  dataset.meta.schedule_steps = schedule.total_steps;
  for (const Generator& gen : generators)
    dataset.meta.generators.push_back(
        GeneratorDescriptor{gen.id, params_checksum_hex(gen.params)});
  dataset.meta.ensemble = ensemble;
  dataset.meta.world = world;

  const Rng base(seed);
  dataset.records.resize(prompt_conditions.size());
  parallel_for(prompt_conditions.size(), threads, [&](std::size_t p) {
    const int condition = prompt_conditions[p];
    Rng rng = base.stream("datagen.prompt", static_cast<std::uint64_t>(p));
    const CandidateSet set =
        generate_candidates(generators, schedule, condition, rng);
    std::vector<std::vector<double>> scores(
        static_cast<std::size_t>(ensemble.size()));
    for (int l = 0; l < ensemble.size(); ++l) {
      auto& row = scores[static_cast<std::size_t>(l)];
      row.resize(set.candidates.size());
      for (std::size_t i = 0; i < set.candidates.size(); ++i)
        row[i] = score(ensemble.models[static_cast<std::size_t>(l)], world,
                       Sample{set.candidates[i], condition});
    }
    const std::vector<int> wins = count_wins(scores);
    const std::vector<double> phi = aggregate_phi(wins, ensemble.size());

    RankedPreferenceRecord& record = dataset.records[p];
    record.prompt_id = static_cast<int>(p);
    record.condition = condition;
    record.candidates = set.candidates;
    record.generator_ids = set.generator_ids;
    record.phi = phi;
    record.tau = rank_from_phi(phi);
  });
  dataset.validate();
  return dataset;
}

// ---------------------------------------------------------------------------
// Serialization. The writer emits JSON by hand so floats always carry 17
// significant digits (shortest-representation emitters would break the
// write -> read -> write byte-identity contract); the reader uses a JSON
// parser and is indifferent to formatting.

namespace {

constexpr const char* kDatasetFormat = "ranklab-dataset";
constexpr int kDatasetVersion = 1;

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_u64(std::string& out, std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
  out += buf;
}

void append_int(std::string& out, long long v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%lld", v);
  out += buf;
}

void append_string(std::string& out, const std::string& s) {
  out += '"';
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (ch < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
          out += buf;
        } else {
          out += static_cast<char>(ch);
        }
    }
  }
  out += '"';
}

void append_double_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_double(out, v[i]);
  }
  out += ']';
}

void append_int_array(std::string& out, const std::vector<int>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_int(out, v[i]);
  }
  out += ']';
}

void append_string_array(std::string& out, const std::vector<std::string>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_string(out, v[i]);
  }
  out += ']';
}

void append_header(std::string& out, const PreferenceDataset& dataset) {
  const DatasetMeta& meta = dataset.meta;
  out += "{\"format\":";
  append_string(out, kDatasetFormat);
  out += ",\"version\":";
  append_int(out, kDatasetVersion);
  out += ",\"seed\":";
  append_u64(out, meta.seed);
  out += ",\"dim\":";
  append_int(out, meta.dim);
  out += ",\"num_conditions\":";
  append_int(out, meta.num_conditions);
  out += ",\"k\":";
  append_int(out, meta.k);
  out += ",\"n\":";
  append_int(out, meta.n);
  out += ",\"schedule_kind\":";
  append_string(out, to_string(meta.schedule_kind));
  out += ",\"schedule_steps\":";
  append_int(out, meta.schedule_steps);
  out += ",\"num_records\":";
  append_int(out, static_cast<long long>(dataset.records.size()));
  out += ",\"generators\":[";
  for (std::size_t i = 0; i < meta.generators.size(); ++i) {
    if (i) out += ',';
    out += "{\"id\":";
    append_string(out, meta.generators[i].id);
    out += ",\"params_checksum\":";
    append_string(out, meta.generators[i].params_checksum);
    out += '}';
  }
  out += "],\"ensemble\":[";
  for (std::size_t i = 0; i < meta.ensemble.models.size(); ++i) {
    const RewardModel& model = meta.ensemble.models[i];
    if (i) out += ',';
    out += "{\"id\":";
    append_string(out, model.id);
    out += ",\"kind\":";
    append_string(out, to_string(model.kind));
    out += ",\"mix_weight\":";
    append_double(out, model.mix_weight);
    out += ",\"noise_scale\":";
    append_double(out, model.noise_scale);
    out += ",\"noise_seed\":";
    append_u64(out, model.noise_seed);
    out += '}';
  }
  out += "],\"world\":{\"dim\":";
  append_int(out, meta.world.dim);
  out += ",\"mixtures\":[";
  for (std::size_t c = 0; c < meta.world.mixtures.size(); ++c) {
    if (c) out += ',';
    out += '[';
    for (std::size_t m = 0; m < meta.world.mixtures[c].size(); ++m) {
      const GaussianComponent& comp = meta.world.mixtures[c][m];
      if (m) out += ',';
      out += "{\"mean\":";
      append_double_array(out, comp.mean);
      out += ",\"variance\":";
      append_double(out, comp.variance);
      out += ",\"weight\":";
      append_double(out, comp.weight);
      out += '}';
    }
    out += ']';
  }
  out += "]}}\n";
}

void append_record(std::string& out, const RankedPreferenceRecord& record) {
  out += "{\"prompt_id\":";
  append_int(out, record.prompt_id);
  out += ",\"condition\":";
  append_int(out, record.condition);
  out += ",\"candidates\":[";
  for (std::size_t i = 0; i < record.candidates.size(); ++i) {
    if (i) out += ',';
    append_double_array(out, record.candidates[i]);
  }
  out += "],\"generator_ids\":";
  append_string_array(out, record.generator_ids);
  out += ",\"phi\":";
  append_double_array(out, record.phi);
  out += ",\"tau\":";
  append_int_array(out, record.tau);
  out += "}\n";
}

using Json = nlohmann::json;

// Pull a field, translating any JSON-library error into FormatError.
template <typename T>
T field(const Json& obj, const char* name) {
  try {
    return obj.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("dataset: bad or missing field '") + name +
                          "': " + e.what());
  }
}

}  // namespace

std::string serialize_dataset(const PreferenceDataset& dataset) {
  dataset.validate();
  std::string out;
  out.reserve(1024 + dataset.records.size() * 512);
  append_header(out, dataset);
  for (const auto& record : dataset.records) append_record(out, record);
  const std::uint64_t sum = fnv1a64(
      std::span<const unsigned char>(
          reinterpret_cast<const unsigned char*>(out.data()), out.size()));
  out += "{\"checksum\":";
  append_string(out, hex16(sum));
  out += "}\n";
  return out;
}

void write_dataset(const std::string& path, const PreferenceDataset& dataset) {
  const std::string bytes = serialize_dataset(dataset);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("dataset: cannot open for write: " + path);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  file.flush();
  if (!file) throw std::runtime_error("dataset: write failed: " + path);
}

PreferenceDataset read_dataset(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("dataset: cannot open for read: " + path);
  std::string bytes((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());

  if (bytes.empty() || bytes.back() != '\n')
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: missing trailing newline");
  // The final line carries the checksum of every byte before it.
  const std::size_t last_line_start = bytes.rfind('\n', bytes.size() - 2);
  if (last_line_start == std::string::npos)
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: fewer than two lines");
  const std::string trailer =
      bytes.substr(last_line_start + 1, bytes.size() - last_line_start - 2);
  const std::string body = bytes.substr(0, last_line_start + 1);

  Json trailer_json;
  try {
    trailer_json = Json::parse(trailer);
  } catch (const Json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("dataset: unparseable checksum line: ") +
                          e.what());
  }
  const auto expected = field<std::string>(trailer_json, "checksum");
  const std::uint64_t actual = fnv1a64(
      std::span<const unsigned char>(
          reinterpret_cast<const unsigned char*>(body.data()), body.size()));
  if (hex16(actual) != expected)
    throw FormatError(FormatError::Kind::checksum_mismatch,
                      "dataset: content checksum mismatch");

  // Split body into lines; first is the metadata header.
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t nl = body.find('\n', pos);
    lines.push_back(body.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty())
    throw FormatError(FormatError::Kind::malformed, "dataset: no header line");

  Json header;
  try {
    header = Json::parse(lines.front());
  } catch (const Json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("dataset: unparseable header: ") + e.what());
  }
  if (field<std::string>(header, "format") != kDatasetFormat)
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: not a dataset file");
  if (field<int>(header, "version") != kDatasetVersion)
    throw FormatError(FormatError::Kind::version_mismatch,
                      "dataset: unsupported version");

  PreferenceDataset dataset;
  DatasetMeta& meta = dataset.meta;
  meta.seed = field<std::uint64_t>(header, "seed");
  meta.dim = field<int>(header, "dim");
  meta.num_conditions = field<int>(header, "num_conditions");
  meta.k = field<int>(header, "k");
  meta.n = field<int>(header, "n");
  try {
    meta.schedule_kind =
        schedule_kind_from_string(field<std::string>(header, "schedule_kind"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::malformed, e.what());
  }
  meta.schedule_steps = field<int>(header, "schedule_steps");
  const auto generators = field<Json>(header, "generators");
  if (!generators.is_array())
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: generators is not an array");
  for (const Json& g : generators)
    meta.generators.push_back(GeneratorDescriptor{
        field<std::string>(g, "id"), field<std::string>(g, "params_checksum")});
  const auto ensemble = field<Json>(header, "ensemble");
  if (!ensemble.is_array())
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: ensemble is not an array");
  for (const Json& m : ensemble) {
    RewardModel model;
    model.id = field<std::string>(m, "id");
    try {
      model.kind = reward_kind_from_string(field<std::string>(m, "kind"));
    } catch (const std::invalid_argument& e) {
      throw FormatError(FormatError::Kind::malformed, e.what());
    }
    model.mix_weight = field<double>(m, "mix_weight");
    model.noise_scale = field<double>(m, "noise_scale");
    model.noise_seed = field<std::uint64_t>(m, "noise_seed");
    meta.ensemble.models.push_back(std::move(model));
  }
  const auto world = field<Json>(header, "world");
  meta.world.dim = field<int>(world, "dim");
  const auto mixtures = field<Json>(world, "mixtures");
  if (!mixtures.is_array())
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: world mixtures is not an array");
  for (const Json& mixture : mixtures) {
    std::vector<GaussianComponent> comps;
    for (const Json& c : mixture) {
      GaussianComponent comp;
      comp.mean = field<std::vector<double>>(c, "mean");
      comp.variance = field<double>(c, "variance");
      comp.weight = field<double>(c, "weight");
      comps.push_back(std::move(comp));
    }
    meta.world.mixtures.push_back(std::move(comps));
  }

  const auto num_records = field<long long>(header, "num_records");
  if (num_records != static_cast<long long>(lines.size()) - 1)
    throw FormatError(FormatError::Kind::malformed,
                      "dataset: record count disagrees with header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Json rec;
    try {
      rec = Json::parse(lines[i]);
    } catch (const Json::exception& e) {
      throw FormatError(FormatError::Kind::malformed,
                        std::string("dataset: unparseable record: ") + e.what());
    }
    RankedPreferenceRecord record;
    record.prompt_id = field<int>(rec, "prompt_id");
    record.condition = field<int>(rec, "condition");
    record.candidates = field<std::vector<std::vector<double>>>(rec, "candidates");
    record.generator_ids = field<std::vector<std::string>>(rec, "generator_ids");
    record.phi = field<std::vector<double>>(rec, "phi");
    record.tau = field<std::vector<int>>(rec, "tau");
    dataset.records.push_back(std::move(record));
  }

  try {
    dataset.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("dataset: invalid content: ") + e.what());
  }
  return dataset;
}

}  // namespace ranklab
