#include "ranklab/denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ranklab/errors.hpp"

namespace ranklab {

void Architecture::validate() const {
  if (dim < 1 || num_conditions < 1 || total_steps < 1)
    throw std::invalid_argument("architecture: non-positive extent");
  if (time_embed_dim < 1 || cond_embed_dim < 1)
    throw std::invalid_argument("architecture: non-positive embedding width");
  if (hidden.empty())
    throw std::invalid_argument("architecture: needs at least one hidden layer");
  for (int width : hidden)
    if (width < 1) throw std::invalid_argument("architecture: bad hidden width");
}

std::size_t Architecture::param_count() const {
  return make_layout(*this).total;
}

ParamLayout make_layout(const Architecture& arch) {
  arch.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  layout.time_table = offset;
  offset += static_cast<std::size_t>(arch.total_steps) *
            static_cast<std::size_t>(arch.time_embed_dim);
  layout.cond_table = offset;
  offset += static_cast<std::size_t>(arch.num_conditions) *
            static_cast<std::size_t>(arch.cond_embed_dim);

  int in = arch.input_width();
  for (std::size_t l = 0; l <= arch.hidden.size(); ++l) {
    const int out = l < arch.hidden.size() ? arch.hidden[l] : arch.dim;
    ParamLayout::Layer layer;
    layer.in = in;
    layer.out = out;
    layer.weights = offset;
    offset += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    layer.biases = offset;
    offset += static_cast<std::size_t>(out);
    layout.layers.push_back(layer);
    in = out;
  }
  layout.total = offset;
  return layout;
}

DenoiserParams DenoiserParams::init(const Architecture& arch, Rng& rng) {
  const ParamLayout layout = make_layout(arch);
  DenoiserParams params;
  params.arch = arch;
  params.values.resize(layout.total);

  double* v = params.values.data();
  const std::size_t table_end = layout.cond_table +
                                static_cast<std::size_t>(arch.num_conditions) *
                                    static_cast<std::size_t>(arch.cond_embed_dim);
  for (std::size_t i = layout.time_table; i < table_end; ++i)
    v[i] = 0.5 * rng.normal();
  for (const auto& layer : layout.layers) {
    const double scale = std::sqrt(2.0 / layer.in);
    const std::size_t n = static_cast<std::size_t>(layer.in) *
                          static_cast<std::size_t>(layer.out);
    for (std::size_t i = 0; i < n; ++i)
      v[layer.weights + i] = scale * rng.normal();
    for (int i = 0; i < layer.out; ++i)
      v[layer.biases + static_cast<std::size_t>(i)] = 0.0;
  }
  return params;
}

std::span<const double> DenoiserParams::time_embedding(int t) const {
  const auto width = static_cast<std::size_t>(arch.time_embed_dim);
  const ParamLayout layout = make_layout(arch);
  return {values.data() + layout.time_table +
              (static_cast<std::size_t>(t) - 1) * width,
          width};
}

std::span<const double> DenoiserParams::cond_embedding(int c) const {
  const auto width = static_cast<std::size_t>(arch.cond_embed_dim);
  const ParamLayout layout = make_layout(arch);
  return {values.data() + layout.cond_table + static_cast<std::size_t>(c) * width,
          width};
}

void DenoiserParams::validate() const {
  arch.validate();
  if (values.size() != arch.param_count())
    throw std::invalid_argument("denoiser: parameter count mismatch");
  for (double v : values)
    if (!std::isfinite(v))
      throw std::invalid_argument("denoiser: non-finite parameter");
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double silu(double a) { return a * sigmoid(a); }

inline double silu_grad(double a) {
  const double s = sigmoid(a);
  return s * (1.0 + a * (1.0 - s));
}

void check_call(const Architecture& arch, std::span<const double> x_t, int t,
                int c) {
  if (x_t.size() != static_cast<std::size_t>(arch.dim))
    throw std::invalid_argument("denoiser: input has wrong dimension");
  if (t < 1 || t > arch.total_steps)
    throw std::invalid_argument("denoiser: timestep out of range");
  if (c < 0 || c >= arch.num_conditions)
    throw std::invalid_argument("denoiser: condition out of range");
}

}  // namespace

void denoiser_forward(const DenoiserParams& params, std::span<const double> x_t,
                      int t, int c, ForwardCache& cache) {
  const Architecture& arch = params.arch;
  check_call(arch, x_t, t, c);
  const ParamLayout layout = make_layout(arch);
  const double* v = params.values.data();

  cache.input.resize(static_cast<std::size_t>(arch.input_width()));
  double* input = cache.input.data();
  std::memcpy(input, x_t.data(), x_t.size() * sizeof(double));
  const double* temb = v + layout.time_table +
                       (static_cast<std::size_t>(t) - 1) *
                           static_cast<std::size_t>(arch.time_embed_dim);
  std::memcpy(input + arch.dim, temb,
              static_cast<std::size_t>(arch.time_embed_dim) * sizeof(double));
  const double* cemb = v + layout.cond_table +
                       static_cast<std::size_t>(c) *
                           static_cast<std::size_t>(arch.cond_embed_dim);
  std::memcpy(input + arch.dim + arch.time_embed_dim, cemb,
              static_cast<std::size_t>(arch.cond_embed_dim) * sizeof(double));

  const std::size_t num_hidden = arch.hidden.size();
  cache.pre.resize(num_hidden);
  cache.act.resize(num_hidden);

  const double* h = input;
  for (std::size_t l = 0; l < num_hidden; ++l) {
    const auto& layer = layout.layers[l];
    cache.pre[l].resize(static_cast<std::size_t>(layer.out));
    cache.act[l].resize(static_cast<std::size_t>(layer.out));
    const double* w = v + layer.weights;
    const double* b = v + layer.biases;
    for (int o = 0; o < layer.out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) *
                                  static_cast<std::size_t>(layer.in);
      double acc = b[o];
      for (int i = 0; i < layer.in; ++i) acc += row[i] * h[i];
      cache.pre[l][static_cast<std::size_t>(o)] = acc;
      cache.act[l][static_cast<std::size_t>(o)] = silu(acc);
    }
    h = cache.act[l].data();
  }

  const auto& out_layer = layout.layers.back();
  cache.out.resize(static_cast<std::size_t>(out_layer.out));
  const double* w = v + out_layer.weights;
  const double* b = v + out_layer.biases;
  for (int o = 0; o < out_layer.out; ++o) {
    const double* row = w + static_cast<std::size_t>(o) *
                                static_cast<std::size_t>(out_layer.in);
    double acc = b[o];
    for (int i = 0; i < out_layer.in; ++i) acc += row[i] * h[i];
    cache.out[static_cast<std::size_t>(o)] = acc;
  }
}

std::vector<double> denoise_predict(const DenoiserParams& params,
                                    std::span<const double> x_t, int t, int c) {
  ForwardCache cache;
  denoiser_forward(params, x_t, t, c, cache);
  return cache.out;
}

void denoiser_backward(const DenoiserParams& params, const ForwardCache& cache,
                       int t, int c, std::span<const double> dloss_dout,
                       std::span<double> grad) {
  const Architecture& arch = params.arch;
  const ParamLayout layout = make_layout(arch);
  if (grad.size() != layout.total)
    throw std::invalid_argument("denoiser: gradient buffer has wrong size");
  const double* v = params.values.data();
  double* g = grad.data();

  const std::size_t num_hidden = arch.hidden.size();
  const auto& out_layer = layout.layers.back();

  // Output layer (linear).
  std::vector<double> d_h(static_cast<std::size_t>(out_layer.in), 0.0);
  {
    const double* h =
        num_hidden > 0 ? cache.act[num_hidden - 1].data() : cache.input.data();
    const double* w = v + out_layer.weights;
    for (int o = 0; o < out_layer.out; ++o) {
      const double d = dloss_dout[static_cast<std::size_t>(o)];
      double* grow = g + out_layer.weights +
                     static_cast<std::size_t>(o) *
                         static_cast<std::size_t>(out_layer.in);
      const double* wrow = w + static_cast<std::size_t>(o) *
                                   static_cast<std::size_t>(out_layer.in);
      for (int i = 0; i < out_layer.in; ++i) {
        grow[i] += d * h[i];
        d_h[static_cast<std::size_t>(i)] += d * wrow[i];
      }
      g[out_layer.biases + static_cast<std::size_t>(o)] += d;
    }
  }

  // Hidden layers, top down.
  for (std::size_t l = num_hidden; l-- > 0;) {
    const auto& layer = layout.layers[l];
    const double* h = l > 0 ? cache.act[l - 1].data() : cache.input.data();
    const double* w = v + layer.weights;
    std::vector<double> d_prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d_pre = d_h[static_cast<std::size_t>(o)] *
                           silu_grad(cache.pre[l][static_cast<std::size_t>(o)]);
      double* grow = g + layer.weights +
                     static_cast<std::size_t>(o) *
                         static_cast<std::size_t>(layer.in);
      const double* wrow =
          w + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
      for (int i = 0; i < layer.in; ++i) {
        grow[i] += d_pre * h[i];
        d_prev[static_cast<std::size_t>(i)] += d_pre * wrow[i];
      }
      g[layer.biases + static_cast<std::size_t>(o)] += d_pre;
    }
    d_h = std::move(d_prev);
  }

  // d_h now holds the gradient with respect to the concatenated input; route
  // the embedding slices into their table rows.
  double* g_temb = g + layout.time_table +
                   (static_cast<std::size_t>(t) - 1) *
                       static_cast<std::size_t>(arch.time_embed_dim);
  for (int i = 0; i < arch.time_embed_dim; ++i)
    g_temb[i] += d_h[static_cast<std::size_t>(arch.dim + i)];
  double* g_cemb = g + layout.cond_table +
                   static_cast<std::size_t>(c) *
                       static_cast<std::size_t>(arch.cond_embed_dim);
  for (int i = 0; i < arch.cond_embed_dim; ++i)
    g_cemb[i] +=
        d_h[static_cast<std::size_t>(arch.dim + arch.time_embed_dim + i)];
}

namespace {

constexpr const char* kCheckpointMagic = "RANKLAB_CKPT";
constexpr int kCheckpointVersion = 1;

std::uint64_t payload_checksum(std::span<const double> values) {
  std::uint64_t h = kFnvOffsetBasis;
  for (double v : values) h = fnv1a64_double(v, h);
  return h;
}

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i)
      bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_le_doubles(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in)
      throw FormatError(FormatError::Kind::malformed,
                        "checkpoint: truncated parameter payload");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

}  // namespace

std::string params_checksum_hex(const DenoiserParams& params) {
  return hex16(payload_checksum(params.values));
}

void save_checkpoint(const std::filesystem::path& path,
                     const DenoiserParams& params, const CheckpointInfo& info) {
  params.validate();
  nlohmann::json header;
  header["arch"] = {{"dim", params.arch.dim},
                    {"num_conditions", params.arch.num_conditions},
                    {"total_steps", params.arch.total_steps},
                    {"time_embed_dim", params.arch.time_embed_dim},
                    {"cond_embed_dim", params.arch.cond_embed_dim},
                    {"hidden", params.arch.hidden}};
  header["seed"] = info.seed;
  header["schedule_kind"] = info.schedule_kind;
  header["schedule_steps"] = info.schedule_steps;
  header["param_count"] = params.values.size();
  header["checksum"] = hex16(payload_checksum(params.values));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("checkpoint: cannot open for writing: " +
                             path.string());
  out << kCheckpointMagic << " v" << kCheckpointVersion << "\n";
  out << header.dump() << "\n";
  write_le_doubles(out, params.values);
  if (!out)
    throw std::runtime_error("checkpoint: write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint: cannot open: " + path.string());

  std::string magic_line;
  if (!std::getline(in, magic_line))
    throw FormatError(FormatError::Kind::malformed, "checkpoint: empty file");
  std::istringstream magic(magic_line);
  std::string tag, version;
  magic >> tag >> version;
  if (tag != kCheckpointMagic)
    throw FormatError(FormatError::Kind::malformed,
                      "checkpoint: bad magic line");
  if (version != "v" + std::to_string(kCheckpointVersion))
    throw FormatError(FormatError::Kind::version_mismatch,
                      "checkpoint: unsupported version " + version);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw FormatError(FormatError::Kind::malformed,
                      "checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("checkpoint: header parse error: ") +
                          e.what());
  }

  Checkpoint result;
  try {
    const auto& arch = header.at("arch");
    result.params.arch.dim = arch.at("dim").get<int>();
    result.params.arch.num_conditions = arch.at("num_conditions").get<int>();
    result.params.arch.total_steps = arch.at("total_steps").get<int>();
    result.params.arch.time_embed_dim = arch.at("time_embed_dim").get<int>();
    result.params.arch.cond_embed_dim = arch.at("cond_embed_dim").get<int>();
    result.params.arch.hidden = arch.at("hidden").get<std::vector<int>>();
    result.info.seed = header.at("seed").get<std::uint64_t>();
    result.info.schedule_kind = header.at("schedule_kind").get<std::string>();
    result.info.schedule_steps = header.at("schedule_steps").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("checkpoint: bad header field: ") + e.what());
  }

  const auto count = header.at("param_count").get<std::size_t>();
  if (count != result.params.arch.param_count())
    throw FormatError(FormatError::Kind::malformed,
                      "checkpoint: parameter count does not match architecture");
  result.params.values = read_le_doubles(in, count);

  const std::string expected = header.at("checksum").get<std::string>();
  if (hex16(payload_checksum(result.params.values)) != expected)
    throw FormatError(FormatError::Kind::checksum_mismatch,
                      "checkpoint: payload checksum mismatch");
  return result;
}

}  // namespace ranklab
