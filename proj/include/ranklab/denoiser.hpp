#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ranklab/rng.hpp"

namespace ranklab {

// Shape descriptor for the conditional noise-prediction MLP. The input is the
// concatenation of the noisy point, a learned per-timestep embedding row, and
// a learned per-condition embedding row; hidden layers use SiLU, the output
// layer is linear with `dim` outputs.
struct Architecture {
  int dim = 2;
  int num_conditions = 8;
  int total_steps = 100;  // rows in the timestep embedding table
  int time_embed_dim = 32;
  int cond_embed_dim = 8;
  std::vector<int> hidden = {64, 64, 64};

  int input_width() const { return dim + time_embed_dim + cond_embed_dim; }
  std::size_t param_count() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Flat-parameter offsets. Declaration order (also the serialization order):
// timestep table, condition table, then each layer's weights and biases.
// Weights are row-major (out x in).
struct ParamLayout {
  struct Layer {
    std::size_t weights = 0;
    std::size_t biases = 0;
    int in = 0;
    int out = 0;
  };
  std::size_t time_table = 0;
  std::size_t cond_table = 0;
  std::vector<Layer> layers;  // hidden layers followed by the output layer
  std::size_t total = 0;
};

ParamLayout make_layout(const Architecture& arch);

// Parameters as one flat vector plus the architecture that interprets it.
struct DenoiserParams {
  Architecture arch;
  std::vector<double> values;

  static DenoiserParams init(const Architecture& arch, Rng& rng);

  std::span<const double> time_embedding(int t) const;  // t in [1, total_steps]
  std::span<const double> cond_embedding(int c) const;

  void validate() const;  // shape and finiteness
};

// Per-call activation storage, reusable across calls to avoid allocation.
struct ForwardCache {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;  // pre-activations, hidden layers only
  std::vector<std::vector<double>> act;  // post-activations, hidden layers only
  std::vector<double> out;
};

// Forward pass; fills cache and leaves the prediction in cache.out.
void denoiser_forward(const DenoiserParams& params, std::span<const double> x_t,
                      int t, int c, ForwardCache& cache);

// Convenience forward pass returning the noise prediction.
std::vector<double> denoise_predict(const DenoiserParams& params,
                                    std::span<const double> x_t, int t, int c);

// Reverse accumulation through the cached forward pass. Adds into grad
// (length param_count), including the embedding-table rows touched by (t, c).
void denoiser_backward(const DenoiserParams& params, const ForwardCache& cache,
                       int t, int c, std::span<const double> dloss_dout,
                       std::span<double> grad);

// Hex digest of the flat parameter vector; the same digest the checkpoint
// header stores. Lets other artifacts name the exact weights they came from.
std::string params_checksum_hex(const DenoiserParams& params);

// Checkpoint file: one magic line, one JSON header line (architecture, seed,
// schedule kind and step count, parameter count, payload checksum), then the
// parameters as little-endian 64-bit floats in declaration order.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::string schedule_kind = "linear_vp";
  int schedule_steps = 0;
};

void save_checkpoint(const std::filesystem::path& path,
                     const DenoiserParams& params, const CheckpointInfo& info);

struct Checkpoint {
  DenoiserParams params;
  CheckpointInfo info;
};

// Throws FormatError (malformed / version_mismatch / checksum_mismatch).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ranklab
