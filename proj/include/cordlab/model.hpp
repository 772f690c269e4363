// SPDX-License-Identifier: Apache-2.0
//
// Minimal decoder-only transformer (pre-LN, learned absolute positions,
// GELU MLP, untied output projection) in double precision with exact manual
// backpropagation. Stands in for the RAG generator p(y | x, c).
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cordlab/data_model.hpp"

namespace cordlab {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq_len = 256;
  Token separator_token{0};
  Token idk_token{0};

  int head_dim() const { return d_model / n_heads; }
  int mlp_dim() const { return 4 * d_model; }
  /// Throws ConfigError naming the first bad field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Offsets of every tensor inside the flat parameter array. Matrices are
/// stored row-major as [in][out].
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };
  std::size_t tok_emb = 0, pos_emb = 0;
  std::vector<Layer> layers;
  std::size_t lnf_g = 0, lnf_b = 0, w_out = 0, b_out = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& cfg);
};

struct ModelParams {
  ModelConfig config;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct InitOptions {
  double weight_scale = 0.02;  // std-dev of non-embedding weight matrices
  double embed_scale = 0.02;   // std-dev of token and positional tables
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, const InitOptions& opts = {});

/// Softmax output at one decoding step.
struct TokenDistribution {
  std::vector<double> probs;
};

struct Span {
  int begin = 0;
  int end = 0;  // exclusive
};

/// Input layout: [c_1, sep, ..., c_n, sep, x, sep, answer_prefix].
struct InputLayout {
  std::vector<Span> contexts;
  Span question;
  Span answer;
  int length = 0;
};

struct AssembledInput {
  TokenSeq tokens;
  InputLayout layout;
};

AssembledInput assemble_input(const TokenSeq& question, const ContextSequence& contexts,
                              const TokenSeq& answer_prefix, const ModelConfig& cfg);

/// Activations cached by forward() for exact gradient computation.
struct ForwardTrace {
  struct LayerCache {
    std::vector<double> x_in;               // [T][d] residual entering the block
    std::vector<double> ln1_xhat, ln1_rstd;  // [T][d], [T]
    std::vector<double> ln1_out;             // [T][d]
    std::vector<double> qkv;                 // [T][3d]
    std::vector<double> att;                 // [H][T][T] attention probabilities
    std::vector<double> att_cat;             // [T][d] concatenated head outputs
    std::vector<double> x_mid;               // [T][d]
    std::vector<double> ln2_xhat, ln2_rstd, ln2_out;
    std::vector<double> fc_pre, fc_act;      // [T][4d]
    std::vector<double> fc_tanh;             // [T][4d] tanh term of the GELU
  };
  AssembledInput input;
  std::vector<int> out_positions;  // positions whose next-token distribution was produced
  std::vector<LayerCache> layers;
  std::vector<double> x_final;                        // [T][d] residual before final LN
  std::vector<double> lnf_xhat, lnf_rstd, lnf_out;    // final LN caches
  std::vector<std::vector<double>> probs;             // per output position
  std::size_t param_count = 0;
};

struct ForwardResult {
  std::vector<TokenDistribution> dists;
  ForwardTrace trace;
};

/// Teacher-forced distributions f_t = p(answer_t | x, c, answer_<t), one per
/// answer token.
ForwardResult forward(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                      const TokenSeq& answer);

/// Lower bound applied to probabilities inside every log.
inline constexpr double kProbFloor = 1e-12;

/// Sum over t of log f_t[answer_t], with the kProbFloor clamp.
double sequence_logprob(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                        const TokenSeq& answer);
double sequence_logprob(std::span<const TokenDistribution> dists, const TokenSeq& answer);

/// Gradient of a scalar loss with respect to the parameters, given
/// dLoss/dprobs for each distribution returned by forward().
std::vector<double> backward(const ModelParams& p, const ForwardTrace& trace,
                             std::span<const std::vector<double>> dprobs);

/// Same as backward() but adds into `grad` (size = parameter count).
void backward_accumulate(const ModelParams& p, const ForwardTrace& trace, std::span<const std::vector<double>> dprobs,
                         std::span<double> grad);

/// Argmax decoding until the separator token or max_len tokens; ties pick the
/// smallest token id. The separator is not part of the output.
TokenSeq greedy_decode(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                       int max_len);

/// Teacher-forcing target: the answer followed by the end-of-answer separator.
TokenSeq with_terminator(const TokenSeq& answer, const ModelConfig& cfg);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header (magic, version, config) then little-endian float64 parameters.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cordlab
