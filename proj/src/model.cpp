// SPDX-License-Identifier: Apache-2.0
#include "cordlab/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "cordlab/rng.hpp"

namespace cordlab {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

// y[T][out] = x[T][in] * W[in][out] + b
void linear(const double* x, int T, int in, const double* W, const double* b, int out, double* y) {
  for (int t = 0; t < T; ++t) {
    double* yr = y + static_cast<std::ptrdiff_t>(t) * out;
    std::copy(b, b + out, yr);
    const double* xr = x + static_cast<std::ptrdiff_t>(t) * in;
    for (int i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wr = W + static_cast<std::ptrdiff_t>(i) * out;
      for (int o = 0; o < out; ++o) yr[o] += xi * wr[o];
    }
  }
}

// Accumulates dW += x^T dy, db += sum(dy); writes dx = dy * W^T when dx != nullptr.
void linear_backward(const double* x, const double* dy, int T, int in, const double* W, int out, double* dW,
                     double* db, double* dx) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::ptrdiff_t>(t) * in;
    const double* dyr = dy + static_cast<std::ptrdiff_t>(t) * out;
    for (int o = 0; o < out; ++o) db[o] += dyr[o];
    for (int i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      double* dwr = dW + static_cast<std::ptrdiff_t>(i) * out;
      for (int o = 0; o < out; ++o) dwr[o] += xi * dyr[o];
    }
  }
  if (dx == nullptr) return;
  // W^T copy keeps the inner loop contiguous.
  thread_local std::vector<double> wt;
  wt.resize(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
  for (int i = 0; i < in; ++i) {
    for (int o = 0; o < out; ++o) wt[static_cast<std::size_t>(o) * in + i] = W[static_cast<std::ptrdiff_t>(i) * out + o];
  }
  for (int t = 0; t < T; ++t) {
    const double* dyr = dy + static_cast<std::ptrdiff_t>(t) * out;
    double* dxr = dx + static_cast<std::ptrdiff_t>(t) * in;
    std::fill(dxr, dxr + in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = wt.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) dxr[i] += g * wr[i];
    }
  }
}

void layernorm(const double* x, int T, int d, const double* g, const double* b, double* xhat, double* rstd,
               double* y) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::ptrdiff_t>(t) * d;
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[t] = rs;
    double* hr = xhat + static_cast<std::ptrdiff_t>(t) * d;
    double* yr = y + static_cast<std::ptrdiff_t>(t) * d;
    for (int i = 0; i < d; ++i) {
      hr[i] = (xr[i] - mean) * rs;
      yr[i] = g[i] * hr[i] + b[i];
    }
  }
}

// dx += LN backward of dy.
void layernorm_backward(const double* dy, const double* xhat, const double* rstd, int T, int d, const double* g,
                        double* dg, double* db, double* dx) {
  for (int t = 0; t < T; ++t) {
    const double* dyr = dy + static_cast<std::ptrdiff_t>(t) * d;
    const double* hr = xhat + static_cast<std::ptrdiff_t>(t) * d;
    double mean_dh = 0.0, mean_dh_h = 0.0;
    for (int i = 0; i < d; ++i) {
      const double dh = dyr[i] * g[i];
      dg[i] += dyr[i] * hr[i];
      db[i] += dyr[i];
      mean_dh += dh;
      mean_dh_h += dh * hr[i];
    }
    mean_dh /= d;
    mean_dh_h /= d;
    double* dxr = dx + static_cast<std::ptrdiff_t>(t) * d;
    for (int i = 0; i < d; ++i) {
      const double dh = dyr[i] * g[i];
      dxr[i] += rstd[t] * (dh - mean_dh - hr[i] * mean_dh_h);
    }
  }
}

double gelu_tanh(double x) { return std::tanh(kGeluC * (x + kGeluA * x * x * x)); }

// th = gelu_tanh(x), cached from the forward pass.
double gelu_grad(double x, double th) {
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

void softmax_inplace(double* z, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    z[i] = std::exp(z[i] - mx);
    s += z[i];
  }
  const double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) z[i] *= inv;
}

std::size_t idx(int a, int b, int stride) {
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(stride) + static_cast<std::size_t>(b);
}

// Runs the network over `tokens` and produces softmax outputs at `out_positions`.
ForwardTrace run(const ModelParams& p, AssembledInput input, std::vector<int> out_positions) {
  const ModelConfig& cfg = p.config;
  const ParamLayout L(cfg);
  if (p.values.size() != L.total) throw std::invalid_argument("parameter array does not match config layout");
  const int T = static_cast<int>(input.tokens.size());
  const int d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim(), F = cfg.mlp_dim(), V = cfg.vocab_size;
  const double* w = p.values.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ForwardTrace tr;
  tr.param_count = p.values.size();
  const auto Td = static_cast<std::size_t>(T) * static_cast<std::size_t>(d);

  std::vector<double> x(Td);
  for (int t = 0; t < T; ++t) {
    const int tok = input.tokens[static_cast<std::size_t>(t)].id;
    if (tok < 0 || tok >= V) throw std::out_of_range("token id outside vocabulary");
    const double* te = w + L.tok_emb + idx(tok, 0, d);
    const double* pe = w + L.pos_emb + idx(t, 0, d);
    for (int i = 0; i < d; ++i) x[idx(t, i, d)] = te[i] + pe[i];
  }

  tr.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  std::vector<double> tmp(Td);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& Ll = L.layers[static_cast<std::size_t>(l)];
    auto& c = tr.layers[static_cast<std::size_t>(l)];
    c.x_in = x;
    c.ln1_xhat.resize(Td);
    c.ln1_rstd.resize(static_cast<std::size_t>(T));
    c.ln1_out.resize(Td);
    layernorm(x.data(), T, d, w + Ll.ln1_g, w + Ll.ln1_b, c.ln1_xhat.data(), c.ln1_rstd.data(), c.ln1_out.data());

    c.qkv.resize(Td * 3);
    linear(c.ln1_out.data(), T, d, w + Ll.w_qkv, w + Ll.b_qkv, 3 * d, c.qkv.data());

    c.att.assign(static_cast<std::size_t>(H) * static_cast<std::size_t>(T) * static_cast<std::size_t>(T), 0.0);
    c.att_cat.assign(Td, 0.0);
    std::vector<double> row(static_cast<std::size_t>(T));
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < T; ++i) {
        const double* q = c.qkv.data() + idx(i, 0, 3 * d) + static_cast<std::size_t>(h * hd);
        for (int j = 0; j <= i; ++j) {
          const double* k = c.qkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(d + h * hd);
          double s = 0.0;
          for (int e = 0; e < hd; ++e) s += q[e] * k[e];
          row[static_cast<std::size_t>(j)] = s * scale;
        }
        softmax_inplace(row.data(), i + 1);
        double* a = c.att.data() + (static_cast<std::size_t>(h) * T + static_cast<std::size_t>(i)) * T;
        double* o = c.att_cat.data() + idx(i, h * hd, d);
        for (int j = 0; j <= i; ++j) {
          const double pj = row[static_cast<std::size_t>(j)];
          a[j] = pj;
          const double* v = c.qkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(2 * d + h * hd);
          for (int e = 0; e < hd; ++e) o[e] += pj * v[e];
        }
      }
    }
    linear(c.att_cat.data(), T, d, w + Ll.w_o, w + Ll.b_o, d, tmp.data());
    c.x_mid.resize(Td);
    for (std::size_t i = 0; i < Td; ++i) c.x_mid[i] = c.x_in[i] + tmp[i];

    c.ln2_xhat.resize(Td);
    c.ln2_rstd.resize(static_cast<std::size_t>(T));
    c.ln2_out.resize(Td);
    layernorm(c.x_mid.data(), T, d, w + Ll.ln2_g, w + Ll.ln2_b, c.ln2_xhat.data(), c.ln2_rstd.data(),
              c.ln2_out.data());
    const auto TF = static_cast<std::size_t>(T) * static_cast<std::size_t>(F);
    c.fc_pre.resize(TF);
    c.fc_act.resize(TF);
    c.fc_tanh.resize(TF);
    linear(c.ln2_out.data(), T, d, w + Ll.w_fc, w + Ll.b_fc, F, c.fc_pre.data());
    for (std::size_t i = 0; i < TF; ++i) {
      c.fc_tanh[i] = gelu_tanh(c.fc_pre[i]);
      c.fc_act[i] = 0.5 * c.fc_pre[i] * (1.0 + c.fc_tanh[i]);
    }
    linear(c.fc_act.data(), T, F, w + Ll.w_proj, w + Ll.b_proj, d, tmp.data());
    for (std::size_t i = 0; i < Td; ++i) x[i] = c.x_mid[i] + tmp[i];
  }

  tr.x_final = x;
  tr.lnf_xhat.resize(Td);
  tr.lnf_rstd.resize(static_cast<std::size_t>(T));
  tr.lnf_out.resize(Td);
  layernorm(x.data(), T, d, w + L.lnf_g, w + L.lnf_b, tr.lnf_xhat.data(), tr.lnf_rstd.data(), tr.lnf_out.data());

  tr.probs.reserve(out_positions.size());
  for (int pos : out_positions) {
    std::vector<double> z(static_cast<std::size_t>(V));
    linear(tr.lnf_out.data() + idx(pos, 0, d), 1, d, w + L.w_out, w + L.b_out, V, z.data());
    softmax_inplace(z.data(), V);
    tr.probs.push_back(std::move(z));
  }
  tr.input = std::move(input);
  tr.out_positions = std::move(out_positions);
  return tr;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr std::array<char, 8> kMagic = {'C', 'O', 'R', 'D', 'C', 'K', 'P', 'T'};

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size", "must be >= 2");
  if (d_model < 1) throw ConfigError("d_model", "must be positive");
  if (n_layers < 1) throw ConfigError("n_layers", "must be positive");
  if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("n_heads", "must divide d_model");
  if (max_seq_len < 2) throw ConfigError("max_seq_len", "must be >= 2");
  if (separator_token.id < 0 || separator_token.id >= vocab_size) {
    throw ConfigError("separator_token", "outside vocabulary");
  }
  if (idk_token.id < 0 || idk_token.id >= vocab_size) throw ConfigError("idk_token", "outside vocabulary");
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto S = static_cast<std::size_t>(cfg.max_seq_len);
  const auto F = static_cast<std::size_t>(cfg.mlp_dim());
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  tok_emb = take(V * d);
  pos_emb = take(S * d);
  layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : layers) {
    l.ln1_g = take(d);
    l.ln1_b = take(d);
    l.w_qkv = take(d * 3 * d);
    l.b_qkv = take(3 * d);
    l.w_o = take(d * d);
    l.b_o = take(d);
    l.ln2_g = take(d);
    l.ln2_b = take(d);
    l.w_fc = take(d * F);
    l.b_fc = take(F);
    l.w_proj = take(F * d);
    l.b_proj = take(d);
  }
  lnf_g = take(d);
  lnf_b = take(d);
  w_out = take(d * V);
  b_out = take(V);
  total = off;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, const InitOptions& opts) {
  cfg.validate();
  const ParamLayout L(cfg);
  ModelParams p{cfg, std::vector<double>(L.total, 0.0)};
  Rng rng(seed);
  auto fill_normal = [&](std::size_t at, std::size_t n, double sd) {
    for (std::size_t i = 0; i < n; ++i) p.values[at + i] = sd * rng.normal();
  };
  auto fill_const = [&](std::size_t at, std::size_t n, double v) { std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(at), n, v); };
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto F = static_cast<std::size_t>(cfg.mlp_dim());
  fill_normal(L.tok_emb, V * d, opts.embed_scale);
  fill_normal(L.pos_emb, static_cast<std::size_t>(cfg.max_seq_len) * d, opts.embed_scale);
  for (const auto& l : L.layers) {
    fill_const(l.ln1_g, d, 1.0);
    fill_normal(l.w_qkv, d * 3 * d, opts.weight_scale);
    fill_normal(l.w_o, d * d, opts.weight_scale);
    fill_const(l.ln2_g, d, 1.0);
    fill_normal(l.w_fc, d * F, opts.weight_scale);
    fill_normal(l.w_proj, F * d, opts.weight_scale);
  }
  fill_const(L.lnf_g, d, 1.0);
  fill_normal(L.w_out, d * V, opts.weight_scale);
  return p;
}

AssembledInput assemble_input(const TokenSeq& question, const ContextSequence& contexts,
                              const TokenSeq& answer_prefix, const ModelConfig& cfg) {
  AssembledInput a;
  std::size_t total = question.size() + 1 + answer_prefix.size();
  for (const auto& c : contexts) total += c.tokens.size() + 1;
  if (total > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw LengthError("assembled input of length " + std::to_string(total) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  a.tokens.reserve(total);
  auto pos = [&] { return static_cast<int>(a.tokens.size()); };
  for (const auto& c : contexts) {
    const int b = pos();
    a.tokens.insert(a.tokens.end(), c.tokens.begin(), c.tokens.end());
    a.layout.contexts.push_back({b, pos()});
    a.tokens.push_back(cfg.separator_token);
  }
  a.layout.question.begin = pos();
  a.tokens.insert(a.tokens.end(), question.begin(), question.end());
  a.layout.question.end = pos();
  a.tokens.push_back(cfg.separator_token);
  a.layout.answer.begin = pos();
  a.tokens.insert(a.tokens.end(), answer_prefix.begin(), answer_prefix.end());
  a.layout.answer.end = pos();
  a.layout.length = pos();
  return a;
}

ForwardResult forward(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                      const TokenSeq& answer) {
  if (answer.empty()) throw std::invalid_argument("forward: empty answer");
  const TokenSeq prefix(answer.begin(), answer.end() - 1);
  AssembledInput in = assemble_input(question, contexts, prefix, p.config);
  std::vector<int> outs;
  outs.reserve(answer.size());
  // Position of the question separator predicts answer_1; answer_t predicts answer_{t+1}.
  for (std::size_t t = 0; t < answer.size(); ++t) outs.push_back(in.layout.answer.begin - 1 + static_cast<int>(t));
  ForwardResult r;
  r.trace = run(p, std::move(in), std::move(outs));
  r.dists.reserve(answer.size());
  for (const auto& pr : r.trace.probs) r.dists.push_back(TokenDistribution{pr});
  return r;
}

double sequence_logprob(std::span<const TokenDistribution> dists, const TokenSeq& answer) {
  if (dists.size() != answer.size()) throw std::invalid_argument("sequence_logprob: length mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < answer.size(); ++t) {
    s += std::log(std::max(dists[t].probs[static_cast<std::size_t>(answer[t].id)], kProbFloor));
  }
  return s;
}

double sequence_logprob(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                        const TokenSeq& answer) {
  const auto r = forward(p, question, contexts, answer);
  return sequence_logprob(r.dists, answer);
}

std::vector<double> backward(const ModelParams& p, const ForwardTrace& tr,
                             std::span<const std::vector<double>> dprobs) {
  std::vector<double> g(p.values.size(), 0.0);
  backward_accumulate(p, tr, dprobs, g);
  return g;
}

void backward_accumulate(const ModelParams& p, const ForwardTrace& tr, std::span<const std::vector<double>> dprobs,
                         std::span<double> g) {
  const ModelConfig& cfg = p.config;
  const ParamLayout L(cfg);
  if (tr.param_count != p.values.size() || p.values.size() != L.total) {
    throw std::invalid_argument("backward: trace was produced with a different parameter layout");
  }
  if (dprobs.size() != tr.probs.size()) throw std::invalid_argument("backward: one gradient per distribution required");
  const int T = static_cast<int>(tr.input.tokens.size());
  const int d = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim(), F = cfg.mlp_dim(), V = cfg.vocab_size;
  const double* w = p.values.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto Td = static_cast<std::size_t>(T) * static_cast<std::size_t>(d);

  if (g.size() != L.total) throw std::invalid_argument("backward: gradient buffer does not match parameter layout");
  std::vector<double> dlnf(Td, 0.0);
  std::vector<double> dz(static_cast<std::size_t>(V));
  bool any = false;
  for (std::size_t a = 0; a < dprobs.size(); ++a) {
    const auto& pr = tr.probs[a];
    const auto& gp = dprobs[a];
    if (gp.size() != pr.size()) throw std::invalid_argument("backward: gradient size does not match vocabulary");
    double dot = 0.0;
    for (int v = 0; v < V; ++v) dot += pr[static_cast<std::size_t>(v)] * gp[static_cast<std::size_t>(v)];
    bool nonzero = false;
    for (int v = 0; v < V; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      dz[vi] = pr[vi] * (gp[vi] - dot);
      nonzero = nonzero || dz[vi] != 0.0;
    }
    if (!nonzero) continue;
    any = true;
    const int pos = tr.out_positions[a];
    linear_backward(tr.lnf_out.data() + idx(pos, 0, d), dz.data(), 1, d, w + L.w_out, V, g.data() + L.w_out,
                    g.data() + L.b_out, dlnf.data() + idx(pos, 0, d));
  }
  if (!any) return;

  std::vector<double> dx(Td, 0.0);
  layernorm_backward(dlnf.data(), tr.lnf_xhat.data(), tr.lnf_rstd.data(), T, d, w + L.lnf_g, g.data() + L.lnf_g,
                     g.data() + L.lnf_b, dx.data());

  const auto TF = static_cast<std::size_t>(T) * static_cast<std::size_t>(F);
  std::vector<double> dfc(TF), dln(Td), dcat(Td), dqkv(Td * 3);
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& Ll = L.layers[static_cast<std::size_t>(l)];
    const auto& c = tr.layers[static_cast<std::size_t>(l)];

    // MLP branch: dx is the gradient w.r.t. the block output (= x_mid + mlp).
    linear_backward(c.fc_act.data(), dx.data(), T, F, w + Ll.w_proj, d, g.data() + Ll.w_proj, g.data() + Ll.b_proj,
                    dfc.data());
    for (std::size_t i = 0; i < TF; ++i) dfc[i] *= gelu_grad(c.fc_pre[i], c.fc_tanh[i]);
    linear_backward(c.ln2_out.data(), dfc.data(), T, d, w + Ll.w_fc, F, g.data() + Ll.w_fc, g.data() + Ll.b_fc,
                    dln.data());
    layernorm_backward(dln.data(), c.ln2_xhat.data(), c.ln2_rstd.data(), T, d, w + Ll.ln2_g, g.data() + Ll.ln2_g,
                       g.data() + Ll.ln2_b, dx.data());
    // dx now holds d/dx_mid.

    linear_backward(c.att_cat.data(), dx.data(), T, d, w + Ll.w_o, d, g.data() + Ll.w_o, g.data() + Ll.b_o,
                    dcat.data());
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    std::vector<double> dp(static_cast<std::size_t>(T));
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < T; ++i) {
        const double* a = c.att.data() + (static_cast<std::size_t>(h) * T + static_cast<std::size_t>(i)) * T;
        const double* dout = dcat.data() + idx(i, h * hd, d);
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double* v = c.qkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(2 * d + h * hd);
          double* dv = dqkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(2 * d + h * hd);
          double s = 0.0;
          for (int e = 0; e < hd; ++e) {
            s += dout[e] * v[e];
            dv[e] += a[j] * dout[e];
          }
          dp[static_cast<std::size_t>(j)] = s;
          sum += a[j] * s;
        }
        const double* q = c.qkv.data() + idx(i, 0, 3 * d) + static_cast<std::size_t>(h * hd);
        double* dq = dqkv.data() + idx(i, 0, 3 * d) + static_cast<std::size_t>(h * hd);
        for (int j = 0; j <= i; ++j) {
          const double ds = a[j] * (dp[static_cast<std::size_t>(j)] - sum) * scale;
          if (ds == 0.0) continue;
          const double* k = c.qkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(d + h * hd);
          double* dk = dqkv.data() + idx(j, 0, 3 * d) + static_cast<std::size_t>(d + h * hd);
          for (int e = 0; e < hd; ++e) {
            dq[e] += ds * k[e];
            dk[e] += ds * q[e];
          }
        }
      }
    }
    linear_backward(c.ln1_out.data(), dqkv.data(), T, d, w + Ll.w_qkv, 3 * d, g.data() + Ll.w_qkv,
                    g.data() + Ll.b_qkv, dln.data());
    layernorm_backward(dln.data(), c.ln1_xhat.data(), c.ln1_rstd.data(), T, d, w + Ll.ln1_g, g.data() + Ll.ln1_g,
                       g.data() + Ll.ln1_b, dx.data());
    // dx now holds d/dx_in of this block.
  }

  for (int t = 0; t < T; ++t) {
    const int tok = tr.input.tokens[static_cast<std::size_t>(t)].id;
    double* gt = g.data() + L.tok_emb + idx(tok, 0, d);
    double* gpos = g.data() + L.pos_emb + idx(t, 0, d);
    const double* dxr = dx.data() + idx(t, 0, d);
    for (int i = 0; i < d; ++i) {
      gt[i] += dxr[i];
      gpos[i] += dxr[i];
    }
  }
}

TokenSeq greedy_decode(const ModelParams& p, const TokenSeq& question, const ContextSequence& contexts,
                       int max_len) {
  TokenSeq out;
  while (static_cast<int>(out.size()) < max_len) {
    AssembledInput in = assemble_input(question, contexts, out, p.config);
    const int last = in.layout.length - 1;
    const ForwardTrace tr = run(p, std::move(in), {last});
    const auto& pr = tr.probs.front();
    const auto best = std::max_element(pr.begin(), pr.end());  // first maximum = smallest id
    const Token tok{static_cast<std::int32_t>(best - pr.begin())};
    if (tok == p.config.separator_token) break;
    out.push_back(tok);
  }
  return out;
}

TokenSeq with_terminator(const TokenSeq& answer, const ModelConfig& cfg) {
  TokenSeq out = answer;
  out.push_back(cfg.separator_token);
  return out;
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::string buf(kMagic.begin(), kMagic.end());
  put_u64(buf, kCheckpointVersion);
  const ModelConfig& c = p.config;
  for (std::int64_t v : {std::int64_t{c.vocab_size}, std::int64_t{c.d_model}, std::int64_t{c.n_layers},
                         std::int64_t{c.n_heads}, std::int64_t{c.max_seq_len}, std::int64_t{c.separator_token.id},
                         std::int64_t{c.idk_token.id}}) {
    put_u64(buf, static_cast<std::uint64_t>(v));
  }
  put_u64(buf, p.values.size());
  buf.reserve(buf.size() + 8 * p.values.size());
  for (double v : p.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(buf, bits);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 8 + 8 + 7 * 8 + 8;
  if (b.size() < header || !std::equal(kMagic.begin(), kMagic.end(), b.begin())) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const std::uint64_t version = get_u64(b.data() + 8);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  auto field = [&](int i) { return static_cast<int>(static_cast<std::int64_t>(get_u64(b.data() + 16 + 8 * i))); };
  ModelConfig c;
  c.vocab_size = field(0);
  c.d_model = field(1);
  c.n_layers = field(2);
  c.n_heads = field(3);
  c.max_seq_len = field(4);
  c.separator_token = Token{field(5)};
  c.idk_token = Token{field(6)};
  c.validate();
  const std::uint64_t count = get_u64(b.data() + 16 + 56);
  if (count != ParamLayout(c).total || b.size() != header + 8 * count) {
    throw std::runtime_error("checkpoint parameter count does not match its config");
  }
  ModelParams p{c, std::vector<double>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits = get_u64(b.data() + header + 8 * i);
    std::memcpy(&p.values[i], &bits, sizeof bits);
  }
  return p;
}

}  // namespace cordlab
