// SPDX-License-Identifier: Apache-2.0
//
// Adaptive choice of the distillation partner: the interpolated ordering
// c'_alpha or the full shuffle c', whichever gives the ground-truth answer the
// higher likelihood under the scoring model.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cordlab/data_model.hpp"
#include "cordlab/model.hpp"

namespace cordlab {

enum class TeacherKind { interp, full };
std::string_view to_string(TeacherKind k);

/// Ablation hook: force one candidate regardless of likelihood.
enum class TeacherOverride { none, force_interp, force_full };

struct TeacherChoice {
  ContextSequence ordering;
  TeacherKind which = TeacherKind::interp;
  double alpha_used = 0.0;
  double logprob_interp = 0.0;
  double logprob_full = 0.0;
};

struct AlphaPolicy {
  enum class Kind { fixed, score_aware };
  Kind kind = Kind::fixed;
  double alpha = 0.5;

  static AlphaPolicy fixed(double a) { return {Kind::fixed, a}; }
  static AlphaPolicy score_aware() { return {Kind::score_aware, 0.5}; }
};

/// Candidates are interpolate_perturb(c, alpha, seed) and full_shuffle(c, seed ^ 1),
/// each scored by sequence_logprob of the answer plus terminator. Ties go to
/// the interpolated ordering.
TeacherChoice select_teacher(const ModelParams& params, const Instance& inst, double alpha, std::uint64_t seed,
                             TeacherOverride override_choice = TeacherOverride::none);

/// Same selection, also returning the chosen teacher's forward pass over
/// `target` when the scoring params are the live ones (avoids a second forward).
struct TeacherSelection {
  TeacherChoice choice;
  ForwardResult teacher_forward;
};
TeacherSelection select_teacher_traced(const ModelParams& params, const Instance& inst, double alpha,
                                       std::uint64_t seed, TeacherOverride override_choice);

/// fixed(a) -> a; score_aware -> score_aware_alpha(scores), falling back to
/// 0.5 with a warning when the instance has fewer than two contexts.
double resolve_alpha(const Instance& inst, const AlphaPolicy& policy);

/// Fraction of choices that picked the interpolated teacher.
double pairing_ratio(std::span<const TeacherChoice> choices);

struct SelectionRecord {
  int epoch = 0;
  std::string instance;
  TeacherKind which = TeacherKind::interp;
  double alpha = 0.0;
  double logp_interp = 0.0;
  double logp_full = 0.0;
};

/// CSV columns: epoch,instance,which,alpha,logp_interp,logp_full
void write_selection_log(std::span<const SelectionRecord> records, const std::filesystem::path& path);
std::vector<SelectionRecord> read_selection_log(const std::filesystem::path& path);

}  // namespace cordlab
