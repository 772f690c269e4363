// SPDX-License-Identifier: Apache-2.0
#include "cordlab/teacher_selection.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "cordlab/perturbation.hpp"

namespace cordlab {

std::string_view to_string(TeacherKind k) { return k == TeacherKind::interp ? "interp" : "full"; }

TeacherSelection select_teacher_traced(const ModelParams& params, const Instance& inst, double alpha,
                                       std::uint64_t seed, TeacherOverride override_choice) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("select_teacher: alpha outside [0, 1]");
  const TokenSeq target = with_terminator(inst.answer, params.config);
  ContextSequence interp = interpolate_perturb(inst.contexts, {alpha, seed});
  ContextSequence full = full_shuffle(inst.contexts, seed ^ 1ULL);

  ForwardResult f_interp = forward(params, inst.question, interp, target);
  ForwardResult f_full = forward(params, inst.question, full, target);
  const double lp_interp = sequence_logprob(f_interp.dists, target);
  const double lp_full = sequence_logprob(f_full.dists, target);

  bool take_interp = lp_interp >= lp_full;
  if (override_choice == TeacherOverride::force_interp) take_interp = true;
  if (override_choice == TeacherOverride::force_full) take_interp = false;

  TeacherSelection s{TeacherChoice{take_interp ? std::move(interp) : std::move(full),
                                   take_interp ? TeacherKind::interp : TeacherKind::full, alpha, lp_interp, lp_full},
                     take_interp ? std::move(f_interp) : std::move(f_full)};
  return s;
}

TeacherChoice select_teacher(const ModelParams& params, const Instance& inst, double alpha, std::uint64_t seed,
                             TeacherOverride override_choice) {
  return select_teacher_traced(params, inst, alpha, seed, override_choice).choice;
}

double resolve_alpha(const Instance& inst, const AlphaPolicy& policy) {
  if (policy.kind == AlphaPolicy::Kind::fixed) return policy.alpha;
  if (inst.contexts.size() < 2) {
    std::cerr << "warning: instance " << inst.id << " has fewer than two contexts; using alpha = 0.5\n";
    return 0.5;
  }
  const auto scores = inst.contexts.scores();
  return score_aware_alpha(scores);
}

double pairing_ratio(std::span<const TeacherChoice> choices) {
  if (choices.empty()) throw std::invalid_argument("pairing_ratio: no selections");
  std::size_t interp = 0;
  for (const auto& c : choices) interp += c.which == TeacherKind::interp ? 1 : 0;
  return static_cast<double>(interp) / static_cast<double>(choices.size());
}

void write_selection_log(std::span<const SelectionRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write selection log " + path.string());
  out << "epoch,instance,which,alpha,logp_interp,logp_full\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << r.instance << ',' << to_string(r.which) << ',' << format_real(r.alpha) << ','
        << format_real(r.logp_interp) << ',' << format_real(r.logp_full) << '\n';
  }
}

std::vector<SelectionRecord> read_selection_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open selection log " + path.string());
  std::vector<SelectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("epoch,", 0) == 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 6) throw ParseError(line_no, "expected 6 columns");
    try {
      SelectionRecord r;
      r.epoch = std::stoi(cols[0]);
      r.instance = cols[1];
      if (cols[2] == "interp") {
        r.which = TeacherKind::interp;
      } else if (cols[2] == "full") {
        r.which = TeacherKind::full;
      } else {
        throw std::invalid_argument("which must be interp or full");
      }
      r.alpha = std::stod(cols[3]);
      r.logp_interp = std::stod(cols[4]);
      r.logp_full = std::stod(cols[5]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace cordlab
