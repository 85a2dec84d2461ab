#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "granlab/lab.hpp"

namespace granlab {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;

  bool over_budget() const { return seconds > budget_seconds; }
};

enum class VerifyLevel { Fast, Full };
VerifyLevel verify_level_from_string(std::string_view s);

// The update under test. Replaced by the mutation test.
using StepFn = std::function<UpdateRecord(TrainState&, const Batch&, const ExperimentConfig&)>;
StepFn default_step();
// Scales every weight update by an extra factor of eta.
StepFn off_by_eta_step();

// Desk-preset runs shared between criteria, computed on first use.
class ReferenceRuns {
 public:
  explicit ReferenceRuns(std::ostream* progress = nullptr) : progress_(progress) {}

  const RunOutputs& coarse(int seed, int k = 8);
  const RunOutputs& fine(int seed, int k = 8);

 private:
  const RunOutputs& get(int seed, int k, Granularity g);

  std::ostream* progress_;
  std::map<std::tuple<int, int, int>, RunOutputs> runs_;
};

LabConfig reference_config(int seed, int k, Granularity g);

struct AcceptanceOptions {
  StepFn step = default_step();
  std::vector<int> seeds = {1, 2, 3};
  std::filesystem::path scratch_dir;  // criterion 10 writes two runs here
  std::ostream* progress = nullptr;
};

CriterionResult criterion_gradient(const StepFn& step);
CriterionResult criterion_forward();
CriterionResult criterion_orthonormality();
CriterionResult criterion_sampling();
CriterionResult criterion_separation(ReferenceRuns& runs, const std::vector<int>& seeds);
CriterionResult criterion_ratio(ReferenceRuns& runs, const std::vector<int>& seeds);
CriterionResult criterion_log_growth(ReferenceRuns& runs);
CriterionResult criterion_nonactivation();
// With `runs` the reference coarse run supplies the first 200 steps; without,
// a 200-step coarse run is trained.
CriterionResult criterion_coherence(ReferenceRuns* runs);
CriterionResult criterion_determinism(const std::filesystem::path& scratch_dir);

// fast: 1-4, 8, 9 (9 on a 200-step run); full: 1-10.
std::vector<CriterionResult> run_acceptance(VerifyLevel level, const AcceptanceOptions& opts);

// "[PASS] 3 dictionary orthonormality ... (0.4 s / budget 5 s)".
void print_result(std::ostream& out, const CriterionResult& r);

// Exit code of `verify`: number of failed criteria, capped at 125.
int failure_count(const std::vector<CriterionResult>& results);

int cmd_verify(VerifyLevel level, std::ostream& out, const StepFn& step = default_step());

}  // namespace granlab
