#include "retrack/diagnostics.hpp"

#include "retrack/random.hpp"
#include "retrack/synth_data.hpp"
#include "retrack/trainer.hpp"

#include <algorithm>
#include <numeric>

namespace retrack {

double LossGradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const TermGradcheck& t : terms) worst = std::max(worst, t.result.max_rel_error);
  return worst;
}

LossGradcheckReport loss_gradcheck(const RunConfig& cfg_in, std::uint64_t seed, std::size_t batch,
                                   double h) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const ModelShape shape = cfg.shape();

  GeneratorConfig gen;
  gen.queries = shape.queries;
  gen.dim = shape.dim;
  gen.n_train = batch;
  gen.n_val = 1;
  gen.n_test = 1;
  gen.seed = derive_seed(seed, stream::kGradcheck, 0);
  const Dataset data = generate_dataset(gen);
  std::vector<std::size_t> idx(batch);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const TripletBatch b = gather_batch(data.train, idx);

  ParamSet params = init_params(shape, derive_seed(seed, stream::kGradcheck, 1));
  NormalSampler noise(derive_seed(seed, stream::kGradcheck, 2));
  std::vector<std::string> names;
  std::vector<Matrix> values;
  for (auto& [name, value] : params) {
    value += noise.matrix(value.rows(), value.cols(), 0.3);
    names.push_back(name);
    values.push_back(value);
  }

  auto program = [&](Tape& tape, std::span<const Var> vars) {
    ParamVars p;
    for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], vars[i]);
    const LossTerms t = total_loss(tape, b, p, cfg);
    return std::vector<Var>{t.dis, t.dir, t.evi, t.total};
  };
  std::vector<GradcheckResult> results = gradcheck_multi(program, values, h);

  LossGradcheckReport report;
  report.seed = seed;
  report.batch = batch;
  report.parameters = parameter_count(params);
  const char* labels[] = {"L_dis", "L_dir", "L_evi", "L_total"};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string worst = names[results[i].worst_param];
    report.terms.push_back({labels[i], std::move(results[i]), worst});
  }
  return report;
}

}  // namespace retrack
