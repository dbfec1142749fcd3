#include <algorithm>
#include <cmath>
#include <limits>

#include "seqvessel/trainer.hpp"

namespace seqvessel {

std::string AblationVariant::label() const {
  std::string s = encoder == EncoderKind::conv3d ? "3D" : "2D";
  s += attention ? "+CAB" : " naive";
  return s + "/" + to_string(loss);
}

std::vector<AblationVariant> full_ablation_grid() {
  std::vector<AblationVariant> grid;
  for (EncoderKind e : {EncoderKind::conv2d, EncoderKind::conv3d}) {
    for (bool cab : {false, true}) {
      for (LossKind l : {LossKind::dice, LossKind::ce}) grid.push_back({e, cab, l});
    }
  }
  return grid;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<AblationRow> run_ablation(const Dataset& data, const NetworkConfig& net, const TrainConfig& train,
                                      const std::vector<AblationVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRun&)>& on_run) {
  if (data.test.empty()) throw std::invalid_argument("ablation needs a non-empty test split");
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v;
    for (std::uint64_t seed : seeds) {
      NetworkConfig nc = net;
      nc.encoder = v.encoder;
      nc.attention = v.attention;
      TrainConfig tc = train;
      tc.loss = v.loss;
      tc.seed = seed;
      SvsNet<float> model(nc, seed);
      Trainer trainer(model, data, tc);
      trainer.train();
      AblationRun run{v, seed, evaluate(model, data.test, v.loss, tc.eval_threshold, tc.batch_size).summary};
      row.f_per_seed.push_back(run.test.mean.f);
      if (on_run) on_run(run);
    }
    row.median_f = median(row.f_per_seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace seqvessel
