// Micro-benchmarks for the numerical hot paths.

#include <benchmark/benchmark.h>

#include "tdglm/model.hpp"
#include "tdglm/samplers.hpp"
#include "tdglm/spatial.hpp"
#include "tdglm/synth.hpp"
#include "tdglm/tweedie.hpp"

namespace {

using namespace tdglm;

void BM_log_density_series(benchmark::State& state) {
  const TweedieParams p(2.0, 0.8, TweedieIndex(1.6));
  double y = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_density(y, p, DensityMethod::Series));
    y = y < 30.0 ? y + 0.1 : 0.1;
  }
}
BENCHMARK(BM_log_density_series);

void BM_log_likelihood_series(benchmark::State& state) {
  const long n = state.range(0);
  Rng rng(1);
  Eigen::VectorXd y(n), mu(n), phi(n);
  const TweedieIndex xi(1.5);
  for (long i = 0; i < n; ++i) {
    mu[i] = 0.5 + 2.0 * rng.uniform();
    phi[i] = 0.5 + rng.uniform();
    y[i] = sample_cpg(TweedieParams(mu[i], phi[i], xi), rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        log_likelihood(y, mu, phi, xi, DensityMethod::Series));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_log_likelihood_series)->Arg(1000)->Arg(5000);

void BM_sample_cpg(benchmark::State& state) {
  Rng rng(2);
  const TweedieParams p(3.0, 0.5, TweedieIndex(1.7));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_cpg(p, rng));
  }
}
BENCHMARK(BM_sample_cpg);

void BM_matern_chol(benchmark::State& state) {
  const long L = state.range(0);
  Rng rng(3);
  Eigen::MatrixXd coords(L, 2);
  for (long i = 0; i < L; ++i) {
    coords(i, 0) = rng.uniform();
    coords(i, 1) = rng.uniform();
  }
  const Eigen::MatrixXd dist = pairwise_distances(coords);
  for (auto _ : state) {
    benchmark::DoNotOptimize(chol_factor(matern_correlation(dist, 3.0, 0.5)));
  }
}
BENCHMARK(BM_matern_chol)->Arg(100)->Arg(281);

void BM_mala_mean_block(benchmark::State& state) {
  Scenario sc = Scenario::from_zero_setting(30);
  sc.n_obs = state.range(0);
  sc.n_sites = 100;
  sc.pattern = SpatialPattern::GpDraw;
  Rng gen(4);
  const GeneratedData data = generate_dataset(sc, gen);
  const Hyperparameters hyper;
  ModelState st = ModelState::init(ModelId::M4, data.obs.p(), data.obs.q(),
                                   data.obs.n_sites, hyper);
  st.phi_s = 3.0;
  const CholState chol =
      chol_factor(matern_correlation(data.domain->dist, st.phi_s, hyper.nu));
  const Preconditioner precond = Preconditioner::from_information(
      precondition_mean(data.obs, st, &chol, ModelId::M4, hyper));
  Eigen::VectorXd block = Eigen::VectorXd::Zero(data.obs.p() + data.obs.n_sites);
  Rng rng(5);
  const auto logpost = [&](const Eigen::VectorXd& v) {
    return log_post_mean_block(v, data.obs, st, &chol, ModelId::M4, hyper);
  };
  const auto grad = [&](const Eigen::VectorXd& v) {
    return grad_mean_block(v, data.obs, st, &chol, ModelId::M4, hyper);
  };
  for (auto _ : state) {
    const StepResult res = mala_step(block, logpost, grad, precond, 0.4, rng);
    block = res.value;
    benchmark::DoNotOptimize(block);
  }
}
BENCHMARK(BM_mala_mean_block)->Arg(1000)->Arg(5000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
