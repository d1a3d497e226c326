#include <benchmark/benchmark.h>

#include <vector>

#include "sleepstate/dpss.hpp"
#include "sleepstate/kernels.hpp"
#include "sleepstate/random.hpp"
#include "sleepstate/signal.hpp"

using namespace sleepstate;

namespace {

struct SpectraFixture {
  WindowedSeries ws;
  SpectralEngine engine;

  explicit SpectraFixture(std::size_t windows)
      : engine(compute_dpss(3000, 4.0, 5), make_band_layout(default_sleep_bands(), 200.0, 3000)) {
    Rng rng(1);
    std::vector<double> x(windows * 3000);
    for (auto& v : x) v = sample_normal(rng, 0.0, 1.0);
    ws = segment_windows(x, 200.0, 15.0);
    ws.valid.assign(ws.count, true);
  }
};

template <bool Parallel>
void BM_observe_series(benchmark::State& state) {
  const SpectraFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto obs = Parallel ? kernels::observe_series_parallel(f.ws, f.engine)
                        : kernels::observe_series_serial(f.ws, f.engine);
    benchmark::DoNotOptimize(obs.coeffs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_emission_matrix(benchmark::State& state) {
  const std::size_t windows = 2000, bands = 6, tapers = 5;
  const auto states = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<double> power(windows * bands), psd(states * bands), out(windows * states);
  for (auto& v : power) v = sample_gamma(rng, 5.0, 1.0);
  for (auto& v : psd) v = sample_gamma(rng, 2.0, 1.0);
  const std::vector<bool> valid(windows, true);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::emission_matrix_parallel(power, valid, bands, tapers, psd, states, out);
    } else {
      kernels::emission_matrix_serial(power, valid, bands, tapers, psd, states, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * windows * states);
}

}  // namespace

BENCHMARK(BM_observe_series<false>)->Name("observe_series/serial")->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_observe_series<true>)->Name("observe_series/parallel")->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_emission_matrix<false>)->Name("emission_matrix/serial")->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_emission_matrix<true>)->Name("emission_matrix/parallel")->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
