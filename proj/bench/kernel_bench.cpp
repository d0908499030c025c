// Serial reference vs OpenMP kernels: wall time per call and bitwise agreement.
// Exits nonzero if any pair disagrees.
//
//   kernel_bench [batch] [width] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "calimatch/kernels.hpp"
#include "calimatch/model.hpp"

using namespace calimatch;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

double seconds_per_call(const std::function<void()>& fn, int repeats) {
  fn();
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
  return d.count() / repeats;
}

int g_mismatches = 0;

void report(const std::string& name, const std::function<void(Exec)>& fn,
            const std::function<bool()>& agree, int repeats) {
  const double s = seconds_per_call([&] { fn(Exec::serial); }, repeats);
  const double p = seconds_per_call([&] { fn(Exec::parallel); }, repeats);
  const bool same = agree();
  g_mismatches += !same;
  std::printf("%-24s %12.3f %12.3f %8.2fx  %s\n", name.c_str(), s * 1e3, p * 1e3, s / p,
              same ? "identical" : "DIFFERENT");
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t batch = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 4096;
  const std::size_t width = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 256;
  const int repeats = argc > 3 ? std::atoi(argv[3]) : 10;
  std::printf("batch %zu, width %zu, threads %d, openmp %s\n", batch, width, parallel_threads(),
              parallel_available() ? "on" : "off");
  std::printf("%-24s %12s %12s %9s\n", "kernel", "serial ms", "parallel ms", "speed-up");

  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(batch, width, rng);
  const Matrix w = random_matrix(width, width, rng);
  const Matrix b = random_matrix(1, width, rng);
  const Matrix dy = random_matrix(batch, width, rng);

  Matrix ys(batch, width), yp(batch, width);
  report("affine", [&](Exec e) { kernels::affine(x, w.flat(), b.flat(), e == Exec::serial ? ys : yp, e); },
         [&] { return ys == yp; }, repeats);

  Matrix dxs(batch, width), dxp(batch, width);
  report("affine_backward_input",
         [&](Exec e) { kernels::affine_backward_input(dy, w.flat(), e == Exec::serial ? dxs : dxp, e); },
         [&] { return dxs == dxp; }, repeats);

  std::vector<double> dws(width * width), dwp(width * width), dbs(width), dbp(width);
  report("affine_backward_params",
         [&](Exec e) {
           auto& dw = e == Exec::serial ? dws : dwp;
           auto& db = e == Exec::serial ? dbs : dbp;
           std::fill(dw.begin(), dw.end(), 0.0);
           std::fill(db.begin(), db.end(), 0.0);
           kernels::affine_backward_params(dy, x, dw, db, e);
         },
         [&] { return dws == dwp && dbs == dbp; }, repeats);

  Matrix as = x, ap = x;
  report("activate(tanh)",
         [&](Exec e) {
           auto& m = e == Exec::serial ? as : ap;
           m = x;
           kernels::activate(m, Activation::tanh, e);
         },
         [&] { return as == ap; }, repeats);

  Matrix ss(batch, width), sp(batch, width);
  report("softmax_rows", [&](Exec e) { kernels::softmax_rows(x, 1.5, e == Exec::serial ? ss : sp, e); },
         [&] { return ss == sp; }, repeats);

  Matrix gs(batch, width), gp(batch, width);
  report("sigmoid", [&](Exec e) { kernels::sigmoid(x, e == Exec::serial ? gs : gp, e); },
         [&] { return gs == gp; }, repeats);

  const ModelParams params = make_toy_model(3, static_cast<int>(width), {static_cast<int>(width)}, 10);
  ModelOutputs os, op;
  report("predict (full model)",
         [&](Exec e) { (e == Exec::serial ? os : op) = predict(params, x, e); },
         [&] { return os.p == op.p && os.q == op.q; }, repeats);
  return g_mismatches == 0 ? 0 : 1;
}
