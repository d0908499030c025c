#include "calimatch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "calimatch/error.hpp"

namespace calimatch {

namespace {

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Matrix single_row(std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return m;
}

// Pulls a logit-space gradient (one row per sample) back to the flat weights.
std::vector<double> pull_back(const ModelParams& params, const ForwardPass& pass, Matrix d_zf) {
  LogitGrad g;
  g.d_zf = std::move(d_zf);
  return backward(params, pass, g, Exec::serial).weights;
}

// d(-log softmax(z)_y)/dz = p - e_y, one row per sample.
Matrix ce_logit_grad(const Matrix& p, std::span<const int> labels) {
  Matrix g = p;
  for (std::size_t r = 0; r < labels.size(); ++r) g(r, static_cast<std::size_t>(labels[r])) -= 1.0;
  return g;
}

}  // namespace

SelectedBatch gather_selected(const ModelParams& params, const Matrix& weak, const Matrix& strong,
                              const HiddenTruth& truth, const SelectionGate& gate) {
  if (weak.rows() != strong.rows() || weak.rows() != truth.labels.size())
    throw ValidationError("weak view, strong view and truth differ in length");
  const auto records = select_batch(predict(params, weak, Exec::serial), gate, Exec::serial);
  std::vector<std::size_t> keep;
  SelectedBatch out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].selected) continue;
    keep.push_back(i);
    out.pseudo_labels.push_back(records[i].pseudo_label);
    out.true_labels.push_back(truth.labels[i]);
    out.seen.push_back(truth.seen[i]);
  }
  out.strong = strong.gather_rows(keep);
  return out;
}

std::vector<double> cross_entropy_gradient(const ModelParams& params, const Matrix& x,
                                           std::span<const int> labels) {
  if (x.rows() == 0) return std::vector<double>(params.weights.size(), 0.0);
  const ForwardPass pass = forward(params, x, Exec::serial);
  return pull_back(params, pass, ce_logit_grad(pass.outputs.p, labels));
}

std::vector<double> surrogate_gradient(const ModelParams& params, const SelectedBatch& batch) {
  return cross_entropy_gradient(params, batch.strong, batch.pseudo_labels);
}

std::vector<double> ideal_gradient(const ModelParams& params, const SelectedBatch& batch) {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.seen[i]) continue;
    rows.push_back(i);
    labels.push_back(batch.true_labels[i]);
  }
  if (rows.empty()) return std::vector<double>(params.weights.size(), 0.0);
  return cross_entropy_gradient(params, batch.strong.gather_rows(rows), labels);
}

double logit_jacobian_norm(const ModelParams& params, std::span<const double> x) {
  const ForwardPass pass = forward(params, single_row(x), Exec::serial);
  const auto K = static_cast<std::size_t>(params.arch.num_classes);
  const auto P = params.weights.size();
  Eigen::MatrixXd J(K, P);
  for (std::size_t k = 0; k < K; ++k) {
    Matrix e(1, K);
    e(0, k) = 1.0;
    const auto row = pull_back(params, pass, std::move(e));
    for (std::size_t j = 0; j < P; ++j) J(k, j) = row[j];
  }
  // Largest eigenvalue of the small K x K Gram matrix is the squared spectral norm.
  const Eigen::MatrixXd gram = J * J.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

AlignmentReport alignment_report(const ModelParams& params, const SelectedBatch& batch) {
  AlignmentReport rep;
  rep.batch_size = batch.size();
  const auto P = params.weights.size();
  if (batch.size() == 0) return rep;

  const auto surrogate = surrogate_gradient(params, batch);
  const auto ideal = ideal_gradient(params, batch);
  std::vector<double> diff(P);
  for (std::size_t j = 0; j < P; ++j) diff[j] = surrogate[j] - ideal[j];
  rep.grad_diff_norm = l2(diff);

  const ForwardPass pass = forward(params, batch.strong, Exec::serial);
  const auto K = static_cast<std::size_t>(params.arch.num_classes);
  std::vector<double> residual_sum(P, 0.0);
  std::size_t erroneous = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const bool ood = !batch.seen[i];
    const bool wrong = !ood && batch.pseudo_labels[i] != batch.true_labels[i];
    if (!ood && !wrong) continue;
    ++erroneous;
    rep.n_ood += ood;
    rep.n_mislabeled += wrong;

    // OOD: p - e_yhat. Mislabeled: (p - e_yhat) - (p - e_y) = e_y - e_yhat.
    std::vector<double> dg(K, 0.0);
    if (ood) {
      auto p = pass.outputs.p.row(i);
      std::copy(p.begin(), p.end(), dg.begin());
    } else {
      dg[static_cast<std::size_t>(batch.true_labels[i])] += 1.0;
    }
    dg[static_cast<std::size_t>(batch.pseudo_labels[i])] -= 1.0;

    double dg_max = 0.0;
    for (double v : dg) dg_max = std::max(dg_max, std::abs(v));
    rep.logit_residual_max.push_back(dg_max);
    rep.b_hat = std::max(rep.b_hat, l2(dg));

    const Matrix row = single_row(batch.strong.row(i));
    const ForwardPass one = forward(params, row, Exec::serial);
    Matrix d(1, K);
    std::copy(dg.begin(), dg.end(), d.row(0).begin());
    const auto residual = pull_back(params, one, std::move(d));
    rep.residual_norms.push_back(l2(residual));
    for (std::size_t j = 0; j < P; ++j) residual_sum[j] += residual[j];
    rep.l_hat = std::max(rep.l_hat, logit_jacobian_norm(params, batch.strong.row(i)));
  }

  rep.epsilon_hat = static_cast<double>(erroneous) / static_cast<double>(batch.size());
  rep.residual_sum_norm = l2(residual_sum);
  std::vector<double> gap(P);
  for (std::size_t j = 0; j < P; ++j) gap[j] = diff[j] - residual_sum[j];
  rep.identity_gap = l2(gap);
  rep.bound = rep.l_hat * rep.b_hat * rep.epsilon_hat * static_cast<double>(batch.size());
  // Relative slack for the rounding in two independently summed gradients.
  rep.bound_holds = rep.grad_diff_norm <= rep.bound + 1e-9 * (1.0 + rep.bound);
  return rep;
}

std::vector<OracleSample> draw_oracle(const CalibratedOracle& oracle, std::size_t n) {
  if (oracle.eta < 0.0 || oracle.eta > 1.0) throw DomainError("oracle eta must lie in [0, 1]");
  std::mt19937_64 rng(oracle.seed);
  std::uniform_real_distribution<double> score(0.5, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<OracleSample> out(n);
  for (auto& o : out) {
    o.s = score(rng);
    o.c = score(rng);
    const double acc = std::max(0.0, std::min(o.s, o.c) - oracle.eta);
    o.error = !(unit(rng) < acc);
  }
  return out;
}

double lemma_bound(double tau1, double tau2, double eta) noexcept {
  return 1.0 - std::min(tau1, tau2) + eta;
}

LemmaReport lemma_check(const CalibratedOracle& oracle, double tau1, double tau2, std::size_t n) {
  LemmaReport rep;
  rep.tau1 = tau1;
  rep.tau2 = tau2;
  rep.eta = oracle.eta;
  rep.n = n;
  rep.bound = lemma_bound(tau1, tau2, oracle.eta);
  std::size_t errors = 0;
  for (const auto& o : draw_oracle(oracle, n)) {
    if (!(o.s > tau1 && o.c > tau2)) continue;
    ++rep.n_selected;
    errors += o.error;
  }
  if (rep.n_selected == 0) return rep;
  rep.epsilon_hat = static_cast<double>(errors) / static_cast<double>(rep.n_selected);
  const double b = std::clamp(rep.bound, 0.0, 1.0);
  rep.allowance = 3.0 * std::sqrt(b * (1.0 - b) / static_cast<double>(rep.n_selected));
  rep.violated = *rep.epsilon_hat > rep.bound + rep.allowance;
  return rep;
}

nlohmann::json to_json(const AlignmentReport& r) {
  return {{"batch_size", r.batch_size},
          {"n_ood", r.n_ood},
          {"n_mislabeled", r.n_mislabeled},
          {"epsilon_hat", r.epsilon_hat},
          {"grad_diff_norm", r.grad_diff_norm},
          {"residual_sum_norm", r.residual_sum_norm},
          {"identity_gap", r.identity_gap},
          {"residual_norms", r.residual_norms},
          {"logit_residual_max", r.logit_residual_max},
          {"b_hat", r.b_hat},
          {"l_hat", r.l_hat},
          {"bound", r.bound},
          {"bound_holds", r.bound_holds}};
}

nlohmann::json to_json(const LemmaReport& r) {
  return {{"tau1", r.tau1},
          {"tau2", r.tau2},
          {"eta", r.eta},
          {"n", r.n},
          {"n_selected", r.n_selected},
          {"epsilon_hat", r.epsilon_hat ? nlohmann::json(*r.epsilon_hat) : nlohmann::json(nullptr)},
          {"bound", r.bound},
          {"allowance", r.allowance},
          {"violated", r.violated}};
}

}  // namespace calimatch
