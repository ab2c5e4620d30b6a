#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sparsespec/admm/model.hpp"
#include "sparsespec/error.hpp"
#include "sparsespec/sparse_format.hpp"

namespace sparsespec::admm {

enum class KernelDomain { spectral, spatial };

struct SgdOptions {
  double lr = 0.01;
  // Spectral kernels step with lr * spectral_lr_scale. A spectral step of
  // size eta moves the equivalent spatial kernel by eta / n^2, so n^2 keeps
  // both parameterizations on the same scale.
  double spectral_lr_scale = 64.0;
  double gamma = 0.8;  // decay factor applied every `decay_every` epochs
  std::size_t decay_every = 20;
  std::size_t batch = 32;
  unsigned threads = 1;

  [[nodiscard]] double lr_at(std::size_t epoch) const {
    return lr * std::pow(gamma, double(epoch / std::max<std::size_t>(decay_every, 1)));
  }
  void validate() const {
    detail::require<ConfigError>(lr >= 0 && spectral_lr_scale >= 0 && gamma > 0 && batch >= 1,
                                 "sgd: lr, spectral_lr_scale >= 0, gamma > 0, batch >= 1 required");
  }
};

// step(params, grads, lr) applies one update.
using StepFn = std::function<void(ToyParams&, Gradients&, double)>;

// One pass over a shuffled copy of `data`. Returns the mean minibatch loss.
inline double sgd_epoch(const ToyModelSpec& s, ToyParams& p, const Dataset& data,
                        const SgdOptions& opt, std::size_t epoch, std::mt19937_64& rng,
                        const StepFn& step) {
  opt.validate();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const double lr = opt.lr_at(epoch);

  BatchCache cache;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += opt.batch) {
    const std::size_t end = std::min(start + opt.batch, order.size());
    const auto batch = data.subset(std::span(order).subspan(start, end - start));
    const double loss = forward_loss(s, p, batch, cache, opt.threads);
    if (!std::isfinite(loss))
      throw DivergenceError("training diverged: loss " + std::to_string(loss) + " at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches) +
                            " (lr " + std::to_string(lr) + ")");
    auto g = backward(s, p, cache, opt.threads);
    step(p, g, lr);
    total += loss;
    ++batches;
  }
  if (!p.finite())
    throw DivergenceError("training diverged: non-finite parameters after epoch " +
                          std::to_string(epoch));
  return total / double(batches);
}

inline StepFn spectral_step(const SgdOptions& opt) {
  return [scale = opt.spectral_lr_scale](ToyParams& p, Gradients& g, double lr) {
    p.axpy(-lr, g, scale);
  };
}

// Kernels restricted to real h_krn x h_krn spatial support. The spectral
// gradient G maps to the spatial gradient n^2 Re(ifft2(G)) on that support.
class SpatialKernelStep {
 public:
  SpatialKernelStep(const ToyModelSpec& s, const ToyParams& p) : s_(s) {
    for (std::size_t l = 0; l < 2; ++l) w_[l] = to_spatial(*p.spectral()[l]);
  }

  void operator()(ToyParams& p, Gradients& g, double lr) {
    const std::size_t n = s_.n, h = s_.h_krn;
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& G = *g.spectral()[l];
      auto& w = w_[l];
      for (std::size_t j = 0; j < w.dim(0); ++j)
        for (std::size_t i = 0; i < w.dim(1); ++i) {
          const auto back = ifft2(G.map(j, i), n);
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < h; ++x)
              w(j, i, y, x) -= lr * double(n * n) * back[y * n + x].real();
        }
      *p.spectral()[l] = to_spectral_kernels(w, n);
    }
    for (auto* w : g.spectral()) std::fill(w->data().begin(), w->data().end(), Complex{});
    p.axpy(-lr, g);
  }

  [[nodiscard]] const SpatialTensor& kernels(std::size_t l) const { return w_[l]; }

 private:
  // Real part of the inverse transform on the kernel support.
  SpatialTensor to_spatial(const ComplexTensor& W) const {
    const std::size_t n = s_.n, h = s_.h_krn;
    SpatialTensor w(W.dim(0), W.dim(1), h, h);
    for (std::size_t j = 0; j < W.dim(0); ++j)
      for (std::size_t i = 0; i < W.dim(1); ++i) {
        const auto back = ifft2(W.map(j, i), n);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < h; ++x) w(j, i, y, x) = back[y * n + x].real();
      }
    return w;
  }

  ToyModelSpec s_;
  SpatialTensor w_[2];
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

// Dense training of the unpruned model, either directly on spectral kernels
// or on spatial kernels that are transformed for every forward pass.
inline std::vector<EpochLog> train_baseline(const ToyModelSpec& s, ToyParams& p,
                                            const Dataset& train, const Dataset& test,
                                            const SgdOptions& opt, std::size_t epochs,
                                            KernelDomain domain, std::mt19937_64& rng) {
  StepFn step = spectral_step(opt);
  if (domain == KernelDomain::spatial) step = SpatialKernelStep(s, p);
  std::vector<EpochLog> log;
  for (std::size_t e = 0; e < epochs; ++e) {
    const double loss = sgd_epoch(s, p, train, opt, e, rng, step);
    log.push_back({e, loss, evaluate(s, p, test, opt.threads).accuracy});
  }
  return log;
}

// ---------------------------------------------------------------------------
// ADMM
// ---------------------------------------------------------------------------

struct AdmmState {
  double alpha = 4.0;
  double rho = 0.002;
  std::size_t k = 0;  // non-zeros kept per map
  std::vector<ComplexTensor> Z, U;

  static AdmmState init(const ToyParams& p, double alpha, double rho) {
    detail::require<ConfigError>(alpha >= 1.0, "admm: pruning rate must be >= 1");
    detail::require<ConfigError>(rho >= 0.0, "admm: rho must be >= 0");
    AdmmState st{alpha, rho, nonzeros_per_map(p.w1.dim(2), alpha), {}, {}};
    for (const auto* w : p.spectral()) {
      st.Z.emplace_back(w->shape());
      st.U.emplace_back(w->shape());
    }
    return st;
  }
};

// Minimizes Loss + sum_l (rho/2) ||W_l - Z_l + U_l||_F^2 for up to `epochs`
// epochs, stopping early once the epoch loss changes by less than
// `early_stop`. `epoch` is the running epoch counter used for lr decay.
inline std::vector<double> admm_w_update(const AdmmState& st, const ToyModelSpec& s, ToyParams& p,
                                         const Dataset& data, const SgdOptions& opt,
                                         std::size_t epochs, double early_stop,
                                         std::size_t& epoch, std::mt19937_64& rng) {
  const double rho = st.rho;
  const StepFn step = [&](ToyParams& params, Gradients& g, double lr) {
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& W = *params.spectral()[l];
      auto& gw = *g.spectral()[l];
      for (std::size_t u = 0; u < W.size(); ++u)
        gw.data()[u] += rho * (W.data()[u] - st.Z[l].data()[u] + st.U[l].data()[u]);
    }
    params.axpy(-lr, g, opt.spectral_lr_scale);
  };
  std::vector<double> losses;
  for (std::size_t e = 0; e < epochs; ++e) {
    losses.push_back(sgd_epoch(s, p, data, opt, epoch++, rng, step));
    if (losses.size() >= 2 && std::abs(losses.back() - losses[losses.size() - 2]) < early_stop)
      break;
  }
  return losses;
}

inline void admm_z_update(AdmmState& st, const ToyParams& p) {
  for (std::size_t l = 0; l < 2; ++l) {
    ComplexTensor sum = *p.spectral()[l];
    for (std::size_t u = 0; u < sum.size(); ++u) sum.data()[u] += st.U[l].data()[u];
    st.Z[l] = project_topk(sum, st.k);
  }
}

inline void admm_u_update(AdmmState& st, const ToyParams& p) {
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = *p.spectral()[l];
    for (std::size_t u = 0; u < W.size(); ++u)
      st.U[l].data()[u] += W.data()[u] - st.Z[l].data()[u];
  }
}

// sqrt(sum_l ||W_l - Z_l||_F^2)
inline double w_minus_z(const AdmmState& st, const ToyParams& p) {
  double acc = 0.0;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = *p.spectral()[l];
    for (std::size_t u = 0; u < W.size(); ++u) acc += std::norm(W.data()[u] - st.Z[l].data()[u]);
  }
  return std::sqrt(acc);
}

// Smallest and largest non-zero count over every map of every Z.
inline std::pair<std::size_t, std::size_t> z_nonzero_range(const AdmmState& st) {
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& Z : st.Z)
    for (std::size_t j = 0; j < Z.dim(0); ++j)
      for (std::size_t i = 0; i < Z.dim(1); ++i) {
        const auto m = Z.map(j, i);
        const auto nnz = std::size_t(std::count_if(m.begin(), m.end(),
                                                   [](Complex v) { return v != Complex{}; }));
        lo = std::min(lo, nnz);
        hi = std::max(hi, nnz);
      }
  return {lo, hi};
}

inline SparseSpectralKernelSet hard_prune(const ComplexTensor& W, double alpha) {
  return SparseSpectralKernelSet::from_dense(W, nonzeros_per_map(W.dim(2), alpha));
}

// Writes pruned kernels back into the parameter set.
inline void apply_kernels(ToyParams& p, const std::vector<SparseSpectralKernelSet>& sets) {
  detail::require<DimensionError>(sets.size() == 2, "apply_kernels: need two kernel layers");
  for (std::size_t l = 0; l < 2; ++l) {
    const auto dense = sets[l].to_dense();
    detail::require<DimensionError>(dense.shape() == p.spectral()[l]->shape(),
                                    "apply_kernels: kernel shape " + shape_str(dense.shape()) +
                                        " does not match model");
    *p.spectral()[l] = dense;
  }
}

// Masked SGD: gradients outside each kernel set's stored positions are
// dropped, so positions never change. Returns the retrained kernels.
inline std::vector<SparseSpectralKernelSet> retrain(const ToyModelSpec& s, ToyParams& p,
                                                    const std::vector<SparseSpectralKernelSet>& sets,
                                                    const Dataset& data, const SgdOptions& opt,
                                                    std::size_t epochs, std::mt19937_64& rng,
                                                    std::vector<EpochLog>* log = nullptr,
                                                    const Dataset* test = nullptr) {
  apply_kernels(p, sets);
  std::vector<std::vector<std::uint8_t>> mask(2);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& set = sets[l];
    const std::size_t nn = set.n * set.n;
    mask[l].assign(set.c_out * set.c_in * nn, 0);
    for (std::size_t m = 0; m < set.maps.size(); ++m)
      for (auto idx : set.maps[m].index) mask[l][m * nn + idx] = 1;
  }
  const StepFn step = [&](ToyParams& params, Gradients& g, double lr) {
    for (std::size_t l = 0; l < 2; ++l) {
      auto& gw = g.spectral()[l]->data();
      for (std::size_t u = 0; u < gw.size(); ++u)
        if (!mask[l][u]) gw[u] = Complex{};
    }
    params.axpy(-lr, g, opt.spectral_lr_scale);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& w = params.spectral()[l]->data();
      for (std::size_t u = 0; u < w.size(); ++u)
        if (!mask[l][u] && w[u] != Complex{})
          throw Error("retrain: mask violated at layer " + std::to_string(l) + ", entry " +
                      std::to_string(u));
    }
  };
  for (std::size_t e = 0; e < epochs; ++e) {
    const double loss = sgd_epoch(s, p, data, opt, e, rng, step);
    if (log) log->push_back({e, loss, test ? evaluate(s, p, *test, opt.threads).accuracy : 0.0});
  }

  std::vector<SparseSpectralKernelSet> out = sets;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = *p.spectral()[l];
    const std::size_t nn = W.map_size();
    for (std::size_t m = 0; m < out[l].maps.size(); ++m)
      for (std::size_t e = 0; e < out[l].k; ++e)
        out[l].maps[m].value[e] = W.data()[m * nn + out[l].maps[m].index[e]];
  }
  return out;
}

// Fraction of spectral kernel entries whose modulus is below `frac` of the
// largest modulus in the same layer.
inline double near_zero_fraction(const ToyParams& p, double frac = 0.1) {
  std::size_t below = 0, total = 0;
  for (const auto* w : p.spectral()) {
    double mx = 0.0;
    for (const auto& v : w->data()) mx = std::max(mx, std::abs(v));
    for (const auto& v : w->data()) below += std::abs(v) < frac * mx;
    total += w->size();
  }
  return double(below) / double(total);
}

inline SgdOptions fine_tune_sgd() {
  SgdOptions o;
  o.lr = 0.005;
  return o;
}

struct AdmmOptions {
  double alpha = 4.0;
  double rho = 0.02;
  double rho_multiplier = 1.0;  // rho is multiplied by this after every iteration
  std::size_t iterations = 10;
  std::size_t epochs_per_update = 2;
  double early_stop = 1e-4;
  std::size_t retrain_epochs = 10;
  SgdOptions sgd = fine_tune_sgd();
  SgdOptions retrain_sgd = fine_tune_sgd();
};

struct AdmmLogRow {
  std::size_t iteration = 0;
  double loss = 0.0;
  double w_minus_z = 0.0;
  double accuracy = 0.0;
  std::size_t z_nnz_min = 0;
  std::size_t z_nnz_max = 0;
};

struct PruneResult {
  std::vector<SparseSpectralKernelSet> kernels;
  ToyParams params;
  std::vector<AdmmLogRow> admm_log;
  std::vector<EpochLog> retrain_log;
  double baseline_accuracy = 0.0;
  double admm_accuracy = 0.0;     // dense W after ADMM
  double pruned_accuracy = 0.0;   // right after hard pruning
  double retrained_accuracy = 0.0;
  double near_zero_baseline = 0.0;
  double near_zero_admm = 0.0;
};

// ADMM loop, hard pruning and masked retraining, starting from trained dense
// parameters. `progress` (optional) receives each log row as it is produced.
inline PruneResult run_pruning(const ToyModelSpec& s, const ToyParams& baseline,
                               const Dataset& train, const Dataset& test, const AdmmOptions& opt,
                               std::mt19937_64& rng,
                               const std::function<void(const AdmmLogRow&)>& progress = {}) {
  detail::require<ConfigError>(opt.rho_multiplier > 0, "admm: rho multiplier must be > 0");
  PruneResult res;
  res.params = baseline;
  res.baseline_accuracy = evaluate(s, baseline, test, opt.sgd.threads).accuracy;
  res.near_zero_baseline = near_zero_fraction(baseline);

  auto st = AdmmState::init(baseline, opt.alpha, opt.rho);
  std::size_t epoch = 0;
  for (std::size_t it = 1; it <= opt.iterations; ++it) {
    const auto losses = admm_w_update(st, s, res.params, train, opt.sgd, opt.epochs_per_update,
                                      opt.early_stop, epoch, rng);
    admm_z_update(st, res.params);
    admm_u_update(st, res.params);
    const auto [lo, hi] = z_nonzero_range(st);
    AdmmLogRow row{it, losses.back(), w_minus_z(st, res.params),
                   evaluate(s, res.params, test, opt.sgd.threads).accuracy, lo, hi};
    res.admm_log.push_back(row);
    if (progress) progress(row);
    st.rho *= opt.rho_multiplier;
  }
  res.admm_accuracy = evaluate(s, res.params, test, opt.sgd.threads).accuracy;
  res.near_zero_admm = near_zero_fraction(res.params);

  std::vector<SparseSpectralKernelSet> pruned{hard_prune(res.params.w1, opt.alpha),
                                              hard_prune(res.params.w2, opt.alpha)};
  apply_kernels(res.params, pruned);
  res.pruned_accuracy = evaluate(s, res.params, test, opt.sgd.threads).accuracy;

  res.kernels = retrain(s, res.params, pruned, train, opt.retrain_sgd, opt.retrain_epochs, rng,
                        &res.retrain_log, &test);
  res.retrained_accuracy = evaluate(s, res.params, test, opt.sgd.threads).accuracy;
  return res;
}

inline void write_admm_log_csv(std::ostream& out, const std::vector<AdmmLogRow>& rows) {
  out << "iteration,loss,w_minus_z,accuracy\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.loss << ',' << r.w_minus_z << ',' << r.accuracy << '\n';
}

}  // namespace sparsespec::admm
