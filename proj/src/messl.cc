#include "tfmask/messl.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>

#include "tfmask/error.h"
#include "tfmask/phase.h"

namespace tfmask {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinPeakSeparation = 1.0;  // samples
constexpr double kTinyWeight = 1e-12;

Eigen::VectorXd BinFrequencies(Eigen::Index bins, std::size_t window) {
  Eigen::VectorXd w(bins);
  for (Eigen::Index f = 0; f < bins; ++f) w(f) = kTwoPi * f / static_cast<double>(window);
  return w;
}

double PhatAt(const Eigen::VectorXcd& summed, const Eigen::VectorXd& omega, double tau) {
  double r = 0.0;
  for (Eigen::Index f = 0; f < summed.size(); ++f) {
    const double a = omega(f) * tau;
    r += summed(f).real() * std::cos(a) - summed(f).imag() * std::sin(a);
  }
  return r;
}

// PHAT-normalized cross-power y_c * conj(y_ref) / |.|, zero where silent.
std::complex<double> PhatTerm(std::complex<double> yc, std::complex<double> yr) {
  const std::complex<double> x = yc * std::conj(yr);
  const double m = std::abs(x);
  return m > 0.0 ? x / m : std::complex<double>(0.0, 0.0);
}

// Top-k local maxima of `score` with at least kMinPeakSeparation between
// picks; falls back to the best remaining grid points.
std::vector<double> PickPeaks(const Eigen::VectorXd& score,
                              const std::vector<double>& grid, std::size_t k) {
  const Eigen::Index n = score.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return score(a) > score(b); });
  auto is_peak = [&](Eigen::Index i) {
    return (i == 0 || score(i) >= score(i - 1)) && (i + 1 == n || score(i) >= score(i + 1));
  };
  std::vector<double> picked;
  auto far_enough = [&](double tau) {
    for (double p : picked)
      if (std::abs(p - tau) < kMinPeakSeparation) return false;
    return true;
  };
  for (Eigen::Index i : order)
    if (picked.size() < k && is_peak(i) && far_enough(grid[static_cast<std::size_t>(i)]))
      picked.push_back(grid[static_cast<std::size_t>(i)]);
  for (Eigen::Index i : order)
    if (picked.size() < k && far_enough(grid[static_cast<std::size_t>(i)]))
      picked.push_back(grid[static_cast<std::size_t>(i)]);
  for (Eigen::Index i : order) {
    double tau = grid[static_cast<std::size_t>(i)];
    if (picked.size() < k && std::find(picked.begin(), picked.end(), tau) == picked.end())
      picked.push_back(tau);
  }
  while (picked.size() < k) picked.push_back(grid.front());
  return picked;
}

class EmState {
 public:
  EmState(const std::vector<Spectrogram>& specs, const MesslConfig& cfg)
      : cfg_(cfg) {
    const std::size_t ref = cfg.reference_channel;
    for (std::size_t c = 0; c < specs.size(); ++c)
      if (c != ref) pair_channels_.push_back(c);
    ipd_ = ObservedIpd(specs, ref);
    bins_ = specs.front().num_bins();
    frames_ = specs.front().num_frames();
    omega_ = BinFrequencies(bins_, specs.front().config.window_size);
    n_sources_ = static_cast<Eigen::Index>(cfg.n_sources);
    n_components_ = n_sources_ + (cfg.garbage_source ? 1 : 0);
    n_pairs_ = static_cast<Eigen::Index>(ipd_.size());
    Initialize(specs);
  }

  double EStep() {
    posteriors_.assign(static_cast<std::size_t>(n_components_),
                       Eigen::MatrixXd(bins_, frames_));
    const double pairs = static_cast<double>(n_pairs_);
    const double garbage_ll = -pairs * std::log(kTwoPi);
    Eigen::MatrixXd log_norm(bins_, n_sources_), inv2var(bins_, n_sources_);
    for (Eigen::Index k = 0; k < n_sources_; ++k)
      for (Eigen::Index f = 0; f < bins_; ++f) {
        const double v = params_.variance(f, k);
        log_norm(f, k) = -0.5 * pairs * std::log(kTwoPi * v);
        inv2var(f, k) = 0.5 / v;
      }
    std::vector<double> log_prior(static_cast<std::size_t>(n_components_));
    for (Eigen::Index k = 0; k < n_components_; ++k)
      log_prior[static_cast<std::size_t>(k)] =
          params_.priors(k) > 0.0 ? std::log(params_.priors(k))
                                  : -std::numeric_limits<double>::infinity();

    for (Eigen::Index k = 0; k < n_sources_; ++k) {
      Eigen::MatrixXd& lp = posteriors_[static_cast<std::size_t>(k)];
      for (Eigen::Index t = 0; t < frames_; ++t)
        for (Eigen::Index f = 0; f < bins_; ++f) lp(f, t) = log_prior[k] + log_norm(f, k);
      for (Eigen::Index p = 0; p < n_pairs_; ++p) {
        const double tau = params_.delays(k, p);
        const Eigen::MatrixXd& phi = ipd_[static_cast<std::size_t>(p)];
        for (Eigen::Index t = 0; t < frames_; ++t)
          for (Eigen::Index f = 0; f < bins_; ++f) {
            const double d = WrapPhase(phi(f, t) + omega_(f) * tau) - params_.mean(f, k);
            lp(f, t) -= d * d * inv2var(f, k);
          }
      }
    }
    if (cfg_.garbage_source)
      posteriors_.back().setConstant(log_prior.back() + garbage_ll);

    // Normalize in the log domain.
    double loglik = 0.0;
    for (Eigen::Index t = 0; t < frames_; ++t)
      for (Eigen::Index f = 0; f < bins_; ++f) {
        double mx = -std::numeric_limits<double>::infinity();
        for (const auto& lp : posteriors_) mx = std::max(mx, lp(f, t));
        double sum = 0.0;
        for (const auto& lp : posteriors_) sum += std::exp(lp(f, t) - mx);
        const double lse = mx + std::log(sum);
        loglik += lse;
        for (auto& lp : posteriors_) lp(f, t) = std::exp(lp(f, t) - lse);
      }
    if (!std::isfinite(loglik)) throw NumericalError("EM log-likelihood is not finite");
    return loglik;
  }

  void MStep() {
    UpdateDelays();
    UpdateResidualModel();
    const double total = static_cast<double>(bins_ * frames_);
    for (Eigen::Index k = 0; k < n_components_; ++k)
      params_.priors(k) = posteriors_[static_cast<std::size_t>(k)].sum() / total;
  }

  MesslResult Finish(std::vector<double> trace) {
    MesslResult r;
    r.params = params_;
    r.loglik_trace = std::move(trace);
    r.pair_channels = pair_channels_;
    for (auto& post : posteriors_) r.masks.push_back(MaskGrid{std::move(post)});
    r.target = SelectTarget();
    return r;
  }

 private:
  void Initialize(const std::vector<Spectrogram>& specs) {
    const auto& grid = cfg_.delay_grid;
    const std::size_t ref = cfg_.reference_channel;
    // Per-pair PHAT cross-power, summed over time.
    std::vector<Eigen::MatrixXcd> phat(static_cast<std::size_t>(n_pairs_));
    std::vector<Eigen::VectorXd> scores;
    for (Eigen::Index p = 0; p < n_pairs_; ++p) {
      const auto& yc = specs[pair_channels_[static_cast<std::size_t>(p)]].bins;
      const auto& yr = specs[ref].bins;
      auto& g = phat[static_cast<std::size_t>(p)];
      g.resize(bins_, frames_);
      for (Eigen::Index t = 0; t < frames_; ++t)
        for (Eigen::Index f = 0; f < bins_; ++f) g(f, t) = PhatTerm(yc(f, t), yr(f, t));
      Eigen::VectorXcd summed = g.rowwise().sum();
      Eigen::VectorXd s(static_cast<Eigen::Index>(grid.size()));
      for (std::size_t i = 0; i < grid.size(); ++i)
        s(static_cast<Eigen::Index>(i)) = PhatAt(summed, omega_, grid[i]);
      scores.push_back(std::move(s));
    }
    Eigen::Index anchor = 0;
    for (Eigen::Index p = 1; p < n_pairs_; ++p)
      if (scores[p].maxCoeff() > scores[anchor].maxCoeff()) anchor = p;

    params_.delays.resize(n_sources_, n_pairs_);
    const auto anchor_taus = PickPeaks(scores[anchor], grid, cfg_.n_sources);
    for (Eigen::Index k = 0; k < n_sources_; ++k)
      params_.delays(k, anchor) = anchor_taus[static_cast<std::size_t>(k)];

    if (n_pairs_ > 1) {
      // Associate peaks across pairs: assign each bin to the source whose
      // anchor-pair delay explains it best, then re-run PHAT per source.
      Eigen::MatrixXi owner(bins_, frames_);
      const auto& phi_a = ipd_[static_cast<std::size_t>(anchor)];
      for (Eigen::Index t = 0; t < frames_; ++t)
        for (Eigen::Index f = 0; f < bins_; ++f) {
          double best = std::numeric_limits<double>::infinity();
          int arg = 0;
          for (Eigen::Index k = 0; k < n_sources_; ++k) {
            double r = std::abs(WrapPhase(phi_a(f, t) + omega_(f) * params_.delays(k, anchor)));
            if (r < best) {
              best = r;
              arg = static_cast<int>(k);
            }
          }
          owner(f, t) = arg;
        }
      for (Eigen::Index p = 0; p < n_pairs_; ++p) {
        if (p == anchor) continue;
        const auto& g = phat[static_cast<std::size_t>(p)];
        for (Eigen::Index k = 0; k < n_sources_; ++k) {
          Eigen::VectorXcd summed = Eigen::VectorXcd::Zero(bins_);
          for (Eigen::Index t = 0; t < frames_; ++t)
            for (Eigen::Index f = 0; f < bins_; ++f)
              if (owner(f, t) == k) summed(f) += g(f, t);
          double best = -std::numeric_limits<double>::infinity();
          double arg = grid.front();
          for (double tau : grid) {
            double s = PhatAt(summed, omega_, tau);
            if (s > best) {
              best = s;
              arg = tau;
            }
          }
          params_.delays(k, p) = arg;
        }
      }
    }

    // Canonical labelling: sources ordered by distance of their delays from 0.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_sources_));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return params_.delays.row(a).squaredNorm() < params_.delays.row(b).squaredNorm();
    });
    Eigen::MatrixXd sorted(n_sources_, n_pairs_);
    for (Eigen::Index k = 0; k < n_sources_; ++k) sorted.row(k) = params_.delays.row(order[k]);
    params_.delays = sorted;

    params_.mean = Eigen::MatrixXd::Zero(bins_, n_sources_);
    params_.variance = Eigen::MatrixXd::Ones(bins_, n_sources_);
    params_.priors = Eigen::VectorXd::Constant(n_components_, 1.0 / n_components_);
  }

  // Expected complete-data log-likelihood terms of source k on pair p that
  // depend on the delay, up to a positive factor.
  double DelayObjective(Eigen::Index k, Eigen::Index p, double tau,
                        const Eigen::VectorXd& inv2var) const {
    const Eigen::MatrixXd& phi = ipd_[static_cast<std::size_t>(p)];
    const Eigen::MatrixXd& gamma = posteriors_[static_cast<std::size_t>(k)];
    Eigen::VectorXd shift = omega_ * tau;
    double acc = 0.0;
    for (Eigen::Index t = 0; t < frames_; ++t) {
      const double* ph = phi.col(t).data();
      const double* g = gamma.col(t).data();
      for (Eigen::Index f = 0; f < bins_; ++f) {
        const double d = WrapPhase(ph[f] + shift(f)) - params_.mean(f, k);
        acc += g[f] * d * d * inv2var(f);
      }
    }
    return -acc;
  }

  void UpdateDelays() {
    for (Eigen::Index k = 0; k < n_sources_; ++k) {
      Eigen::VectorXd inv2var = (2.0 * params_.variance.col(k)).cwiseInverse();
      for (Eigen::Index p = 0; p < n_pairs_; ++p) {
        double best_tau = params_.delays(k, p);
        double best = DelayObjective(k, p, best_tau, inv2var);
        for (double tau : cfg_.delay_grid) {
          if (tau == best_tau) continue;
          const double q = DelayObjective(k, p, tau, inv2var);
          if (q > best) {
            best = q;
            best_tau = tau;
          }
        }
        params_.delays(k, p) = best_tau;
      }
    }
  }

  void UpdateResidualModel() {
    const double pairs = static_cast<double>(n_pairs_);
    for (Eigen::Index k = 0; k < n_sources_; ++k) {
      const Eigen::MatrixXd& gamma = posteriors_[static_cast<std::size_t>(k)];
      Eigen::VectorXd weight = gamma.rowwise().sum();
      Eigen::VectorXd first = Eigen::VectorXd::Zero(bins_);
      // Residuals are needed twice; cache them per pair.
      std::vector<Eigen::MatrixXd> resid(static_cast<std::size_t>(n_pairs_),
                                         Eigen::MatrixXd(bins_, frames_));
      for (Eigen::Index p = 0; p < n_pairs_; ++p) {
        const double tau = params_.delays(k, p);
        const Eigen::MatrixXd& phi = ipd_[static_cast<std::size_t>(p)];
        auto& r = resid[static_cast<std::size_t>(p)];
        for (Eigen::Index t = 0; t < frames_; ++t)
          for (Eigen::Index f = 0; f < bins_; ++f) {
            r(f, t) = WrapPhase(phi(f, t) + omega_(f) * tau);
            first(f) += gamma(f, t) * r(f, t);
          }
      }
      for (Eigen::Index f = 0; f < bins_; ++f) {
        if (weight(f) < kTinyWeight) continue;
        const double mu = first(f) / (pairs * weight(f));
        double second = 0.0;
        for (Eigen::Index p = 0; p < n_pairs_; ++p) {
          const auto& r = resid[static_cast<std::size_t>(p)];
          for (Eigen::Index t = 0; t < frames_; ++t) {
            const double d = r(f, t) - mu;
            second += gamma(f, t) * d * d;
          }
        }
        params_.mean(f, k) = mu;
        params_.variance(f, k) = std::max(second / (pairs * weight(f)), cfg_.var_floor);
      }
    }
  }

  std::size_t SelectTarget() const {
    if (cfg_.target_index) return *cfg_.target_index;
    Eigen::VectorXd want = Eigen::VectorXd::Zero(n_pairs_);
    if (cfg_.target_delays)
      for (Eigen::Index p = 0; p < n_pairs_; ++p)
        want(p) = (*cfg_.target_delays)[static_cast<std::size_t>(p)];
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n_sources_; ++k) {
      double d = (params_.delays.row(k).transpose() - want).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<std::size_t>(k);
      }
    }
    return best;
  }

  const MesslConfig& cfg_;
  std::vector<std::size_t> pair_channels_;
  std::vector<Eigen::MatrixXd> ipd_;
  Eigen::Index bins_ = 0, frames_ = 0;
  Eigen::VectorXd omega_;
  Eigen::Index n_sources_ = 0, n_components_ = 0, n_pairs_ = 0;
  MesslParams params_;
  std::vector<Eigen::MatrixXd> posteriors_;
};

}  // namespace

std::vector<double> MesslConfig::UniformGrid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ConfigError("invalid delay grid range");
  std::vector<double> g;
  const long n = std::lround((hi - lo) / step);
  for (long i = 0; i <= n; ++i) g.push_back(lo + step * static_cast<double>(i));
  return g;
}

std::vector<double> MesslConfig::DefaultDelayGrid() { return UniformGrid(-8.0, 8.0, 0.25); }

void MesslConfig::Validate() const {
  if (n_sources < 1) throw ConfigError("MESSL needs at least one source");
  if (delay_grid.empty()) throw ConfigError("delay grid is empty");
  if (std::find(delay_grid.begin(), delay_grid.end(), 0.0) == delay_grid.end())
    throw ConfigError("delay grid must contain 0");
  for (double d : delay_grid)
    if (!std::isfinite(d)) throw ConfigError("delay grid entries must be finite");
  if (!(var_floor > 0.0)) throw ConfigError("variance floor must be positive");
  if (!(convergence_tol >= 0.0)) throw ConfigError("convergence tolerance must be >= 0");
  if (target_index && *target_index >= n_sources)
    throw ConfigError("target index out of range");
}

std::vector<Eigen::MatrixXd> ObservedIpd(const std::vector<Spectrogram>& specs,
                                         std::size_t ref) {
  if (specs.size() < 2) throw DataError("phase differences need at least two channels");
  if (ref >= specs.size()) throw ConfigError("reference channel out of range");
  for (const auto& s : specs)
    if (s.bins.rows() != specs[ref].bins.rows() || s.bins.cols() != specs[ref].bins.cols())
      throw DataError("channel spectrograms differ in shape");
  std::vector<Eigen::MatrixXd> out;
  const auto& yr = specs[ref].bins;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    if (c == ref) continue;
    const auto& yc = specs[c].bins;
    Eigen::MatrixXd phi(yc.rows(), yc.cols());
    for (Eigen::Index t = 0; t < yc.cols(); ++t)
      for (Eigen::Index f = 0; f < yc.rows(); ++f)
        phi(f, t) = WrapPhase(std::arg(yc(f, t)) - std::arg(yr(f, t)));
    out.push_back(std::move(phi));
  }
  return out;
}

Eigen::VectorXd PhatCorrelation(const Spectrogram& other, const Spectrogram& ref,
                                const std::vector<double>& delay_grid) {
  if (other.bins.rows() != ref.bins.rows() || other.bins.cols() != ref.bins.cols())
    throw DataError("channel spectrograms differ in shape");
  Eigen::VectorXcd summed = Eigen::VectorXcd::Zero(ref.num_bins());
  for (Eigen::Index t = 0; t < ref.num_frames(); ++t)
    for (Eigen::Index f = 0; f < ref.num_bins(); ++f)
      summed(f) += PhatTerm(other.bins(f, t), ref.bins(f, t));
  const auto omega = BinFrequencies(ref.num_bins(), ref.config.window_size);
  Eigen::VectorXd out(static_cast<Eigen::Index>(delay_grid.size()));
  for (std::size_t i = 0; i < delay_grid.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = PhatAt(summed, omega, delay_grid[i]);
  return out;
}

MesslResult RunEm(const std::vector<Spectrogram>& specs, const MesslConfig& cfg) {
  cfg.Validate();
  if (specs.size() < 2) throw DataError("MESSL needs at least two channels");
  if (cfg.reference_channel >= specs.size())
    throw ConfigError("reference channel out of range");
  if (cfg.target_delays && cfg.target_delays->size() != specs.size() - 1)
    throw ConfigError("target_delays needs one entry per channel pair");
  bool silent = true;
  for (const auto& s : specs) {
    if (!s.bins.allFinite()) throw DataError("spectrogram contains non-finite values");
    if (s.bins.cwiseAbs2().maxCoeff() > 0.0) silent = false;
  }
  if (silent) throw DataError("silent input");

  EmState state(specs, cfg);
  std::vector<double> trace;
  trace.push_back(state.EStep());
  for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
    state.MStep();
    const double ll = state.EStep();
    const double prev = trace.back();
    trace.push_back(ll);
    if (std::abs(ll - prev) <= cfg.convergence_tol * std::max(std::abs(prev), 1e-300)) break;
  }
  return state.Finish(std::move(trace));
}

MaskGrid Binarize(const MaskGrid& mask, double threshold) {
  MaskGrid out;
  out.values = (mask.values.array() > threshold).cast<double>().matrix();
  return out;
}

}  // namespace tfmask
