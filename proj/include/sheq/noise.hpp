#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sheq/errors.hpp"

namespace sheq {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123 family).
/// A (counter, key) pair always maps to the same four 32-bit words, which is
/// what makes pathwise-coupled refinement possible without storing noise.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
           static_cast<std::uint32_t>(p0)};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

/// Inverse of the standard normal CDF (Wichura's rational approximations,
/// accurate to roughly double precision). Used instead of rejection sampling
/// so that a counter always maps to the same deviate.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ValidationError("inverse_normal_cdf: p must lie strictly in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                   6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
               1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return num / den;
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

/// Uniform deviate in (0,1) addressed by (seed, sample, step, entry).
inline double counter_uniform(std::uint64_t seed, std::uint32_t sample, std::int64_t step,
                              std::uint32_t entry) {
  const auto words = philox4x32(
      {entry, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), sample},
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32));
  const std::uint64_t bits = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

/// Standard normal deviate addressed by (seed, sample, step, entry).
inline double counter_gaussian(std::uint64_t seed, std::uint32_t sample, std::int64_t step,
                               std::uint32_t entry) {
  return inverse_normal_cdf(counter_uniform(seed, sample, step, entry));
}

/// Addressing scheme for one sample path of the driving Brownian-sheet
/// increments. Everything is a pure function of (seed, sample_index, M,
/// N_ref, T): regenerating any block yields bit-identical values.
struct NoisePlan {
  std::uint64_t seed = 1;
  int M = 2;                   // spatial cells; blocks carry M-1 entries
  std::int64_t N_ref = 1;      // finest number of time steps
  double T = 1.0;              // final time
  std::uint32_t sample_index = 0;

  NoisePlan() = default;
  NoisePlan(std::uint64_t seed_, int cells, std::int64_t n_ref, double final_time,
            std::uint32_t sample = 0)
      : seed(seed_), M(cells), N_ref(n_ref), T(final_time), sample_index(sample) {
    if (cells < 2) throw ValidationError("NoisePlan: M must be >= 2");
    if (n_ref < 1) throw ValidationError("NoisePlan: N_ref must be >= 1");
    if (!(final_time > 0.0)) throw ValidationError("NoisePlan: T must be positive");
  }

  double dt_ref() const { return T / static_cast<double>(N_ref); }
};

/// One step's worth of scaled Wiener increments, entries m = 1..M-1.
struct IncrementBlock {
  std::int64_t n = 0;       // step index at the block's level
  std::vector<double> dW;   // units sqrt(time)
};

/// Writes the finest-level increments for step n into out (length M-1).
inline void sample_block_into(const NoisePlan& plan, std::int64_t n, std::span<double> out) {
  if (n < 0 || n >= plan.N_ref)
    throw ValidationError("sample_block: step index " + std::to_string(n) + " out of range");
  if (static_cast<int>(out.size()) != plan.M - 1)
    throw ValidationError("sample_block: output length must be M-1");
  const double scale = std::sqrt(plan.dt_ref());
  for (int m = 1; m < plan.M; ++m)
    out[m - 1] = scale * counter_gaussian(plan.seed, plan.sample_index, n,
                                          static_cast<std::uint32_t>(m));
}

inline IncrementBlock sample_block(const NoisePlan& plan, std::int64_t n) {
  IncrementBlock block;
  block.n = n;
  block.dW.resize(plan.M - 1);
  sample_block_into(plan, n, block.dW);
  return block;
}

namespace detail {

// Streamed pairwise summation. Complete aligned power-of-two subranges always
// reduce to the same balanced tree, which is what makes coarsening commute
// across dyadic refinement levels bit-exactly.
class PairwiseAccumulator {
 public:
  explicit PairwiseAccumulator(std::size_t width) : width_(width) {}

  void push(std::span<const double> item) {
    stack_.emplace_back(0, std::vector<double>(item.begin(), item.end()));
    while (stack_.size() >= 2 &&
           stack_[stack_.size() - 2].first == stack_[stack_.size() - 1].first) {
      auto& left = stack_[stack_.size() - 2];
      auto& right = stack_[stack_.size() - 1];
      for (std::size_t i = 0; i < width_; ++i) left.second[i] += right.second[i];
      left.first += 1;
      stack_.pop_back();
    }
  }

  std::vector<double> finish() {
    if (stack_.empty()) return std::vector<double>(width_, 0.0);
    std::vector<double> acc = std::move(stack_.front().second);
    for (std::size_t k = 1; k < stack_.size(); ++k)
      for (std::size_t i = 0; i < width_; ++i) acc[i] += stack_[k].second[i];
    stack_.clear();
    return acc;
  }

 private:
  std::size_t width_;
  std::vector<std::pair<int, std::vector<double>>> stack_;
};

}  // namespace detail

/// Sums r consecutive blocks of one level into the block of the r-fold
/// coarser level. Summation follows a canonical pairwise order so that
/// coarsening in stages (with power-of-two factors) is bit-identical to
/// coarsening in one shot.
inline IncrementBlock coarsen(std::span<const IncrementBlock> blocks) {
  if (blocks.empty()) throw ValidationError("coarsen: need at least one block");
  const std::size_t width = blocks.front().dW.size();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].dW.size() != width) throw ValidationError("coarsen: mismatched block widths");
    if (i > 0 && blocks[i].n != blocks[i - 1].n + 1)
      throw ValidationError("coarsen: blocks must be consecutive");
  }
  detail::PairwiseAccumulator acc(width);
  for (const auto& b : blocks) acc.push(b.dW);
  IncrementBlock out;
  out.n = blocks.front().n / static_cast<std::int64_t>(blocks.size());
  out.dW = acc.finish();
  return out;
}

/// Iterator over the N_coarse increments of a coarser level, generated by
/// summing regenerated finest-level blocks. Memory stays O(M log r) per step;
/// no fine block is ever stored wholesale.
class CoupledStream {
 public:
  CoupledStream(const NoisePlan& plan, std::int64_t n_coarse)
      : plan_(plan), n_coarse_(n_coarse), next_(0) {
    if (n_coarse < 1) throw ValidationError("CoupledStream: N_coarse must be >= 1");
    if (plan.N_ref % n_coarse != 0)
      throw ValidationError("CoupledStream: N_coarse = " + std::to_string(n_coarse) +
                            " does not divide N_ref = " + std::to_string(plan.N_ref));
    ratio_ = plan.N_ref / n_coarse;
    fine_.resize(plan.M - 1);
  }

  std::int64_t steps() const { return n_coarse_; }
  std::int64_t position() const { return next_; }

  /// Fills out with the increments of coarse step position(); advances.
  void next(std::span<double> out) {
    if (next_ >= n_coarse_)
      throw ValidationError("CoupledStream: stream exhausted after " +
                            std::to_string(n_coarse_) + " steps");
    if (static_cast<int>(out.size()) != plan_.M - 1)
      throw ValidationError("CoupledStream: output length must be M-1");
    if (ratio_ == 1) {
      sample_block_into(plan_, next_, out);
    } else {
      detail::PairwiseAccumulator acc(out.size());
      const std::int64_t base = next_ * ratio_;
      for (std::int64_t k = 0; k < ratio_; ++k) {
        sample_block_into(plan_, base + k, fine_);
        acc.push(fine_);
      }
      auto sum = acc.finish();
      std::copy(sum.begin(), sum.end(), out.begin());
    }
    ++next_;
  }

  IncrementBlock next_block() {
    IncrementBlock block;
    block.n = next_;
    block.dW.resize(plan_.M - 1);
    next(block.dW);
    return block;
  }

 private:
  NoisePlan plan_;
  std::int64_t n_coarse_;
  std::int64_t ratio_;
  std::int64_t next_;
  std::vector<double> fine_;
};

}  // namespace sheq
