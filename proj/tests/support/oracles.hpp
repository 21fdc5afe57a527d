// Copyright 2026 The fusioncm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Straight-line reference implementations used as test oracles. None of
// these share code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "fusioncm/tensor.hpp"

namespace fusioncm::testing {

using nn::Tensor;

struct ConvSpec {
  std::size_t out_channels = 1;
  std::size_t kh = 3, kw = 3;
  std::size_t sh = 1, sw = 1;
  std::size_t pt = 0, pb = 0, pl = 0, pr = 0;
};

// Direct cross-correlation. weight: out x in x kh x kw, bias may be empty.
inline Tensor NaiveConv(const Tensor &x, const std::vector<double> &weight,
                        const std::vector<double> &bias, const ConvSpec &s) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h + s.pt + s.pb - s.kh) / s.sh + 1;
  const std::size_t ow = (w + s.pl + s.pr - s.kw) / s.sw + 1;
  Tensor y({n, s.out_channels, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t u = 0; u < s.kh; ++u)
              for (std::size_t v = 0; v < s.kw; ++v) {
                const long r = static_cast<long>(i * s.sh + u) - static_cast<long>(s.pt);
                const long q = static_cast<long>(j * s.sw + v) - static_cast<long>(s.pl);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                acc += weight[((o * c + ci) * s.kh + u) * s.kw + v] *
                       x.at(b, ci, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
              }
          y.at(b, o, i, j) = acc;
        }
  return y;
}

// Eval-mode batchnorm on N x C x H x W.
inline Tensor NaiveBatchNorm(const Tensor &x, const std::vector<double> &gamma,
                             const std::vector<double> &beta, const std::vector<double> &mean,
                             const std::vector<double> &var, double eps) {
  Tensor y(x.shape);
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j)
          y.at(b, c, i, j) = gamma[c] * (x.at(b, c, i, j) - mean[c]) / std::sqrt(var[c] + eps) + beta[c];
  return y;
}

// N x D in, weight out x D.
inline Tensor NaiveDense(const Tensor &x, const std::vector<double> &weight,
                         const std::vector<double> &bias, std::size_t out) {
  const std::size_t n = x.dim(0), d = x.size() / n;
  Tensor y({n, out});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < d; ++i) acc += weight[o * d + i] * x.data[b * d + i];
      y.at(b, o) = acc;
    }
  return y;
}

inline Tensor NaiveRelu(Tensor x) {
  for (double &v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

inline double NaiveSigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// N x C x H x W -> N x C.
inline Tensor NaiveChannelMean(const Tensor &x) {
  Tensor y({x.dim(0), x.dim(1)});
  const double area = static_cast<double>(x.dim(2) * x.dim(3));
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j) acc += x.at(b, c, i, j);
      y.at(b, c) = acc / area;
    }
  return y;
}

inline Tensor NaiveConcatChannels(const std::vector<const Tensor *> &xs) {
  std::size_t c = 0;
  for (const Tensor *t : xs) c += t->dim(1);
  const Tensor &f = *xs.front();
  Tensor y({f.dim(0), c, f.dim(2), f.dim(3)});
  for (std::size_t b = 0; b < f.dim(0); ++b) {
    std::size_t base = 0;
    for (const Tensor *t : xs) {
      for (std::size_t ci = 0; ci < t->dim(1); ++ci)
        for (std::size_t i = 0; i < f.dim(2); ++i)
          for (std::size_t j = 0; j < f.dim(3); ++j) y.at(b, base + ci, i, j) = t->at(b, ci, i, j);
      base += t->dim(1);
    }
  }
  return y;
}

inline Tensor NaiveSliceChannels(const Tensor &x, std::size_t begin, std::size_t count) {
  Tensor y({x.dim(0), count, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j) y.at(b, c, i, j) = x.at(b, begin + c, i, j);
  return y;
}

inline Tensor NaiveAdd(const Tensor &a, const Tensor &b) {
  Tensor y(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

inline double MaxAbsDiff(const Tensor &a, const Tensor &b) {
  if (a.shape != b.shape) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// O(N^2) DFT of a real frame zero-padded to n, bins 0..n/2.
inline std::vector<std::complex<double>> NaiveRealDft(std::span<const double> frame, std::size_t n) {
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < frame.size() && t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += frame[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// DCT-II basis as an explicit B x (M+1) matrix, cos(j (i + 1/2) pi / B).
inline std::vector<std::vector<double>> DctMatrix(std::size_t b, std::size_t m) {
  std::vector<std::vector<double>> d(b, std::vector<double>(m + 1));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j <= m; ++j)
      d[i][j] = std::cos(static_cast<double>(j) * (static_cast<double>(i) + 0.5) * std::numbers::pi /
                         static_cast<double>(b));
  return d;
}

// Threshold sweep by direct counting: at t, a target is rejected iff score < t
// and a nontarget accepted iff score >= t. Candidates are -inf, every score,
// +inf (duplicates included, which cannot change a minimum).
struct BrutePoint {
  double fr, fa;
};

inline std::vector<BrutePoint> BruteSweep(std::span<const double> tar, std::span<const double> non) {
  std::vector<double> cand(tar.begin(), tar.end());
  cand.insert(cand.end(), non.begin(), non.end());
  std::sort(cand.begin(), cand.end());
  cand.insert(cand.begin(), -std::numeric_limits<double>::infinity());
  cand.push_back(std::numeric_limits<double>::infinity());
  std::vector<BrutePoint> pts;
  for (double t : cand) {
    std::size_t miss = 0, fa = 0;
    for (double s : tar) miss += s < t;
    for (double s : non) fa += s >= t;
    pts.push_back({static_cast<double>(miss) / static_cast<double>(tar.size()),
                   static_cast<double>(fa) / static_cast<double>(non.size())});
  }
  return pts;
}

inline double BruteMinTdcf(std::span<const double> tar, std::span<const double> non, double beta) {
  double best = std::numeric_limits<double>::infinity();
  for (const BrutePoint &p : BruteSweep(tar, non)) best = std::min(best, beta * p.fr + p.fa);
  return best;
}

// Where the (fr, fa) polyline first meets the diagonal fa = fr, found by
// intersecting each segment with the line y = x.
inline double BruteEer(std::span<const double> tar, std::span<const double> non) {
  const std::vector<BrutePoint> pts = BruteSweep(tar, non);
  if (pts.front().fa <= pts.front().fr) return pts.front().fr;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const BrutePoint p = pts[i - 1], q = pts[i];
    if (q.fa > q.fr) continue;
    // p + u (q - p) on y = x.
    const double denom = (q.fr - p.fr) - (q.fa - p.fa);
    const double u = (p.fa - p.fr) / denom;
    return p.fr + u * (q.fr - p.fr);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fusioncm::testing
