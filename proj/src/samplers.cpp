#include "gptcm/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gptcm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double slice_sample(const LogDensity& ld, double x0, double width, int max_steps, Rng& rng,
                    SamplerDiagnostics* diag) {
  const double h0 = ld(x0);
  if (!std::isfinite(h0)) throw contract_error("slice_sample: log density not finite at the current point");
  const double level = h0 - rng.exponential(1.0);

  // stepping out
  const double u = rng.uniform();
  double lo = x0 - u * width;
  double hi = lo + width;
  lo = std::max(lo, ld.lower);
  hi = std::min(hi, ld.upper);
  int steps_lo = 0, steps_hi = 0;
  while (steps_lo < max_steps && lo > ld.lower && ld(lo) > level) {
    lo -= width;
    ++steps_lo;
    if (diag) ++diag->slice_expansions;
  }
  lo = std::max(lo, ld.lower);
  while (steps_hi < max_steps && hi < ld.upper && ld(hi) > level) {
    hi += width;
    ++steps_hi;
    if (diag) ++diag->slice_expansions;
  }
  hi = std::min(hi, ld.upper);

  // shrinkage
  for (;;) {
    const double x = rng.uniform(lo, hi);
    if (diag) ++diag->proposals;
    if (ld(x) >= level) {
      if (diag) ++diag->acceptances;
      return x;
    }
    if (diag) ++diag->slice_shrinks;
    if (x < x0)
      lo = x;
    else if (x > x0)
      hi = x;
    else
      return x0;  // bracket collapsed onto the current point
  }
}

namespace {

// Piecewise-linear upper hull over ordered abscissae (derivative-free ARS
// construction: inside [x_i, x_{i+1}] the bound is the lower of the two
// adjacent chords extended into the interval; outside the abscissae it is
// the outermost chord extended).
struct Hull {
  struct Segment {
    double lo, hi;       // x range
    double a, s;         // env(x) = a + s * (x - lo)
    double log_mass;     // log integral of exp(env) over [lo, hi]
  };
  std::vector<double> x, h;
  std::vector<Segment> segs;
  double log_total = kNegInf;

  static double log_segment_mass(double a, double s, double lo, double hi) {
    const double len = hi - lo;
    if (len <= 0.0) return kNegInf;
    // integral of exp(a + s u) du over [0, len]
    const double z = s * len;
    double log_i;
    if (std::abs(z) < 1e-12) {
      log_i = std::log(len) + 0.5 * z;  // second-order accurate around z = 0
    } else if (z > 0.0) {
      log_i = z + std::log1p(-std::exp(-z)) - std::log(s);
    } else {
      log_i = std::log1p(-std::exp(z)) - std::log(-s);
    }
    return a + log_i;
  }

  void build(const std::vector<double>& xs, const std::vector<double>& hs, double lower, double upper) {
    x = xs;
    h = hs;
    segs.clear();
    const size_t m = x.size();
    auto chord_slope = [&](size_t i) { return (h[i + 1] - h[i]) / (x[i + 1] - x[i]); };

    // left boundary piece
    if (lower < x.front()) {
      const double s = chord_slope(0);
      const double lo = std::isfinite(lower) ? lower : x.front() - 0.0;  // resolved below
      if (std::isfinite(lower)) {
        const double a = h[0] + s * (lower - x[0]);
        segs.push_back({lower, x[0], a, s, log_segment_mass(a, s, lower, x[0])});
      } else if (s > 1e-12) {
        // infinite tail with increasing chord: finite mass
        const double cut = x[0] - 700.0 / s;  // below this the envelope mass is negligible
        const double a = h[0] + s * (cut - x[0]);
        segs.push_back({cut, x[0], a, s, log_segment_mass(a, s, cut, x[0])});
      }
      (void)lo;
    }
    for (size_t i = 0; i + 1 < m; ++i) {
      const double left_s = i == 0 ? kNegInf : chord_slope(i - 1);
      const double right_s = i + 2 < m ? chord_slope(i + 1) : kNegInf;
      const bool have_left = i > 0;
      const bool have_right = i + 2 < m;
      const double lo = x[i], hi = x[i + 1];
      if (!have_left && !have_right) {
        // only one interval: use the chord itself (MH corrects the underestimate)
        const double s = chord_slope(i);
        segs.push_back({lo, hi, h[i], s, log_segment_mass(h[i], s, lo, hi)});
        continue;
      }
      // lines extended from the adjacent chords
      auto line_left = [&](double xx) { return h[i] + left_s * (xx - x[i]); };
      auto line_right = [&](double xx) { return h[i + 1] + right_s * (xx - x[i + 1]); };
      if (!have_left) {
        const double a = line_right(lo);
        segs.push_back({lo, hi, a, right_s, log_segment_mass(a, right_s, lo, hi)});
      } else if (!have_right) {
        const double a = line_left(lo);
        segs.push_back({lo, hi, a, left_s, log_segment_mass(a, left_s, lo, hi)});
      } else {
        // intersection of the two lines; envelope is their minimum
        const double denom = left_s - right_s;
        double xc = std::numeric_limits<double>::quiet_NaN();
        if (std::abs(denom) > 1e-300) xc = (line_right(lo) - line_left(lo)) / denom + lo;
        if (std::isfinite(xc) && xc > lo && xc < hi) {
          const bool left_first = line_left(lo) <= line_right(lo);
          const double s1 = left_first ? left_s : right_s;
          const double s2 = left_first ? right_s : left_s;
          const double a1 = std::min(line_left(lo), line_right(lo));
          segs.push_back({lo, xc, a1, s1, log_segment_mass(a1, s1, lo, xc)});
          const double a2 = a1 + s1 * (xc - lo);
          segs.push_back({xc, hi, a2, s2, log_segment_mass(a2, s2, xc, hi)});
        } else {
          const double a = std::min(line_left(lo), line_right(lo));
          const double s = line_left(lo) <= line_right(lo) ? left_s : right_s;
          segs.push_back({lo, hi, a, s, log_segment_mass(a, s, lo, hi)});
        }
      }
    }
    // right boundary piece
    if (upper > x.back()) {
      const double s = chord_slope(m - 2);
      if (std::isfinite(upper)) {
        segs.push_back({x.back(), upper, h.back(), s, log_segment_mass(h.back(), s, x.back(), upper)});
      } else if (s < -1e-12) {
        const double cut = x.back() - 700.0 / s;
        segs.push_back({x.back(), cut, h.back(), s, log_segment_mass(h.back(), s, x.back(), cut)});
      }
    }
    double mx = kNegInf;
    for (const auto& seg : segs) mx = std::max(mx, seg.log_mass);
    if (mx == kNegInf) {
      log_total = kNegInf;
      return;
    }
    double acc = 0.0;
    for (const auto& seg : segs) acc += std::exp(seg.log_mass - mx);
    log_total = mx + std::log(acc);
  }

  double value_at(double xx) const {
    for (const auto& seg : segs)
      if (xx >= seg.lo && xx <= seg.hi) return seg.a + seg.s * (xx - seg.lo);
    // outside every segment: extend the nearest one
    if (!segs.empty()) {
      if (xx < segs.front().lo) return segs.front().a + segs.front().s * (xx - segs.front().lo);
      const auto& seg = segs.back();
      return seg.a + seg.s * (xx - seg.lo);
    }
    return kNegInf;
  }

  double sample(Rng& rng) const {
    // pick a segment proportionally to its mass
    double u = rng.uniform();
    double acc = 0.0;
    size_t pick = segs.size() - 1;
    for (size_t k = 0; k < segs.size(); ++k) {
      acc += std::exp(segs[k].log_mass - log_total);
      if (u <= acc) {
        pick = k;
        break;
      }
    }
    const auto& seg = segs[pick];
    // inverse CDF within the segment
    const double v = rng.uniform();
    const double len = seg.hi - seg.lo;
    const double z = seg.s * len;
    double offset;
    if (std::abs(z) < 1e-12) {
      offset = v * len;
    } else {
      // F(u) = (e^{s u} - 1) / (e^{s len} - 1)
      const double log_num = std::log1p(v * std::expm1(z));
      offset = log_num / seg.s;
      offset = std::clamp(offset, 0.0, len);
    }
    return seg.lo + offset;
  }
};

}  // namespace

double arms_sample(const LogDensity& ld, const std::vector<double>& init_abscissae, double x0, Rng& rng,
                   SamplerDiagnostics* diag) {
  if (init_abscissae.size() < 3) throw contract_error("arms_sample needs at least 3 initial abscissae");
  const double h_cur = ld(x0);
  if (!std::isfinite(h_cur)) throw contract_error("arms_sample: log density not finite at the current point");

  // collect finite support points, pulling stray abscissae toward x0
  std::vector<double> xs;
  std::vector<double> hs;
  for (double xx : init_abscissae) {
    double cand = xx;
    for (int tries = 0; tries < 40; ++tries) {
      if (cand > ld.lower && cand < ld.upper && std::isfinite(ld(cand))) break;
      cand = 0.5 * (cand + x0);
    }
    if (!(cand > ld.lower && cand < ld.upper)) continue;
    const double hh = ld(cand);
    if (!std::isfinite(hh)) continue;
    xs.push_back(cand);
    hs.push_back(hh);
  }
  if (xs.size() < 2) throw domain_error("arms_sample: envelope degenerate (log density not finite anywhere)");
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> sx, sh;
  for (size_t i : order) {
    if (!sx.empty() && xs[i] - sx.back() < 1e-13) continue;  // drop duplicates
    sx.push_back(xs[i]);
    sh.push_back(hs[i]);
  }
  if (sx.size() < 2) throw domain_error("arms_sample: envelope degenerate (abscissae collapsed)");

  // make an infinite-support envelope integrable: extend the outer abscissae
  // until the outermost chords slope the right way
  auto left_slope = [&] { return (sh[1] - sh[0]) / (sx[1] - sx[0]); };
  auto right_slope = [&] {
    const size_t m = sx.size();
    return (sh[m - 1] - sh[m - 2]) / (sx[m - 1] - sx[m - 2]);
  };
  if (!std::isfinite(ld.lower)) {
    double step = std::max(1.0, sx.back() - sx.front());
    for (int tries = 0; tries < 60 && left_slope() <= 1e-12; ++tries) {
      const double nx = sx.front() - step;
      const double nh = ld(nx);
      step *= 2.0;
      if (!std::isfinite(nh)) break;
      sx.insert(sx.begin(), nx);
      sh.insert(sh.begin(), nh);
    }
  }
  if (!std::isfinite(ld.upper)) {
    double step = std::max(1.0, sx.back() - sx.front());
    for (int tries = 0; tries < 60 && right_slope() >= -1e-12; ++tries) {
      const double nx = sx.back() + step;
      const double nh = ld(nx);
      step *= 2.0;
      if (!std::isfinite(nh)) break;
      sx.push_back(nx);
      sh.push_back(nh);
    }
  }

  Hull hull;
  hull.build(sx, sh, ld.lower, ld.upper);
  if (!(hull.log_total > kNegInf)) throw domain_error("arms_sample: envelope has no mass");

  // rejection loop with envelope refinement
  double cand = x0;
  double h_cand = h_cur;
  bool found = false;
  for (int it = 0; it < 100; ++it) {
    const double xx = hull.sample(rng);
    const double env = hull.value_at(xx);
    const double hh = ld(xx);
    if (diag) ++diag->proposals;
    if (std::log(rng.uniform()) <= hh - env) {
      cand = xx;
      h_cand = hh;
      found = true;
      break;
    }
    // refine: insert the rejected point and rebuild
    if (std::isfinite(hh)) {
      auto pos = std::lower_bound(sx.begin(), sx.end(), xx);
      if (pos == sx.end() || std::abs(*pos - xx) > 1e-13) {
        sh.insert(sh.begin() + (pos - sx.begin()), hh);
        sx.insert(pos, xx);
        hull.build(sx, sh, ld.lower, ld.upper);
        if (diag) ++diag->arms_rebuilds;
      }
    }
  }
  if (!found) return x0;

  // Metropolis correction (exact when the hull truly dominates)
  const double env_cur = hull.value_at(x0);
  const double env_cand = hull.value_at(cand);
  const double log_ratio =
      (h_cand + std::min(h_cur, env_cur)) - (h_cur + std::min(h_cand, env_cand));
  if (std::log(rng.uniform()) <= log_ratio) {
    if (diag) ++diag->acceptances;
    return cand;
  }
  return x0;
}

double draw_gamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw domain_error("draw_gamma requires positive parameters");
  // Marsaglia-Tsang squeeze
  double boost = 1.0;
  double a = shape;
  if (a < 1.0) {
    boost = std::pow(rng.uniform(), 1.0 / a);
    a += 1.0;
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return boost * d * v / rate;
  }
}

double gibbs_draw_invgamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw domain_error("gibbs_draw_invgamma requires positive parameters");
  return 1.0 / draw_gamma(shape, rate, rng);
}

double gibbs_draw_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw domain_error("gibbs_draw_beta requires positive parameters");
  const double x = draw_gamma(a, 1.0, rng);
  const double y = draw_gamma(b, 1.0, rng);
  const double v = x / (x + y);
  return std::clamp(v, 1e-14, 1.0 - 1e-14);
}

VectorXd draw_dirichlet(const VectorXd& alpha, Rng& rng) {
  VectorXd out(alpha.size());
  double total = 0.0;
  for (Eigen::Index l = 0; l < alpha.size(); ++l) {
    out(l) = draw_gamma(alpha(l), 1.0, rng);
    total += out(l);
  }
  if (total <= 0.0) {
    out.setConstant(1.0 / static_cast<double>(alpha.size()));
    return out;
  }
  out /= total;
  // keep compositions strictly interior: tiny shapes can underflow a
  // component to 0, and the complement must stay below 1 in doubles
  bool fixed = false;
  for (Eigen::Index l = 0; l < out.size(); ++l)
    if (out(l) < 1e-12) {
      out(l) = 1e-12;
      fixed = true;
    }
  if (fixed) out /= out.sum();
  return out;
}

}  // namespace gptcm
