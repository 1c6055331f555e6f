#include "blpnet/segment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

namespace blpnet {

namespace {

struct Normalized {
  Image<double> f;
  double lo = 0.0, range = 0.0;
};

Normalized normalize(const GrayImage& image) {
  if (image.size() == 0) throw std::invalid_argument("segmentation: empty image");
  Normalized n;
  n.lo = image.minCoeff();
  n.range = static_cast<double>(image.maxCoeff()) - n.lo;
  n.f = n.range > 1e-6 ? Image<double>((image.cast<double>() - n.lo) / n.range)
                       : Image<double>(Image<double>::Zero(image.rows(), image.cols()));
  return n;
}

Mask positive(const Image<double>& phi) { return (phi > 0.0).cast<std::uint8_t>(); }

double dirac(double t, double eps) { return eps / (std::numbers::pi * (eps * eps + t * t)); }

// Zero-padded separable Gaussian.
Image<double> gaussian_blur(const Image<double>& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::lround(2.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (auto& v : k) v /= sum;
  const Eigen::Index h = in.rows(), w = in.cols();
  Image<double> tmp = Image<double>::Zero(h, w), out = Image<double>::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index xx = x + i;
        if (xx >= 0 && xx < w) acc += k[i + radius] * in(y, xx);
      }
      tmp(y, x) = acc;
    }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index yy = y + i;
        if (yy >= 0 && yy < h) acc += k[i + radius] * tmp(yy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

double boundary_length(const Mask& m) {
  const Eigen::Index h = m.rows(), w = m.cols();
  double len = 0.0;
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double dx = x + 1 < w ? double(m(y, x + 1)) - m(y, x) : 0.0;
      const double dy = y + 1 < h ? double(m(y + 1, x)) - m(y, x) : 0.0;
      len += std::sqrt(dx * dx + dy * dy);
    }
  return len;
}

std::pair<double, double> phase_means(const Image<double>& f, const Image<double>& phi, double c1, double c2) {
  const auto inside = (phi > 0.0).cast<double>();
  const double n1 = inside.sum(), n2 = static_cast<double>(f.size()) - n1;
  if (n1 > 0) c1 = (f * inside).sum() / n1;
  if (n2 > 0) c2 = (f * (1.0 - inside)).sum() / n2;
  return {c1, c2};
}

}  // namespace

double chan_vese_energy(const Image<double>& f, const Mask& inside, double c1, double c2, const CvParams& p) {
  const auto in = inside.cast<double>();
  const double fid = p.lambda1 * ((f - c1).square() * in).sum() + p.lambda2 * ((f - c2).square() * (1.0 - in)).sum();
  return fid + p.mu * boundary_length(inside) + p.nu * in.sum();
}

CvResult chan_vese(const GrayImage& image, const CvParams& p) {
  if (!(p.time_step > 0.0)) throw std::invalid_argument("chan_vese: time step must be positive");
  if (!(p.lambda1 > 0.0 && p.lambda2 > 0.0 && p.mu >= 0.0)) throw std::invalid_argument("chan_vese: bad weights");
  const auto norm = normalize(image);
  const Image<double>& f = norm.f;
  const Eigen::Index h = f.rows(), w = f.cols();
  CvResult r;
  r.field.phi.resize(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      r.field.phi(y, x) = std::sin(std::numbers::pi * x / p.checkerboard_period) *
                          std::sin(std::numbers::pi * y / p.checkerboard_period);
  Image<double>& phi = r.field.phi;

  if (norm.range <= 1e-6) {
    r.degenerate = true;
    r.mask = Mask::Zero(h, w);
    r.c1 = r.c2 = norm.lo;
    return r;
  }

  auto [c1, c2] = phase_means(f, phi, 1.0, 0.0);
  constexpr double eta = 1e-8;
  auto P = [&](Eigen::Index y, Eigen::Index x) {
    return phi(std::clamp<Eigen::Index>(y, 0, h - 1), std::clamp<Eigen::Index>(x, 0, w - 1));
  };
  r.energy.push_back(chan_vese_energy(f, positive(phi), c1, c2, p));
  for (r.field.iterations = 1; r.field.iterations <= p.max_iterations; ++r.field.iterations) {
    double change = 0.0;
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        const double c = phi(y, x);
        const double xp = P(y, x + 1), xm = P(y, x - 1), yp = P(y + 1, x), ym = P(y - 1, x);
        const double a_here = p.mu / std::sqrt(eta + (xp - c) * (xp - c) + 0.25 * (yp - ym) * (yp - ym));
        const double a_left =
            p.mu / std::sqrt(eta + (c - xm) * (c - xm) + 0.25 * (P(y + 1, x - 1) - P(y - 1, x - 1)) *
                                                            (P(y + 1, x - 1) - P(y - 1, x - 1)));
        const double b_here = p.mu / std::sqrt(eta + (yp - c) * (yp - c) + 0.25 * (xp - xm) * (xp - xm));
        const double b_up =
            p.mu / std::sqrt(eta + (c - ym) * (c - ym) + 0.25 * (P(y - 1, x + 1) - P(y - 1, x - 1)) *
                                                            (P(y - 1, x + 1) - P(y - 1, x - 1)));
        const double d = p.time_step * dirac(c, p.epsilon);
        const double fv = f(y, x);
        const double force = -p.nu - p.lambda1 * (fv - c1) * (fv - c1) + p.lambda2 * (fv - c2) * (fv - c2);
        const double next = (c + d * (a_here * xp + a_left * xm + b_here * yp + b_up * ym + force)) /
                            (1.0 + d * (a_here + a_left + b_here + b_up));
        change += (next - c) * (next - c);
        phi(y, x) = next;
      }
    std::tie(c1, c2) = phase_means(f, phi, c1, c2);
    const bool done = r.field.iterations > 1 && std::sqrt(change / static_cast<double>(h * w)) <= p.tolerance;
    if (done || r.field.iterations % p.checkpoint_every == 0)
      r.energy.push_back(chan_vese_energy(f, positive(phi), c1, c2, p));
    if (done) {
      r.converged = true;
      break;
    }
  }
  r.field.iterations = std::min(r.field.iterations, p.max_iterations);

  if (c1 < c2) {
    phi = -phi;
    std::swap(c1, c2);
  }
  r.mask = positive(phi);
  const auto n_in = static_cast<Eigen::Index>(r.mask.cast<int>().sum());
  r.degenerate = n_in == 0 || n_in == h * w;
  r.c1 = norm.lo + c1 * norm.range;
  r.c2 = norm.lo + c2 * norm.range;
  return r;
}

RsfResult rsf(const GrayImage& image, const RsfParams& p) {
  if (!(p.sigma > 0.0)) throw std::invalid_argument("rsf: sigma must be positive");
  if (!(p.time_step > 0.0)) throw std::invalid_argument("rsf: time step must be positive");
  const auto norm = normalize(image);
  const Eigen::Index h = norm.f.rows(), w = norm.f.cols();
  RsfResult r;
  Image<double>& phi = r.field.phi;
  phi = Image<double>::Constant(h, w, -p.init_level);
  if (norm.range <= 1e-6) {
    r.degenerate = true;
    r.mask = Mask::Zero(h, w);
    return r;
  }

  if (p.init == RsfInit::CenteredCircle) {
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0, rad = std::min(h, w) / 4.0;
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) < rad * rad) phi(y, x) = p.init_level;
  } else {
    // Seed the minority phase where a pixel departs from its neighbourhood
    // mean; everything else starts in the majority phase.
    const Image<double> d = norm.f - gaussian_blur(norm.f, 2.0 * p.sigma) / gaussian_blur(Image<double>::Ones(h, w), 2.0 * p.sigma);
    const bool dark_minority = d.cube().sum() < 0.0;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      const double v = d.data()[i];
      const bool minority = dark_minority ? v < -p.contrast_threshold : v > p.contrast_threshold;
      phi.data()[i] = (minority != dark_minority) ? p.init_level : -p.init_level;
    }
  }

  const Image<double> f = 255.0 * norm.f;
  const Image<double> ones = Image<double>::Ones(h, w);
  const Image<double> k_one = gaussian_blur(ones, p.sigma);
  const Image<double> k_f = gaussian_blur(f, p.sigma);
  const Image<double> f2 = f.square();

  auto at = [&](const Image<double>& a, Eigen::Index y, Eigen::Index x) {
    return a(std::clamp<Eigen::Index>(y, 0, h - 1), std::clamp<Eigen::Index>(x, 0, w - 1));
  };

  for (r.field.iterations = 1; r.field.iterations <= p.max_iterations; ++r.field.iterations) {
    const Image<double> heav = 0.5 * (1.0 + (2.0 / std::numbers::pi) * (phi / p.epsilon).atan());
    const Image<double> delta = (p.epsilon / std::numbers::pi) / (p.epsilon * p.epsilon + phi.square());
    const Image<double> k_hf = gaussian_blur(heav * f, p.sigma);
    const Image<double> k_h = gaussian_blur(heav, p.sigma);
    const Image<double> fit1 = k_hf / k_h.max(1e-10);
    const Image<double> fit2 = (k_f - k_hf) / (k_one - k_h).max(1e-10);
    const Image<double> s1 = p.lambda1 * fit1.square() - p.lambda2 * fit2.square();
    const Image<double> s2 = p.lambda1 * fit1 - p.lambda2 * fit2;
    const Image<double> data =
        (p.lambda1 - p.lambda2) * k_one * f2 + gaussian_blur(s1, p.sigma) - 2.0 * f * gaussian_blur(s2, p.sigma);

    Image<double> nx(h, w), ny(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        const double ax = 0.5 * (at(phi, y, x + 1) - at(phi, y, x - 1));
        const double ay = 0.5 * (at(phi, y + 1, x) - at(phi, y - 1, x));
        const double norm = std::sqrt(ax * ax + ay * ay + 1e-10);
        nx(y, x) = ax / norm;
        ny(y, x) = ay / norm;
      }
    Image<double> next(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        const double c = phi(y, x);
        const double curv = 0.5 * (at(nx, y, x + 1) - at(nx, y, x - 1)) + 0.5 * (at(ny, y + 1, x) - at(ny, y - 1, x));
        const double lap = at(phi, y, x + 1) + at(phi, y, x - 1) + at(phi, y + 1, x) + at(phi, y - 1, x) - 4.0 * c;
        const double dv = delta(y, x);
        next(y, x) = c + p.time_step * (-dv * data(y, x) + p.nu * dv * curv + p.mu * (lap - curv));
      }
    const double change = std::sqrt((next - phi).square().mean());
    phi = std::move(next);
    if (r.field.iterations > 1 && change <= p.tolerance) {
      r.converged = true;
      break;
    }
  }
  r.field.iterations = std::min(r.field.iterations, p.max_iterations);

  auto [m_in, m_out] = phase_means(norm.f, phi, 1.0, 0.0);
  if (m_in < m_out) phi = -phi;
  r.mask = positive(phi);
  const auto n_in = static_cast<Eigen::Index>(r.mask.cast<int>().sum());
  r.degenerate = n_in == 0 || n_in == h * w;
  return r;
}

Components connected_components(const Mask& mask, std::size_t min_area, std::size_t max_area) {
  const Eigen::Index h = mask.rows(), w = mask.cols();
  Components c;
  c.labels = LabelImage::Zero(h, w);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pixels;
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  int next_label = 0;
  LabelImage seen = LabelImage::Zero(h, w);
  for (Eigen::Index y0 = 0; y0 < h; ++y0)
    for (Eigen::Index x0 = 0; x0 < w; ++x0) {
      if (!mask(y0, x0) || seen(y0, x0)) continue;
      pixels.clear();
      queue.assign(1, {y0, x0});
      seen(y0, x0) = 1;
      while (!queue.empty()) {
        const auto [y, x] = queue.front();
        queue.pop_front();
        pixels.emplace_back(y, x);
        for (Eigen::Index dy = -1; dy <= 1; ++dy)
          for (Eigen::Index dx = -1; dx <= 1; ++dx) {
            const Eigen::Index yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= h || xx >= w || !mask(yy, xx) || seen(yy, xx)) continue;
            seen(yy, xx) = 1;
            queue.emplace_back(yy, xx);
          }
      }
      if (pixels.size() < min_area || pixels.size() > max_area) continue;
      Region r;
      r.label = ++next_label;
      r.area = pixels.size();
      r.box = {static_cast<int>(w), static_cast<int>(h), 0, 0};
      for (const auto& [y, x] : pixels) {
        c.labels(y, x) = r.label;
        r.box.x0 = std::min<int>(r.box.x0, static_cast<int>(x));
        r.box.y0 = std::min<int>(r.box.y0, static_cast<int>(y));
        r.box.x1 = std::max<int>(r.box.x1, static_cast<int>(x) + 1);
        r.box.y1 = std::max<int>(r.box.y1, static_cast<int>(y) + 1);
        r.cy += static_cast<double>(y);
        r.cx += static_cast<double>(x);
      }
      r.cy /= static_cast<double>(r.area);
      r.cx /= static_cast<double>(r.area);
      c.regions.push_back(r);
    }
  return c;
}

GrayImage normalize_glyph(const GrayImage& patch, int target_size) {
  if (target_size < 1) throw std::invalid_argument("normalize_glyph: target size must be positive");
  const auto h = patch.rows(), w = patch.cols();
  const Eigen::Index side = std::max(h, w) + 2 * std::max<Eigen::Index>(1, std::max(h, w) / 8);
  GrayImage canvas = GrayImage::Zero(side, side);
  canvas.block((side - h) / 2, (side - w) / 2, h, w) = patch;
  return resize_bilinear(canvas, target_size, target_size);
}

std::vector<CharacterCrop> order_and_crop(const Components& comps, int target_size) {
  const auto& regions = comps.regions;
  std::vector<CharacterCrop> out;
  if (regions.empty()) return out;

  std::vector<std::size_t> row(regions.size(), 0);
  if (regions.size() >= 2) {
    double lo = regions[0].cy, hi = regions[0].cy;
    for (const auto& r : regions) {
      lo = std::min(lo, r.cy);
      hi = std::max(hi, r.cy);
    }
    double m0 = lo, m1 = hi;
    for (int it = 0; it < 50; ++it) {
      double s0 = 0, s1 = 0;
      std::size_t n0 = 0, n1 = 0;
      for (std::size_t i = 0; i < regions.size(); ++i) {
        row[i] = std::abs(regions[i].cy - m0) <= std::abs(regions[i].cy - m1) ? 0 : 1;
        (row[i] ? s1 : s0) += regions[i].cy;
        ++(row[i] ? n1 : n0);
      }
      const double n_m0 = n0 ? s0 / n0 : m0, n_m1 = n1 ? s1 / n1 : m1;
      if (n_m0 == m0 && n_m1 == m1) break;
      m0 = n_m0;
      m1 = n_m1;
    }
    std::vector<int> heights;
    for (const auto& r : regions) heights.push_back(r.box.height());
    std::nth_element(heights.begin(), heights.begin() + heights.size() / 2, heights.end());
    const double median_h = heights[heights.size() / 2];
    // Two rows only when the cluster centres are clearly apart.
    if (m1 - m0 < 0.6 * median_h) std::fill(row.begin(), row.end(), 0);
  }

  std::vector<std::size_t> order(regions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (row[a] != row[b]) return row[a] < row[b];
    return regions[a].cx < regions[b].cx;
  });

  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& r = regions[order[k]];
    GrayImage patch(r.box.height(), r.box.width());
    for (int y = 0; y < r.box.height(); ++y)
      for (int x = 0; x < r.box.width(); ++x)
        patch(y, x) = comps.labels(r.box.y0 + y, r.box.x0 + x) == r.label ? 1.0f : 0.0f;
    out.push_back({normalize_glyph(patch, target_size), r.box, k, row[order[k]]});
  }
  return out;
}

const char* to_string(SegmentationModel model) {
  return model == SegmentationModel::ChanVese ? "CV" : "RSF";
}

Mask glyph_phase(const Mask& mask) {
  const auto n = static_cast<Eigen::Index>(mask.cast<int>().sum());
  return 2 * n <= mask.size() ? Mask(mask) : Mask((1 - mask).cast<std::uint8_t>());
}

namespace {

Segmentation run_model(const GrayImage& plate, const SegmentConfig& config, SegmentationModel model) {
  Segmentation s;
  s.model = model;
  Mask mask;
  if (model == SegmentationModel::ChanVese) {
    auto r = chan_vese(plate, config.cv);
    mask = std::move(r.mask);
    s.degenerate = r.degenerate;
  } else {
    auto r = rsf(plate, config.rsf);
    mask = std::move(r.mask);
    s.degenerate = r.degenerate;
  }
  s.glyph_mask = s.degenerate ? Mask(Mask::Zero(plate.rows(), plate.cols())) : glyph_phase(mask);
  const double area = static_cast<double>(plate.size());
  const auto min_area = static_cast<std::size_t>(std::max(1.0, std::ceil(config.min_area_fraction * area)));
  const auto max_area = static_cast<std::size_t>(std::floor(config.max_area_fraction * area));
  s.components = connected_components(s.glyph_mask, min_area, max_area);
  if (config.drop_border_regions) {
    auto& regs = s.components.regions;
    const int w = static_cast<int>(plate.cols()), h = static_cast<int>(plate.rows());
    std::vector<Region> kept;
    for (const auto& r : regs) {
      if (r.box.x0 == 0 || r.box.y0 == 0 || r.box.x1 == w || r.box.y1 == h) {
        s.components.labels = (s.components.labels == r.label).select(0, s.components.labels);
      } else {
        kept.push_back(r);
      }
    }
    regs = std::move(kept);
  }
  s.crops = order_and_crop(s.components, config.target_size);
  return s;
}

}  // namespace

Segmentation segment_characters(const GrayImage& plate, const SegmentConfig& config,
                                std::optional<SegmentationModel> force) {
  if (force) return run_model(plate, config, *force);
  auto cv = run_model(plate, config, SegmentationModel::ChanVese);
  if (cv.crops.size() >= config.min_chars) return cv;
  auto alt = run_model(plate, config, SegmentationModel::Rsf);
  if (alt.crops.size() > cv.crops.size()) {
    alt.fallback_used = true;
    return alt;
  }
  cv.fallback_used = true;
  return cv;
}

}  // namespace blpnet
