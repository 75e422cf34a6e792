#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igan/common.hpp"
#include "igan/dataset.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

namespace igan {

// Scene factors are sampled independently: side ~ U[0.1, 0.6], centers
// ~ U[0.3, 0.7], both colors ~ U[0,1]^3. Every combination keeps the square
// fully inside the image (center +- side/2 stays within [0, 1]), and because
// no factor's admissible range depends on another, conditioning one factor
// leaves every other factor's marginal untouched — so a domain built for one
// attribute shows every other attribute at exactly its unconditioned rate.
constexpr Real kSideLo = Real(0.1);
constexpr Real kSideHi = Real(0.6);
constexpr Real kCenterLo = Real(0.3);
constexpr Real kCenterHi = Real(0.7);

constexpr Real kSmallSideMax = Real(0.3);   // "small": side below this
constexpr Real kLeftCenterMax = Real(0.4);  // "left": center_x below this
constexpr Real kUpCenterMax = Real(0.4);    // "up": center_y below this
constexpr Real kColorRadius = Real(0.35);   // "vivid": within this of the target

struct Rgb {
  Real r = 0, g = 0, b = 0;
};

inline Real color_distance(const Rgb& a, const Rgb& b) {
  const Real dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

struct SquareScene {
  Rgb square_color, background_color;
  Real side = 0, center_x = 0, center_y = 0;
};

inline void validate_scene(const SquareScene& s) {
  auto in01 = [](Real v) { return v >= Real(0) && v <= Real(1); };
  check(in01(s.square_color.r) && in01(s.square_color.g) &&
            in01(s.square_color.b) && in01(s.background_color.r) &&
            in01(s.background_color.g) && in01(s.background_color.b),
        ErrorKind::data, "scene colors must lie in [0,1]");
  check(s.side > Real(0) && s.side < Real(1), ErrorKind::data,
        "scene side must lie in (0,1), got ", s.side);
  check(s.center_x - s.side / 2 >= Real(0) &&
            s.center_x + s.side / 2 <= Real(1) &&
            s.center_y - s.side / 2 >= Real(0) &&
            s.center_y + s.side / 2 <= Real(1),
        ErrorKind::data, "square must lie fully inside the image");
}

// A predicate either restricts one scalar factor to an interval, restricts
// one color factor to a ball around a target color, or (for file-backed
// digit domains) restricts the content label. Scene sampling honors the
// first two kinds by direct range restriction / rejection; digit predicates
// apply to labeled data only.
enum class SceneFactor { side, center_x, center_y, square_color, background_color };

struct AttributePredicate {
  std::string name;
  SceneFactor factor = SceneFactor::side;
  // interval form (scalar factors): holds when lo <= value < hi
  Real lo = 0, hi = 0;
  // ball form (color factors): holds when |value - target| < radius
  Rgb target;
  Real radius = 0;
  // content form: holds when the label is in this set (empty = not a
  // content predicate)
  std::vector<uint8_t> digits;

  bool is_color() const {
    return digits.empty() && (factor == SceneFactor::square_color ||
                              factor == SceneFactor::background_color);
  }
  bool is_interval() const { return digits.empty() && !is_color(); }
  bool is_digit() const { return !digits.empty(); }

  bool holds(const SquareScene& s) const {
    check(!is_digit(), ErrorKind::usage, "content predicate '", name,
          "' does not apply to square scenes");
    switch (factor) {
      case SceneFactor::side:
        return s.side >= lo && s.side < hi;
      case SceneFactor::center_x:
        return s.center_x >= lo && s.center_x < hi;
      case SceneFactor::center_y:
        return s.center_y >= lo && s.center_y < hi;
      case SceneFactor::square_color:
        return color_distance(s.square_color, target) < radius;
      case SceneFactor::background_color:
        return color_distance(s.background_color, target) < radius;
    }
    return false;
  }
};

inline AttributePredicate predicate_from_name(const std::string& name) {
  AttributePredicate p;
  p.name = name;
  if (name == "small") {
    p.factor = SceneFactor::side;
    p.lo = Real(0);
    p.hi = kSmallSideMax;
  } else if (name == "left") {
    p.factor = SceneFactor::center_x;
    p.lo = Real(0);
    p.hi = kLeftCenterMax;
  } else if (name == "up") {
    p.factor = SceneFactor::center_y;
    p.lo = Real(0);
    p.hi = kUpCenterMax;
  } else if (name == "vivid") {
    p.factor = SceneFactor::square_color;
    p.target = Rgb{Real(1), Real(0), Real(0)};
    p.radius = kColorRadius;
  } else if (name == "vivid_background") {
    p.factor = SceneFactor::background_color;
    p.target = Rgb{Real(0), Real(1), Real(0)};
    p.radius = kColorRadius;
  } else {
    fail(ErrorKind::usage, "unknown attribute '", name,
         "' (expected one of small, left, up, vivid, vivid_background)");
  }
  return p;
}

inline AttributePredicate digit_predicate(const std::vector<uint8_t>& digits) {
  check(!digits.empty(), ErrorKind::usage, "digit predicate needs digits");
  AttributePredicate p;
  p.name = "digits";
  for (size_t i = 0; i < digits.size(); ++i) {
    check(digits[i] <= 9, ErrorKind::usage, "digit out of range: ",
          int(digits[i]));
    p.name += (i ? "," : ":") + std::to_string(int(digits[i]));
  }
  p.digits = digits;
  return p;
}

namespace detail {

struct Interval {
  Real lo, hi;
  std::string owner;  // predicate that last narrowed this interval
};

inline void narrow(Interval& iv, const AttributePredicate& p) {
  const Real lo = std::max(iv.lo, p.lo);
  const Real hi = std::min(iv.hi, p.hi);
  check(lo < hi, ErrorKind::usage, "unsatisfiable constraints: '", p.name,
        "' conflicts with '", iv.owner, "'");
  iv.lo = lo;
  iv.hi = hi;
  iv.owner = p.name;
}

inline Rgb sample_color(Rng& rng,
                        const std::vector<const AttributePredicate*>& balls) {
  // Direct draw when unconstrained; rejection within the unit cube against
  // every ball otherwise (the vivid ball at a cube corner accepts ~2.2% of
  // draws, so this stays cheap).
  for (int64_t attempt = 0; attempt < 200000; ++attempt) {
    Rgb c{Real(rng.uniform()), Real(rng.uniform()), Real(rng.uniform())};
    bool ok = true;
    for (const AttributePredicate* p : balls)
      if (color_distance(c, p->target) >= p->radius) {
        ok = false;
        break;
      }
    if (ok) return c;
  }
  fail(ErrorKind::usage,
       "could not satisfy the color constraints by rejection; the "
       "constrained region is empty or vanishingly small");
}

}  // namespace detail

// Draws one scene satisfying every constraint; unconstrained factors stay
// uniform over the full admissible ranges. Draw order is fixed: side,
// center_x, center_y, square color, background color.
inline SquareScene sample_square_scene(
    Rng& rng, const std::vector<AttributePredicate>& constraints = {}) {
  detail::Interval side{kSideLo, kSideHi, "the admissible side range"};
  detail::Interval cx{kCenterLo, kCenterHi, "the admissible center range"};
  detail::Interval cy{kCenterLo, kCenterHi, "the admissible center range"};
  std::vector<const AttributePredicate*> sq_balls, bg_balls;

  for (const auto& p : constraints) {
    check(!p.is_digit(), ErrorKind::usage, "content predicate '", p.name,
          "' cannot constrain square scenes");
    switch (p.factor) {
      case SceneFactor::side:
        detail::narrow(side, p);
        break;
      case SceneFactor::center_x:
        detail::narrow(cx, p);
        break;
      case SceneFactor::center_y:
        detail::narrow(cy, p);
        break;
      case SceneFactor::square_color:
        sq_balls.push_back(&p);
        break;
      case SceneFactor::background_color:
        bg_balls.push_back(&p);
        break;
    }
  }
  for (auto* balls : {&sq_balls, &bg_balls})
    for (size_t i = 0; i < balls->size(); ++i)
      for (size_t j = i + 1; j < balls->size(); ++j) {
        const auto *a = (*balls)[i], *b = (*balls)[j];
        check(color_distance(a->target, b->target) < a->radius + b->radius,
              ErrorKind::usage, "unsatisfiable constraints: '", a->name,
              "' conflicts with '", b->name, "'");
      }

  SquareScene s;
  s.side = Real(rng.uniform(double(side.lo), double(side.hi)));
  s.center_x = Real(rng.uniform(double(cx.lo), double(cx.hi)));
  s.center_y = Real(rng.uniform(double(cy.lo), double(cy.hi)));
  s.square_color = detail::sample_color(rng, sq_balls);
  s.background_color = detail::sample_color(rng, bg_balls);
  validate_scene(s);
  return s;
}

// Rasterizes a scene to [3, side_px, side_px] in [-1, 1]: a pixel belongs to
// the square when its center falls inside the square's extent (no
// anti-aliasing, y growing downward).
inline Tensor render_scene(const SquareScene& s, int64_t side_px) {
  check(side_px == 32 || side_px == 64 || side_px == 128, ErrorKind::usage,
        "render size must be 32, 64 or 128, got ", side_px);
  validate_scene(s);
  Tensor img({3, side_px, side_px});
  const Real h = s.side / 2;
  for (int64_t y = 0; y < side_px; ++y) {
    const Real py = (Real(y) + Real(0.5)) / Real(side_px);
    for (int64_t x = 0; x < side_px; ++x) {
      const Real px = (Real(x) + Real(0.5)) / Real(side_px);
      const bool in = std::abs(px - s.center_x) <= h &&
                      std::abs(py - s.center_y) <= h;
      const Rgb& c = in ? s.square_color : s.background_color;
      const int64_t plane = side_px * side_px, at = y * side_px + x;
      img.at(at) = 2 * c.r - 1;
      img.at(plane + at) = 2 * c.g - 1;
      img.at(2 * plane + at) = 2 * c.b - 1;
    }
  }
  return img;
}

// Recovers an approximate scene from one [3, S, S] image by 2-means over
// pixel colors (seeded with the brightest pixel and the pixel farthest from
// it), taking the smaller cluster as the square. Returns nothing when the
// clustering degenerates — a sample with no detectable square, which then
// fails every geometry predicate.
inline std::optional<SquareScene> estimate_scene(const Tensor& image) {
  check(image.rank() == 3 && image.dim(0) == 3, ErrorKind::usage,
        "estimate_scene expects one [3, S, S] image, got ",
        shape_str(image.shape()));
  const int64_t S = image.dim(1);
  check(image.dim(2) == S, ErrorKind::usage, "image must be square");
  const int64_t n = S * S;

  std::vector<Rgb> px(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    px[static_cast<size_t>(i)] =
        Rgb{(image.at(i) + 1) / 2, (image.at(n + i) + 1) / 2,
            (image.at(2 * n + i) + 1) / 2};

  // Seeds: brightest pixel, then the pixel farthest from it.
  int64_t bright = 0;
  Real best = Real(-1);
  for (int64_t i = 0; i < n; ++i) {
    const Rgb& c = px[static_cast<size_t>(i)];
    const Real luma = Real(0.299) * c.r + Real(0.587) * c.g + Real(0.114) * c.b;
    if (luma > best) {
      best = luma;
      bright = i;
    }
  }
  Rgb c0 = px[static_cast<size_t>(bright)];
  int64_t far = 0;
  Real far_d = Real(-1);
  for (int64_t i = 0; i < n; ++i) {
    const Real d = color_distance(px[static_cast<size_t>(i)], c0);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  Rgb c1 = px[static_cast<size_t>(far)];

  std::vector<uint8_t> assign(static_cast<size_t>(n), 0);
  for (int pass = 0; pass < 20; ++pass) {
    bool moved = false;
    for (int64_t i = 0; i < n; ++i) {
      const uint8_t a =
          color_distance(px[static_cast<size_t>(i)], c1) <
                  color_distance(px[static_cast<size_t>(i)], c0)
              ? 1
              : 0;
      if (a != assign[static_cast<size_t>(i)]) {
        assign[static_cast<size_t>(i)] = a;
        moved = true;
      }
    }
    double sum[2][3] = {{0, 0, 0}, {0, 0, 0}};
    int64_t cnt[2] = {0, 0};
    for (int64_t i = 0; i < n; ++i) {
      const Rgb& c = px[static_cast<size_t>(i)];
      const uint8_t a = assign[static_cast<size_t>(i)];
      sum[a][0] += double(c.r);
      sum[a][1] += double(c.g);
      sum[a][2] += double(c.b);
      ++cnt[a];
    }
    if (cnt[0] == 0 || cnt[1] == 0) return std::nullopt;
    c0 = Rgb{Real(sum[0][0] / cnt[0]), Real(sum[0][1] / cnt[0]),
             Real(sum[0][2] / cnt[0])};
    c1 = Rgb{Real(sum[1][0] / cnt[1]), Real(sum[1][1] / cnt[1]),
             Real(sum[1][2] / cnt[1])};
    if (!moved) break;
  }

  int64_t cnt[2] = {0, 0};
  for (int64_t i = 0; i < n; ++i) ++cnt[assign[static_cast<size_t>(i)]];
  if (cnt[0] == 0 || cnt[1] == 0) return std::nullopt;
  const uint8_t sq = cnt[1] <= cnt[0] ? 1 : 0;

  auto median_of = [&](int channel, uint8_t cluster) {
    std::vector<Real> vals;
    vals.reserve(static_cast<size_t>(cnt[cluster]));
    for (int64_t i = 0; i < n; ++i)
      if (assign[static_cast<size_t>(i)] == cluster) {
        const Rgb& c = px[static_cast<size_t>(i)];
        vals.push_back(channel == 0 ? c.r : channel == 1 ? c.g : c.b);
      }
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    return std::clamp(vals[vals.size() / 2], Real(0), Real(1));
  };

  SquareScene s;
  s.square_color = Rgb{median_of(0, sq), median_of(1, sq), median_of(2, sq)};
  s.background_color =
      Rgb{median_of(0, 1 - sq), median_of(1, 1 - sq), median_of(2, 1 - sq)};
  double sx = 0, sy = 0;
  for (int64_t i = 0; i < n; ++i)
    if (assign[static_cast<size_t>(i)] == sq) {
      sx += (double(i % S) + 0.5) / double(S);
      sy += (double(i / S) + 0.5) / double(S);
    }
  s.center_x = Real(sx / cnt[sq]);
  s.center_y = Real(sy / cnt[sq]);
  s.side = Real(std::sqrt(double(cnt[sq])) / double(S));
  return s;
}

// One procedurally built domain: every stored scene satisfies every listed
// attribute; the scenes are kept alongside the renders so real data can be
// scored by exact predicates instead of estimates.
struct SquareDomain {
  std::string name;
  std::vector<AttributePredicate> attributes;
  std::vector<SquareScene> scenes;
  Tensor images;

  ImageSet to_image_set(bool augment) const {
    return ImageSet{name, images, augment};
  }
};

inline SquareDomain build_square_domain(
    const std::string& name, const std::vector<AttributePredicate>& attrs,
    int64_t count, int64_t side_px, Rng& rng) {
  check(count >= 0, ErrorKind::usage, "domain size must be >= 0");
  SquareDomain d;
  d.name = name;
  d.attributes = attrs;
  d.images = Tensor({count, 3, side_px, side_px});
  const int64_t plane = 3 * side_px * side_px;
  for (int64_t k = 0; k < count; ++k) {
    SquareScene s = sample_square_scene(rng, attrs);
    d.scenes.push_back(s);
    Tensor img = render_scene(s, side_px);
    for (int64_t j = 0; j < plane; ++j) d.images.at(k * plane + j) = img.at(j);
  }
  return d;
}

// One single-attribute domain per requested name, drawn sequentially from
// the given stream.
inline std::vector<SquareDomain> build_square_domains(
    const std::vector<std::string>& attr_names, int64_t per_domain,
    int64_t side_px, Rng& rng) {
  std::vector<SquareDomain> out;
  for (const auto& name : attr_names)
    out.push_back(build_square_domain(name, {predicate_from_name(name)},
                                      per_domain, side_px, rng));
  return out;
}

}  // namespace igan
