#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "otobias/csv.hpp"
#include "otobias/image_io.hpp"

namespace otobias::test {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("otobias_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

double brute_auc(std::span<const double> scores, std::span<const int> labels) {
  long long count = 0, m = 0, n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) ++m; else ++n;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) count += 2;
      else if (scores[i] == scores[j]) count += 1;
    }
  }
  return static_cast<double>(count) / (2.0 * static_cast<double>(m) * static_cast<double>(n));
}

DelongOracle brute_delong(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  auto psi = [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); };

  std::vector<double> v10(pos.size(), 0.0), v01(neg.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < neg.size(); ++j) {
      const double k = psi(pos[i], neg[j]);
      v10[i] += k;
      v01[j] += k;
      total += k;
    }
  }
  for (auto& v : v10) v /= n;
  for (auto& v : v01) v /= m;
  DelongOracle out;
  out.auc = total / (m * n);
  double s10 = 0.0, s01 = 0.0;
  for (double v : v10) s10 += (v - out.auc) * (v - out.auc);
  for (double v : v01) s01 += (v - out.auc) * (v - out.auc);
  s10 /= (m - 1.0);
  s01 /= (n - 1.0);
  out.variance = s10 / m + s01 / n;
  return out;
}

RgbReal hsv_to_rgb(double h, double s, double v) {
  const double hd = h * 2.0;
  const double c = v * s / 255.0;
  const double hp = hd / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

namespace {

void convert(Rgb p, double& h, double& s, double& v) {
  // Raw 8-bit scale so exact .5 ties are not disturbed by a /255 round trip.
  const double r = p.r, g = p.g, b = p.b;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  s = mx > 0 ? std::round(255.0 * (mx - mn) / mx) : 0.0;
  double deg = 0.0;
  if (mx > mn) {
    if (mx == r) deg = std::fmod(60.0 * (g - b) / (mx - mn) + 360.0, 360.0);
    else if (mx == g) deg = 60.0 * (b - r) / (mx - mn) + 120.0;
    else deg = 60.0 * (r - g) / (mx - mn) + 240.0;
  }
  h = std::round(deg / 2.0);
  if (h >= 180.0 || s == 0.0) h = 0.0;
}

void two_pass(const std::vector<double>& xs, double& mean, double& sd) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

HsvFeatures naive_hsv_features(const ImageBuffer& image) {
  std::vector<double> hs, ss, vs;
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      double h, s, v;
      convert(image.at(x, y), h, s, v);
      hs.push_back(h);
      ss.push_back(s);
      vs.push_back(v);
    }
  }
  HsvFeatures f;
  two_pass(hs, f.hue_mean, f.hue_std);
  two_pass(ss, f.sat_mean, f.sat_std);
  two_pass(vs, f.val_mean, f.val_std);
  return f;
}

namespace {

double eta_of(std::span<const double> beta, std::span<const double> rows, std::size_t p, std::size_t i) {
  double eta = beta[0];
  for (std::size_t j = 0; j < p; ++j) eta += beta[j + 1] * rows[i * p + j];
  return eta;
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

std::vector<double> gradient(std::span<const double> beta, std::span<const double> rows, std::size_t p,
                             std::span<const int> y) {
  std::vector<double> g(p + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double mu = 1.0 / (1.0 + std::exp(-eta_of(beta, rows, p, i)));
    const double r = y[i] - mu;
    g[0] += r;
    for (std::size_t j = 0; j < p; ++j) g[j + 1] += r * rows[i * p + j];
  }
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double logistic_loglik(std::span<const double> beta, std::span<const double> rows, std::size_t p,
                       std::span<const int> y) {
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double eta = eta_of(beta, rows, p, i);
    ll += y[i] * eta - softplus(eta);
  }
  return ll;
}

std::vector<double> fd_gradient(std::span<const double> beta, std::span<const double> rows, std::size_t p,
                                std::span<const int> y, double h) {
  std::vector<double> g(beta.size());
  std::vector<double> b(beta.begin(), beta.end());
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double keep = b[j];
    b[j] = keep + h;
    const double up = logistic_loglik(b, rows, p, y);
    b[j] = keep - h;
    const double down = logistic_loglik(b, rows, p, y);
    b[j] = keep;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> bfgs_logistic(std::span<const double> rows, std::size_t p, std::span<const int> y,
                                  double gradient_tolerance) {
  const std::size_t k = p + 1;
  std::vector<double> beta(k, 0.0);
  // Minimise f = -loglik; its gradient is -g.
  auto grad_f = [&](const std::vector<double>& b) {
    auto g = gradient(b, rows, p, y);
    for (auto& v : g) v = -v;
    return g;
  };
  std::vector<double> hinv(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) hinv[i * k + i] = 1.0 / static_cast<double>(y.size());

  std::vector<double> g = grad_f(beta);
  for (int iter = 0; iter < 5000; ++iter) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::fabs(v));
    if (gmax < gradient_tolerance) break;

    std::vector<double> d(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) d[i] -= hinv[i * k + j] * g[j];
    }
    if (dot(d, g) >= 0) {  // lost descent; restart from steepest descent
      std::fill(hinv.begin(), hinv.end(), 0.0);
      for (std::size_t i = 0; i < k; ++i) hinv[i * k + i] = 1.0 / static_cast<double>(y.size());
      for (std::size_t i = 0; i < k; ++i) d[i] = -g[i] / static_cast<double>(y.size());
    }

    // phi'(t) = grad_f(beta + t d) . d is increasing in t (convex f).
    auto slope = [&](double t) {
      std::vector<double> b(k);
      for (std::size_t i = 0; i < k; ++i) b[i] = beta[i] + t * d[i];
      return dot(grad_f(b), d);
    };
    double lo = 0.0, hi = 1.0;
    while (slope(hi) < 0 && hi < 1e12) {
      lo = hi;
      hi *= 2.0;
    }
    double t = hi;
    for (int it = 0; it < 200; ++it) {
      t = 0.5 * (lo + hi);
      if (slope(t) < 0) lo = t; else hi = t;
      if (hi - lo <= 1e-15 * hi) break;
    }

    std::vector<double> s(k), next(k);
    for (std::size_t i = 0; i < k; ++i) {
      s[i] = t * d[i];
      next[i] = beta[i] + s[i];
    }
    const std::vector<double> g_next = grad_f(next);
    std::vector<double> yv(k);
    for (std::size_t i = 0; i < k; ++i) yv[i] = g_next[i] - g[i];
    const double sy = dot(s, yv);
    if (sy > 0) {
      // H+ = (I - r s y') H (I - r y s') + r s s'
      const double r = 1.0 / sy;
      std::vector<double> hy(k, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) hy[i] += hinv[i * k + j] * yv[j];
      }
      const double yhy = dot(yv, hy);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          hinv[i * k + j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
      }
    }
    beta = next;
    g = g_next;
  }
  return beta;
}

ImageBuffer saturation_image(std::size_t width, std::size_t height, double hue, double sat_mean, double sat_sd,
                             double value, Rng& rng) {
  ImageBuffer img(width, height, Rgb{});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double s = std::clamp(sat_mean + sat_sd * rng.normal(), 0.0, 255.0);
      const RgbReal c = hsv_to_rgb(hue, s, value);
      auto q = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
      img.set(x, y, {q(c.r), q(c.g), q(c.b)});
    }
  }
  return img;
}

ImageBuffer random_image(std::size_t width, std::size_t height, Rng& rng) {
  std::vector<std::uint8_t> px(width * height * 3);
  for (auto& b : px) b = static_cast<std::uint8_t>(rng.below(256));
  return ImageBuffer(width, height, std::move(px));
}

DatasetManifest make_manifest(std::span<const Subtype> subtypes, const std::string& name) {
  std::vector<ImageRecord> recs;
  for (std::size_t i = 0; i < subtypes.size(); ++i) {
    ImageRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "r%03zu", i);
    r.id = id;
    r.path = fs::path("/nonexistent") / (r.id + ".png");
    r.subtype = subtypes[i];
    r.source = name;
    recs.push_back(std::move(r));
  }
  return DatasetManifest(name, std::move(recs));
}

DatasetManifest make_balanced_manifest(std::size_t normal, std::size_t abnormal, const std::string& name) {
  std::vector<Subtype> s(normal, Subtype::Normal);
  s.insert(s.end(), abnormal, Subtype::Effusion);
  return make_manifest(s, name);
}

PlantedEmbeddings planted_embeddings(std::size_t groups, std::size_t group_size, std::size_t singletons,
                                     double within, double apart, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t centers = groups + singletons;
  const std::size_t dim = centers + 4;
  // Members sit at angle t from their basis-vector center, so two members
  // differ by at most 2t; 1 - cos(2t) = 0.9 * within.
  const double t = 0.5 * std::acos(1.0 - 0.9 * within);
  if (1.0 - (2.0 * std::sin(t) + std::sin(t) * std::sin(t)) <= apart) {
    throw std::invalid_argument("planted_embeddings: margin too small");
  }

  struct Item {
    std::string id;
    std::vector<double> v;
  };
  std::vector<Item> items;
  PlantedEmbeddings out;
  auto member = [&](std::size_t center) {
    std::vector<double> w(dim);
    double norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      w[i] = i == center ? 0.0 : rng.normal();
      norm += w[i] * w[i];
    }
    norm = std::sqrt(norm);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = std::sin(t) * w[i] / norm;
    v[center] = std::cos(t);
    return v;
  };
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::string> ids;
    for (std::size_t m = 0; m < group_size; ++m) {
      ids.push_back("g" + std::to_string(g) + "_" + std::to_string(m));
      items.push_back({ids.back(), member(g)});
    }
    std::sort(ids.begin(), ids.end());
    out.groups.push_back(std::move(ids));
  }
  for (std::size_t s = 0; s < singletons; ++s) items.push_back({"s" + std::to_string(s), member(groups + s)});
  rng.shuffle(std::span<Item>(items));

  std::vector<std::string> ids;
  std::vector<double> values;
  for (auto& it : items) {
    ids.push_back(it.id);
    values.insert(values.end(), it.v.begin(), it.v.end());
  }
  out.embeddings = EmbeddingSet(dim, std::move(ids), std::move(values), true);
  return out;
}

fs::path write_manifest_file(const fs::path& path, const DatasetManifest& manifest) {
  std::ostringstream out;
  csv::write_row(out, {"id", "path", "subtype", "patient_id", "split", "source"});
  for (const auto& r : manifest.records()) {
    csv::write_row(out, {r.id, r.path.generic_string(), std::string(to_string(r.subtype)), r.patient_id.value_or(""),
                         r.split ? std::string(to_string(*r.split)) : "", r.source});
  }
  write_file(path, out.str());
  return path;
}

fs::path write_saturation_dataset(const fs::path& root, const std::string& name, std::size_t n, bool signal,
                                  std::uint64_t seed, std::size_t side) {
  Rng rng(seed);
  std::vector<ImageRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const bool abnormal = i % 2 == 1;
    const double spread = (signal && abnormal ? 32.0 : 20.0) + 3.0 * rng.normal();
    const double hue = 8.0 + 4.0 * rng.uniform();
    const double sat = 100.0 + 20.0 * rng.uniform();
    const double val = 150.0 + 40.0 * rng.uniform();
    const auto img = saturation_image(side, side, hue, sat, std::max(spread, 1.0), val, rng);

    ImageRecord r;
    r.subtype = abnormal ? (i % 4 == 1 ? Subtype::Effusion : Subtype::AOM) : Subtype::Normal;
    char file[32];
    std::snprintf(file, sizeof file, "%s_%04zu.png", name.c_str(), i);
    r.id = std::string(to_string(r.subtype)) + "/" + file;
    r.path = root / to_string(r.subtype) / file;
    r.split = i % 5 == 0 ? SplitPart::test : SplitPart::train;
    r.source = name;
    fs::create_directories(r.path.parent_path());
    write_png(img, r.path);
    recs.push_back(std::move(r));
  }
  return write_manifest_file(root / "manifest.csv", DatasetManifest(name, std::move(recs)));
}

LeakageCorpus leakage_corpus(std::size_t pairs, std::size_t singletons, std::uint64_t seed) {
  auto planted = planted_embeddings(pairs, 2, singletons, 0.01, 0.5, seed);
  std::vector<ImageRecord> recs;
  std::size_t k = 0;
  for (const auto& id : planted.embeddings.ids()) {
    ImageRecord r;
    r.id = id;
    r.path = fs::path("images") / (id + ".png");
    r.subtype = id.back() == '1' || k % 3 == 0 ? Subtype::COM : Subtype::Normal;
    if (id.front() == 'g') {
      r.split = id.back() == '0' ? SplitPart::train : SplitPart::test;
    } else {
      r.split = std::stoul(id.substr(1)) % 2 == 0 ? SplitPart::train : SplitPart::test;
    }
    r.source = "leaky";
    recs.push_back(std::move(r));
    ++k;
  }
  return {DatasetManifest("leaky", std::move(recs)), std::move(planted.embeddings)};
}

}  // namespace otobias::test
