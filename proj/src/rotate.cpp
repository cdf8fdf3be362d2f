#include "lesr/rotate.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include "lesr/optim.hpp"

namespace lesr {

namespace {

constexpr char kMagic[8] = {'L', 'E', 'S', 'R', 'R', 'O', 'T', '1'};

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double wrap_phase(double p) {
  constexpr double pi = std::numbers::pi;
  if (p > -pi && p <= pi) return p;
  p = std::remainder(p, 2.0 * pi);
  return p <= -pi ? p + 2.0 * pi : p;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("truncated RotatE checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

// Adds g * d score / d params for one triple into grad.
void accumulate_score_grad(const RotatEModel& m, const Triple& t, double g, RotatEGrad& grad) {
  const std::size_t d = m.dim();
  const auto h = m.entity(index(t.head));
  const auto tail = m.entity(index(t.tail));
  const auto ph = m.phase(index(t.relation));
  auto& gh = grad.entity[index(t.head)];
  if (gh.empty()) gh.assign(2 * d, 0.0);
  auto& gt = grad.entity[index(t.tail)];
  if (gt.empty()) gt.assign(2 * d, 0.0);
  auto& gr = grad.relation[index(t.relation)];
  if (gr.empty()) gr.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double c = std::cos(ph[k]), s = std::sin(ph[k]);
    const double hr = h[k], hi = h[d + k];
    const double re = hr * c - hi * s - tail[k];
    const double im = hr * s + hi * c - tail[d + k];
    const double mod = std::hypot(re, im);
    if (mod == 0.0) continue;
    const double ure = re / mod, uim = im / mod;
    // score = gamma - sum mod, so d score / d mod = -1.
    gh[k] += -g * (ure * c + uim * s);
    gh[d + k] += -g * (-ure * s + uim * c);
    gt[k] += g * ure;
    gt[d + k] += g * uim;
    gr[k] += -g * (ure * (-hr * s - hi * c) + uim * (hr * c - hi * s));
  }
}

}  // namespace

void RotatEConfig::validate() const {
  if (dim == 0) throw Error("rotate dim must be positive");
  if (negatives == 0) throw Error("rotate negatives must be positive");
  if (batch_size == 0) throw Error("rotate batch_size must be positive");
  if (!(gamma > 0)) throw Error("rotate gamma must be positive");
  if (!(lr >= 0)) throw Error("rotate lr must be nonnegative");
}

RotatEModel::RotatEModel(std::size_t entities, std::size_t relations, std::size_t dim, double gamma)
    : dim_(dim),
      num_entities_(entities),
      num_relations_(relations),
      gamma_(gamma),
      entities_(entities * 2 * dim, 0.0),
      phases_(relations * dim, 0.0) {}

RotatEModel RotatEModel::initialize(std::size_t entities, std::size_t relations, std::size_t dim,
                                    double gamma, std::uint64_t seed) {
  RotatEModel m(entities, relations, dim, gamma);
  Rng rng(seed);
  const double range = (gamma + 2.0) / static_cast<double>(dim);
  for (double& x : m.entities_) x = rng.uniform(-range, range);
  for (double& p : m.phases_) p = wrap_phase(rng.uniform(-std::numbers::pi, std::numbers::pi));
  return m;
}

std::span<double> RotatEModel::entity(std::size_t e) {
  return std::span<double>(entities_).subspan(e * 2 * dim_, 2 * dim_);
}
std::span<const double> RotatEModel::entity(std::size_t e) const {
  return std::span<const double>(entities_).subspan(e * 2 * dim_, 2 * dim_);
}
std::span<double> RotatEModel::phase(std::size_t r) {
  return std::span<double>(phases_).subspan(r * dim_, dim_);
}
std::span<const double> RotatEModel::phase(std::size_t r) const {
  return std::span<const double>(phases_).subspan(r * dim_, dim_);
}

void RotatEModel::check(EntityId h, RelationId r, EntityId t) const {
  if (index(h) >= num_entities_ || index(t) >= num_entities_) throw Error("entity id out of range");
  if (index(r) >= num_relations_) throw Error("relation id out of range");
}

double RotatEModel::score(EntityId h, RelationId r, EntityId t) const {
  check(h, r, t);
  const auto he = entity(index(h));
  const auto te = entity(index(t));
  const auto ph = phase(index(r));
  double dist = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    const double c = std::cos(ph[k]), s = std::sin(ph[k]);
    const double re = he[k] * c - he[dim_ + k] * s - te[k];
    const double im = he[k] * s + he[dim_ + k] * c - te[dim_ + k];
    dist += std::hypot(re, im);
  }
  return gamma_ - dist;
}

std::vector<double> RotatEModel::score_tails(EntityId h, RelationId r) const {
  check(h, r, h);
  const auto he = entity(index(h));
  const auto ph = phase(index(r));
  std::vector<double> rot(2 * dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    const double c = std::cos(ph[k]), s = std::sin(ph[k]);
    rot[k] = he[k] * c - he[dim_ + k] * s;
    rot[dim_ + k] = he[k] * s + he[dim_ + k] * c;
  }
  std::vector<double> out(num_entities_);
  for (std::size_t t = 0; t < num_entities_; ++t) {
    const auto te = entity(t);
    double dist = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) dist += std::hypot(rot[k] - te[k], rot[dim_ + k] - te[dim_ + k]);
    out[t] = gamma_ - dist;
  }
  return out;
}

void RotatEModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write RotatE checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u64(out, dim_);
  put_u64(out, num_entities_);
  put_u64(out, num_relations_);
  put_f64(out, gamma_);
  for (double x : entities_) put_f64(out, x);
  for (double x : phases_) put_f64(out, x);
  if (!out) throw Error("short write to " + path.string());
}

RotatEModel RotatEModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read RotatE checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
    throw Error(path.string() + " is not a RotatE checkpoint");
  }
  const auto dim = get_u64(in), ne = get_u64(in), nr = get_u64(in);
  const double gamma = get_f64(in);
  if (dim == 0 || dim > (1u << 20) || ne > (1ull << 32) || nr > (1ull << 32)) {
    throw Error("implausible RotatE checkpoint header in " + path.string());
  }
  RotatEModel m(ne, nr, dim, gamma);
  for (double& x : m.entities_) x = get_f64(in);
  for (double& x : m.phases_) x = get_f64(in);
  return m;
}

double rotate_loss(const RotatEModel& model, const Triple& pos, std::span<const EntityId> neg_tails,
                   RotatEGrad* grad, double weight) {
  const double sp = model.score(pos.head, pos.relation, pos.tail);
  double loss = softplus(-sp);
  if (grad) accumulate_score_grad(model, pos, -weight * sigmoid(-sp), *grad);
  const double k = static_cast<double>(neg_tails.size());
  for (EntityId t : neg_tails) {
    const Triple neg{pos.head, pos.relation, t};
    const double sn = model.score(neg.head, neg.relation, neg.tail);
    loss += softplus(sn) / k;
    if (grad) accumulate_score_grad(model, neg, weight * sigmoid(sn) / k, *grad);
  }
  return loss;
}

RotatETrainResult rotate_train(const KnowledgeBase& kb, const RotatEConfig& cfg) {
  cfg.validate();
  if (kb.train().empty()) throw Error("cannot train RotatE on an empty train split");
  RotatETrainResult result{RotatEModel::initialize(kb.num_entities(), kb.num_relations(), cfg.dim,
                                                   cfg.gamma, derive_seed(cfg.seed, "rotate:init")),
                           {}};
  RotatEModel& model = result.model;
  Rng rng(derive_seed(cfg.seed, "rotate:train"));
  Adam ent_opt(model.entity_table().size());
  Adam rel_opt(model.phase_table().size());
  AdamConfig adam;
  adam.lr = cfg.lr;
  const std::size_t d = cfg.dim;
  const std::size_t ne = kb.num_entities();
  const auto train = kb.train();
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<EntityId> negs(cfg.negatives);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      RotatEGrad grad;
      for (std::size_t b = start; b < end; ++b) {
        const Triple& pos = train[order[b]];
        for (auto& n : negs) {
          std::size_t t = rng.below(ne);
          while (ne > 1 && t == index(pos.tail)) t = rng.below(ne);
          n = entity(t);
        }
        epoch_loss += rotate_loss(model, pos, negs, &grad, w);
      }
      ++step;
      for (auto& [e, g] : grad.entity) ent_opt.update(model.entity(e), g, e * 2 * d, step, cfg.lr, adam);
      for (auto& [r, g] : grad.relation) {
        auto ph = model.phase(r);
        rel_opt.update(ph, g, r * d, step, cfg.lr, adam);
        for (double& p : ph) p = wrap_phase(p);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  return result;
}

}  // namespace lesr
