#include "granlab/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace granlab {

std::string ClassId::name() const {
  std::string s = sign == Sign::Plus ? "+" : "-";
  if (subclass != 0) s += ":" + std::to_string(subclass);
  return s;
}

Network::Network(Granularity granularity, int d, std::vector<ClassId> classes,
                 std::vector<int> neurons_per_class)
    : granularity_(granularity), d_(d), classes_(std::move(classes)) {
  if (classes_.size() != neurons_per_class.size()) {
    throw ShapeError("class list and width list differ in length");
  }
  if (classes_.size() < 2) throw ShapeError("network needs at least two classes");
  offsets_.push_back(0);
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    if (neurons_per_class[c] <= 0) throw ShapeError("class width must be positive");
    offsets_.push_back(offsets_.back() + neurons_per_class[c]);
    neuron_class_.insert(neuron_class_.end(), neurons_per_class[c], static_cast<int>(c));
  }
  weights_ = RowMatrix::Zero(offsets_.back(), d_);
  biases_ = Eigen::VectorXd::Zero(offsets_.back());
}

int Network::class_index(const ClassId& id) const {
  for (int c = 0; c < class_count(); ++c) {
    if (classes_[c] == id) return c;
  }
  throw ShapeError("class not in network: " + id.name());
}

int Network::target_class(const SubclassLabel& label) const {
  if (granularity_ == Granularity::Coarse) return class_index({label.sign, 0});
  return class_index({label.sign, label.index});
}

bool Network::operator==(const Network& other) const {
  return granularity_ == other.granularity_ && d_ == other.d_ && classes_ == other.classes_ &&
         offsets_ == other.offsets_ && weights_ == other.weights_ && biases_ == other.biases_;
}

Network make_empty_network(const ExperimentConfig& cfg, Granularity granularity) {
  std::vector<ClassId> classes;
  std::vector<int> widths;
  if (granularity == Granularity::Coarse) {
    classes = {{Sign::Plus, 0}, {Sign::Minus, 0}};
    widths = {cfg.m, cfg.m};
  } else {
    for (int c = 1; c <= cfg.k_plus; ++c) classes.push_back({Sign::Plus, c});
    for (int c = 1; c <= cfg.k_minus; ++c) classes.push_back({Sign::Minus, c});
    widths.assign(classes.size(), cfg.m_sub);
  }
  return Network(granularity, cfg.d, std::move(classes), std::move(widths));
}

double initial_bias(const ExperimentConfig& cfg, Granularity granularity) {
  const double c_b = granularity == Granularity::Coarse ? cfg.c_b_coarse : cfg.c_b_fine;
  return -cfg.sigma_0 * c_b * std::sqrt(std::log(static_cast<double>(cfg.d)));
}

Network init_network(const ExperimentConfig& cfg, Granularity granularity, Rng& rng) {
  Network net = make_empty_network(cfg, granularity);
  auto& w = net.weights();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index i = 0; i < w.cols(); ++i) w(r, i) = rng.normal(cfg.sigma_0);
  }
  net.biases().setConstant(initial_bias(cfg, granularity));
  return net;
}

Activations forward(const Network& net, const RowMatrix& patches, bool keep_pre) {
  if (patches.cols() != net.dim()) {
    throw ShapeError("patch dimension " + std::to_string(patches.cols()) +
                     " does not match network dimension " + std::to_string(net.dim()));
  }
  RowMatrix pre = patches * net.weights().transpose();
  pre.rowwise() += net.biases().transpose();
  Activations acts;
  acts.F = Eigen::VectorXd::Zero(net.class_count());
  for (int c = 0; c < net.class_count(); ++c) {
    acts.F(c) = pre.middleCols(net.first_neuron(c), net.neurons_in(c)).cwiseMax(0.0).sum();
  }
  if (keep_pre) acts.pre = std::move(pre);
  return acts;
}

Activations forward(const Network& net, const Sample& x, bool keep_pre) {
  return forward(net, x.patches, keep_pre);
}

Eigen::VectorXd logits(const Eigen::VectorXd& F) {
  const double top = F.maxCoeff();
  Eigen::VectorXd e = (F.array() - top).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd logits(const Activations& acts) { return logits(acts.F); }

Sign coarse_predict(const Network& net, const Eigen::VectorXd& F) {
  const int plus = net.class_index({Sign::Plus, 0});
  const int minus = net.class_index({Sign::Minus, 0});
  return F(plus) > F(minus) ? Sign::Plus : Sign::Minus;
}

Sign coarse_predict(const Network& net, const Sample& x) {
  if (net.granularity() != Granularity::Coarse) throw ShapeError("coarse_predict needs a coarse network");
  return coarse_predict(net, forward(net, x, false).F);
}

Sign fine_predict_binary(const Network& net, const Eigen::VectorXd& F) {
  double best_plus = -std::numeric_limits<double>::infinity();
  double best_minus = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < net.class_count(); ++c) {
    auto& best = net.class_id(c).sign == Sign::Plus ? best_plus : best_minus;
    best = std::max(best, F(c));
  }
  return best_plus > best_minus ? Sign::Plus : Sign::Minus;
}

Sign fine_predict_binary(const Network& net, const Sample& x) {
  if (net.granularity() != Granularity::Fine) throw ShapeError("fine_predict_binary needs a fine network");
  return fine_predict_binary(net, forward(net, x, false).F);
}

Sign predict_superclass(const Network& net, const Eigen::VectorXd& F) {
  return net.granularity() == Granularity::Coarse ? coarse_predict(net, F) : fine_predict_binary(net, F);
}

int predict_class(const Eigen::VectorXd& F) {
  Eigen::Index best = 0;
  F.maxCoeff(&best);
  return static_cast<int>(best);
}

namespace {

using FloatRowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kScreenBlock = 256;

}  // namespace

BatchForward forward_batch(const Network& net, const RowMatrix& stacked, int P) {
  if (stacked.cols() != net.dim()) throw ShapeError("patch dimension does not match network");
  if (P <= 0 || stacked.rows() % P != 0) throw ShapeError("row count is not a multiple of P");
  const auto rows = static_cast<int>(stacked.rows());
  const int neurons = net.neuron_count();
  const int samples = rows / P;

  const RowMatrix& W = net.weights();
  const Eigen::VectorXd& b = net.biases();
  const FloatRowMatrix Wf = W.cast<float>();

  // |fl(<w,x>) - <w,x>| <= gamma * sum_i |w_i x_i| <= gamma * |w| |x|, with the
  // single-precision unit roundoff u and gamma ~ (d + 2) u covering input
  // rounding and any summation order; the factor 4 absorbs the rounding of the
  // comparison arithmetic itself.
  const double u = std::ldexp(1.0, -24);
  const double kappa = 4.0 * (net.dim() + 4) * u;
  const Eigen::ArrayXf w_slack = (W.rowwise().norm().array() * kappa).cast<float>();
  // Candidate iff z_f + b + slack >= 0, slack = |x| w_slack + 4u|b| + tiny.
  const Eigen::ArrayXf offset = (b.array() + b.array().abs() * 4.0 * u + 1e-30).cast<float>();

  BatchForward out;
  out.F = Eigen::MatrixXd::Zero(samples, net.class_count());

  FloatRowMatrix Zf(kScreenBlock, neurons);
  for (int start = 0; start < rows; start += kScreenBlock) {
    const int len = std::min(kScreenBlock, rows - start);
    const FloatRowMatrix Xf = stacked.middleRows(start, len).cast<float>();
    Zf.topRows(len).noalias() = Xf * Wf.transpose();
    for (int i = 0; i < len; ++i) {
      const int row = start + i;
      const auto x_norm = static_cast<float>(stacked.row(row).norm());
      auto margin = Zf.row(i).array();
      margin += offset.transpose() + x_norm * w_slack.transpose();
      if (margin.maxCoeff() < 0.0f) continue;
      const int n = row / P;
      for (int r = 0; r < neurons; ++r) {
        if (margin(r) < 0.0f) continue;
        const double exact = W.row(r).dot(stacked.row(row)) + b(r);
        if (exact > 0.0) {
          out.active.push_back({row, r, exact});
          out.F(n, net.class_of_neuron(r)) += exact;
        }
      }
    }
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'G', 'R', 'N', 'L', 'N', 'E', 'T', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated network snapshot");
  return value;
}

}  // namespace

void write_network(const Network& net, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, net.granularity() == Granularity::Coarse ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.class_count()));
  for (int c = 0; c < net.class_count(); ++c) {
    put<std::int8_t>(out, static_cast<std::int8_t>(sign_value(net.class_id(c).sign)));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.class_id(c).subclass));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.neurons_in(c)));
  }
  const RowMatrix& w = net.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i) put<double>(out, w.data()[i]);
  for (Eigen::Index i = 0; i < net.biases().size(); ++i) put<double>(out, net.biases()(i));
}

Network read_network(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a network snapshot");
  }
  const auto gran = get<std::uint8_t>(in) == 0 ? Granularity::Coarse : Granularity::Fine;
  const auto d = static_cast<int>(get<std::uint32_t>(in));
  const auto count = get<std::uint32_t>(in);
  std::vector<ClassId> classes;
  std::vector<int> widths;
  for (std::uint32_t c = 0; c < count; ++c) {
    const auto s = get<std::int8_t>(in);
    const auto sub = static_cast<int>(get<std::uint32_t>(in));
    classes.push_back({s > 0 ? Sign::Plus : Sign::Minus, sub});
    widths.push_back(static_cast<int>(get<std::uint32_t>(in)));
  }
  Network net(gran, d, std::move(classes), std::move(widths));
  RowMatrix& w = net.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = get<double>(in);
  for (Eigen::Index i = 0; i < net.biases().size(); ++i) net.biases()(i) = get<double>(in);
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_network(net, out);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_network(in);
}

}  // namespace granlab
