#include "tdk/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace tdk {
using nlohmann::json;

namespace {

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw InvalidArgument(std::string("model.") + name + ": expected " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidArgument(std::string("model.") + name + ": row " + std::to_string(r) + " has wrong length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c];
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n, const char* name) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n) throw InvalidArgument(std::string("model.") + name + ": wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

void hash_doubles(std::uint64_t& h, const double* data, Eigen::Index n) {
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data), static_cast<std::size_t>(n) * sizeof(double)), h);
}

}  // namespace

MlpModel::MlpModel(Shape shape, MlpParams params) : shape_(shape), params_(std::move(params)) {
  check_shape(shape_);
  const auto d = static_cast<Eigen::Index>(shape_.size());
  if (params_.w1.cols() != d || params_.w1.rows() != params_.b1.size() || params_.w2.cols() != params_.b1.size() ||
      params_.w2.rows() != params_.b2.size()) {
    throw InvalidArgument("inconsistent MLP parameter dimensions");
  }
  if (params_.b2.size() < 1) throw InvalidArgument("MLP needs at least one class");
  if (!params_.w1.allFinite() || !params_.b1.allFinite() || !params_.w2.allFinite() || !params_.b2.allFinite()) {
    throw InvalidArgument("MLP weights must be finite");
  }
}

MlpModel MlpModel::initialized(Shape shape, std::size_t hidden, std::uint32_t classes, RngStream rng) {
  check_shape(shape);
  const auto d = static_cast<Eigen::Index>(shape.size());
  const auto h = static_cast<Eigen::Index>(hidden);
  MlpParams p;
  p.w1.resize(h, d);
  p.w2.resize(classes, h);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < d; ++c) p.w1(r, c) = (2.0 * rng.uniform() - 1.0) * a1;
  for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
    for (Eigen::Index c = 0; c < h; ++c) p.w2(r, c) = (2.0 * rng.uniform() - 1.0) * a2;
  p.b1 = Eigen::VectorXd::Zero(h);
  p.b2 = Eigen::VectorXd::Zero(classes);
  return MlpModel(shape, std::move(p));
}

MlpModel MlpModel::zeros(Shape shape, std::size_t hidden, std::uint32_t classes) {
  check_shape(shape);
  const auto d = static_cast<Eigen::Index>(shape.size());
  const auto h = static_cast<Eigen::Index>(hidden);
  return MlpModel(shape, MlpParams{Eigen::MatrixXd::Zero(h, d), Eigen::VectorXd::Zero(h),
                                   Eigen::MatrixXd::Zero(classes, h), Eigen::VectorXd::Zero(classes)});
}

std::vector<double> MlpModel::predict(const ImageTensor& x) const {
  check_input(*this, x);
  const Eigen::VectorXd in = to_vector(x);
  const Eigen::VectorXd hidden = (params_.w1 * in + params_.b1).cwiseMax(0.0);
  Eigen::VectorXd logits = params_.w2 * hidden + params_.b2;
  logits = (logits.array() - logits.maxCoeff()).exp();
  logits /= logits.sum();
  return {logits.data(), logits.data() + logits.size()};
}

Eigen::MatrixXd MlpModel::predict_batch(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd hidden = ((inputs * params_.w1.transpose()).rowwise() + params_.b1.transpose()).cwiseMax(0.0);
  return softmax_rows((hidden * params_.w2.transpose()).rowwise() + params_.b2.transpose());
}

std::string MlpModel::weight_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_doubles(h, params_.w1.data(), params_.w1.size());
  hash_doubles(h, params_.b1.data(), params_.b1.size());
  hash_doubles(h, params_.w2.data(), params_.w2.size());
  hash_doubles(h, params_.b2.data(), params_.b2.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json MlpModel::to_json() const {
  return json{{"format", "tdk-mlp-1"},
              {"height", shape_.height},
              {"width", shape_.width},
              {"channels", shape_.channels},
              {"hidden", hidden()},
              {"classes", class_count()},
              {"w1", matrix_to_json(params_.w1)},
              {"b1", std::vector<double>(params_.b1.data(), params_.b1.data() + params_.b1.size())},
              {"w2", matrix_to_json(params_.w2)},
              {"b2", std::vector<double>(params_.b2.data(), params_.b2.data() + params_.b2.size())}};
}

MlpModel MlpModel::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "tdk-mlp-1") throw InvalidArgument("model.format: unsupported");
    const Shape shape{j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                      j.at("channels").get<std::size_t>()};
    const auto h = j.at("hidden").get<Eigen::Index>();
    const auto k = j.at("classes").get<Eigen::Index>();
    const auto d = static_cast<Eigen::Index>(shape.size());
    MlpParams p{matrix_from_json(j.at("w1"), h, d, "w1"), vector_from_json(j.at("b1"), h, "b1"),
                matrix_from_json(j.at("w2"), k, h, "w2"), vector_from_json(j.at("b2"), k, "b2")};
    return MlpModel(shape, std::move(p));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json().dump() << "\n";
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

LossAndGradient mlp_loss_and_gradient(const MlpParams& p, const Eigen::MatrixXd& inputs,
                                      const std::vector<std::uint32_t>& labels) {
  const auto n = inputs.rows();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) throw InvalidArgument("batch/label size mismatch");
  const Eigen::MatrixXd pre = (inputs * p.w1.transpose()).rowwise() + p.b1.transpose();
  const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
  const Eigen::MatrixXd probs = softmax_rows((hidden * p.w2.transpose()).rowwise() + p.b2.transpose());

  LossAndGradient out;
  Eigen::MatrixXd dlogits = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = static_cast<Eigen::Index>(labels[i]);
    out.loss -= std::log(std::max(probs(i, y), 1e-300));
    dlogits(i, y) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  dlogits *= inv_n;

  out.grad.w2 = dlogits.transpose() * hidden;
  out.grad.b2 = dlogits.colwise().sum().transpose();
  const Eigen::MatrixXd dhidden =
      ((dlogits * p.w2).array() * (pre.array() > 0.0).cast<double>()).matrix();
  out.grad.w1 = dhidden.transpose() * inputs;
  out.grad.b1 = dhidden.colwise().sum().transpose();
  return out;
}

double mlp_loss(const MlpParams& p, const Eigen::MatrixXd& inputs, const std::vector<std::uint32_t>& labels) {
  const Eigen::MatrixXd hidden = ((inputs * p.w1.transpose()).rowwise() + p.b1.transpose()).cwiseMax(0.0);
  const Eigen::MatrixXd probs = softmax_rows((hidden * p.w2.transpose()).rowwise() + p.b2.transpose());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) loss -= std::log(std::max(probs(i, labels[i]), 1e-300));
  return loss / static_cast<double>(inputs.rows());
}

Eigen::VectorXd to_vector(const ImageTensor& x) {
  const auto px = x.pixels();
  return Eigen::Map<const Eigen::VectorXd>(px.data(), static_cast<Eigen::Index>(px.size()));
}

Eigen::MatrixXd to_matrix(const LabeledDataset& data) {
  if (data.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.shape().size()));
  for (std::size_t i = 0; i < data.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = to_vector(data[i].image);
  return m;
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, double loss)
    : Error("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")"),
      epoch_(epoch) {}

TrainResult train_mlp(const LabeledDataset& data, const MlpHyper& hyper) {
  if (data.empty()) throw InvalidArgument("train_mlp: empty dataset");
  if (data.class_count() < 2) throw InvalidArgument("train_mlp: need at least two classes");
  if (hyper.batch == 0 || hyper.hidden == 0) throw InvalidArgument("train_mlp: batch and hidden must be positive");
  if (!(hyper.lr > 0.0) || !(hyper.momentum >= 0.0 && hyper.momentum < 1.0)) {
    throw InvalidArgument("train_mlp: lr must be positive and momentum in [0, 1)");
  }

  const RngStream root(hyper.seed, 0);
  MlpModel init = MlpModel::initialized(data.shape(), hyper.hidden, data.class_count(), substream(root, "init"));
  MlpParams p = init.params();
  if (hyper.epochs == 0) return {std::move(init), {}};

  const Eigen::MatrixXd inputs = to_matrix(data);
  std::vector<std::uint32_t> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) labels[i] = data[i].label.index;

  MlpParams vel{Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols()), Eigen::VectorXd::Zero(p.b1.size()),
                Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols()), Eigen::VectorXd::Zero(p.b2.size())};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle = substream(root, "shuffle");
  std::vector<double> epoch_losses;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, i - 1))]);
    }
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(end - start), inputs.cols());
      std::vector<std::uint32_t> yb(end - start);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = inputs.row(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = labels[order[i]];
      }
      const LossAndGradient lg = mlp_loss_and_gradient(p, xb, yb);
      if (!std::isfinite(lg.loss)) throw TrainingDiverged(epoch, lg.loss);
      total += lg.loss;
      ++batches;
      vel.w1 = hyper.momentum * vel.w1 - hyper.lr * lg.grad.w1;
      vel.b1 = hyper.momentum * vel.b1 - hyper.lr * lg.grad.b1;
      vel.w2 = hyper.momentum * vel.w2 - hyper.lr * lg.grad.w2;
      vel.b2 = hyper.momentum * vel.b2 - hyper.lr * lg.grad.b2;
      p.w1 += vel.w1;
      p.b1 += vel.b1;
      p.w2 += vel.w2;
      p.b2 += vel.b2;
    }
    const double mean = total / static_cast<double>(batches);
    if (!std::isfinite(mean)) throw TrainingDiverged(epoch, mean);
    epoch_losses.push_back(mean);
  }
  return {MlpModel(data.shape(), std::move(p)), std::move(epoch_losses)};
}

double accuracy(const PredictionOracle& oracle, const LabeledDataset& data) {
  if (data.empty()) throw InvalidArgument("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (const auto& item : data.items()) hits += predict_label(oracle, item.image) == item.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace tdk
