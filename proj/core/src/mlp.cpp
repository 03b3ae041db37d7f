#include "reid3d/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace reid3d {

Mlp Mlp::make(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need at least 2 dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    LinearLayer l;
    l.W = Eigen::MatrixXd::Zero(dims[i + 1], dims[i]);
    l.b = Eigen::VectorXd::Zero(dims[i + 1]);
    m.layers.push_back(std::move(l));
  }
  return m;
}

Mlp Mlp::zeros_like(const Mlp& other) {
  Mlp m;
  for (const auto& l : other.layers) {
    LinearLayer z;
    z.W = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
    z.b = Eigen::VectorXd::Zero(l.b.size());
    m.layers.push_back(std::move(z));
  }
  return m;
}

void Mlp::init_xavier(Rng& rng) {
  for (auto& l : layers) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.W.rows() + l.W.cols()));
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = rng.uniform(-a, a);
    l.b.setZero();
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, MlpCache* cache) const {
  if (cache) {
    cache->input = X;
    cache->pre.clear();
    cache->act.clear();
  }
  Eigen::MatrixXd cur = X;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd pre = (cur * layers[i].W.transpose()).rowwise() +
                          layers[i].b.transpose();
    Eigen::MatrixXd act =
        (i + 1 < layers.size()) ? pre.cwiseMax(0.0).eval() : pre;
    if (cache) {
      cache->pre.push_back(pre);
      cache->act.push_back(act);
    }
    cur = std::move(act);
  }
  return cur;
}

Eigen::MatrixXd Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& dY,
                              Mlp& grads) const {
  Eigen::MatrixXd dpre = dY;
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
    const Eigen::MatrixXd& in = (i == 0) ? cache.input : cache.act[i - 1];
    grads.layers[i].W.noalias() += dpre.transpose() * in;
    grads.layers[i].b += dpre.colwise().sum().transpose();
    Eigen::MatrixXd din = dpre * layers[i].W;
    if (i > 0) {
      // ReLU mask from the pre-activation of the previous layer
      din = (cache.pre[i - 1].array() > 0.0).select(din, 0.0);
    }
    dpre = std::move(din);
  }
  return dpre;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size()) + l.b.size();
  return n;
}

void Mlp::pack(double* dst) const {
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) *dst++ = l.W(r, c);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) *dst++ = l.b(i);
  }
}

void Mlp::unpack(const double* src) {
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = *src++;
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = *src++;
  }
}

void Mlp::accumulate(const Mlp& other, double scale) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W += scale * other.layers[i].W;
    layers[i].b += scale * other.layers[i].b;
  }
}

void Mlp::set_zero() {
  for (auto& l : layers) {
    l.W.setZero();
    l.b.setZero();
  }
}

}  // namespace reid3d
