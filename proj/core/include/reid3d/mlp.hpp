#pragma once

#include <Eigen/Dense>
#include <vector>

#include "reid3d/rng.hpp"

namespace reid3d {

// y = x * W^T + b, rows of x are samples.
struct LinearLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

struct MlpCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;  // pre-activation per layer
  std::vector<Eigen::MatrixXd> act;  // post-activation per layer
};

// Small dense network with ReLU after every layer except the last.
// Gradients accumulate into a same-shaped Mlp so batches can sum
// contributions before an optimizer step.
struct Mlp {
  std::vector<LinearLayer> layers;

  // dims = {in, h1, ..., out}
  static Mlp make(const std::vector<int>& dims);
  static Mlp zeros_like(const Mlp& other);

  // Xavier-uniform weights, zero biases.
  void init_xavier(Rng& rng);

  int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().W.rows()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, MlpCache* cache = nullptr) const;

  // Returns dL/dX; accumulates parameter gradients into grads (+=).
  Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& dY,
                           Mlp& grads) const;

  std::size_t parameter_count() const;
  void pack(double* dst) const;    // row-major W then b, layer by layer
  void unpack(const double* src);  // inverse of pack
  void accumulate(const Mlp& other, double scale);
  void set_zero();
};

}  // namespace reid3d
