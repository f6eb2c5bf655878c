// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "htc/errors.hpp"

namespace htc {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw input_error("ShapeMismatch", std::string(op) + ": " +
                                           std::to_string(a.rows()) + "x" +
                                           std::to_string(a.cols()) + " vs " +
                                           std::to_string(b.rows()) + "x" +
                                           std::to_string(b.cols()));
  }
}

}  // namespace

int Tape::push(Mat value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::grad_acc(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::add_grad(int id, const Mat& g) {
  if (!nodes_[id].needs_grad) return;
  grad_acc(id) += g;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::leaf(Mat value, bool needs_grad) {
  return {push(std::move(value), needs_grad, nullptr)};
}

Var Tape::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) {
    throw input_error("ShapeMismatch", "matmul inner dimensions");
  }
  int id = push(A * B, needs_grad(a) || needs_grad(b), nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc * t.value(b).transpose());
    t.add_grad(b.id, t.value(a).transpose() * dc);
  };
  return {id};
}

Var Tape::matmul_nt(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) {
    throw input_error("ShapeMismatch", "matmul_nt inner dimensions");
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(A * B.transpose(), ng, nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc * t.value(b));
    t.add_grad(b.id, dc.transpose() * t.value(a));
  };
  return {id};
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  int id = push(value(a) + value(b), needs_grad(a) || needs_grad(b), nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc);
    t.add_grad(b.id, dc);
  };
  return {id};
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  int id = push(value(a) - value(b), needs_grad(a) || needs_grad(b), nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc);
    t.add_grad(b.id, -dc);
  };
  return {id};
}

Var Tape::add_rowvec(Var a, Var row) {
  const Mat& A = value(a);
  const Mat& r = value(row);
  if (r.rows() != 1 || r.cols() != A.cols()) {
    throw input_error("ShapeMismatch", "add_rowvec bias shape");
  }
  Mat out = A.rowwise() + r.row(0);
  int id = push(std::move(out), needs_grad(a) || needs_grad(row), nullptr);
  nodes_[id].back = [a, row, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc);
    t.add_grad(row.id, dc.colwise().sum());
  };
  return {id};
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(value(a), value(b), "hadamard");
  int id = push(value(a).cwiseProduct(value(b)),
                needs_grad(a) || needs_grad(b), nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    t.add_grad(a.id, dc.cwiseProduct(t.value(b)));
    t.add_grad(b.id, dc.cwiseProduct(t.value(a)));
  };
  return {id};
}

Var Tape::scale(Var a, double c) {
  int id = push(value(a) * c, needs_grad(a), nullptr);
  nodes_[id].back = [a, c, id](Tape& t) {
    t.add_grad(a.id, t.grad_acc(id) * c);
  };
  return {id};
}

Var Tape::add_const(Var a, const Mat& c) {
  check_same_shape(value(a), c, "add_const");
  int id = push(value(a) + c, needs_grad(a), nullptr);
  nodes_[id].back = [a, id](Tape& t) { t.add_grad(a.id, t.grad_acc(id)); };
  return {id};
}

Var Tape::emax(Var a, Var b) {
  check_same_shape(value(a), value(b), "emax");
  int id = push(value(a).cwiseMax(value(b)), needs_grad(a) || needs_grad(b),
                nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    const Mat& A = t.value(a);
    const Mat& B = t.value(b);
    Mat take_a = (A.array() >= B.array()).cast<double>();
    t.add_grad(a.id, dc.cwiseProduct(take_a));
    t.add_grad(b.id, dc.cwiseProduct(Mat::Ones(A.rows(), A.cols()) - take_a));
  };
  return {id};
}

Var Tape::relu(Var a) {
  int id = push(value(a).cwiseMax(0.0), needs_grad(a), nullptr);
  nodes_[id].back = [a, id](Tape& t) {
    Mat on = (t.value(a).array() > 0.0).cast<double>();
    t.add_grad(a.id, t.grad_acc(id).cwiseProduct(on));
  };
  return {id};
}

Var Tape::gelu(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = 0.5 * x(i) * (1.0 + std::erf(x(i) / M_SQRT2));
  }
  int id = push(std::move(out), needs_grad(a), nullptr);
  nodes_[id].back = [a, id](Tape& t) {
    const Mat& x = t.value(a);
    Mat d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x(i) / M_SQRT2));
      const double pdf =
          std::exp(-0.5 * x(i) * x(i)) / std::sqrt(2.0 * M_PI);
      d(i) = cdf + x(i) * pdf;
    }
    t.add_grad(a.id, t.grad_acc(id).cwiseProduct(d));
  };
  return {id};
}

Var Tape::sigmoid(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    out(i) = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  int id = push(std::move(out), needs_grad(a), nullptr);
  nodes_[id].back = [a, id](Tape& t) {
    const Mat& y = t.value({id});
    Mat d = y.array() * (1.0 - y.array());
    t.add_grad(a.id, t.grad_acc(id).cwiseProduct(d));
  };
  return {id};
}

Var Tape::row_softmax(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  int id = push(std::move(out), needs_grad(a), nullptr);
  nodes_[id].back = [a, id](Tape& t) {
    const Mat& y = t.value({id});
    const Mat& dy = t.grad_acc(id);
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = y.row(r).dot(dy.row(r));
      dx.row(r) = y.row(r).cwiseProduct((dy.row(r).array() - dot).matrix());
    }
    t.add_grad(a.id, dx);
  };
  return {id};
}

Var Tape::gather_rows(Var x, std::vector<int> idx) {
  const Mat& X = value(x);
  Mat out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= X.rows()) {
      throw input_error("ShapeMismatch", "gather_rows index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  }
  int id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[id].back = [x, idx = std::move(idx), id](Tape& t) {
    if (!t.nodes_[x.id].needs_grad) return;
    const Mat& dc = t.grad_acc(id);
    Mat& dx = t.grad_acc(x.id);
    for (size_t i = 0; i < idx.size(); ++i) {
      dx.row(idx[i]) += dc.row(static_cast<Eigen::Index>(i));
    }
  };
  return {id};
}

Var Tape::block_rows(Var x, int r0, int n) {
  const Mat& X = value(x);
  if (r0 < 0 || r0 + n > X.rows()) {
    throw input_error("ShapeMismatch", "block_rows range out of bounds");
  }
  int id = push(X.middleRows(r0, n), needs_grad(x), nullptr);
  nodes_[id].back = [x, r0, n, id](Tape& t) {
    if (!t.nodes_[x.id].needs_grad) return;
    t.grad_acc(x.id).middleRows(r0, n) += t.grad_acc(id);
  };
  return {id};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw input_error("ShapeMismatch", "concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw input_error("ShapeMismatch", "concat_rows: column mismatch");
    }
    rows += value(p).rows();
    ng = ng || needs_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [parts, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).rows();
      t.add_grad(p.id, dc.middleRows(at, n));
      at += n;
    }
  };
  return {id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw input_error("ShapeMismatch", "concat_cols: empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = value(parts[0]).rows();
  bool ng = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) {
      throw input_error("ShapeMismatch", "concat_cols: row mismatch");
    }
    cols += value(p).cols();
    ng = ng || needs_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [parts, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).cols();
      t.add_grad(p.id, dc.middleCols(at, n));
      at += n;
    }
  };
  return {id};
}

Var Tape::row_scale(Var x, Var s) {
  const Mat& X = value(x);
  const Mat& S = value(s);
  if (S.cols() != 1 || S.rows() != X.rows()) {
    throw input_error("ShapeMismatch", "row_scale: s must be n x 1");
  }
  Mat out = X.array().colwise() * S.col(0).array();
  int id = push(std::move(out), needs_grad(x) || needs_grad(s), nullptr);
  nodes_[id].back = [x, s, id](Tape& t) {
    const Mat& dc = t.grad_acc(id);
    const Mat& X = t.value(x);
    const Mat& S = t.value(s);
    t.add_grad(x.id, dc.array().colwise() * S.col(0).array());
    t.add_grad(s.id, dc.cwiseProduct(X).rowwise().sum());
  };
  return {id};
}

Var Tape::gather_scalar_table(Var table, std::vector<std::vector<int>> idx) {
  const Mat& T = value(table);
  const Eigen::Index rows = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(idx[0].size()) : 0;
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const int k = idx[i][j];
      if (k < 0 || k >= T.rows()) {
        throw input_error("ShapeMismatch", "gather_scalar_table index");
      }
      out(i, j) = T(k, 0);
    }
  }
  int id = push(std::move(out), needs_grad(table), nullptr);
  nodes_[id].back = [table, idx = std::move(idx), id](Tape& t) {
    if (!t.nodes_[table.id].needs_grad) return;
    const Mat& dc = t.grad_acc(id);
    Mat& dt = t.grad_acc(table.id);
    for (Eigen::Index i = 0; i < dc.rows(); ++i) {
      for (Eigen::Index j = 0; j < dc.cols(); ++j) {
        dt(idx[i][j], 0) += dc(i, j);
      }
    }
  };
  return {id};
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& X = value(x);
  const Mat& g = value(gamma);
  const Mat& b = value(beta);
  if (g.rows() != 1 || g.cols() != X.cols() || b.rows() != 1 ||
      b.cols() != X.cols()) {
    throw input_error("ShapeMismatch", "layer_norm affine params");
  }
  const Eigen::Index D = X.cols();
  Mat xhat(X.rows(), D);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mean = X.row(r).mean();
    Eigen::RowVectorXd c = X.row(r).array() - mean;
    const double var = c.squaredNorm() / static_cast<double>(D);
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std(r) = s;
    xhat.row(r) = c * s;
  }
  Mat out = (xhat.array().rowwise() * g.row(0).array()).rowwise() +
            b.row(0).array();
  int id = push(std::move(out), needs_grad(x) || needs_grad(gamma) ||
                                    needs_grad(beta),
                nullptr);
  nodes_[id].back = [x, gamma, beta, xhat = std::move(xhat),
                     inv_std = std::move(inv_std), id](Tape& t) {
    const Mat& dy = t.grad_acc(id);
    const Mat& g = t.value(gamma);
    const Eigen::Index D = dy.cols();
    t.add_grad(gamma.id, dy.cwiseProduct(xhat).colwise().sum());
    t.add_grad(beta.id, dy.colwise().sum());
    if (!t.nodes_[x.id].needs_grad) return;
    Mat dx(dy.rows(), D);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.row(0));
      const double s = inv_std(r);
      const double m1 = dxhat.mean();
      const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
      dx.row(r) = s * (dxhat.array() - m1 - xhat.row(r).array() * m2);
    }
    t.add_grad(x.id, dx);
  };
  return {id};
}

Var Tape::row_l2_normalize(Var x) {
  const Mat& X = value(x);
  Eigen::VectorXd norms(X.rows());
  Mat out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double n = X.row(r).norm();
    if (n <= 0.0 || !std::isfinite(n)) {
      throw numeric_error("ZeroNormVector",
                          "row " + std::to_string(r) + " has zero norm");
    }
    norms(r) = n;
    out.row(r) = X.row(r) / n;
  }
  int id = push(std::move(out), needs_grad(x), nullptr);
  nodes_[id].back = [x, norms = std::move(norms), id](Tape& t) {
    const Mat& z = t.value({id});
    const Mat& dz = t.grad_acc(id);
    Mat dx(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double dot = z.row(r).dot(dz.row(r));
      dx.row(r) = (dz.row(r) - dot * z.row(r)) / norms(r);
    }
    t.add_grad(x.id, dx);
  };
  return {id};
}

Var Tape::dropout(Var x, double rate, Rng& rng) {
  const Mat& X = value(x);
  if (rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  Mat mask(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask(i) = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
  }
  int id = push(X.cwiseProduct(mask), needs_grad(x), nullptr);
  nodes_[id].back = [x, mask = std::move(mask), id](Tape& t) {
    t.add_grad(x.id, t.grad_acc(id).cwiseProduct(mask));
  };
  return {id};
}

Var Tape::mha(Var q, Var k, Var v, int n_heads, const Mat* key_keep_mask,
              Var logit_bias, std::vector<Mat>* attn_out) {
  const Mat& Q = value(q);
  const Mat& K = value(k);
  const Mat& V = value(v);
  const Eigen::Index n = Q.rows();
  const Eigen::Index d = Q.cols();
  if (K.rows() != n || V.rows() != n || K.cols() != d || V.cols() != d ||
      d % n_heads != 0) {
    throw input_error("ShapeMismatch", "mha input shapes");
  }
  const Eigen::Index dk = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Mat> probs(n_heads);
  Mat out(n, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto Qh = Q.middleCols(h * dk, dk);
    const auto Kh = K.middleCols(h * dk, dk);
    Mat S = (Qh * Kh.transpose()) * inv_sqrt;
    if (logit_bias.valid()) S += value(logit_bias);
    if (key_keep_mask) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if ((*key_keep_mask)(j, 0) == 0.0) S.col(j).setConstant(-1e30);
      }
    }
    Mat P(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double m = S.row(r).maxCoeff();
      Eigen::ArrayXd e = (S.row(r).array() - m).exp();
      P.row(r) = (e / e.sum()).matrix();
    }
    out.middleCols(h * dk, dk) = P * V.middleCols(h * dk, dk);
    probs[h] = std::move(P);
  }
  if (attn_out) *attn_out = probs;

  const bool ng = needs_grad(q) || needs_grad(k) || needs_grad(v) ||
                  (logit_bias.valid() && needs_grad(logit_bias));
  int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [q, k, v, n_heads, logit_bias, probs = std::move(probs),
                     dk, inv_sqrt, id](Tape& t) {
    const Mat& dout = t.grad_acc(id);
    const Mat& Q = t.value(q);
    const Mat& K = t.value(k);
    const Mat& V = t.value(v);
    Mat dQ = Mat::Zero(Q.rows(), Q.cols());
    Mat dK = Mat::Zero(K.rows(), K.cols());
    Mat dV = Mat::Zero(V.rows(), V.cols());
    Mat dBias;
    const bool want_bias = logit_bias.valid() && t.nodes_[logit_bias.id].needs_grad;
    if (want_bias) dBias = Mat::Zero(Q.rows(), Q.rows());
    for (int h = 0; h < n_heads; ++h) {
      const Mat& P = probs[h];
      const auto dOh = dout.middleCols(h * dk, dk);
      const auto Vh = V.middleCols(h * dk, dk);
      Mat dP = dOh * Vh.transpose();
      dV.middleCols(h * dk, dk) += P.transpose() * dOh;
      // softmax backward; masked keys have P == 0 so their dS is 0
      Mat dS(P.rows(), P.cols());
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        const double dot = P.row(r).dot(dP.row(r));
        dS.row(r) = P.row(r).cwiseProduct((dP.row(r).array() - dot).matrix());
      }
      dQ.middleCols(h * dk, dk) += dS * K.middleCols(h * dk, dk) * inv_sqrt;
      dK.middleCols(h * dk, dk) += dS.transpose() * Q.middleCols(h * dk, dk) * inv_sqrt;
      if (want_bias) dBias += dS;
    }
    t.add_grad(q.id, dQ);
    t.add_grad(k.id, dK);
    t.add_grad(v.id, dV);
    if (want_bias) t.add_grad(logit_bias.id, dBias);
  };
  return {id};
}

Var Tape::straight_through(Var soft, const Mat& hard, const Mat& grad_mask) {
  check_same_shape(value(soft), hard, "straight_through");
  check_same_shape(hard, grad_mask, "straight_through mask");
  int id = push(hard, needs_grad(soft), nullptr);
  nodes_[id].back = [soft, grad_mask, id](Tape& t) {
    t.add_grad(soft.id, t.grad_acc(id).cwiseProduct(grad_mask));
  };
  return {id};
}

Var Tape::bce_mean_sum(Var probs, const Mat& targets, double clamp_eps) {
  const Mat& P = value(probs);
  check_same_shape(P, targets, "bce_mean_sum");
  const double n_rows = static_cast<double>(P.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    const double p = std::clamp(P(i), clamp_eps, 1.0 - clamp_eps);
    const double y = targets(i);
    total += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
  }
  Mat out(1, 1);
  out(0, 0) = total / n_rows;
  int id = push(std::move(out), needs_grad(probs), nullptr);
  nodes_[id].back = [probs, targets, clamp_eps, n_rows, id](Tape& t) {
    const double d = t.grad_acc(id)(0, 0) / n_rows;
    const Mat& P = t.value(probs);
    Mat dp(P.rows(), P.cols());
    for (Eigen::Index i = 0; i < P.size(); ++i) {
      const double p = P(i);
      if (p < clamp_eps || p > 1.0 - clamp_eps) {
        dp(i) = 0.0;  // clamped region is flat
      } else {
        dp(i) = d * (-targets(i) / p + (1.0 - targets(i)) / (1.0 - p));
      }
    }
    t.add_grad(probs.id, dp);
  };
  return {id};
}

Var Tape::nt_xent_from_sim(Var sim_over_tau) {
  const Mat& S = value(sim_over_tau);
  const Eigen::Index m2 = S.rows();
  if (S.cols() != m2 || m2 % 2 != 0 || m2 < 2) {
    throw input_error("ShapeMismatch", "nt_xent needs a 2N x 2N matrix");
  }
  const Eigen::Index n = m2 / 2;
  auto pair_of = [n, m2](Eigen::Index m) { return (m + n) % m2; };

  // L_m = -s[m, mu(m)] + logsumexp_{i != m} s[m, i]
  double total = 0.0;
  Mat softmax_rows(m2, m2);  // p_mi over i != m; diagonal forced to 0
  for (Eigen::Index m = 0; m < m2; ++m) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m2; ++i) {
      if (i != m) mx = std::max(mx, S(m, i));
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i < m2; ++i) {
      if (i == m) {
        softmax_rows(m, i) = 0.0;
      } else {
        softmax_rows(m, i) = std::exp(S(m, i) - mx);
        z += softmax_rows(m, i);
      }
    }
    softmax_rows.row(m) /= z;
    total += -S(m, pair_of(m)) + mx + std::log(z);
  }
  Mat out(1, 1);
  out(0, 0) = total / static_cast<double>(m2);
  int id = push(std::move(out), needs_grad(sim_over_tau), nullptr);
  nodes_[id].back = [sim_over_tau, softmax_rows = std::move(softmax_rows),
                     pair_of, m2, id](Tape& t) {
    const double d = t.grad_acc(id)(0, 0) / static_cast<double>(m2);
    Mat dS = softmax_rows * d;
    for (Eigen::Index m = 0; m < m2; ++m) {
      dS(m, pair_of(m)) -= d;
    }
    t.add_grad(sim_over_tau.id, dS);
  };
  return {id};
}

Var Tape::weighted_sum(const std::vector<Var>& scalars,
                       const std::vector<double>& weights) {
  if (scalars.size() != weights.size() || scalars.empty()) {
    throw input_error("ShapeMismatch", "weighted_sum arity");
  }
  double total = 0.0;
  bool ng = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Mat& s = value(scalars[i]);
    if (s.rows() != 1 || s.cols() != 1) {
      throw input_error("ShapeMismatch", "weighted_sum expects scalars");
    }
    total += weights[i] * s(0, 0);
    ng = ng || needs_grad(scalars[i]);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  int id = push(std::move(out), ng, nullptr);
  nodes_[id].back = [scalars, weights, id](Tape& t) {
    const double d = t.grad_acc(id)(0, 0);
    Mat one(1, 1);
    for (size_t i = 0; i < scalars.size(); ++i) {
      one(0, 0) = d * weights[i];
      t.add_grad(scalars[i].id, one);
    }
  };
  return {id};
}

void Tape::backward(Var loss) {
  const Mat& L = value(loss);
  if (L.rows() != 1 || L.cols() != 1) {
    throw input_error("ShapeMismatch", "backward target must be scalar");
  }
  grad_acc(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.back) continue;
    if (n.grad.size() == 0) continue;  // no downstream contribution
    n.back(*this);
  }
}

}  // namespace htc
