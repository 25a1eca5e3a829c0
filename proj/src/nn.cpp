#include "exprsim/nn.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "exprsim/detail/binio.hpp"

namespace exprsim {

void HeadSpec::validate() const {
  if (in_dim < 1) throw std::invalid_argument("head spec: in_dim must be >= 1");
  if (bottleneck < 1) throw std::invalid_argument("head spec: bottleneck must be >= 1");
  if (dense_layers < 0) throw std::invalid_argument("head spec: dense_layers < 0");
  if (dense_layers > 0 && growth < 1)
    throw std::invalid_argument("head spec: growth must be >= 1");
  if (fc_width < 1) throw std::invalid_argument("head spec: fc_width must be >= 1");
  if (emb_dim < 2) throw std::invalid_argument("head spec: emb_dim must be >= 2");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw std::invalid_argument("head spec: dropout_rate must be in [0,1)");
}

Eigen::MatrixXd xavier_init(int rows, int cols, Rng& rng) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("xavier_init: bad shape");
  const double bound = std::sqrt(6.0 / (double(rows) + double(cols)));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = uniform(rng);
  return m;
}

namespace {

LinearParams init_linear(int out, int in, Rng& rng) {
  return {xavier_init(out, in, rng), Eigen::VectorXd::Zero(out)};
}

BatchNormParams init_batchnorm(int width) {
  return {Eigen::VectorXd::Ones(width), Eigen::VectorXd::Zero(width),
          Eigen::VectorXd::Zero(width), Eigen::VectorXd::Ones(width)};
}

// Trainable tensors in declaration order. The same order backs the
// optimizer view and (with running stats added) the model file.
template <typename Params, typename Fn>
void visit_trainable(Params& p, Fn&& fn) {
  fn(p.dense.input.w);
  fn(p.dense.input.b);
  for (std::size_t i = 0; i < p.dense.lin.size(); ++i) {
    if (p.spec.use_batchnorm) {
      fn(p.dense.bn[i].gamma);
      fn(p.dense.bn[i].beta);
    }
    fn(p.dense.lin[i].w);
    fn(p.dense.lin[i].b);
  }
  fn(p.fc.w);
  fn(p.fc.b);
  if (p.spec.use_batchnorm) {
    fn(p.fc_bn.gamma);
    fn(p.fc_bn.beta);
  }
  fn(p.emb.w);
  fn(p.emb.b);
}

template <typename Params, typename Fn>
void visit_serialized(Params& p, Fn&& fn) {
  fn(p.dense.input.w);
  fn(p.dense.input.b);
  for (std::size_t i = 0; i < p.dense.lin.size(); ++i) {
    if (p.spec.use_batchnorm) {
      fn(p.dense.bn[i].gamma);
      fn(p.dense.bn[i].beta);
      fn(p.dense.bn[i].running_mean);
      fn(p.dense.bn[i].running_var);
    }
    fn(p.dense.lin[i].w);
    fn(p.dense.lin[i].b);
  }
  fn(p.fc.w);
  fn(p.fc.b);
  if (p.spec.use_batchnorm) {
    fn(p.fc_bn.gamma);
    fn(p.fc_bn.beta);
    fn(p.fc_bn.running_mean);
    fn(p.fc_bn.running_var);
  }
  fn(p.emb.w);
  fn(p.emb.b);
}

Eigen::MatrixXd linear_forward(const LinearParams& p, const Eigen::MatrixXd& x) {
  return (x * p.w.transpose()).rowwise() + p.b.transpose();
}

}  // namespace

HeadParams init_head(const HeadSpec& spec, Rng& rng) {
  spec.validate();
  HeadParams p;
  p.spec = spec;
  p.dense.input = init_linear(spec.bottleneck, spec.in_dim, rng);
  for (int i = 0; i < spec.dense_layers; ++i) {
    const int width = spec.bottleneck + i * spec.growth;
    if (spec.use_batchnorm) p.dense.bn.push_back(init_batchnorm(width));
    p.dense.lin.push_back(init_linear(spec.growth, width, rng));
  }
  p.fc = init_linear(spec.fc_width, spec.dense_out_dim(), rng);
  if (spec.use_batchnorm) p.fc_bn = init_batchnorm(spec.fc_width);
  p.emb = init_linear(spec.emb_dim, spec.fc_width, rng);
  return p;
}

std::size_t HeadParams::trainable_size() const {
  std::size_t n = 0;
  visit_trainable(const_cast<HeadParams&>(*this),
                  [&](auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

Eigen::VectorXd HeadParams::flatten_trainable() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(trainable_size()));
  Eigen::Index offset = 0;
  visit_trainable(const_cast<HeadParams&>(*this), [&](auto& t) {
    flat.segment(offset, t.size()) =
        Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    offset += t.size();
  });
  return flat;
}

void HeadParams::unflatten_trainable(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(trainable_size()))
    throw std::invalid_argument("unflatten_trainable: size mismatch");
  Eigen::Index offset = 0;
  visit_trainable(*this, [&](auto& t) {
    Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(offset, t.size());
    offset += t.size();
  });
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  visit_serialized(z, [&](auto& t) { t.setZero(); });
  return z;
}

Eigen::MatrixXd relu6(const Eigen::MatrixXd& x) {
  return x.array().max(0.0).min(6.0).matrix();
}

Eigen::MatrixXd relu6_backward(const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols())
    throw std::invalid_argument("relu6_backward: shape mismatch");
  return ((x.array() > 0.0) && (x.array() < 6.0))
      .select(upstream, Eigen::MatrixXd::Zero(x.rows(), x.cols()));
}

Eigen::MatrixXd batchnorm_forward(const Eigen::MatrixXd& x, BatchNormParams& params,
                                  Mode mode, BatchNormTrace* trace) {
  if (x.cols() != params.gamma.size())
    throw std::invalid_argument("batchnorm: width mismatch");
  Eigen::MatrixXd x_hat;
  if (mode == Mode::Train) {
    if (x.rows() < 2)
      throw std::invalid_argument("batchnorm: train mode needs batch size >= 2");
    const double n = double(x.rows());
    Eigen::VectorXd mean = x.colwise().mean().transpose();
    Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    Eigen::VectorXd var =
        (centered.array().square().colwise().sum() / n).matrix().transpose();
    Eigen::VectorXd inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
    x_hat = (centered.array().rowwise() * inv_std.transpose().array()).matrix();
    params.running_mean =
        kBatchNormMomentum * params.running_mean + (1 - kBatchNormMomentum) * mean;
    params.running_var =
        kBatchNormMomentum * params.running_var + (1 - kBatchNormMomentum) * var;
    if (trace) {
      trace->x_hat = x_hat;
      trace->inv_std = inv_std;
    }
  } else {
    Eigen::VectorXd inv_std =
        (params.running_var.array() + kBatchNormEps).rsqrt().matrix();
    x_hat = ((x.rowwise() - params.running_mean.transpose()).array().rowwise() *
             inv_std.transpose().array())
                .matrix();
  }
  return ((x_hat.array().rowwise() * params.gamma.transpose().array()).rowwise() +
          params.beta.transpose().array())
      .matrix();
}

Eigen::MatrixXd batchnorm_backward(const BatchNormTrace& trace,
                                   const BatchNormParams& params,
                                   const Eigen::MatrixXd& upstream,
                                   BatchNormGrads& grads) {
  const double n = double(upstream.rows());
  grads.dbeta = upstream.colwise().sum().transpose();
  grads.dgamma =
      (upstream.array() * trace.x_hat.array()).colwise().sum().matrix().transpose();
  // dx = gamma*istd * (dy - mean(dy) - x_hat * mean(dy * x_hat)), per feature
  Eigen::ArrayXXd term =
      upstream.array().rowwise() - (grads.dbeta.transpose().array() / n);
  term -= trace.x_hat.array().rowwise() * (grads.dgamma.transpose().array() / n);
  Eigen::ArrayXd scale = params.gamma.array() * trace.inv_std.array();
  return (term.rowwise() * scale.transpose()).matrix();
}

Eigen::MatrixXd l2_normalize(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm < 1e-12)
      throw NumericError("l2_normalize: near-zero norm (degenerate embedding)");
    y.row(r) = x.row(r) / norm;
  }
  return y;
}

Eigen::MatrixXd l2_normalize_backward(const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols())
    throw std::invalid_argument("l2_normalize_backward: shape mismatch");
  Eigen::MatrixXd dx(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm < 1e-12) throw NumericError("l2_normalize_backward: near-zero norm");
    const Eigen::RowVectorXd y = x.row(r) / norm;
    dx.row(r) = (upstream.row(r) - y * y.dot(upstream.row(r))) / norm;
  }
  return dx;
}

Eigen::MatrixXd dense_block_forward(DenseBlockParams& params,
                                    const Eigen::MatrixXd& x, Mode mode,
                                    DenseBlockTrace* trace) {
  const int layers = static_cast<int>(params.lin.size());
  const bool use_bn = !params.bn.empty();
  const int bottleneck = static_cast<int>(params.input.w.rows());
  const int growth = layers > 0 ? static_cast<int>(params.lin[0].w.rows()) : 0;
  const int out_dim = bottleneck + layers * growth;

  Eigen::MatrixXd concat(x.rows(), out_dim);
  concat.leftCols(bottleneck) = linear_forward(params.input, x);
  if (trace) {
    trace->input = x;
    trace->bn.resize(use_bn ? layers : 0);
    trace->pre_act.resize(layers);
    trace->act.resize(layers);
  }
  for (int i = 0; i < layers; ++i) {
    const int width = bottleneck + i * growth;
    Eigen::MatrixXd pre_act;
    if (use_bn) {
      pre_act = batchnorm_forward(concat.leftCols(width), params.bn[i], mode,
                                  trace ? &trace->bn[i] : nullptr);
    } else {
      pre_act = concat.leftCols(width);
    }
    Eigen::MatrixXd act = relu6(pre_act);
    concat.middleCols(width, growth) = linear_forward(params.lin[i], act);
    if (trace) {
      trace->pre_act[i] = std::move(pre_act);
      trace->act[i] = std::move(act);
    }
  }
  if (trace) trace->concat = concat;
  return concat;
}

Eigen::MatrixXd dense_block_backward(const DenseBlockParams& params,
                                     const DenseBlockTrace& trace,
                                     const Eigen::MatrixXd& upstream,
                                     DenseBlockParams& grads, bool use_batchnorm) {
  const int layers = static_cast<int>(params.lin.size());
  const int bottleneck = static_cast<int>(params.input.w.rows());
  const int growth = layers > 0 ? static_cast<int>(params.lin[0].w.rows()) : 0;

  Eigen::MatrixXd g = upstream;
  for (int i = layers - 1; i >= 0; --i) {
    const int width = bottleneck + i * growth;
    Eigen::MatrixXd d_out = g.middleCols(width, growth);
    grads.lin[i].w += d_out.transpose() * trace.act[i];
    grads.lin[i].b += d_out.colwise().sum().transpose();
    Eigen::MatrixXd d_act = d_out * params.lin[i].w;
    Eigen::MatrixXd d_pre = relu6_backward(trace.pre_act[i], d_act);
    if (use_batchnorm) {
      BatchNormGrads bn_grads;
      Eigen::MatrixXd d_in =
          batchnorm_backward(trace.bn[i], params.bn[i], d_pre, bn_grads);
      grads.bn[i].gamma += bn_grads.dgamma;
      grads.bn[i].beta += bn_grads.dbeta;
      g.leftCols(width) += d_in;
    } else {
      g.leftCols(width) += d_pre;
    }
  }
  Eigen::MatrixXd d_z0 = g.leftCols(bottleneck);
  grads.input.w += d_z0.transpose() * trace.input;
  grads.input.b += d_z0.colwise().sum().transpose();
  return d_z0 * params.input.w;
}

std::pair<Eigen::MatrixXd, ForwardTrace> head_forward(HeadParams& params,
                                                      const Eigen::MatrixXd& x,
                                                      Mode mode, Rng* rng) {
  if (x.cols() != params.spec.in_dim)
    throw std::invalid_argument("head_forward: input dim mismatch");
  const bool train = mode == Mode::Train;
  if (train && params.spec.dropout_rate > 0 && rng == nullptr)
    throw std::invalid_argument("head_forward: train mode with dropout needs an rng");

  ForwardTrace trace;
  trace.mode = mode;
  Eigen::MatrixXd h = dense_block_forward(params.dense, x, mode, &trace.dense);
  trace.fc_input = std::move(h);

  trace.fc_pre_bn = linear_forward(params.fc, trace.fc_input);
  if (params.spec.use_batchnorm) {
    trace.fc_pre_act =
        batchnorm_forward(trace.fc_pre_bn, params.fc_bn, mode, &trace.fc_bn);
  } else {
    trace.fc_pre_act = trace.fc_pre_bn;
  }
  Eigen::MatrixXd r = relu6(trace.fc_pre_act);

  if (train && params.spec.dropout_rate > 0) {
    const double keep = 1.0 - params.spec.dropout_rate;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    trace.dropout_mask.resize(r.rows(), r.cols());
    for (Eigen::Index i = 0; i < r.rows(); ++i)
      for (Eigen::Index j = 0; j < r.cols(); ++j)
        trace.dropout_mask(i, j) = uniform(*rng) < keep ? 1.0 / keep : 0.0;
    trace.emb_input = (r.array() * trace.dropout_mask.array()).matrix();
  } else {
    trace.emb_input = std::move(r);
  }

  trace.emb_pre_norm = linear_forward(params.emb, trace.emb_input);
  Eigen::MatrixXd y = l2_normalize(trace.emb_pre_norm);
  return {std::move(y), std::move(trace)};
}

Eigen::MatrixXd embed(const HeadParams& params, const Eigen::MatrixXd& x) {
  // Infer mode does not touch running stats, so the const_cast is safe.
  auto [y, trace] =
      head_forward(const_cast<HeadParams&>(params), x, Mode::Infer, nullptr);
  return y;
}

HeadParams head_backward(const HeadParams& params, const ForwardTrace& trace,
                         const Eigen::MatrixXd& upstream) {
  if (trace.mode != Mode::Train)
    throw std::invalid_argument("head_backward: requires a Train-mode trace");
  if (upstream.cols() != params.spec.emb_dim)
    throw std::invalid_argument("head_backward: upstream dim mismatch");

  HeadParams grads = params.zeros_like();

  Eigen::MatrixXd d_emb_pre = l2_normalize_backward(trace.emb_pre_norm, upstream);
  grads.emb.w = d_emb_pre.transpose() * trace.emb_input;
  grads.emb.b = d_emb_pre.colwise().sum().transpose();
  Eigen::MatrixXd d_s = d_emb_pre * params.emb.w;

  Eigen::MatrixXd d_r;
  if (trace.dropout_mask.size() > 0) {
    d_r = (d_s.array() * trace.dropout_mask.array()).matrix();
  } else {
    d_r = std::move(d_s);
  }
  Eigen::MatrixXd d_q = relu6_backward(trace.fc_pre_act, d_r);

  Eigen::MatrixXd d_p;
  if (params.spec.use_batchnorm) {
    BatchNormGrads bn_grads;
    d_p = batchnorm_backward(trace.fc_bn, params.fc_bn, d_q, bn_grads);
    grads.fc_bn.gamma = bn_grads.dgamma;
    grads.fc_bn.beta = bn_grads.dbeta;
  } else {
    d_p = std::move(d_q);
  }
  grads.fc.w = d_p.transpose() * trace.fc_input;
  grads.fc.b = d_p.colwise().sum().transpose();
  Eigen::MatrixXd d_h = d_p * params.fc.w;

  dense_block_backward(params.dense, trace.dense, d_h, grads.dense,
                       params.spec.use_batchnorm);
  return grads;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'F', 'E', 'C', 'H'};
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void save_model(const std::string& path, const HeadParams& params,
                std::uint64_t seed, std::uint64_t config_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kModelMagic, 4);
  detail::write_u32(out, kModelVersion);
  const HeadSpec& s = params.spec;
  detail::write_u32(out, static_cast<std::uint32_t>(s.in_dim));
  detail::write_u32(out, static_cast<std::uint32_t>(s.bottleneck));
  detail::write_u32(out, static_cast<std::uint32_t>(s.dense_layers));
  detail::write_u32(out, static_cast<std::uint32_t>(s.growth));
  detail::write_u32(out, static_cast<std::uint32_t>(s.fc_width));
  detail::write_u32(out, static_cast<std::uint32_t>(s.emb_dim));
  detail::write_f32(out, static_cast<float>(s.dropout_rate));
  out.put(s.use_batchnorm ? 1 : 0);
  detail::write_u64(out, seed);
  detail::write_u64(out, config_digest);
  visit_serialized(const_cast<HeadParams&>(params), [&](auto& t) {
    // Matrices go out row-major.
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        detail::write_f32(out, static_cast<float>(t(r, c)));
  });
  if (!out) throw DataError("write failed: " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw DataError("model file: bad magic");
  const std::uint32_t version = detail::read_u32(in);
  if (version != kModelVersion)
    throw DataError("model file: unsupported version " + std::to_string(version));

  HeadSpec spec;
  spec.in_dim = static_cast<int>(detail::read_u32(in));
  spec.bottleneck = static_cast<int>(detail::read_u32(in));
  spec.dense_layers = static_cast<int>(detail::read_u32(in));
  spec.growth = static_cast<int>(detail::read_u32(in));
  spec.fc_width = static_cast<int>(detail::read_u32(in));
  spec.emb_dim = static_cast<int>(detail::read_u32(in));
  spec.dropout_rate = detail::read_f32(in);
  const int bn = in.get();
  if (bn == std::char_traits<char>::eof()) throw DataError("model file: truncated");
  spec.use_batchnorm = bn != 0;
  spec.validate();

  LoadedModel model;
  model.seed = detail::read_u64(in);
  model.config_digest = detail::read_u64(in);

  Rng scratch(0);
  model.params = init_head(spec, scratch);
  visit_serialized(model.params, [&](auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        t(r, c) = static_cast<double>(detail::read_f32(in));
  });
  return model;
}

}  // namespace exprsim
