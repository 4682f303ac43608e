#include "eeb/model.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "eeb/attention.hpp"
#include "eeb/errors.hpp"

namespace eeb {

using ag::Tensor;

// ---------------------------------------------------------------------------
// Family names
// ---------------------------------------------------------------------------

std::string_view family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::linreg: return "linreg";
    case ModelFamily::cnn: return "cnn";
    case ModelFamily::lstm: return "lstm";
    case ModelFamily::resnet: return "resnet";
    case ModelFamily::resnet_attention: return "resnet_attention";
    case ModelFamily::transformer: return "transformer";
  }
  return "?";
}

ModelFamily parse_family(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "linreg" || n == "lin-reg" || n == "linear") return ModelFamily::linreg;
  if (n == "cnn") return ModelFamily::cnn;
  if (n == "lstm") return ModelFamily::lstm;
  if (n == "resnet") return ModelFamily::resnet;
  if (n == "resnet_attention" || n == "resatt" || n == "resnet+att" || n == "resnet+attention") {
    return ModelFamily::resnet_attention;
  }
  if (n == "transformer" || n == "trans") return ModelFamily::transformer;
  throw ConfigError("unknown model family '" + std::string(name) + "'");
}

std::vector<ModelFamily> all_families() {
  return {ModelFamily::linreg, ModelFamily::cnn, ModelFamily::lstm,
          ModelFamily::resnet, ModelFamily::resnet_attention, ModelFamily::transformer};
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

ModelSpec ModelSpec::defaults(ModelFamily family) {
  ModelSpec s;
  s.family = family;
  switch (family) {
    case ModelFamily::linreg:
      s.window_len = 1;
      break;
    case ModelFamily::cnn:
      s.window_len = 20;
      s.batch_size = 8;
      s.learning_rate = 0.0005;
      break;
    case ModelFamily::lstm:
      s.window_len = 20;
      s.batch_size = 32;
      s.learning_rate = 0.0005;
      break;
    case ModelFamily::resnet:
      s.window_len = 10;
      s.batch_size = 32;
      s.learning_rate = 0.001;
      break;
    case ModelFamily::resnet_attention:
      s.window_len = 10;
      s.batch_size = 8;
      s.learning_rate = 0.0005;
      break;
    case ModelFamily::transformer:
      s.window_len = 10;
      s.batch_size = 4;
      s.learning_rate = 0.0009;
      break;
  }
  return s;
}

ModelSpec ModelSpec::toy() const {
  ModelSpec s = *this;
  s.cnn_filters = {4, 3, 2};
  s.cnn_dense = 5;
  s.lstm_hidden1 = 6;
  s.lstm_hidden2 = 4;
  s.lstm_dense = 5;
  s.resnet_stem_filters = 4;
  s.resnet_block_channels = {6, 8, 10};
  s.attention_key_divisor = 2;
  s.d_model = 16;
  s.heads = 8;
  s.ffn_hidden = 12;
  s.head_hidden = 4;
  return s;
}

ModelSpec ModelSpec::scaled(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("width factor must be positive");
  auto sc = [factor](std::size_t v) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(v) * factor)));
  };
  ModelSpec s = *this;
  for (auto& f : s.cnn_filters) f = sc(f);
  s.cnn_dense = sc(s.cnn_dense);
  s.lstm_hidden1 = sc(s.lstm_hidden1);
  s.lstm_hidden2 = sc(s.lstm_hidden2);
  s.lstm_dense = sc(s.lstm_dense);
  s.resnet_stem_filters = sc(s.resnet_stem_filters);
  for (auto& c : s.resnet_block_channels) c = sc(c);
  s.attention_key_divisor = std::min(s.attention_key_divisor, s.resnet_block_channels.empty()
                                                                  ? s.resnet_stem_filters
                                                                  : s.resnet_block_channels.back());
  const std::size_t unit = std::lcm<std::size_t>(2, heads);
  s.d_model = std::max(unit, static_cast<std::size_t>(std::llround(static_cast<double>(d_model) * factor /
                                                                   static_cast<double>(unit))) * unit);
  s.ffn_hidden = sc(s.ffn_hidden);
  s.head_hidden = sc(s.head_hidden);
  return s;
}

nlohmann::json ModelSpec::to_json() const {
  return {
      {"family", family_name(family)},
      {"window_len", window_len},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"dropout", dropout},
      {"cnn_filters", cnn_filters},
      {"cnn_kernel", cnn_kernel},
      {"cnn_dense", cnn_dense},
      {"lstm_hidden1", lstm_hidden1},
      {"lstm_hidden2", lstm_hidden2},
      {"lstm_dense", lstm_dense},
      {"lstm_final_state", lstm_final_state},
      {"resnet_stem_filters", resnet_stem_filters},
      {"resnet_stem_kernel", resnet_stem_kernel},
      {"resnet_block_channels", resnet_block_channels},
      {"resnet_kernel", resnet_kernel},
      {"attention_key_divisor", attention_key_divisor},
      {"d_model", d_model},
      {"heads", heads},
      {"ffn_hidden", ffn_hidden},
      {"encoder_layers", encoder_layers},
      {"head_hidden", head_hidden},
      {"input_kernel", input_kernel},
  };
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  if (!j.contains("family")) throw ConfigError("model spec lacks 'family'");
  ModelSpec s = defaults(parse_family(j.at("family").get<std::string>()));
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("window_len", s.window_len);
    get("batch_size", s.batch_size);
    get("learning_rate", s.learning_rate);
    get("dropout", s.dropout);
    get("cnn_filters", s.cnn_filters);
    get("cnn_kernel", s.cnn_kernel);
    get("cnn_dense", s.cnn_dense);
    get("lstm_hidden1", s.lstm_hidden1);
    get("lstm_hidden2", s.lstm_hidden2);
    get("lstm_dense", s.lstm_dense);
    get("lstm_final_state", s.lstm_final_state);
    get("resnet_stem_filters", s.resnet_stem_filters);
    get("resnet_stem_kernel", s.resnet_stem_kernel);
    get("resnet_block_channels", s.resnet_block_channels);
    get("resnet_kernel", s.resnet_kernel);
    get("attention_key_divisor", s.attention_key_divisor);
    get("d_model", s.d_model);
    get("heads", s.heads);
    get("ffn_hidden", s.ffn_hidden);
    get("encoder_layers", s.encoder_layers);
    get("head_hidden", s.head_hidden);
    get("input_kernel", s.input_kernel);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Parameter registration and layers
// ---------------------------------------------------------------------------

class ParamRegistry {
 public:
  ParamRegistry(ModelInstance& model, std::uint64_t seed) : model_(model), rng_(seed) {}

  Tensor uniform(const std::string& name, ag::Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = dist(rng_);
    return add(name, std::move(shape), std::move(v));
  }

  Tensor fill(const std::string& name, ag::Shape shape, double value) {
    std::vector<double> v(ag::numel(shape), value);
    return add(name, std::move(shape), std::move(v));
  }

  // Matrix [rows, cols] with orthonormal columns (rows >= cols) or rows.
  Tensor orthogonal(const std::string& name, std::size_t rows, std::size_t cols) {
    const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
    const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < small; ++j)
      for (Eigen::Index i = 0; i < big; ++i) g(i, j) = dist(rng_);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // Sign fix so the factorisation is unique.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < small; ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    std::vector<double> v(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        v[i * cols + j] = rows >= cols ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                                       : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      }
    return add(name, {rows, cols}, std::move(v));
  }

  ag::BatchNormState* batch_norm_state(const std::string& name, std::size_t channels) {
    auto st = std::make_unique<ag::BatchNormState>();
    st->running_mean.assign(channels, 0.0);
    st->running_var.assign(channels, 1.0);
    auto* raw = st.get();
    model_.buffer_storage_.push_back(std::move(st));
    model_.buffers_[name] = raw;
    return raw;
  }

 private:
  Tensor add(const std::string& name, ag::Shape shape, std::vector<double> v) {
    auto t = Tensor::parameter(std::move(shape), std::move(v));
    model_.params_.push_back({name, t});
    return t;
  }

  ModelInstance& model_;
  std::mt19937_64 rng_;
};

namespace {

struct Dense {
  Tensor weight, bias;
  Dense() = default;
  Dense(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = reg.uniform(name + ".weight", {out, in}, bound);
    bias = reg.uniform(name + ".bias", {out}, bound);
  }
  Tensor operator()(const Tensor& x) const { return ag::linear(x, weight, bias); }
};

struct Conv {
  Tensor weight, bias;
  std::size_t pad = 0;
  Conv() = default;
  Conv(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t out,
       std::size_t kernel, std::size_t padding)
      : pad(padding) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight = reg.uniform(name + ".weight", {out, in, kernel}, bound);
    bias = reg.uniform(name + ".bias", {out}, bound);
  }
  Tensor operator()(const Tensor& x) const { return ag::conv1d(x, weight, bias, pad); }
};

struct BatchNorm {
  Tensor gamma, beta;
  ag::BatchNormState* state = nullptr;
  BatchNorm() = default;
  BatchNorm(ParamRegistry& reg, const std::string& name, std::size_t channels) {
    gamma = reg.fill(name + ".gamma", {channels}, 1.0);
    beta = reg.fill(name + ".beta", {channels}, 0.0);
    state = reg.batch_norm_state(name, channels);
  }
  Tensor operator()(const Tensor& x, bool training) const {
    return ag::batch_norm(x, gamma, beta, *state, training);
  }
};

struct LayerNorm {
  Tensor gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, std::size_t d) {
    gamma = reg.fill(name + ".gamma", {d}, 1.0);
    beta = reg.fill(name + ".beta", {d}, 0.0);
  }
  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

// Gate order i, f, g, o. Input kernel fan-in uniform, recurrent kernel orthogonal,
// bias zero except the forget gate (one).
struct LstmLayer {
  Tensor w_ih, w_hh, bias;
  std::size_t hidden = 0;
  LstmLayer() = default;
  LstmLayer(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t h) : hidden(h) {
    w_ih = reg.uniform(name + ".w_ih", {4 * h, in}, 1.0 / std::sqrt(static_cast<double>(in)));
    w_hh = reg.orthogonal(name + ".w_hh", 4 * h, h);
    std::vector<double> b(4 * h, 0.0);
    std::fill(b.begin() + static_cast<std::ptrdiff_t>(h), b.begin() + static_cast<std::ptrdiff_t>(2 * h), 1.0);
    bias = reg.fill(name + ".bias", {4 * h}, 0.0);
    std::copy(b.begin(), b.end(), bias.mutable_data().begin());
  }

  // x [B, T, in] -> hidden states [B, T, H]
  Tensor operator()(const Tensor& x) const {
    const std::size_t B = x.dim(0), T = x.dim(1), H = hidden;
    const Tensor projected = ag::linear(x, w_ih, bias);  // [B, T, 4H]
    Tensor h = Tensor::zeros({B, H});
    Tensor c = Tensor::zeros({B, H});
    std::vector<Tensor> outputs;
    outputs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Tensor gates = ag::add(ag::select_step(projected, t), ag::linear(h, w_hh, Tensor{}));
      Tensor i = ag::sigmoid(ag::slice_last(gates, 0, H));
      Tensor f = ag::sigmoid(ag::slice_last(gates, H, H));
      Tensor g = ag::tanh(ag::slice_last(gates, 2 * H, H));
      Tensor o = ag::sigmoid(ag::slice_last(gates, 3 * H, H));
      c = ag::add(ag::mul(f, c), ag::mul(i, g));
      h = ag::mul(o, ag::tanh(c));
      outputs.push_back(h);
    }
    return ag::stack_steps(outputs);
  }
};

Tensor maybe_dropout(const Tensor& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (!ctx.rng) throw ContractError("training forward with dropout needs a random generator");
  return ag::dropout(x, p, *ctx.rng, true);
}

Tensor flatten(const Tensor& x) {
  const std::size_t b = x.dim(0);
  return ag::reshape(x, {b, x.numel() / b});
}

Tensor squeeze_last(const Tensor& x) { return ag::reshape(x, {x.dim(0)}); }

}  // namespace

class Network {
 public:
  virtual ~Network() = default;
  virtual ForwardResult forward(const Tensor& x, const ForwardContext& ctx) = 0;
};

namespace {

class LinRegNet final : public Network {
 public:
  LinRegNet(ParamRegistry& reg, std::size_t channels) : out_(reg, "linear", channels, 1) {}
  ForwardResult forward(const Tensor& x, const ForwardContext&) override {
    return {squeeze_last(out_(ag::select_step(x, x.dim(1) - 1))), {}, {}};
  }

 private:
  Dense out_;
};

class CnnNet final : public Network {
 public:
  CnnNet(ParamRegistry& reg, const ModelSpec& spec, std::size_t channels, std::size_t window)
      : dropout_(spec.dropout) {
    if (spec.cnn_filters.empty()) throw BuildError("cnn needs at least one convolution block");
    if (spec.cnn_kernel % 2 == 0) throw BuildError("cnn kernel must be odd");
    std::size_t in = channels;
    std::size_t t = window;
    for (std::size_t i = 0; i < spec.cnn_filters.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1);
      convs_.emplace_back(reg, p + ".conv", in, spec.cnn_filters[i], spec.cnn_kernel, spec.cnn_kernel / 2);
      norms_.emplace_back(reg, p + ".bn", spec.cnn_filters[i]);
      in = spec.cnn_filters[i];
      t /= 2;
      if (t == 0) {
        throw BuildError("cnn: window of " + std::to_string(window) + " steps collapses to zero after " +
                         std::to_string(i + 1) + " pooling stages");
      }
    }
    dense_ = Dense(reg, "dense", in * t, spec.cnn_dense);
    out_ = Dense(reg, "output", spec.cnn_dense, 1);
  }

  ForwardResult forward(const Tensor& x, const ForwardContext& ctx) override {
    Tensor h = ag::transpose12(x);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = ag::max_pool1d(ag::relu(norms_[i](convs_[i](h), ctx.training)), 2);
      if (i >= 1) h = maybe_dropout(h, dropout_, ctx);
    }
    h = maybe_dropout(ag::relu(dense_(flatten(h))), dropout_, ctx);
    return {squeeze_last(out_(h)), {}, {}};
  }

 private:
  double dropout_;
  std::vector<Conv> convs_;
  std::vector<BatchNorm> norms_;
  Dense dense_, out_;
};

class LstmNet final : public Network {
 public:
  LstmNet(ParamRegistry& reg, const ModelSpec& spec, std::size_t channels, std::size_t window)
      : dropout_(spec.dropout), final_state_(spec.lstm_final_state) {
    l1_ = LstmLayer(reg, "lstm1", channels, spec.lstm_hidden1);
    l2_ = LstmLayer(reg, "lstm2", spec.lstm_hidden1, spec.lstm_hidden2);
    const std::size_t flat = final_state_ ? spec.lstm_hidden2 : spec.lstm_hidden2 * window;
    dense_ = Dense(reg, "dense", flat, spec.lstm_dense);
    bn_ = BatchNorm(reg, "dense_bn", spec.lstm_dense);
    out_ = Dense(reg, "output", spec.lstm_dense, 1);
  }

  ForwardResult forward(const Tensor& x, const ForwardContext& ctx) override {
    Tensor h = maybe_dropout(l1_(x), dropout_, ctx);
    h = maybe_dropout(l2_(h), dropout_, ctx);
    h = final_state_ ? ag::select_step(h, h.dim(1) - 1) : flatten(h);
    h = maybe_dropout(bn_(dense_(h), ctx.training), dropout_, ctx);
    return {squeeze_last(out_(h)), {}, {}};
  }

 private:
  double dropout_;
  bool final_state_;
  LstmLayer l1_, l2_;
  Dense dense_;
  BatchNorm bn_;
  Dense out_;
};

struct ResidualBlock {
  Conv conv1, conv2, projection;
  BatchNorm bn1, bn2;
  bool project = false;

  ResidualBlock(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t out,
                std::size_t kernel)
      : project(in != out) {
    conv1 = Conv(reg, name + ".conv1", in, out, kernel, kernel / 2);
    bn1 = BatchNorm(reg, name + ".bn1", out);
    conv2 = Conv(reg, name + ".conv2", out, out, kernel, kernel / 2);
    bn2 = BatchNorm(reg, name + ".bn2", out);
    if (project) projection = Conv(reg, name + ".skip", in, out, 1, 0);
  }

  Tensor operator()(const Tensor& x, bool training) const {
    Tensor y = ag::relu(bn1(conv1(x), training));
    y = bn2(conv2(y), training);
    return ag::relu(ag::add(y, project ? projection(x) : x));
  }
};

// Self-attention over time on [B, C, T] features with a residual connection.
struct TemporalAttention {
  Conv query, key, value;
  TemporalAttention() = default;
  TemporalAttention(ParamRegistry& reg, const std::string& name, std::size_t channels,
                    std::size_t key_dim) {
    query = Conv(reg, name + ".query", channels, key_dim, 1, 0);
    key = Conv(reg, name + ".key", channels, key_dim, 1, 0);
    value = Conv(reg, name + ".value", channels, channels, 1, 0);
  }

  std::pair<Tensor, Tensor> operator()(const Tensor& x) const {
    auto r = scaled_dot_product_attention(ag::transpose12(query(x)), ag::transpose12(key(x)),
                                          ag::transpose12(value(x)));
    return {ag::add(x, ag::transpose12(r.output)), r.weights};
  }
};

class ResNetNet final : public Network {
 public:
  ResNetNet(ParamRegistry& reg, const ModelSpec& spec, std::size_t channels, std::size_t window,
            bool with_attention) {
    if (window / 2 == 0) throw BuildError("resnet needs a window of at least 2 steps");
    stem_ = Conv(reg, "stem.conv", channels, spec.resnet_stem_filters, spec.resnet_stem_kernel,
                 spec.resnet_stem_kernel / 2);
    stem_bn_ = BatchNorm(reg, "stem.bn", spec.resnet_stem_filters);
    std::size_t in = spec.resnet_stem_filters;
    for (std::size_t i = 0; i < spec.resnet_block_channels.size(); ++i) {
      blocks_.emplace_back(reg, "res" + std::to_string(i + 1), in, spec.resnet_block_channels[i],
                           spec.resnet_kernel);
      in = spec.resnet_block_channels[i];
    }
    if (with_attention) {
      const std::size_t key_dim = std::max<std::size_t>(1, in / std::max<std::size_t>(1, spec.attention_key_divisor));
      attention_.emplace(reg, "attention", in, key_dim);
    }
    out_ = Dense(reg, "output", in, 1);
  }

  ForwardResult forward(const Tensor& x, const ForwardContext& ctx) override {
    Tensor h = ag::transpose12(x);
    h = ag::max_pool1d(ag::relu(stem_bn_(stem_(h), ctx.training)), 2);
    for (const auto& block : blocks_) h = block(h, ctx.training);
    Tensor weights;
    if (attention_) std::tie(h, weights) = (*attention_)(h);
    return {squeeze_last(out_(ag::global_avg_pool(h))), {}, weights};
  }

 private:
  Conv stem_;
  BatchNorm stem_bn_;
  std::vector<ResidualBlock> blocks_;
  std::optional<TemporalAttention> attention_;
  Dense out_;
};

// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
  Dense wq, wk, wv, wo, ff1, ff2;
  LayerNorm ln1, ln2;
  std::size_t heads;

  EncoderLayer(ParamRegistry& reg, const std::string& name, std::size_t d, std::size_t h,
               std::size_t ffn)
      : heads(h) {
    wq = Dense(reg, name + ".attn.q", d, d);
    wk = Dense(reg, name + ".attn.k", d, d);
    wv = Dense(reg, name + ".attn.v", d, d);
    wo = Dense(reg, name + ".attn.out", d, d);
    ln1 = LayerNorm(reg, name + ".ln1", d);
    ff1 = Dense(reg, name + ".ffn1", d, ffn);
    ff2 = Dense(reg, name + ".ffn2", ffn, d);
    ln2 = LayerNorm(reg, name + ".ln2", d);
  }

  std::pair<Tensor, Tensor> operator()(const Tensor& x, double p, const ForwardContext& ctx) const {
    auto r = scaled_dot_product_attention(ag::split_heads(wq(x), heads), ag::split_heads(wk(x), heads),
                                          ag::split_heads(wv(x), heads));
    Tensor a = maybe_dropout(wo(ag::merge_heads(r.output, heads)), p, ctx);
    Tensor h = ln1(ag::add(x, a));
    Tensor f = ff2(maybe_dropout(ag::relu(ff1(h)), p, ctx));
    return {ln2(ag::add(h, maybe_dropout(f, p, ctx))), r.weights};
  }
};

class TransformerNet final : public Network {
 public:
  TransformerNet(ParamRegistry& reg, const ModelSpec& spec, std::size_t channels, std::size_t window)
      : dropout_(spec.dropout) {
    if (spec.heads == 0 || spec.d_model % spec.heads != 0) {
      throw BuildError("transformer width " + std::to_string(spec.d_model) +
                       " is not divisible by " + std::to_string(spec.heads) + " heads");
    }
    if (spec.input_kernel % 2 == 0) throw BuildError("transformer input kernel must be odd");
    const RowMatrix pe = positional_encoding(window, spec.d_model);
    positions_ = Tensor::constant({window, spec.d_model}, std::vector<double>(pe.data(), pe.data() + pe.size()));
    input_ = Conv(reg, "input.conv", channels, spec.d_model, spec.input_kernel, spec.input_kernel / 2);
    for (std::size_t i = 0; i < spec.encoder_layers; ++i) {
      layers_.emplace_back(reg, "encoder" + std::to_string(i + 1), spec.d_model, spec.heads, spec.ffn_hidden);
    }
    head1_ = Dense(reg, "head1", spec.d_model, spec.head_hidden);
    head2_ = Dense(reg, "head2", spec.head_hidden, 1);
  }

  ForwardResult forward(const Tensor& x, const ForwardContext& ctx) override {
    const std::size_t B = x.dim(0), T = x.dim(1);
    Tensor h = ag::transpose12(input_(ag::transpose12(x)));  // [B, T, d]
    h = ag::add(h, positions_);
    Tensor weights;
    for (const auto& layer : layers_) std::tie(h, weights) = layer(h, dropout_, ctx);
    Tensor steps = ag::reshape(head2_(ag::relu(head1_(h))), {B, T});
    Tensor last = ag::reshape(ag::slice_last(steps, T - 1, 1), {B});
    return {last, steps, weights};
  }

 private:
  double dropout_;
  Tensor positions_;
  Conv input_;
  std::vector<EncoderLayer> layers_;
  Dense head1_, head2_;
};

}  // namespace

// ---------------------------------------------------------------------------
// ModelInstance
// ---------------------------------------------------------------------------

ModelInstance::ModelInstance(ModelSpec spec, std::size_t n_channels, std::size_t window_len,
                             std::uint64_t seed)
    : spec_(std::move(spec)), n_channels_(n_channels), window_len_(window_len) {
  if (n_channels == 0) throw BuildError("model needs at least one input channel");
  if (window_len == 0) throw BuildError("model needs a positive window length");
  ParamRegistry reg(*this, seed);
  switch (spec_.family) {
    case ModelFamily::linreg: net_ = std::make_unique<LinRegNet>(reg, n_channels); break;
    case ModelFamily::cnn: net_ = std::make_unique<CnnNet>(reg, spec_, n_channels, window_len); break;
    case ModelFamily::lstm: net_ = std::make_unique<LstmNet>(reg, spec_, n_channels, window_len); break;
    case ModelFamily::resnet:
      net_ = std::make_unique<ResNetNet>(reg, spec_, n_channels, window_len, false);
      break;
    case ModelFamily::resnet_attention:
      net_ = std::make_unique<ResNetNet>(reg, spec_, n_channels, window_len, true);
      break;
    case ModelFamily::transformer:
      net_ = std::make_unique<TransformerNet>(reg, spec_, n_channels, window_len);
      break;
  }
}

ModelInstance::~ModelInstance() = default;
ModelInstance::ModelInstance(ModelInstance&&) noexcept = default;
ModelInstance& ModelInstance::operator=(ModelInstance&&) noexcept = default;

ForwardResult ModelInstance::forward(const ag::Tensor& batch, const ForwardContext& ctx) {
  if (batch.rank() != 3 || batch.dim(1) != window_len_ || batch.dim(2) != n_channels_ || batch.dim(0) == 0) {
    throw ContractError("batch shape " + ag::shape_str(batch.shape()) + " does not match model arity [B, " +
                        std::to_string(window_len_) + ", " + std::to_string(n_channels_) + "]");
  }
  auto r = net_->forward(batch, ctx);
  if (output_shift_ != 0.0 || output_scale_ != 1.0) {
    auto affine = [this](const Tensor& t) {
      return ag::add(ag::scale(t, output_scale_),
                     Tensor::constant(t.shape(), std::vector<double>(t.numel(), output_shift_)));
    };
    r.output = affine(r.output);
    if (r.per_step.defined()) r.per_step = affine(r.per_step);
  }
  return r;
}

void ModelInstance::set_output_affine(double shift, double scale) {
  if (!std::isfinite(shift) || !std::isfinite(scale) || scale == 0.0) {
    throw ContractError("output affine needs a finite shift and a finite non-zero scale");
  }
  output_shift_ = shift;
  output_scale_ = scale;
}

ag::Tensor& ModelInstance::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

std::size_t ModelInstance::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ModelInstance::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::uint64_t ModelInstance::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const auto& p : params_) mix(p.tensor.data());
  for (const auto& [name, st] : buffers_) {
    mix(st->running_mean);
    mix(st->running_var);
  }
  return h;
}

ModelInstance::Snapshot ModelInstance::snapshot() const {
  Snapshot s;
  for (const auto& p : params_) s.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  for (const auto& [name, st] : buffers_) s.buffers.push_back(*st);
  return s;
}

void ModelInstance::restore(const Snapshot& s) {
  if (s.params.size() != params_.size() || s.buffers.size() != buffers_.size()) {
    throw ContractError("snapshot does not match model layout");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.mutable_data();
    if (dst.size() != s.params[i].size()) throw ContractError("snapshot tensor size mismatch");
    std::copy(s.params[i].begin(), s.params[i].end(), dst.begin());
  }
  std::size_t i = 0;
  for (auto& [name, st] : buffers_) *st = s.buffers[i++];
}

ModelInstance build_model(const ModelSpec& spec, std::size_t n_channels, std::size_t window_len,
                          std::uint64_t seed) {
  return ModelInstance(spec, n_channels, window_len, seed);
}

ag::Tensor make_batch(std::span<const double> values, std::size_t batch, std::size_t window_len,
                      std::size_t n_channels) {
  return ag::Tensor::constant({batch, window_len, n_channels},
                              std::vector<double>(values.begin(), values.end()));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kCheckpointMagic = "EEBENCH-CHECKPOINT-1";
}

void save_checkpoint(const std::string& path, const ModelInstance& model) {
  nlohmann::json header;
  header["spec"] = model.spec().to_json();
  header["n_channels"] = model.n_channels();
  header["window_len"] = model.window_len();
  header["output_shift"] = model.output_shift();
  header["output_scale"] = model.output_scale();
  header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    header["tensors"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  header["buffers"] = nlohmann::json::array();
  for (const auto& [name, st] : model.buffers()) {
    header["buffers"].push_back({{"name", name}, {"channels", st->running_mean.size()}});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  auto write = [&out](std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  };
  for (const auto& p : model.parameters()) write(p.tensor.data());
  for (const auto& [name, st] : model.buffers()) {
    write(st->running_mean);
    write(st->running_var);
  }
}

ModelInstance load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw ConfigError(path + " is not a checkpoint archive");
  std::getline(in, header_line);
  const auto header = nlohmann::json::parse(header_line);
  auto model = build_model(ModelSpec::from_json(header.at("spec")), header.at("n_channels").get<std::size_t>(),
                           header.at("window_len").get<std::size_t>());

  model.set_output_affine(header.value("output_shift", 0.0), header.value("output_scale", 1.0));
  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.parameters().size()) throw ConfigError(path + ": tensor table mismatch");
  auto read = [&in, &path](std::span<double> v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    if (!in) throw ConfigError(path + ": truncated checkpoint");
  };
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = model.parameters()[i];
    if (tensors[i].at("name").get<std::string>() != p.name ||
        tensors[i].at("shape").get<ag::Shape>() != p.tensor.shape()) {
      throw ConfigError(path + ": tensor '" + p.name + "' does not match the rebuilt model");
    }
    read(p.tensor.mutable_data());
  }
  for (auto& [name, st] : model.buffers()) {
    read(st->running_mean);
    read(st->running_var);
  }
  return model;
}

}  // namespace eeb
