#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <json.hpp>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "eeb/tensor.hpp"

namespace eeb {

enum class ModelFamily : std::uint8_t { linreg, cnn, lstm, resnet, resnet_attention, transformer };

std::string_view family_name(ModelFamily f);
// Accepts canonical names plus common aliases (lin-reg, resatt, resnet+att, trans).
ModelFamily parse_family(std::string_view name);
std::vector<ModelFamily> all_families();

// Architecture and optimisation constants of one regressor. `defaults()` yields the
// published configuration for each family; every field may be overridden.
struct ModelSpec {
  ModelFamily family = ModelFamily::linreg;
  std::size_t window_len = 1;
  std::size_t batch_size = 0;  // 0: not trained by gradient descent
  double learning_rate = 0.0;
  double dropout = 0.3;

  // CNN: conv(kernel) -> BN -> ReLU -> maxpool(2) per block, then dense -> output.
  std::vector<std::size_t> cnn_filters{64, 32, 16};
  std::size_t cnn_kernel = 3;
  std::size_t cnn_dense = 40;

  // LSTM: two stacked recurrent layers, dense -> BN -> dropout -> output.
  std::size_t lstm_hidden1 = 128;
  std::size_t lstm_hidden2 = 64;
  std::size_t lstm_dense = 64;
  bool lstm_final_state = false;  // flatten only the last step instead of all steps

  // ResNet: stem conv -> BN -> ReLU -> maxpool(2) -> residual blocks -> GAP -> linear.
  std::size_t resnet_stem_filters = 64;
  std::size_t resnet_stem_kernel = 7;
  std::vector<std::size_t> resnet_block_channels{128, 256, 512};
  std::size_t resnet_kernel = 3;
  std::size_t attention_key_divisor = 8;  // query/key width = channels / divisor

  // Transformer encoder.
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::size_t ffn_hidden = 256;
  std::size_t encoder_layers = 2;
  std::size_t head_hidden = 32;
  std::size_t input_kernel = 3;

  static ModelSpec defaults(ModelFamily family);

  // Same topology with every width divided down to a few units; for gradient checks.
  [[nodiscard]] ModelSpec toy() const;
  // Multiplies layer widths by `factor` (at least one unit, heads kept dividing d_model).
  [[nodiscard]] ModelSpec scaled(double factor) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct NamedTensor {
  std::string name;
  ag::Tensor tensor;
};

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
};

struct ForwardResult {
  ag::Tensor output;    // [B]
  ag::Tensor per_step;  // [B, T]; Transformer only
  ag::Tensor attention; // last attention weights, when the family has attention
};

class Network;

// A parameterised regressor with a uniform forward contract:
// input [B, window_len, n_channels] -> output [B].
class ModelInstance {
 public:
  ModelInstance(ModelSpec spec, std::size_t n_channels, std::size_t window_len,
                std::uint64_t seed);
  ~ModelInstance();
  ModelInstance(ModelInstance&&) noexcept;
  ModelInstance& operator=(ModelInstance&&) noexcept;
  ModelInstance(const ModelInstance&) = delete;
  ModelInstance& operator=(const ModelInstance&) = delete;

  [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::size_t n_channels() const noexcept { return n_channels_; }
  [[nodiscard]] std::size_t window_len() const noexcept { return window_len_; }

  ForwardResult forward(const ag::Tensor& batch, const ForwardContext& ctx = {});

  [[nodiscard]] std::vector<NamedTensor>& parameters() noexcept { return params_; }
  [[nodiscard]] const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::map<std::string, ag::BatchNormState*>& buffers() noexcept { return buffers_; }
  [[nodiscard]] const std::map<std::string, ag::BatchNormState*>& buffers() const noexcept {
    return buffers_;
  }
  [[nodiscard]] ag::Tensor& parameter(std::string_view name);

  // Fixed map applied to the network output: y = scale * raw + shift. Lets every
  // family regress standardised targets while reporting in target units.
  void set_output_affine(double shift, double scale);
  [[nodiscard]] double output_shift() const noexcept { return output_shift_; }
  [[nodiscard]] double output_scale() const noexcept { return output_scale_; }

  [[nodiscard]] std::size_t parameter_count() const;
  void zero_grad();

  // FNV-1a over every parameter and running statistic.
  [[nodiscard]] std::uint64_t checksum() const;

  struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<ag::BatchNormState> buffers;
  };
  [[nodiscard]] Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  ModelSpec spec_;
  std::size_t n_channels_;
  std::size_t window_len_;
  std::vector<NamedTensor> params_;
  std::map<std::string, ag::BatchNormState*> buffers_;
  std::vector<std::unique_ptr<ag::BatchNormState>> buffer_storage_;
  std::unique_ptr<Network> net_;
  double output_shift_ = 0.0;
  double output_scale_ = 1.0;

  friend class ParamRegistry;
};

// Builds an untrained instance; initial parameters are a function of `seed`.
// Throws BuildError when the family cannot consume the requested window length.
ModelInstance build_model(const ModelSpec& spec, std::size_t n_channels, std::size_t window_len,
                          std::uint64_t seed = 0);

// Packs windows [B][T][C] (row-major per window) into a batch tensor.
ag::Tensor make_batch(std::span<const double> values, std::size_t batch, std::size_t window_len,
                      std::size_t n_channels);

// Checkpoint archive: magic line, JSON header line (spec, arity, tensor table),
// then raw little-endian doubles in header order.
void save_checkpoint(const std::string& path, const ModelInstance& model);
ModelInstance load_checkpoint(const std::string& path);

}  // namespace eeb
