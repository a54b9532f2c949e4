#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "viso/embed.h"
#include "viso/rng.h"
#include "viso/types.h"

// Convolutional sentence classifier: parallel 1-D convolution branches over
// the time axis, ReLU, max-over-time pooling, concatenation, dropout and a
// fully connected softmax layer trained with cross-entropy and Adam.
namespace viso::textcnn {

struct Architecture {
  std::size_t dim = 0;
  std::size_t max_len = 20;
  std::vector<std::size_t> kernel_widths = {1, 2, 3, 5};
  std::size_t filters = 32;
  std::size_t classes = kNumClasses;
  double dropout = 0.4;

  std::size_t concat_width() const { return kernel_widths.size() * filters; }
  // Convolutions are unpadded, so max_len must cover the widest kernel.
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

template <typename T>
struct Params {
  Architecture arch;
  std::vector<std::vector<T>> conv_w;  // per branch, [filter][offset][dim]
  std::vector<std::vector<T>> conv_b;  // per branch, [filter]
  std::vector<T> fc_w;                 // [class][concat]
  std::vector<T> fc_b;                 // [class]

  static Params zeros(const Architecture& arch);
  // Glorot-uniform weights, zero biases.
  static Params init(const Architecture& arch, std::uint64_t seed);

  // Every tensor in declaration order: branch weights and biases, then the
  // fully connected weights and bias. This is also the checkpoint order.
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;
  std::size_t num_values() const;

  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    out.arch = arch;
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    for (const auto& w : conv_w) out.conv_w.push_back(conv(w));
    for (const auto& b : conv_b) out.conv_b.push_back(conv(b));
    out.fc_w = conv(fc_w);
    out.fc_b = conv(fc_b);
    return out;
  }

  bool operator==(const Params&) const = default;
};

enum class Mode { kTrain, kEval };

template <typename T>
struct ForwardCache {
  std::vector<T> pooled;                // concat width, after ReLU + max
  std::vector<std::size_t> argmax;      // time step of each pooled value
  std::vector<T> mask;                  // dropout scale per unit (0 or 1/(1-p))
  std::vector<T> dropped;               // pooled * mask
  std::array<T, kNumClasses> logits{};
  std::array<T, kNumClasses> probs{};
};

// x is a max_len x dim row-major matrix. In train mode dropout draws one
// rng.unit() per concatenated unit; eval mode draws nothing.
template <typename T>
std::array<T, kNumClasses> forward(std::span<const T> x, const Params<T>& params, Mode mode,
                                   Rng* rng, ForwardCache<T>* cache = nullptr);

// -log p[gold], with p clamped to >= 1e-12.
template <typename T>
T cross_entropy(const std::array<T, kNumClasses>& probs, Label gold);

// Gradient of cross-entropy with respect to the logits: p - onehot(gold).
template <typename T>
std::array<T, kNumClasses> logit_gradient(const std::array<T, kNumClasses>& probs, Label gold);

template <typename T>
struct Sample {
  std::span<const T> x;
  Label gold;
};

// Mean cross-entropy over the batch. If grad is non-null it receives the
// gradient of that mean with respect to every parameter. Dropout masks are
// drawn from rng in sample order.
template <typename T>
T batch_loss(std::span<const Sample<T>> batch, const Params<T>& params, Mode mode, Rng* rng,
             Params<T>* grad);

struct TrainConfig {
  double learning_rate = 2e-5;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool track_train_accuracy = false;
  // Stop once training accuracy reaches 1.0 (requires track_train_accuracy).
  bool stop_at_perfect_train = false;

  void validate() const;
};

template <typename T>
struct AdamState {
  Params<T> m;
  Params<T> v;
  std::uint64_t step = 0;

  explicit AdamState(const Architecture& arch) : m(Params<T>::zeros(arch)), v(Params<T>::zeros(arch)) {}
};

template <typename T>
void adam_step(Params<T>& params, const Params<T>& grad, AdamState<T>& state, const TrainConfig& cfg);

struct LabeledMatrix {
  embed::SequenceMatrix x;
  Label label = Label::kClean;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_macro_f1 = 0.0;
  double train_accuracy = -1.0;  // -1 when not tracked
};

struct TrainResult {
  Params<float> best;
  Params<float> last;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

TrainResult train(const std::vector<LabeledMatrix>& dataset, const std::vector<LabeledMatrix>& dev,
                  const Architecture& arch, const TrainConfig& cfg);

Prediction predict_matrix(const embed::SequenceMatrix& x, const Params<float>& params);

// Checkpoint: "VHSD1", u32 version, u32 metadata length, metadata JSON
// (dim, max_len, kernel_widths, filters, classes, dropout), then every
// tensor as little-endian f32 in Params::tensors() order.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const Params<float>& params);
// expected_dim = 0 skips the dimension check.
Params<float> load_checkpoint(const std::filesystem::path& path, std::size_t expected_dim = 0);

// Stable identifier derived from the weights ("textcnn-<16 hex digits>").
std::string model_version(const Params<float>& params);

}  // namespace viso::textcnn
