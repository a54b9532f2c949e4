#include "viso/textcnn.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "viso/binio.h"
#include "viso/metrics.h"

namespace viso::textcnn {

namespace {

constexpr std::string_view kCheckpointMagic = "VHSD1";
constexpr double kLogClamp = 1e-12;

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void zero(Params<T>& p) {
  for (auto t : p.tensors()) std::fill(t.begin(), t.end(), T(0));
}

template <typename T>
std::size_t argmax(const std::array<T, kNumClasses>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

void Architecture::validate() const {
  if (dim == 0) throw Error("architecture: dim must be >= 1");
  if (kernel_widths.empty()) throw Error("architecture: no kernel widths");
  if (filters == 0) throw Error("architecture: filters must be >= 1");
  if (classes != kNumClasses) throw Error("architecture: classes must be 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("architecture: dropout must be in [0, 1)");
  for (auto w : kernel_widths) {
    if (w == 0) throw Error("architecture: kernel width must be >= 1");
    if (w > max_len) throw Error("architecture: max_len shorter than kernel width " + std::to_string(w));
  }
}

template <typename T>
Params<T> Params<T>::zeros(const Architecture& arch) {
  arch.validate();
  Params p;
  p.arch = arch;
  for (auto w : arch.kernel_widths) {
    p.conv_w.emplace_back(arch.filters * w * arch.dim, T(0));
    p.conv_b.emplace_back(arch.filters, T(0));
  }
  p.fc_w.assign(arch.classes * arch.concat_width(), T(0));
  p.fc_b.assign(arch.classes, T(0));
  return p;
}

template <typename T>
Params<T> Params<T>::init(const Architecture& arch, std::uint64_t seed) {
  Params p = zeros(arch);
  Rng rng(seed);
  auto fill = [&](std::vector<T>& v, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : v) x = static_cast<T>((2.0 * rng.unit() - 1.0) * bound);
  };
  for (std::size_t b = 0; b < arch.kernel_widths.size(); ++b) {
    const double w = static_cast<double>(arch.kernel_widths[b]);
    fill(p.conv_w[b], w * static_cast<double>(arch.dim), w * static_cast<double>(arch.filters));
  }
  fill(p.fc_w, static_cast<double>(arch.concat_width()), static_cast<double>(arch.classes));
  return p;
}

template <typename T>
std::vector<std::span<T>> Params<T>::tensors() {
  std::vector<std::span<T>> out;
  for (std::size_t b = 0; b < conv_w.size(); ++b) {
    out.emplace_back(conv_w[b]);
    out.emplace_back(conv_b[b]);
  }
  out.emplace_back(fc_w);
  out.emplace_back(fc_b);
  return out;
}

template <typename T>
std::vector<std::span<const T>> Params<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (std::size_t b = 0; b < conv_w.size(); ++b) {
    out.emplace_back(conv_w[b]);
    out.emplace_back(conv_b[b]);
  }
  out.emplace_back(fc_w);
  out.emplace_back(fc_b);
  return out;
}

template <typename T>
std::size_t Params<T>::num_values() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

template <typename T>
std::array<T, kNumClasses> forward(std::span<const T> x, const Params<T>& params, Mode mode,
                                   Rng* rng, ForwardCache<T>* cache) {
  const Architecture& a = params.arch;
  if (x.size() != a.max_len * a.dim) {
    throw Error("input shape mismatch: expected " + std::to_string(a.max_len) + "x" +
                std::to_string(a.dim) + " values");
  }
  if (mode == Mode::kTrain && a.dropout > 0.0 && rng == nullptr) {
    throw Error("train-mode forward requires an rng");
  }

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  const std::size_t width = a.concat_width();
  c.pooled.assign(width, T(0));
  c.argmax.assign(width, 0);
  c.mask.assign(width, T(1));
  c.dropped.assign(width, T(0));

  for (std::size_t b = 0; b < a.kernel_widths.size(); ++b) {
    const std::size_t window = a.kernel_widths[b] * a.dim;
    const std::size_t positions = a.max_len - a.kernel_widths[b] + 1;
    const T* w = params.conv_w[b].data();
    for (std::size_t f = 0; f < a.filters; ++f) {
      const T* wf = w + f * window;
      T best = -std::numeric_limits<T>::infinity();
      std::size_t best_t = 0;
      for (std::size_t t = 0; t < positions; ++t) {
        T z = params.conv_b[b][f] + dot(wf, x.data() + t * a.dim, window);
        if (z > best) {
          best = z;
          best_t = t;
        }
      }
      const std::size_t j = b * a.filters + f;
      c.pooled[j] = std::max(best, T(0));
      c.argmax[j] = best_t;
    }
  }

  if (mode == Mode::kTrain && a.dropout > 0.0) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - a.dropout));
    for (std::size_t j = 0; j < width; ++j) {
      c.mask[j] = rng->unit() >= a.dropout ? keep_scale : T(0);
    }
  }
  for (std::size_t j = 0; j < width; ++j) c.dropped[j] = c.pooled[j] * c.mask[j];

  for (std::size_t k = 0; k < a.classes; ++k) {
    c.logits[k] = params.fc_b[k] + dot(params.fc_w.data() + k * width, c.dropped.data(), width);
  }
  const T mx = *std::max_element(c.logits.begin(), c.logits.end());
  T sum = 0;
  for (std::size_t k = 0; k < a.classes; ++k) {
    c.probs[k] = std::exp(c.logits[k] - mx);
    sum += c.probs[k];
  }
  for (auto& p : c.probs) p /= sum;
  return c.probs;
}

template <typename T>
T cross_entropy(const std::array<T, kNumClasses>& probs, Label gold) {
  const T p = std::max(probs[label_index(gold)], static_cast<T>(kLogClamp));
  return -std::log(p);
}

template <typename T>
std::array<T, kNumClasses> logit_gradient(const std::array<T, kNumClasses>& probs, Label gold) {
  std::array<T, kNumClasses> g = probs;
  g[label_index(gold)] -= T(1);
  return g;
}

template <typename T>
T batch_loss(std::span<const Sample<T>> batch, const Params<T>& params, Mode mode, Rng* rng,
             Params<T>* grad) {
  if (batch.empty()) throw Error("empty batch");
  const Architecture& a = params.arch;
  const std::size_t width = a.concat_width();
  const T scale = T(1) / static_cast<T>(batch.size());
  if (grad) {
    if (grad->arch != a) *grad = Params<T>::zeros(a);
    zero(*grad);
  }

  ForwardCache<T> c;
  std::vector<T> g_unit(width);
  T loss = 0;
  for (const auto& s : batch) {
    auto probs = forward(s.x, params, mode, rng, &c);
    loss += cross_entropy(probs, s.gold);
    if (!grad) continue;

    auto g_logit = logit_gradient(probs, s.gold);
    for (auto& g : g_logit) g *= scale;
    for (std::size_t k = 0; k < a.classes; ++k) {
      grad->fc_b[k] += g_logit[k];
      T* row = grad->fc_w.data() + k * width;
      for (std::size_t j = 0; j < width; ++j) row[j] += g_logit[k] * c.dropped[j];
    }
    for (std::size_t j = 0; j < width; ++j) {
      T g = 0;
      for (std::size_t k = 0; k < a.classes; ++k) g += params.fc_w[k * width + j] * g_logit[k];
      g_unit[j] = g * c.mask[j];
    }
    for (std::size_t b = 0; b < a.kernel_widths.size(); ++b) {
      const std::size_t window = a.kernel_widths[b] * a.dim;
      for (std::size_t f = 0; f < a.filters; ++f) {
        const std::size_t j = b * a.filters + f;
        if (!(c.pooled[j] > T(0)) || g_unit[j] == T(0)) continue;
        const T g = g_unit[j];
        grad->conv_b[b][f] += g;
        T* wg = grad->conv_w[b].data() + f * window;
        const T* xin = s.x.data() + c.argmax[j] * a.dim;
        for (std::size_t i = 0; i < window; ++i) wg[i] += g * xin[i];
      }
    }
  }
  return loss * scale;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (batch_size == 0) throw Error("batch_size must be >= 1");
  if (stop_at_perfect_train && !track_train_accuracy) {
    throw Error("stop_at_perfect_train requires track_train_accuracy");
  }
}

template <typename T>
void adam_step(Params<T>& params, const Params<T>& grad, AdamState<T>& state, const TrainConfig& cfg) {
  auto p = params.tensors();
  auto g = grad.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw Error("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size()) throw Error("adam_step: shape mismatch");
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const T gi = g[k][i];
      m[k][i] = b1 * m[k][i] + (T(1) - b1) * gi;
      v[k][i] = b2 * v[k][i] + (T(1) - b2) * gi * gi;
      const double m_hat = static_cast<double>(m[k][i]) / bc1;
      const double v_hat = static_cast<double>(v[k][i]) / bc2;
      p[k][i] -= static_cast<T>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

Prediction predict_matrix(const embed::SequenceMatrix& x, const Params<float>& params) {
  if (x.dim != params.arch.dim || x.max_len != params.arch.max_len) {
    throw Error("input shape " + std::to_string(x.max_len) + "x" + std::to_string(x.dim) +
                " does not match model " + std::to_string(params.arch.max_len) + "x" +
                std::to_string(params.arch.dim));
  }
  auto probs = forward<float>(x.data, params, Mode::kEval, nullptr);
  Prediction p;
  for (std::size_t k = 0; k < kNumClasses; ++k) p.probs[k] = probs[k];
  p.label = label_from_index(argmax(probs));
  return p;
}

namespace {

double accuracy_on(const std::vector<LabeledMatrix>& data, const Params<float>& params) {
  std::size_t ok = 0;
  for (const auto& s : data) ok += predict_matrix(s.x, params).label == s.label ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

double macro_f1_on(const std::vector<LabeledMatrix>& data, const Params<float>& params) {
  std::vector<Label> preds, golds;
  for (const auto& s : data) {
    preds.push_back(predict_matrix(s.x, params).label);
    golds.push_back(s.label);
  }
  return metrics::macro_prf1(metrics::confusion(preds, golds)).f1;
}

}  // namespace

TrainResult train(const std::vector<LabeledMatrix>& dataset, const std::vector<LabeledMatrix>& dev,
                  const Architecture& arch, const TrainConfig& cfg) {
  if (dataset.empty()) throw Error("empty training set");
  arch.validate();
  cfg.validate();
  for (const auto* set : {&dataset, &dev}) {
    for (const auto& s : *set) {
      if (s.x.dim != arch.dim || s.x.max_len != arch.max_len) throw Error("training sample shape mismatch");
    }
  }

  TrainResult result;
  Params<float> params = Params<float>::init(arch, derive_seed(cfg.seed, 1));
  Params<float> grad = Params<float>::zeros(arch);
  AdamState<float> adam(arch);
  Rng order_rng(derive_seed(cfg.seed, 2));
  Rng dropout_rng(derive_seed(cfg.seed, 3));

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_f1 = -1.0;
  std::vector<Sample<float>> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = dataset[order[i]];
        batch.push_back({std::span<const float>(s.x.data), s.label});
      }
      float loss = batch_loss<float>(batch, params, Mode::kTrain, &dropout_rng, &grad);
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      adam_step(params, grad, adam, cfg);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(dataset.size());
    if (!dev.empty()) st.dev_macro_f1 = macro_f1_on(dev, params);
    if (cfg.track_train_accuracy) st.train_accuracy = accuracy_on(dataset, params);
    result.history.push_back(st);

    if (dev.empty() || st.dev_macro_f1 > best_f1) {
      best_f1 = st.dev_macro_f1;
      result.best = params;
      result.best_epoch = epoch;
    }
    if (cfg.stop_at_perfect_train && st.train_accuracy >= 1.0) break;
  }
  result.last = params;
  if (result.history.empty()) {
    result.best = params;
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const Params<float>& params) {
  params.arch.validate();
  nlohmann::json meta = {
      {"dim", params.arch.dim},
      {"max_len", params.arch.max_len},
      {"kernel_widths", params.arch.kernel_widths},
      {"filters", params.arch.filters},
      {"classes", params.arch.classes},
      {"dropout", params.arch.dropout},
  };
  const std::string meta_str = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  binio::write_bytes(out, kCheckpointMagic);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(meta_str.size()));
  binio::write_bytes(out, meta_str);
  for (auto t : params.tensors()) {
    for (float v : t) binio::write_f32(out, v);
  }
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

Params<float> load_checkpoint(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  constexpr const char* kCorrupt = "corrupt checkpoint";
  if (binio::read_bytes(in, kCheckpointMagic.size(), kCorrupt) != kCheckpointMagic) {
    throw Error("bad checkpoint magic");
  }
  const auto version = binio::read_u32(in, kCorrupt);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = binio::read_u32(in, kCorrupt);
  if (meta_len > (1u << 20)) throw Error(kCorrupt);
  const std::string meta_str = binio::read_bytes(in, meta_len, kCorrupt);

  Architecture arch;
  try {
    auto meta = nlohmann::json::parse(meta_str);
    arch.dim = meta.at("dim").get<std::size_t>();
    arch.max_len = meta.at("max_len").get<std::size_t>();
    arch.kernel_widths = meta.at("kernel_widths").get<std::vector<std::size_t>>();
    arch.filters = meta.at("filters").get<std::size_t>();
    arch.classes = meta.at("classes").get<std::size_t>();
    arch.dropout = meta.at("dropout").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  arch.validate();
  if (expected_dim != 0 && arch.dim != expected_dim) {
    throw Error("checkpoint dimension " + std::to_string(arch.dim) +
                " does not match embedding dimension " + std::to_string(expected_dim));
  }

  Params<float> params = Params<float>::zeros(arch);
  for (auto t : params.tensors()) {
    for (auto& v : t) {
      v = binio::read_f32(in, kCorrupt);
      if (!std::isfinite(v)) throw Error("checkpoint contains non-finite weights");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(kCorrupt);
  return params;
}

std::string model_version(const Params<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto t : params.tensors()) {
    for (float v : t) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      for (int k = 0; k < 4; ++k) {
        h ^= (bits >> (8 * k)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "textcnn-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template struct Params<float>;
template struct Params<double>;
template std::array<float, kNumClasses> forward(std::span<const float>, const Params<float>&, Mode,
                                                Rng*, ForwardCache<float>*);
template std::array<double, kNumClasses> forward(std::span<const double>, const Params<double>&,
                                                 Mode, Rng*, ForwardCache<double>*);
template float cross_entropy(const std::array<float, kNumClasses>&, Label);
template double cross_entropy(const std::array<double, kNumClasses>&, Label);
template std::array<float, kNumClasses> logit_gradient(const std::array<float, kNumClasses>&, Label);
template std::array<double, kNumClasses> logit_gradient(const std::array<double, kNumClasses>&, Label);
template float batch_loss(std::span<const Sample<float>>, const Params<float>&, Mode, Rng*,
                          Params<float>*);
template double batch_loss(std::span<const Sample<double>>, const Params<double>&, Mode, Rng*,
                           Params<double>*);
template void adam_step(Params<float>&, const Params<float>&, AdamState<float>&, const TrainConfig&);
template void adam_step(Params<double>&, const Params<double>&, AdamState<double>&,
                        const TrainConfig&);

}  // namespace viso::textcnn
