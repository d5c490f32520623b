#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/forward.hpp"
#include "core/layers.hpp"
#include "core/synthesis.hpp"
#include "core/tensor.hpp"

namespace esi::dae {

// Block shape plan derived from (Nc, Ns, T, F1, F2, Kt, Ks): the temporal
// encoder halves T down to Kt (conv 1x5, stride 1x2, pad 0x2), the spatial
// encoder collapses Nc rows into Ks feature maps (conv Ncx1), the spatial
// decoder grows 1 row to >= Ns (tconv 10x1, stride 2x1) followed by a center
// crop to exactly Ns, and the temporal decoder doubles Kt back up to T
// (tconv 1x6, stride 1x2, pad 0x2). The final temporal-decoder layer is
// linear; every other trainable layer is followed by BN + ELU.
struct Architecture {
  int nc = 0, ns = 0, t = 0, f1 = 16, f2 = 16, kt = 5, ks = 64;
  std::vector<int> encoder_widths;   // T, ..., Kt
  std::vector<int> decoder_widths;   // Kt, ..., T
  std::vector<int> spatial_heights;  // 1, 10, 28, ..., final >= Ns
  int crop_low = 0, crop_high = 0;   // rows dropped after the spatial decoder
};

Architecture derive_architecture(int nc, int ns, int t, int f1, int f2, int kt, int ks);

template <typename T>
struct Block {
  std::string name;
  bool transposed = false;
  nn::Stride stride;
  nn::Pad pad;
  nn::ConvKernel<T> conv;    // used when !transposed
  nn::TconvKernel<T> tconv;  // used when transposed
  bool has_bn = true, has_elu = true;
  nn::BatchNormParams<T> bn;

  std::vector<T> gw, gbias, ggamma, gbeta;
  nn::AdamSlot<T> sw, sbias, sgamma, sbeta;

  std::vector<T>& weights() { return transposed ? tconv.w : conv.w; }
  const std::vector<T>& weights() const { return transposed ? tconv.w : conv.w; }
  std::vector<T>& bias() { return transposed ? tconv.bias : conv.bias; }
  const std::vector<T>& bias() const { return transposed ? tconv.bias : conv.bias; }
  int out_channels() const { return transposed ? tconv.co : conv.co; }
};

template <typename T>
struct ParamView {
  std::string name;
  std::vector<T>* value = nullptr;
  std::vector<T>* grad = nullptr;
  nn::AdamSlot<T>* slot = nullptr;
  bool decayed = false;  // kernels carry the L1/L2 weight decay
};

// Persistent per-trainer buffers: activations, BN caches and gradient
// tensors keep their storage across batches.
template <typename T>
struct Workspace {
  std::vector<nn::Tensor4<T>> outs;  // post-activation output per block
  std::vector<nn::BatchNormCache<T>> bn_caches;
  std::vector<nn::Tensor4<T>> grad_in;  // per-block input gradient
  nn::Tensor4<T> input;    // noise-corrupted network input
  nn::Tensor4<T> cropped;  // spatial decoder output after center crop
  nn::Tensor4<T> x_re;     // forward-block output
  nn::Tensor4<T> grad_top;     // gradient flowing into S_re
  nn::Tensor4<T> grad_uncrop;  // zero-padded gradient across the crop

  const nn::Tensor4<T>& s_re() const { return outs.back(); }
};

template <typename T>
class DstDae {
 public:
  static DstDae build(int nc, int ns, int t, int f1, int f2, int kt, int ks,
                      const forward::LeadField& lead, Rng& rng);

  const Architecture& arch() const { return arch_; }
  const nn::RowMat<T>& lead_matrix() const { return lead_; }

  // Runs the encoder/decoder stack and the fixed forward block. Training
  // mode uses batch statistics and updates BN running stats.
  void forward(const nn::Tensor4<T>& x_n, bool training, Workspace<T>& ws);

  void zero_grads();
  // d_sre: direct gradient on S_re from the source loss; d_xre: gradient on
  // X_re from the scalp loss. The forward-block adjoint is applied here.
  void backward(Workspace<T>& ws, const nn::Tensor4<T>& d_sre, const nn::Tensor4<T>& d_xre);

  double weight_decay_value(double l1, double l2) const;
  void add_weight_decay_grads(double l1, double l2);
  void adam_update(double lr_t, const nn::AdamConfig& cfg);

  // Inference: noise block bypassed, BN in inference mode, forward block not
  // applied. Input is (Nc, T), output (Ns, T). Does not mutate the network.
  Eigen::MatrixXd estimate(const Eigen::MatrixXd& x) const;
  // X_re = L * estimate(x_n), in the lead field's units.
  Eigen::MatrixXd denoise_scalp(const Eigen::MatrixXd& x_n) const;

  std::vector<ParamView<T>> param_views();

  void save(const std::string& path) const;
  static DstDae load(const std::string& path);

  long step() const { return step_; }
  int epochs_done() const { return epochs_done_; }
  void set_epochs_done(int e) { epochs_done_ = e; }
  double train_snr_db() const { return train_snr_db_; }
  void set_train_snr_db(double v) { train_snr_db_ = v; }
  bool normalized_io() const { return normalize_; }

  std::vector<Block<T>>& blocks() { return blocks_; }
  const std::vector<Block<T>>& blocks() const { return blocks_; }
  int crop_after_block() const { return crop_after_block_; }

 private:
  Architecture arch_;
  std::vector<Block<T>> blocks_;
  int crop_after_block_ = -1;  // index of the last spatial-decoder block
  nn::RowMat<T> lead_;
  long step_ = 0;
  int epochs_done_ = 0;
  double train_snr_db_ = 0.0;
  bool normalize_ = true;
};

struct TrainConfig {
  double lambda1 = 10.0, lambda2 = 150.0, delta = 0.1;
  double l1 = 1e-5, l2 = 1e-5;  // per-layer kernel weight decay
  double snr_db = 0.0;          // noise-block level
  double lr_max = 1e-4, lr_min = 1e-5;
  int epochs = 300, batch_size = 32;
  int warmup_epochs = 20, cooldown_epochs = 20;
  double validation_fraction = 0.1;
  std::uint64_t master_seed = 0;
};

// Linear ramp lr_min -> lr_max over the first warmup epochs, plateau at
// lr_max, linear ramp back to lr_min over the last cooldown epochs.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct LossValues {
  double total = 0.0, loss_x = 0.0, loss_s = 0.0;
};

// L_X = mean_i |Xg - Xre|_F^2, L_S = mean_i [ |Sg - Sre|_F^2 + delta * |Sg - Sre|_1 ],
// total = lambda1 * L_X + lambda2 * L_S + weight_decay.
template <typename T>
LossValues data_loss(const nn::Tensor4<T>& xg, const nn::Tensor4<T>& xre, const nn::Tensor4<T>& sg,
                     const nn::Tensor4<T>& sre, double lambda1, double lambda2, double delta,
                     double weight_decay = 0.0);

template <typename T>
void data_loss_grads(const nn::Tensor4<T>& xg, const nn::Tensor4<T>& xre, const nn::Tensor4<T>& sg,
                     const nn::Tensor4<T>& sre, double lambda1, double lambda2, double delta,
                     nn::Tensor4<T>& d_xre, nn::Tensor4<T>& d_sre);

struct EpochRecord {
  int epoch = 0;  // cumulative over resumed runs
  double lr = 0.0, train_loss = 0.0, val_loss = 0.0, loss_x = 0.0, loss_s = 0.0, seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val = 0.0;
  int train_samples = 0;
};

// Seeded-shuffle train/validation split, per-sample exact-SNR noise block,
// Adam with the warm-up schedule. The returned network carries the weights
// of the best validation epoch; if checkpoint_path is non-empty they are
// also written there, and history_path receives one CSV row per epoch.
TrainResult train(DstDae<float>& net, const synth::Dataset& data, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "", const std::string& history_path = "");

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history,
                       int train_samples);

}  // namespace esi::dae
