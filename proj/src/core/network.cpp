#include "core/network.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "core/binio.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"

namespace esi::dae {

Architecture derive_architecture(int nc, int ns, int t, int f1, int f2, int kt, int ks) {
  if (nc < 2 || ns < 1 || t < 2) raise(ErrorCode::ArchitectureError, "implausible problem dims");
  if (f1 < 1 || f2 < 1 || kt < 1 || ks < 1) raise(ErrorCode::ArchitectureError, "bad feature counts");
  if (t <= kt) raise(ErrorCode::ArchitectureError, "T must exceed Kt");

  Architecture a;
  a.nc = nc;
  a.ns = ns;
  a.t = t;
  a.f1 = f1;
  a.f2 = f2;
  a.kt = kt;
  a.ks = ks;

  // Temporal encoder: w -> (w + 2*2 - 5)/2 + 1 until Kt is hit exactly.
  a.encoder_widths.push_back(t);
  int w = t;
  while (w > kt) {
    w = nn::conv_out_dim(w, 5, 2, 2);
    a.encoder_widths.push_back(w);
    if (int(a.encoder_widths.size()) > 32)
      raise(ErrorCode::ArchitectureError, "temporal encoder does not converge");
  }
  if (w != kt)
    raise(ErrorCode::ArchitectureError,
          "temporal stack cannot reduce T=" + std::to_string(t) + " to Kt=" + std::to_string(kt));

  // Temporal decoder: w -> (w-1)*2 - 2*2 + 6 = 2w until T is hit exactly.
  a.decoder_widths.push_back(kt);
  w = kt;
  while (w < t) {
    w = nn::tconv_out_dim(w, 6, 2, 2);
    a.decoder_widths.push_back(w);
  }
  if (w != t)
    raise(ErrorCode::ArchitectureError,
          "temporal decoder cannot expand Kt=" + std::to_string(kt) + " to T=" + std::to_string(t));

  // Spatial decoder: h -> (h-1)*2 + 10, smallest depth reaching >= Ns, then crop.
  a.spatial_heights.push_back(1);
  int h = 1;
  while (h < ns) {
    h = nn::tconv_out_dim(h, 10, 2, 0);
    a.spatial_heights.push_back(h);
    if (int(a.spatial_heights.size()) > 64)
      raise(ErrorCode::ArchitectureError, "spatial decoder does not converge");
  }
  const int crop = h - ns;
  a.crop_low = crop / 2;
  a.crop_high = crop - a.crop_low;
  return a;
}

namespace {

template <typename T>
Block<T> make_conv_block(const std::string& name, int kh, int kw, int ci, int co, nn::Stride s,
                         nn::Pad p, bool bn_elu, Rng& rng) {
  Block<T> b;
  b.name = name;
  b.transposed = false;
  b.stride = s;
  b.pad = p;
  b.conv.kh = kh;
  b.conv.kw = kw;
  b.conv.ci = ci;
  b.conv.co = co;
  b.conv.w = nn::glorot_uniform<T>(rng, kh * kw * ci, kh * kw * co, std::size_t(kh) * kw * ci * co);
  b.conv.bias.assign(std::size_t(co), T(0));
  b.has_bn = b.has_elu = bn_elu;
  if (bn_elu) b.bn.init(co);
  return b;
}

template <typename T>
Block<T> make_tconv_block(const std::string& name, int kh, int kw, int ci, int co, nn::Stride s,
                          nn::Pad p, bool bn_elu, Rng& rng) {
  Block<T> b;
  b.name = name;
  b.transposed = true;
  b.stride = s;
  b.pad = p;
  b.tconv.kh = kh;
  b.tconv.kw = kw;
  b.tconv.ci = ci;
  b.tconv.co = co;
  b.tconv.w = nn::glorot_uniform<T>(rng, kh * kw * ci, kh * kw * co, std::size_t(kh) * kw * ci * co);
  b.tconv.bias.assign(std::size_t(co), T(0));
  b.has_bn = b.has_elu = bn_elu;
  if (bn_elu) b.bn.init(co);
  return b;
}

// Center crop of rows: (B, H, W, C) -> (B, H - lo - hi, W, C).
template <typename T>
void crop_rows_into(const nn::Tensor4<T>& x, int lo, int hi, nn::Tensor4<T>& y) {
  nn::ensure_shape(y, x.b, x.h - lo - hi, x.w, x.c);
  const std::size_t row = std::size_t(x.w) * x.c;
  for (int b = 0; b < x.b; ++b) {
    const T* src = x.sample(b) + std::size_t(lo) * row;
    std::memcpy(y.sample(b), src, y.sample_size() * sizeof(T));
  }
}

template <typename T>
nn::Tensor4<T> crop_rows(const nn::Tensor4<T>& x, int lo, int hi) {
  nn::Tensor4<T> y;
  crop_rows_into(x, lo, hi, y);
  return y;
}

template <typename T>
void uncrop_rows_into(const nn::Tensor4<T>& g, int full_h, int lo, nn::Tensor4<T>& y) {
  nn::ensure_shape(y, g.b, full_h, g.w, g.c);
  std::memset(y.data(), 0, y.size() * sizeof(T));
  const std::size_t row = std::size_t(g.w) * g.c;
  for (int b = 0; b < g.b; ++b)
    std::memcpy(y.sample(b) + std::size_t(lo) * row, g.sample(b), g.sample_size() * sizeof(T));
}

}  // namespace

template <typename T>
DstDae<T> DstDae<T>::build(int nc, int ns, int t, int f1, int f2, int kt, int ks,
                           const forward::LeadField& lead, Rng& rng) {
  if (lead.channels() != nc || lead.sources() != ns)
    raise(ErrorCode::ArchitectureError, "lead field dims do not match (Nc, Ns)");

  DstDae<T> net;
  net.arch_ = derive_architecture(nc, ns, t, f1, f2, kt, ks);

  const int n_enc = int(net.arch_.encoder_widths.size()) - 1;
  const int n_spatial = int(net.arch_.spatial_heights.size()) - 1;
  const int n_dec = int(net.arch_.decoder_widths.size()) - 1;

  for (int i = 0; i < n_enc; ++i)
    net.blocks_.push_back(make_conv_block<T>("te" + std::to_string(i), 1, 5, i == 0 ? 1 : f1, f1,
                                             {1, 2}, {0, 2}, true, rng));
  net.blocks_.push_back(make_conv_block<T>("se0", nc, 1, f1, ks, {1, 1}, {0, 0}, true, rng));
  for (int i = 0; i < n_spatial; ++i)
    net.blocks_.push_back(make_tconv_block<T>("sd" + std::to_string(i), 10, 1, i == 0 ? ks : f2, f2,
                                              {2, 1}, {0, 0}, true, rng));
  net.crop_after_block_ = n_enc + 1 + n_spatial - 1;
  for (int i = 0; i < n_dec; ++i) {
    const bool last = (i == n_dec - 1);
    net.blocks_.push_back(make_tconv_block<T>("td" + std::to_string(i), 1, 6, f2, last ? 1 : f2,
                                              {1, 2}, {0, 2}, !last, rng));
    // The regression head starts near zero: the source-loss pull toward the
    // mostly-zero targets otherwise flattens the freshly initialized output
    // and stalls every upstream gradient before any mapping is learned.
    if (last)
      for (T& v : net.blocks_.back().weights()) v *= T(0.01);
  }

  net.lead_ = lead.m.cast<T>();
  return net;
}

template <typename T>
void DstDae<T>::forward(const nn::Tensor4<T>& x_n, bool training, Workspace<T>& ws) {
  if (x_n.h != arch_.nc || x_n.w != arch_.t || x_n.c != 1)
    raise(ErrorCode::ShapeError, "network input must be (B, " + std::to_string(arch_.nc) + ", " +
                                     std::to_string(arch_.t) + ", 1), got (B, " +
                                     std::to_string(x_n.h) + ", " + std::to_string(x_n.w) + ", " +
                                     std::to_string(x_n.c) + ")");
  ws.input = x_n;
  ws.outs.resize(blocks_.size());
  ws.bn_caches.resize(blocks_.size());

  const nn::Tensor4<T>* cur = &ws.input;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block<T>& blk = blocks_[i];
    nn::Tensor4<T>& out = ws.outs[i];
    if (blk.transposed)
      nn::tconv2d_forward_into(*cur, blk.tconv, blk.stride, blk.pad, out);
    else
      nn::conv2d_forward_into(*cur, blk.conv, blk.stride, blk.pad, out);
    if (blk.has_bn) {
      if (training)
        nn::batchnorm_forward_train_inplace(out, blk.bn, ws.bn_caches[i]);
      else
        nn::batchnorm_infer_inplace(out, blk.bn);
    }
    if (blk.has_elu) nn::elu_forward_inplace(out);
    if (int(i) == crop_after_block_) {
      crop_rows_into(out, arch_.crop_low, arch_.crop_high, ws.cropped);
      cur = &ws.cropped;
    } else {
      cur = &out;
    }
  }
  nn::fixed_matmul_forward_into(ws.outs.back(), lead_, ws.x_re);
}

template <typename T>
void DstDae<T>::zero_grads() {
  for (Block<T>& blk : blocks_) {
    blk.gw.assign(blk.weights().size(), T(0));
    blk.gbias.assign(blk.bias().size(), T(0));
    if (blk.has_bn) {
      blk.ggamma.assign(blk.bn.gamma.size(), T(0));
      blk.gbeta.assign(blk.bn.beta.size(), T(0));
    }
  }
}

template <typename T>
void DstDae<T>::backward(Workspace<T>& ws, const nn::Tensor4<T>& d_sre,
                         const nn::Tensor4<T>& d_xre) {
  nn::fixed_matmul_backward_into(d_xre, lead_, ws.grad_top);
  if (!ws.grad_top.same_shape(d_sre)) raise(ErrorCode::ShapeError, "loss gradient shapes disagree");
  for (std::size_t i = 0; i < ws.grad_top.size(); ++i) ws.grad_top.v[i] += d_sre.v[i];

  ws.grad_in.resize(blocks_.size());
  nn::Tensor4<T>* g = &ws.grad_top;
  for (int i = int(blocks_.size()) - 1; i >= 0; --i) {
    Block<T>& blk = blocks_[std::size_t(i)];
    if (blk.has_elu) nn::elu_backward_inplace(*g, ws.outs[std::size_t(i)]);
    if (blk.has_bn)
      nn::batchnorm_backward_acc(*g, blk.bn, ws.bn_caches[std::size_t(i)], blk.ggamma, blk.gbeta);
    const nn::Tensor4<T>& x_in =
        i == 0 ? ws.input : (i - 1 == crop_after_block_ ? ws.cropped : ws.outs[std::size_t(i - 1)]);
    nn::Tensor4<T>* gin = i == 0 ? nullptr : &ws.grad_in[std::size_t(i)];
    if (blk.transposed)
      nn::tconv2d_backward_acc(*g, x_in, blk.tconv, blk.stride, blk.pad, gin, blk.gw, blk.gbias);
    else
      nn::conv2d_backward_acc(*g, x_in, blk.conv, blk.stride, blk.pad, gin, blk.gw, blk.gbias);
    if (i == 0) break;
    g = gin;
    if (i - 1 == crop_after_block_) {
      uncrop_rows_into(*g, arch_.spatial_heights.back(), arch_.crop_low, ws.grad_uncrop);
      g = &ws.grad_uncrop;
    }
  }
}

template <typename T>
double DstDae<T>::weight_decay_value(double l1, double l2) const {
  double acc = 0.0;
  for (const Block<T>& blk : blocks_) {
    for (const T w : blk.weights()) {
      const double v = double(w);
      acc += l1 * std::abs(v) + l2 * v * v;
    }
  }
  return acc;
}

template <typename T>
void DstDae<T>::add_weight_decay_grads(double l1, double l2) {
  for (Block<T>& blk : blocks_) {
    const auto& w = blk.weights();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double v = double(w[j]);
      blk.gw[j] += T(l1 * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) + 2.0 * l2 * v);
    }
  }
}

template <typename T>
std::vector<ParamView<T>> DstDae<T>::param_views() {
  std::vector<ParamView<T>> views;
  for (Block<T>& blk : blocks_) {
    views.push_back({blk.name + "/kernel", &blk.weights(), &blk.gw, &blk.sw, true});
    views.push_back({blk.name + "/bias", &blk.bias(), &blk.gbias, &blk.sbias, false});
    if (blk.has_bn) {
      views.push_back({blk.name + "/bn_gamma", &blk.bn.gamma, &blk.ggamma, &blk.sgamma, false});
      views.push_back({blk.name + "/bn_beta", &blk.bn.beta, &blk.gbeta, &blk.sbeta, false});
    }
  }
  return views;
}

template <typename T>
void DstDae<T>::adam_update(double lr_t, const nn::AdamConfig& cfg) {
  ++step_;
  for (auto& view : param_views()) {
    if (view.slot->m.size() != view.value->size()) view.slot->init(view.value->size());
    nn::adam_step(*view.value, *view.grad, *view.slot, step_, lr_t, cfg);
  }
}

template <typename T>
Eigen::MatrixXd DstDae<T>::estimate(const Eigen::MatrixXd& x) const {
  if (x.rows() != arch_.nc || x.cols() != arch_.t)
    raise(ErrorCode::ShapeError, "expected recording of shape (" + std::to_string(arch_.nc) + ", " +
                                     std::to_string(arch_.t) + "), got (" + std::to_string(x.rows()) +
                                     ", " + std::to_string(x.cols()) + ")");
  double scale = 1.0;
  if (normalize_) {
    const double norm = x.norm();
    if (norm > 0.0) scale = std::sqrt(double(arch_.nc) * double(arch_.t)) / norm;
  }

  nn::Tensor4<T> in(1, arch_.nc, arch_.t, 1);
  for (int r = 0; r < arch_.nc; ++r)
    for (int c = 0; c < arch_.t; ++c) in.at(0, r, c, 0) = T(x(r, c) * scale);

  // Inference touches no network state; BN uses running statistics.
  auto* self = const_cast<DstDae<T>*>(this);
  nn::Tensor4<T> cur = in;
  for (std::size_t i = 0; i < self->blocks_.size(); ++i) {
    Block<T>& blk = self->blocks_[i];
    nn::Tensor4<T> z = blk.transposed ? nn::tconv2d_forward(cur, blk.tconv, blk.stride, blk.pad)
                                      : nn::conv2d_forward(cur, blk.conv, blk.stride, blk.pad);
    if (blk.has_bn) z = nn::batchnorm_forward(z, blk.bn, false);
    if (blk.has_elu) z = nn::elu_forward(z);
    if (int(i) == crop_after_block_) z = crop_rows(z, arch_.crop_low, arch_.crop_high);
    cur = std::move(z);
  }

  Eigen::MatrixXd s(arch_.ns, arch_.t);
  for (int r = 0; r < arch_.ns; ++r)
    for (int c = 0; c < arch_.t; ++c) s(r, c) = double(cur.at(0, r, c, 0)) / scale;
  return s;
}

template <typename T>
Eigen::MatrixXd DstDae<T>::denoise_scalp(const Eigen::MatrixXd& x_n) const {
  return lead_.template cast<double>() * estimate(x_n);
}

// ---------------------------------------------------------------------------
// Checkpoint format "ESIW": magic, u32 version=1, u32 tensor count, then per
// tensor u32 name length, name bytes, u32 rank, u32 dims[rank], float32
// payload. Tensors appear in a fixed order so identical networks serialize
// byte-identically.
// ---------------------------------------------------------------------------

namespace {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

void append_vec(std::vector<NamedTensor>& out, const std::string& name,
                std::vector<std::uint32_t> dims, const std::vector<float>& v) {
  out.push_back({name, std::move(dims), v});
}

template <typename T>
std::vector<float> to_f32(const std::vector<T>& v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = float(v[i]);
  return f;
}

template <typename T>
void from_f32(const std::vector<float>& f, std::vector<T>& v) {
  v.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = T(f[i]);
}

}  // namespace

template <typename T>
void DstDae<T>::save(const std::string& path) const {
  std::vector<NamedTensor> tensors;
  append_vec(tensors, "meta/arch", {7},
             {float(arch_.nc), float(arch_.ns), float(arch_.t), float(arch_.f1), float(arch_.f2),
              float(arch_.kt), float(arch_.ks)});
  append_vec(tensors, "meta/state", {5},
             {float(step_), float(epochs_done_), float(train_snr_db_), normalize_ ? 1.f : 0.f,
              float(blocks_.size())});

  std::vector<float> lf(static_cast<std::size_t>(lead_.rows()) * static_cast<std::size_t>(lead_.cols()));
  for (Eigen::Index r = 0; r < lead_.rows(); ++r)
    for (Eigen::Index c = 0; c < lead_.cols(); ++c)
      lf[std::size_t(r) * std::size_t(lead_.cols()) + std::size_t(c)] = float(lead_(r, c));
  append_vec(tensors, "fixed/L", {std::uint32_t(lead_.rows()), std::uint32_t(lead_.cols())}, lf);

  for (const Block<T>& blk : blocks_) {
    const int kh = blk.transposed ? blk.tconv.kh : blk.conv.kh;
    const int kw = blk.transposed ? blk.tconv.kw : blk.conv.kw;
    const int ci = blk.transposed ? blk.tconv.ci : blk.conv.ci;
    const int co = blk.transposed ? blk.tconv.co : blk.conv.co;
    append_vec(tensors, blk.name + "/kernel",
               {std::uint32_t(kh), std::uint32_t(kw), std::uint32_t(ci), std::uint32_t(co)},
               to_f32(blk.weights()));
    append_vec(tensors, blk.name + "/bias", {std::uint32_t(co)}, to_f32(blk.bias()));
    if (blk.has_bn) {
      append_vec(tensors, blk.name + "/bn_gamma", {std::uint32_t(co)}, to_f32(blk.bn.gamma));
      append_vec(tensors, blk.name + "/bn_beta", {std::uint32_t(co)}, to_f32(blk.bn.beta));
      append_vec(tensors, blk.name + "/bn_mean", {std::uint32_t(co)}, to_f32(blk.bn.running_mean));
      append_vec(tensors, blk.name + "/bn_var", {std::uint32_t(co)}, to_f32(blk.bn.running_var));
    }
  }
  // Optimizer moments, in param order (empty slots are written empty).
  for (const Block<T>& blk : blocks_) {
    auto dump = [&](const std::string& suffix, const nn::AdamSlot<T>& slot) {
      append_vec(tensors, blk.name + "/adam_m_" + suffix, {std::uint32_t(slot.m.size())},
                 to_f32(slot.m));
      append_vec(tensors, blk.name + "/adam_v_" + suffix, {std::uint32_t(slot.v.size())},
                 to_f32(slot.v));
    };
    dump("kernel", blk.sw);
    dump("bias", blk.sbias);
    if (blk.has_bn) {
      dump("bn_gamma", blk.sgamma);
      dump("bn_beta", blk.sbeta);
    }
  }

  binio::Writer out(path);
  out.magic("ESIW");
  out.u32(1);
  out.u32(std::uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    out.u32(std::uint32_t(t.name.size()));
    out.bytes(t.name.data(), t.name.size());
    out.u32(std::uint32_t(t.dims.size()));
    std::size_t n = 1;
    for (std::uint32_t d : t.dims) {
      out.u32(d);
      n *= d;
    }
    if (n != t.data.size() && !(t.data.empty() && n == 0))
      raise(ErrorCode::NumericalFailure, "tensor dims disagree with payload: " + t.name);
    out.f32(t.data.data(), t.data.size());
  }
  out.finish();
}

template <typename T>
DstDae<T> DstDae<T>::load(const std::string& path) {
  binio::Reader in(path);
  in.expect_magic("ESIW");
  const std::uint32_t version = in.u32();
  if (version != 1)
    raise(ErrorCode::FormatError, "unsupported ESIW version " + std::to_string(version));
  std::uint32_t remaining = in.u32();

  auto read_tensor = [&](const std::string& expected) -> NamedTensor {
    if (remaining == 0) raise(ErrorCode::FormatError, "checkpoint ended before " + expected);
    --remaining;
    NamedTensor t;
    const std::uint32_t len = in.u32();
    if (len == 0 || len > 4096) raise(ErrorCode::FormatError, "implausible tensor name length");
    t.name = in.str(len);
    if (t.name != expected)
      raise(ErrorCode::FormatError, "expected tensor " + expected + ", found " + t.name);
    const std::uint32_t rank = in.u32();
    if (rank > 8) raise(ErrorCode::FormatError, "implausible tensor rank");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = in.u32();
      t.dims.push_back(d);
      n *= d;
    }
    if (n > (1u << 28)) raise(ErrorCode::FormatError, "implausible tensor size");
    t.data.resize(n);
    in.f32(t.data.data(), n);
    return t;
  };

  const NamedTensor arch_t = read_tensor("meta/arch");
  if (arch_t.data.size() != 7) raise(ErrorCode::FormatError, "bad meta/arch payload");
  const NamedTensor state_t = read_tensor("meta/state");
  if (state_t.data.size() != 5) raise(ErrorCode::FormatError, "bad meta/state payload");

  DstDae<T> net;
  {
    Rng rng(0);  // skeleton init; weights are overwritten below
    const int nc = int(arch_t.data[0]), ns = int(arch_t.data[1]), t = int(arch_t.data[2]);
    const int f1 = int(arch_t.data[3]), f2 = int(arch_t.data[4]);
    const int kt = int(arch_t.data[5]), ks = int(arch_t.data[6]);

    NamedTensor lt = read_tensor("fixed/L");
    if (lt.dims.size() != 2 || int(lt.dims[0]) != nc || int(lt.dims[1]) != ns)
      raise(ErrorCode::FormatError, "fixed/L dims disagree with meta/arch");
    Eigen::MatrixXd lm(nc, ns);
    for (int r = 0; r < nc; ++r)
      for (int c = 0; c < ns; ++c) lm(r, c) = double(lt.data[std::size_t(r) * std::size_t(ns) + c]);
    const forward::LeadField lf = forward::LeadField::from_matrix(std::move(lm));

    net = DstDae<T>::build(nc, ns, t, f1, f2, kt, ks, lf, rng);
    // Preserve the stored matrix bit-exactly (float32 payload).
    for (Eigen::Index r = 0; r < net.lead_.rows(); ++r)
      for (Eigen::Index c = 0; c < net.lead_.cols(); ++c)
        net.lead_(r, c) = T(lt.data[std::size_t(r) * std::size_t(ns) + std::size_t(c)]);
  }

  net.step_ = long(state_t.data[0]);
  net.epochs_done_ = int(state_t.data[1]);
  net.train_snr_db_ = double(state_t.data[2]);
  net.normalize_ = state_t.data[3] != 0.f;

  for (Block<T>& blk : net.blocks_) {
    NamedTensor kt_ = read_tensor(blk.name + "/kernel");
    if (kt_.data.size() != blk.weights().size())
      raise(ErrorCode::FormatError, "kernel size mismatch in " + blk.name);
    from_f32(kt_.data, blk.weights());
    NamedTensor bt = read_tensor(blk.name + "/bias");
    if (bt.data.size() != blk.bias().size())
      raise(ErrorCode::FormatError, "bias size mismatch in " + blk.name);
    from_f32(bt.data, blk.bias());
    if (blk.has_bn) {
      from_f32(read_tensor(blk.name + "/bn_gamma").data, blk.bn.gamma);
      from_f32(read_tensor(blk.name + "/bn_beta").data, blk.bn.beta);
      from_f32(read_tensor(blk.name + "/bn_mean").data, blk.bn.running_mean);
      from_f32(read_tensor(blk.name + "/bn_var").data, blk.bn.running_var);
      if (int(blk.bn.gamma.size()) != blk.out_channels())
        raise(ErrorCode::FormatError, "BN size mismatch in " + blk.name);
    }
  }
  for (Block<T>& blk : net.blocks_) {
    auto fill = [&](const std::string& suffix, nn::AdamSlot<T>& slot) {
      from_f32(read_tensor(blk.name + "/adam_m_" + suffix).data, slot.m);
      from_f32(read_tensor(blk.name + "/adam_v_" + suffix).data, slot.v);
    };
    fill("kernel", blk.sw);
    fill("bias", blk.sbias);
    if (blk.has_bn) {
      fill("bn_gamma", blk.sgamma);
      fill("bn_beta", blk.sbeta);
    }
  }
  if (remaining != 0) raise(ErrorCode::FormatError, "unexpected trailing tensors in " + path);
  return net;
}

template class DstDae<float>;
template class DstDae<double>;

// ---------------------------------------------------------------------------
// Loss, schedule, training loop
// ---------------------------------------------------------------------------

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) raise(ErrorCode::InvalidArgument, "epoch out of range");
  const double lo = cfg.lr_min, hi = cfg.lr_max;
  if (cfg.warmup_epochs > 0 && epoch <= cfg.warmup_epochs)
    return lo + (hi - lo) * double(epoch) / double(cfg.warmup_epochs);
  const int cooldown_start = cfg.epochs - 1 - cfg.cooldown_epochs;
  if (cfg.cooldown_epochs > 0 && epoch >= cooldown_start)
    return lo + (hi - lo) * double(cfg.epochs - 1 - epoch) / double(cfg.cooldown_epochs);
  return hi;
}

template <typename T>
LossValues data_loss(const nn::Tensor4<T>& xg, const nn::Tensor4<T>& xre, const nn::Tensor4<T>& sg,
                     const nn::Tensor4<T>& sre, double lambda1, double lambda2, double delta,
                     double weight_decay) {
  if (!xg.same_shape(xre) || !sg.same_shape(sre) || xg.b != sg.b)
    raise(ErrorCode::ShapeError, "loss operands disagree in shape");
  const double inv_b = 1.0 / double(xg.b);

  double sq_x = 0.0;
  for (std::size_t i = 0; i < xg.size(); ++i) {
    const double d = double(xg.v[i]) - double(xre.v[i]);
    sq_x += d * d;
  }
  double sq_s = 0.0, abs_s = 0.0;
  for (std::size_t i = 0; i < sg.size(); ++i) {
    const double d = double(sg.v[i]) - double(sre.v[i]);
    sq_s += d * d;
    abs_s += std::abs(d);
  }

  LossValues out;
  out.loss_x = sq_x * inv_b;
  out.loss_s = (sq_s + delta * abs_s) * inv_b;
  out.total = lambda1 * out.loss_x + lambda2 * out.loss_s + weight_decay;
  return out;
}

template <typename T>
void data_loss_grads(const nn::Tensor4<T>& xg, const nn::Tensor4<T>& xre, const nn::Tensor4<T>& sg,
                     const nn::Tensor4<T>& sre, double lambda1, double lambda2, double delta,
                     nn::Tensor4<T>& d_xre, nn::Tensor4<T>& d_sre) {
  if (!xg.same_shape(xre) || !sg.same_shape(sre))
    raise(ErrorCode::ShapeError, "loss operands disagree in shape");
  const double inv_b = 1.0 / double(xg.b);
  d_xre = nn::Tensor4<T>(xre.b, xre.h, xre.w, xre.c);
  d_sre = nn::Tensor4<T>(sre.b, sre.h, sre.w, sre.c);
  const double cx = lambda1 * 2.0 * inv_b;
  for (std::size_t i = 0; i < xre.size(); ++i)
    d_xre.v[i] = T(cx * (double(xre.v[i]) - double(xg.v[i])));
  const double cs = lambda2 * inv_b;
  for (std::size_t i = 0; i < sre.size(); ++i) {
    const double r = double(sre.v[i]) - double(sg.v[i]);
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    d_sre.v[i] = T(cs * (2.0 * r + delta * sign));
  }
}

template LossValues data_loss<float>(const nn::Tensor4<float>&, const nn::Tensor4<float>&,
                                     const nn::Tensor4<float>&, const nn::Tensor4<float>&, double,
                                     double, double, double);
template LossValues data_loss<double>(const nn::Tensor4<double>&, const nn::Tensor4<double>&,
                                      const nn::Tensor4<double>&, const nn::Tensor4<double>&,
                                      double, double, double, double);
template void data_loss_grads<float>(const nn::Tensor4<float>&, const nn::Tensor4<float>&,
                                     const nn::Tensor4<float>&, const nn::Tensor4<float>&, double,
                                     double, double, nn::Tensor4<float>&, nn::Tensor4<float>&);
template void data_loss_grads<double>(const nn::Tensor4<double>&, const nn::Tensor4<double>&,
                                      const nn::Tensor4<double>&, const nn::Tensor4<double>&,
                                      double, double, double, nn::Tensor4<double>&,
                                      nn::Tensor4<double>&);

namespace {

// Per-sample noise block: white Gaussian rescaled to the exact SNR, drawn
// and accumulated in double.
void corrupt_sample(const float* clean, float* noisy, std::size_t n, double snr_db, Rng& rng) {
  double power = 0.0;
  for (std::size_t i = 0; i < n; ++i) power += double(clean[i]) * double(clean[i]);
  std::vector<double> eps(n);
  double eps_power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    eps[i] = rng.normal();
    eps_power += eps[i] * eps[i];
  }
  if (power == 0.0 || eps_power == 0.0) {
    for (std::size_t i = 0; i < n; ++i) noisy[i] = clean[i];
    return;
  }
  const double scale = std::sqrt(power * std::pow(10.0, -snr_db / 10.0) / eps_power);
  for (std::size_t i = 0; i < n; ++i) noisy[i] = float(double(clean[i]) + scale * eps[i]);
}

void fill_batch(const synth::Dataset& data, const std::vector<int>& ids, std::size_t lo,
                std::size_t hi, double snr_db, std::uint64_t noise_seed, int epoch, bool corrupt,
                nn::Tensor4<float>& xn, nn::Tensor4<float>& xg, nn::Tensor4<float>& sg) {
  const int b = int(hi - lo);
  nn::ensure_shape(xn, b, data.channels, data.samples, 1);
  nn::ensure_shape(xg, b, data.channels, data.samples, 1);
  nn::ensure_shape(sg, b, data.sources, data.samples, 1);
  const std::size_t x_len = xg.sample_size();
  const std::size_t s_len = sg.sample_size();
  for (int i = 0; i < b; ++i) {
    const int id = ids[lo + std::size_t(i)];
    std::memcpy(xg.sample(i), data.x_at(id), x_len * sizeof(float));
    std::memcpy(sg.sample(i), data.s_at(id), s_len * sizeof(float));
    if (corrupt) {
      Rng rng = Rng::derive(noise_seed, {std::uint64_t(epoch), std::uint64_t(id)});
      corrupt_sample(xg.sample(i), xn.sample(i), x_len, snr_db, rng);
    } else {
      std::memcpy(xn.sample(i), xg.sample(i), x_len * sizeof(float));
    }
  }
}

}  // namespace

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history,
                       int train_samples) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot open history file: " + path);
  out << "epoch,lr,train_loss,val_loss,loss_x,loss_s,epoch_time_s,train_samples\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.6g,%d\n", r.epoch, r.lr,
                  r.train_loss, r.val_loss, r.loss_x, r.loss_s, r.seconds, train_samples);
    out << line;
  }
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

TrainResult train(DstDae<float>& net, const synth::Dataset& data, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const std::string& history_path) {
  if (data.count < 1) raise(ErrorCode::InvalidArgument, "empty dataset");
  if (data.channels != net.arch().nc || data.sources != net.arch().ns ||
      data.samples != net.arch().t)
    raise(ErrorCode::ShapeError, "dataset dims do not match the network");
  if (cfg.batch_size < 2) raise(ErrorCode::InvalidArgument, "batch_size must be >= 2");
  if (cfg.epochs < 0) raise(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (cfg.epochs > 0 && cfg.epochs <= cfg.warmup_epochs + cfg.cooldown_epochs)
    raise(ErrorCode::InvalidArgument, "epochs must exceed warmup + cooldown");
  if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0)
    raise(ErrorCode::InvalidArgument, "validation_fraction must lie in [0, 1)");

  net.set_train_snr_db(cfg.snr_db);

  // Seeded shuffle, then split off the validation tail.
  std::vector<int> perm(static_cast<std::size_t>(data.count));
  std::iota(perm.begin(), perm.end(), 0);
  {
    Rng rng = Rng::derive(cfg.master_seed, {0xA11});
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[std::size_t(rng.uniform_index(i))]);
  }
  int n_val = int(std::lround(cfg.validation_fraction * data.count));
  n_val = std::min(n_val, data.count - 1);
  const int n_train = data.count - n_val;
  std::vector<int> train_ids(perm.begin(), perm.begin() + n_train);
  const std::vector<int> val_ids(perm.begin() + n_train, perm.end());

  TrainResult result;
  result.train_samples = n_train;
  result.best_val = std::numeric_limits<double>::infinity();
  DstDae<float> best = net;

  const std::uint64_t noise_seed = Rng::derive(cfg.master_seed, {0xB22}).next();
  const std::uint64_t val_noise_seed = Rng::derive(cfg.master_seed, {0xC33}).next();
  nn::AdamConfig adam;
  Workspace<float> ws;
  nn::Tensor4<float> xn, xg, sg, d_xre, d_sre;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, cfg);

    {
      Rng rng = Rng::derive(cfg.master_seed, {0xD44, std::uint64_t(epoch)});
      for (std::size_t i = train_ids.size(); i > 1; --i)
        std::swap(train_ids[i - 1], train_ids[std::size_t(rng.uniform_index(i))]);
    }

    double loss_acc = 0.0, lx_acc = 0.0, ls_acc = 0.0;
    long seen = 0;
    for (std::size_t lo = 0; lo < train_ids.size(); lo += std::size_t(cfg.batch_size)) {
      const std::size_t hi = std::min(train_ids.size(), lo + std::size_t(cfg.batch_size));
      if (hi - lo < 2) break;  // BN needs batch >= 2; drop a size-1 tail
      fill_batch(data, train_ids, lo, hi, cfg.snr_db, noise_seed, epoch, true, xn, xg, sg);
      net.forward(xn, true, ws);
      const double wd = net.weight_decay_value(cfg.l1, cfg.l2);
      const LossValues loss =
          data_loss(xg, ws.x_re, sg, ws.s_re(), cfg.lambda1, cfg.lambda2, cfg.delta, wd);
      if (!std::isfinite(loss.total))
        raise(ErrorCode::DivergenceError,
              "non-finite training loss at epoch " + std::to_string(net.epochs_done()));
      data_loss_grads(xg, ws.x_re, sg, ws.s_re(), cfg.lambda1, cfg.lambda2, cfg.delta, d_xre, d_sre);
      net.zero_grads();
      net.backward(ws, d_sre, d_xre);
      net.add_weight_decay_grads(cfg.l1, cfg.l2);
      net.adam_update(lr, adam);

      const long b = long(hi - lo);
      loss_acc += loss.total * double(b);
      lx_acc += loss.loss_x * double(b);
      ls_acc += loss.loss_s * double(b);
      seen += b;
    }

    double val_loss = 0.0;
    if (!val_ids.empty()) {
      double acc = 0.0;
      long vseen = 0;
      for (std::size_t lo = 0; lo < val_ids.size(); lo += std::size_t(cfg.batch_size)) {
        const std::size_t hi = std::min(val_ids.size(), lo + std::size_t(cfg.batch_size));
        fill_batch(data, val_ids, lo, hi, cfg.snr_db, val_noise_seed, epoch, true, xn, xg, sg);
        net.forward(xn, false, ws);
        const LossValues loss =
            data_loss(xg, ws.x_re, sg, ws.s_re(), cfg.lambda1, cfg.lambda2, cfg.delta, 0.0);
        acc += loss.total * double(hi - lo);
        vseen += long(hi - lo);
      }
      val_loss = vseen > 0 ? acc / double(vseen) : 0.0;
    }

    net.set_epochs_done(net.epochs_done() + 1);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord rec;
    rec.epoch = net.epochs_done();
    rec.lr = lr;
    rec.train_loss = seen > 0 ? loss_acc / double(seen) : 0.0;
    rec.loss_x = seen > 0 ? lx_acc / double(seen) : 0.0;
    rec.loss_s = seen > 0 ? ls_acc / double(seen) : 0.0;
    rec.val_loss = val_loss;
    rec.seconds = seconds;
    result.history.push_back(rec);

    const double score = val_ids.empty() ? rec.train_loss : val_loss;
    if (score < result.best_val) {
      result.best_val = score;
      result.best_epoch = rec.epoch;
      best = net;
    }
  }

  if (cfg.epochs > 0 && result.best_epoch >= 0) {
    // Keep the best-validation weights but the full epoch count, so resumed
    // runs continue the counter past this whole run.
    const int completed = net.epochs_done();
    net = best;
    net.set_epochs_done(completed);
  }
  if (!checkpoint_path.empty()) net.save(checkpoint_path);
  if (!history_path.empty()) write_history_csv(history_path, result.history, n_train);
  return result;
}

}  // namespace esi::dae
