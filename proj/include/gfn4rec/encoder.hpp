#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/data.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/nn.hpp"

namespace gfn4rec {

using ag::Matrix;
using ag::Tensor;

struct EncoderConfig {
  int embed_dim{32};
  int history_len{50};
  int n_heads{2};
  int n_layers{1};
  int state_dim{32};

  void validate() const {
    if (embed_dim <= 0 || history_len <= 0 || n_heads <= 0 || n_layers <= 0 || state_dim <= 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (embed_dim % n_heads != 0) throw ConfigError("embed_dim must be divisible by n_attention_heads");
  }
};

/// Vocabulary sizes the encoders are built against.
struct FeatureSpace {
  ItemCatalog items;
  int profile_vocab{1};
  int profile_real{0};
  int n_behaviors{1};
};

/// Item kernel: sum of id and feature embeddings followed by a linear map.
/// The padding id always encodes to the zero vector.
class ItemKernel {
 public:
  ItemKernel(nn::ParameterStore& store, const std::string& name, const ItemCatalog& catalog, int dim, Rng& rng)
      : catalog_(std::make_shared<const ItemCatalog>(catalog)), dim_(dim) {
    id_table_ = store.add(name + ".id_embedding", nn::random_normal(catalog.n_items + 1, dim, 0.5, rng));
    if (catalog.feature_vocab > 0) {
      feature_table_ = store.add(name + ".feature_embedding", nn::random_normal(catalog.feature_vocab, dim, 0.5, rng));
    }
    proj_ = nn::Linear(store, name + ".proj", dim, dim, rng, /*bias=*/false);
  }

  int dim() const { return dim_; }
  int n_items() const { return catalog_->n_items; }

  Tensor encode(const std::vector<ItemId>& ids) const {
    std::vector<ag::Index> rows(ids.size());
    Eigen::VectorXd keep(static_cast<ag::Index>(ids.size()));
    std::vector<ag::RowTerm> feature_terms;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const ItemId id = ids[r];
      if (id < 0 || id > catalog_->n_items) throw PreconditionError("unknown item id " + std::to_string(id));
      rows[r] = id;
      keep(static_cast<ag::Index>(r)) = id == kPaddingItem ? 0.0 : 1.0;
      if (feature_table_.defined()) {
        for (auto f : catalog_->features[static_cast<std::size_t>(id)]) {
          feature_terms.push_back({static_cast<ag::Index>(r), f, 1.0});
        }
      }
    }
    Tensor raw = ag::gather_rows(id_table_, std::move(rows));
    if (feature_table_.defined() && !feature_terms.empty()) {
      raw = ag::add(raw, ag::combine_rows(feature_table_, raw.rows(), std::move(feature_terms)));
    }
    return ag::scale_rows(proj_(raw), keep);
  }

  /// Encodings of items 1..n_items; row i-1 belongs to item i.
  Tensor encode_all() const {
    std::vector<ItemId> ids(static_cast<std::size_t>(catalog_->n_items));
    for (int i = 0; i < catalog_->n_items; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
    return encode(ids);
  }

  std::vector<double> encode_item(ItemId id) const {
    ag::NoGradGuard guard;
    const Tensor e = encode({id});
    return {e.value().data(), e.value().data() + e.cols()};
  }

 private:
  std::shared_ptr<const ItemCatalog> catalog_;
  int dim_;
  Tensor id_table_;
  Tensor feature_table_;
  nn::Linear proj_;
};

/// Sum of per-behavior embeddings gated by the 0/1 response; no transformation.
class ResponseKernel {
 public:
  ResponseKernel(nn::ParameterStore& store, const std::string& name, int n_behaviors, int dim, Rng& rng)
      : n_behaviors_(n_behaviors) {
    table_ = store.add(name + ".embedding", nn::random_normal(n_behaviors, dim, 0.5, rng));
  }

  /// responses: rows x |B| matrix of 0/1 values.
  Tensor encode(const Matrix& responses) const {
    if (responses.cols() != n_behaviors_) throw ShapeError("response width differs from number of behaviors");
    return ag::matmul(Tensor::constant(responses), table_);
  }

  std::vector<double> encode_response(const ResponseVector& response) const {
    ag::NoGradGuard guard;
    Matrix r(1, n_behaviors_);
    if (static_cast<int>(response.size()) != n_behaviors_) throw ShapeError("response width differs from |B|");
    for (int b = 0; b < n_behaviors_; ++b) r(0, b) = response[static_cast<std::size_t>(b)];
    const Tensor e = encode(r);
    return {e.value().data(), e.value().data() + e.cols()};
  }

 private:
  int n_behaviors_;
  Tensor table_;
};

/// Maps a user request (profile + recent history) to a user state vector.
///
/// History slots are right-aligned: the most recent interaction sits at
/// position L-1 and unused leading slots hold the padding item. Each slot's
/// token is item encoding + response encoding + learnable positional
/// embedding; a pre-norm transformer runs over the tokens with padding keys
/// masked, and the outputs at real positions are mean-pooled (zero vector
/// for an empty history). The pooled history and a profile embedding are
/// concatenated and mapped to the state through one tanh layer.
class RequestEncoder {
 public:
  RequestEncoder(nn::ParameterStore& store, const std::string& name, const EncoderConfig& cfg,
                 const FeatureSpace& space, const ItemKernel& items, Rng& rng)
      : cfg_(cfg),
        items_(&items),
        responses_(store, name + ".response_kernel", space.n_behaviors, cfg.embed_dim, rng),
        n_behaviors_(space.n_behaviors) {
    cfg_.validate();
    if (items.dim() != cfg.embed_dim) throw ConfigError("item kernel dimension differs from embed_dim");
    const int d = cfg.embed_dim;
    positions_ = store.add(name + ".positional", nn::random_normal(cfg.history_len, d, 0.1, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      Layer layer;
      layer.ln_attn = nn::LayerNorm(store, p + ".ln_attn", d);
      layer.wq = nn::Linear(store, p + ".attn.wq", d, d, rng, false);
      layer.wk = nn::Linear(store, p + ".attn.wk", d, d, rng, false);
      layer.wv = nn::Linear(store, p + ".attn.wv", d, d, rng, false);
      layer.wo = nn::Linear(store, p + ".attn.wo", d, d, rng);
      layer.ln_ffn = nn::LayerNorm(store, p + ".ln_ffn", d);
      layer.ff1 = nn::Linear(store, p + ".ffn.in", d, 2 * d, rng);
      layer.ff2 = nn::Linear(store, p + ".ffn.out", 2 * d, d, rng);
      layers_.push_back(std::move(layer));
    }
    profile_table_ = store.add(name + ".profile_embedding", nn::random_normal(space.profile_vocab, d, 0.5, rng));
    if (space.profile_real > 0) {
      profile_real_ = nn::Linear(store, name + ".profile_real", space.profile_real, d, rng, false);
    }
    n_profile_real_ = space.profile_real;
    profile_dnn_ = nn::Linear(store, name + ".profile_dnn", d, d, rng);
    combine_ = nn::Linear(store, name + ".combine", 2 * d, cfg.state_dim, rng);
  }

  const EncoderConfig& config() const { return cfg_; }

  Tensor encode(std::span<const UserRequest* const> requests) const {
    const auto n = static_cast<ag::Index>(requests.size());
    const ag::Index len = cfg_.history_len;
    const int nb = n_behaviors_;
    std::vector<ItemId> hist_items(static_cast<std::size_t>(n * len), kPaddingItem);
    Matrix resp = Matrix::Zero(n * len, nb);
    ag::BoolMatrix valid = ag::BoolMatrix::Constant(n, len, false);
    std::vector<ag::Index> pos_ids(static_cast<std::size_t>(n * len));
    std::vector<ag::RowTerm> pool_terms;
    std::vector<ag::RowTerm> profile_terms;
    Matrix profile_real = Matrix::Zero(n, std::max(n_profile_real_, 1));

    for (ag::Index s = 0; s < n; ++s) {
      const UserRequest& req = *requests[static_cast<std::size_t>(s)];
      const auto& hist = req.history;
      const ag::Index used = std::min<ag::Index>(len, static_cast<ag::Index>(hist.size()));
      const std::size_t first = hist.size() - static_cast<std::size_t>(used);
      for (ag::Index j = 0; j < len; ++j) pos_ids[static_cast<std::size_t>(s * len + j)] = j;
      for (ag::Index j = 0; j < used; ++j) {
        const auto& e = hist[first + static_cast<std::size_t>(j)];
        const ag::Index slot = len - used + j;
        const ag::Index row = s * len + slot;
        if (static_cast<int>(e.response.size()) != nb) throw ShapeError("history response width differs from |B|");
        hist_items[static_cast<std::size_t>(row)] = e.item;
        for (int b = 0; b < nb; ++b) resp(row, b) = e.response[static_cast<std::size_t>(b)];
        valid(s, slot) = e.item != kPaddingItem;
      }
      const auto n_valid = valid.row(s).count();
      for (ag::Index j = 0; j < len; ++j) {
        if (valid(s, j)) pool_terms.push_back({s, s * len + j, 1.0 / static_cast<double>(n_valid)});
      }
      for (auto tok : req.profile.categorical) {
        if (tok < 0 || tok >= profile_table_.rows()) throw PreconditionError("profile token out of range");
        profile_terms.push_back({s, tok, 1.0});
      }
      if (n_profile_real_ > 0) {
        if (static_cast<int>(req.profile.real.size()) != n_profile_real_) throw ShapeError("profile real width");
        for (int c = 0; c < n_profile_real_; ++c) profile_real(s, c) = req.profile.real[static_cast<std::size_t>(c)];
      }
    }

    Tensor x = ag::add(ag::add(items_->encode(hist_items), responses_.encode(resp)),
                       ag::gather_rows(positions_, std::move(pos_ids)));
    for (const auto& layer : layers_) {
      const Tensor a = layer.ln_attn(x);
      const Tensor att = ag::multi_head_attention(layer.wq(a), layer.wk(a), layer.wv(a), len, cfg_.n_heads, valid);
      x = ag::add(x, layer.wo(att));
      const Tensor b = layer.ln_ffn(x);
      x = ag::add(x, layer.ff2(ag::gelu(layer.ff1(b))));
    }
    const Tensor history = ag::combine_rows(x, n, std::move(pool_terms));

    Tensor profile = ag::combine_rows(profile_table_, n, std::move(profile_terms));
    if (n_profile_real_ > 0) profile = ag::add(profile, profile_real_(Tensor::constant(profile_real)));
    profile = ag::tanh(profile_dnn_(profile));
    return ag::tanh(combine_(ag::concat_cols(profile, history)));
  }

  std::vector<double> encode_request(const UserRequest& request) const {
    ag::NoGradGuard guard;
    const UserRequest* ptr = &request;
    const Tensor s = encode(std::span<const UserRequest* const>(&ptr, 1));
    return {s.value().data(), s.value().data() + s.cols()};
  }

 private:
  struct Layer {
    nn::LayerNorm ln_attn, ln_ffn;
    nn::Linear wq, wk, wv, wo, ff1, ff2;
  };

  EncoderConfig cfg_;
  const ItemKernel* items_;
  ResponseKernel responses_;
  int n_behaviors_{0};
  Tensor positions_;
  std::vector<Layer> layers_;
  Tensor profile_table_;
  nn::Linear profile_real_;
  int n_profile_real_{0};
  nn::Linear profile_dnn_;
  nn::Linear combine_;
};

}  // namespace gfn4rec
