#include "margo/model.hpp"

#include <cstring>
#include <fstream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace margo::model {

uint64_t ModelParams::fingerprint() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& mp : modalities) {
    h = fnv1a64(mp.user_embeddings.a, h);
    h = fnv1a64(mp.item_projection.a, h);
    h = fnv1a64(mp.item_bias, h);
  }
  h = fnv1a64(weight_logits.a, h);
  return h;
}

ModelParams init_params(int user_count, int item_count, int modality_count, int embed_dim,
                        const std::vector<int>& modality_dims, uint64_t seed) {
  if (user_count < 1 || item_count < 1 || modality_count < 1 || embed_dim < 1)
    throw UsageError("init_params: dimensions must be positive");
  if (static_cast<int>(modality_dims.size()) != modality_count)
    throw UsageError("init_params: modality_dims size mismatch");

  ModelParams p;
  p.user_count = user_count;
  p.item_count = item_count;
  p.modality_count = modality_count;
  p.embed_dim = embed_dim;
  p.modality_dims = modality_dims;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (int m = 0; m < modality_count; ++m) {
    ModalityParams mp;
    mp.user_embeddings = Mat(user_count, embed_dim);
    for (auto& v : mp.user_embeddings.a) v = normal(rng);
    mp.item_projection = Mat(embed_dim, modality_dims[m]);
    for (auto& v : mp.item_projection.a) v = normal(rng);
    mp.item_bias.assign(embed_dim, 0.0);
    p.modalities.push_back(std::move(mp));
  }
  p.weight_logits = Mat(item_count, modality_count);
  for (auto& v : p.weight_logits.a) v = normal(rng);
  return p;
}

namespace {

inline void encode_item_row(const ModalityParams& mp, const double* f, int d, int dm,
                            double* out) {
  for (int r = 0; r < d; ++r) {
    const double* proj = mp.item_projection.row(r);
    double s = mp.item_bias[r];
    for (int c = 0; c < dm; ++c) s += proj[c] * f[c];
    out[r] = s;
  }
}

}  // namespace

void encode(const ModelParams& p, int user, int item, int m,
            const std::vector<data::ModalityFeatureTable>& features, Vec& e_u, Vec& e_i) {
  if (user < 0 || user >= p.user_count) throw UsageError("encode: user index out of range");
  if (item < 0 || item >= p.item_count) throw UsageError("encode: item index out of range");
  if (m < 0 || m >= p.modality_count) throw UsageError("encode: modality index out of range");

  const auto& mp = p.modalities[m];
  const double* u_row = mp.user_embeddings.row(user);
  e_u.assign(u_row, u_row + p.embed_dim);

  e_i.assign(p.embed_dim, 0.0);
  encode_item_row(mp, features[m].features.row(item), p.embed_dim, p.modality_dims[m],
                  e_i.data());
}

double modality_rating(std::span<const double> e_u, std::span<const double> e_i) {
  return dot(e_u, e_i);
}

Vec modality_weights(const ModelParams& p, int item) {
  if (item < 0 || item >= p.item_count) throw UsageError("modality_weights: item out of range");
  Vec w(p.modality_count);
  stable_softmax({p.weight_logits.row(item), static_cast<size_t>(p.modality_count)}, w);
  return w;
}

double fuse_weighted(std::span<const double> weights, std::span<const double> ratings) {
  return dot(weights, ratings);
}

double fuse_uniform(std::span<const double> ratings) {
  double s = 0.0;
  for (double r : ratings) s += r;
  return s;
}

TripletScores score_triplet(const ModelParams& p,
                            const std::vector<data::ModalityFeatureTable>& features,
                            const data::Triplet& t, Stage stage) {
  TripletScores s;
  s.triplet = t;
  s.stage = stage;
  s.e_u.resize(p.modality_count);
  s.e_pos.resize(p.modality_count);
  s.e_neg.resize(p.modality_count);
  s.pos_rating.resize(p.modality_count);
  s.neg_rating.resize(p.modality_count);
  if (t.user < 0 || t.user >= p.user_count || t.pos_item < 0 || t.pos_item >= p.item_count ||
      t.neg_item < 0 || t.neg_item >= p.item_count)
    throw UsageError("score_triplet: index out of range");
  for (int m = 0; m < p.modality_count; ++m) {
    const auto& mp = p.modalities[m];
    const double* u_row = mp.user_embeddings.row(t.user);
    s.e_u[m].assign(u_row, u_row + p.embed_dim);
    s.e_pos[m].assign(p.embed_dim, 0.0);
    s.e_neg[m].assign(p.embed_dim, 0.0);
    int dm = p.modality_dims[m];
    encode_item_row(mp, features[m].features.row(t.pos_item), p.embed_dim, dm, s.e_pos[m].data());
    encode_item_row(mp, features[m].features.row(t.neg_item), p.embed_dim, dm, s.e_neg[m].data());
    s.pos_rating[m] = modality_rating(s.e_u[m], s.e_pos[m]);
    s.neg_rating[m] = modality_rating(s.e_u[m], s.e_neg[m]);
  }
  if (stage == Stage::I) {
    s.fused_pos = fuse_uniform(s.pos_rating);
    s.fused_neg = fuse_uniform(s.neg_rating);
  } else {
    s.w_pos = modality_weights(p, t.pos_item);
    s.w_neg = modality_weights(p, t.neg_item);
    s.fused_pos = fuse_weighted(s.w_pos, s.pos_rating);
    s.fused_neg = fuse_weighted(s.w_neg, s.neg_rating);
  }
  return s;
}

std::vector<Mat> encode_all_items(const ModelParams& p,
                                  const std::vector<data::ModalityFeatureTable>& features) {
  std::vector<Mat> enc(p.modality_count);
  for (int m = 0; m < p.modality_count; ++m) {
    enc[m] = Mat(p.item_count, p.embed_dim);
    const auto& mp = p.modalities[m];
    int dm = p.modality_dims[m];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < p.item_count; ++i)
      encode_item_row(mp, features[m].features.row(i), p.embed_dim, dm, enc[m].row(i));
  }
  return enc;
}

std::vector<Mat> encode_all_items_serial(const ModelParams& p,
                                         const std::vector<data::ModalityFeatureTable>& features) {
  std::vector<Mat> enc(p.modality_count);
  for (int m = 0; m < p.modality_count; ++m) {
    enc[m] = Mat(p.item_count, p.embed_dim);
    const auto& mp = p.modalities[m];
    int dm = p.modality_dims[m];
    for (int i = 0; i < p.item_count; ++i)
      encode_item_row(mp, features[m].features.row(i), p.embed_dim, dm, enc[m].row(i));
  }
  return enc;
}

Vec score_all_items_cached(const ModelParams& p, const std::vector<Mat>& item_enc, int user,
                           Stage stage) {
  Vec scores(p.item_count, 0.0);
  Vec ratings(p.modality_count);
  for (int i = 0; i < p.item_count; ++i) {
    for (int m = 0; m < p.modality_count; ++m) {
      const double* u_row = p.modalities[m].user_embeddings.row(user);
      const double* i_row = item_enc[m].row(i);
      double s = 0.0;
      for (int r = 0; r < p.embed_dim; ++r) s += u_row[r] * i_row[r];
      ratings[m] = s;
    }
    if (stage == Stage::I) {
      scores[i] = fuse_uniform(ratings);
    } else {
      Vec w = modality_weights(p, i);
      scores[i] = fuse_weighted(w, ratings);
    }
  }
  return scores;
}

Vec score_all_items(const ModelParams& p, const std::vector<data::ModalityFeatureTable>& features,
                    int user, Stage stage) {
  auto enc = encode_all_items(p, features);
  return score_all_items_cached(p, enc, user, stage);
}

namespace {

constexpr char kMagic[4] = {'M', 'R', 'G', 'C'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void write_block(std::ofstream& out, const std::vector<double>& a) {
  out.write(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(double));
}

void read_block(std::ifstream& in, std::vector<double>& a) {
  in.read(reinterpret_cast<char*>(a.data()), a.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(p.user_count));
  write_u32(out, static_cast<uint32_t>(p.item_count));
  write_u32(out, static_cast<uint32_t>(p.modality_count));
  write_u32(out, static_cast<uint32_t>(p.embed_dim));
  for (int d : p.modality_dims) write_u32(out, static_cast<uint32_t>(d));
  for (const auto& mp : p.modalities) {
    write_block(out, mp.user_embeddings.a);
    write_block(out, mp.item_projection.a);
    write_block(out, mp.item_bias);
  }
  write_block(out, p.weight_logits.a);
  if (!out) throw DataError("short write on checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not a checkpoint (bad magic)");
  uint32_t version = read_u32(in);
  if (version != kVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));

  ModelParams p;
  p.user_count = static_cast<int>(read_u32(in));
  p.item_count = static_cast<int>(read_u32(in));
  p.modality_count = static_cast<int>(read_u32(in));
  p.embed_dim = static_cast<int>(read_u32(in));
  if (!in || p.user_count < 1 || p.item_count < 1 || p.modality_count < 1 || p.embed_dim < 1)
    throw DataError(path + ": corrupt checkpoint header");
  for (int m = 0; m < p.modality_count; ++m)
    p.modality_dims.push_back(static_cast<int>(read_u32(in)));
  for (int m = 0; m < p.modality_count; ++m) {
    ModalityParams mp;
    mp.user_embeddings = Mat(p.user_count, p.embed_dim);
    read_block(in, mp.user_embeddings.a);
    mp.item_projection = Mat(p.embed_dim, p.modality_dims[m]);
    read_block(in, mp.item_projection.a);
    mp.item_bias.assign(p.embed_dim, 0.0);
    read_block(in, mp.item_bias);
    p.modalities.push_back(std::move(mp));
  }
  p.weight_logits = Mat(p.item_count, p.modality_count);
  read_block(in, p.weight_logits.a);
  if (!in) throw DataError(path + ": truncated checkpoint");
  return p;
}

}  // namespace margo::model
