#include "radsearch/retrieval/retrieval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <unordered_map>

#include "radsearch/binary_io.hpp"
#include "radsearch/encoders/embedding_file.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/numerics/ops.hpp"

namespace radsearch {

namespace {

constexpr std::size_t kEncodeChunk = 32;

// Runs `encode` over `entries` in chunks and stacks the rows.
template <typename Encode>
Matrix<float> encode_in_chunks(const std::vector<const ImageEntry*>& entries, const PixelLoader& pixels,
                               std::size_t dim, Encode&& encode) {
  Matrix<float> out(entries.size(), dim);
  for (std::size_t start = 0; start < entries.size(); start += kEncodeChunk) {
    const std::size_t end = std::min(entries.size(), start + kEncodeChunk);
    std::vector<ImageTensor> images;
    images.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) images.push_back(to_tensor(pixels(*entries[i])));
    std::vector<const ImageTensor*> ptrs;
    for (const auto& im : images) ptrs.push_back(&im);
    const Matrix<float> rows = encode(ptrs);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      std::copy(rows.row(r).begin(), rows.row(r).end(), out.row(start + r).begin());
    }
  }
  return out;
}

std::vector<double> cosine_to_rows(const Matrix<float>& query, const Matrix<float>& rows) {
  const auto sims = cosine_rows(Matrix<double>::cast(query), Matrix<double>::cast(rows));
  return std::vector<double>(sims.data().begin(), sims.data().end());
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

constexpr const char* kSidecarColumns = "#id\tpatient_id\tstage\tregion\tage\tgender\tethnicity\trbl_percent\tpath";

}  // namespace

void EmbeddingIndex::validate() const {
  if (ids.size() != vectors.rows() || ids.size() != meta.size()) {
    throw FormatError("index has " + std::to_string(ids.size()) + " ids, " + std::to_string(vectors.rows()) +
                      " vectors and " + std::to_string(meta.size()) + " metadata rows");
  }
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) throw FormatError("index: duplicate id " + std::to_string(ids[i]));
    if (meta[i].image_id != ids[i]) {
      throw FormatError("index: metadata row " + std::to_string(i) + " is for id " +
                        std::to_string(meta[i].image_id) + ", vector row for " + std::to_string(ids[i]));
    }
  }
}

const IndexMeta* EmbeddingIndex::find(std::uint64_t image_id) const {
  for (const auto& m : meta)
    if (m.image_id == image_id) return &m;
  return nullptr;
}

std::vector<ScoredImage> top_k(const std::vector<std::uint64_t>& ids, const std::vector<double>& scores,
                               std::size_t k) {
  if (ids.size() != scores.size()) throw DimensionError("top_k: ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<ScoredImage> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids[order[i]], scores[order[i]]});
  return out;
}

EmbeddingIndex build_index(const Model& model, const std::vector<const ImageEntry*>& entries,
                           const PixelLoader& pixels) {
  EmbeddingIndex index;
  index.fingerprint = checkpoint_fingerprint(model);
  index.vectors = encode_in_chunks(entries, pixels, model.config().shared_dim,
                                   [&](const std::vector<const ImageTensor*>& batch) {
                                     return model.embed_images(batch).value();
                                   });
  for (const ImageEntry* e : entries) {
    index.ids.push_back(e->image_id);
    index.meta.push_back({e->image_id, e->record, e->path});
  }
  index.validate();
  return index;
}

std::string index_sidecar_path(const std::string& path) { return path + ".tsv"; }

void save_index(const std::string& path, const EmbeddingIndex& index) {
  index.validate();
  export_embeddings(path, {index.ids, index.vectors});
  std::ostringstream out;
  out << "#fingerprint=" << index.fingerprint << '\n' << kSidecarColumns << '\n';
  for (const auto& m : index.meta) {
    const auto& r = m.record;
    out << m.image_id << '\t' << r.patient_id << '\t' << r.stage << '\t' << region_name(r.region) << '\t' << r.age
        << '\t' << gender_name(r.gender) << '\t' << ethnicity_name(r.ethnicity) << '\t'
        << format_double(r.rbl_percent) << '\t' << m.path << '\n';
  }
  const std::string text = out.str();
  bin::write_file(index_sidecar_path(path), std::vector<std::uint8_t>(text.begin(), text.end()));
}

EmbeddingIndex load_index(const std::string& path) {
  const auto table = read_embeddings(path);
  EmbeddingIndex index;
  index.ids = table.ids;
  index.vectors = table.vectors;

  const std::string sidecar = index_sidecar_path(path);
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot open index metadata " + sidecar);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#fingerprint=", 0) != 0) {
    throw FormatError(sidecar + ": line 1 must be #fingerprint=<hex>");
  }
  index.fingerprint = line.substr(13);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = sidecar + ":" + std::to_string(line_no);
    const auto f = split_tabs(line);
    if (f.size() != 9) throw FormatError(where + ": expected 9 fields, got " + std::to_string(f.size()));
    IndexMeta m;
    m.image_id = parse_number<std::uint64_t>(f[0], where);
    m.record.patient_id = parse_number<std::uint64_t>(f[1], where);
    m.record.stage = parse_number<int>(f[2], where);
    const auto region = region_from_name(f[3]);
    const auto gender = gender_from_name(f[5]);
    const auto ethnicity = ethnicity_from_name(f[6]);
    if (!region || !gender || !ethnicity) throw FormatError(where + ": unknown region, gender or ethnicity");
    m.record.region = *region;
    m.record.age = parse_number<int>(f[4], where);
    m.record.gender = *gender;
    m.record.ethnicity = *ethnicity;
    m.record.rbl_percent = parse_number<double>(f[7], where);
    m.path = f[8];
    index.meta.push_back(std::move(m));
  }
  index.validate();
  return index;
}

void check_query_args(const std::string& text, std::size_t k, std::size_t index_size) {
  if (text.size() > kMaxCaptionChars) {
    throw LengthError("query is " + std::to_string(text.size()) + " characters, limit " +
                      std::to_string(kMaxCaptionChars));
  }
  if (index_size == 0) throw StateError("the index is empty");
  if (k < 1 || k > index_size) {
    throw ArgumentError("k must be in [1, " + std::to_string(index_size) + "], got " + std::to_string(k));
  }
}

RankedResult query(const std::string& text, std::size_t k, const EmbeddingIndex& index, const Model& model) {
  check_query_args(text, k, index.size());
  if (index.dim() != model.config().shared_dim) {
    throw FingerprintError("index vectors have dimension " + std::to_string(index.dim()) + ", model produces " +
                           std::to_string(model.config().shared_dim));
  }
  const std::string texts[] = {text};
  const auto q = model.embed_text(texts).value();
  return {text, k, top_k(index.ids, cosine_to_rows(q, index.vectors), k)};
}

Retriever::Retriever(Model model, EmbeddingIndex index) : model_(std::move(model)), index_(std::move(index)) {
  index_.validate();
  const std::string fp = checkpoint_fingerprint(model_);
  if (fp != index_.fingerprint) {
    throw FingerprintError("index was built by checkpoint " + index_.fingerprint + ", loaded checkpoint is " + fp);
  }
}

RankedResult Retriever::query(const std::string& text, std::size_t k) const {
  return radsearch::query(text, k, index_, model_);
}

// ---------------------------------------------------------------------------

std::size_t CaptionStore::image_count() const { return std::set<std::uint64_t>(image_ids.begin(), image_ids.end()).size(); }

CaptionStore build_caption_store(const Model& model, const std::vector<const ImageEntry*>& entries) {
  CaptionStore store;
  std::vector<std::string> texts;
  for (const ImageEntry* e : entries) {
    for (std::size_t c = 0; c < e->captions.size(); ++c) {
      store.caption_ids.push_back(caption_id(e->image_id, c));
      store.image_ids.push_back(e->image_id);
      texts.push_back(e->captions[c]);
    }
  }
  store.vectors = Matrix<float>(texts.size(), model.config().text_dim);
  for (std::size_t start = 0; start < texts.size(); start += kEncodeChunk) {
    const std::size_t end = std::min(texts.size(), start + kEncodeChunk);
    const auto rows = model.encode_text(std::span<const std::string>(texts.data() + start, end - start)).value();
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      std::copy(rows.row(r).begin(), rows.row(r).end(), store.vectors.row(start + r).begin());
    }
  }
  return store;
}

RankedResult text_only_query(const std::string& text, std::size_t k, const CaptionStore& store, const Model& model) {
  std::vector<std::uint64_t> ids;
  std::vector<double> best;
  const std::size_t images = store.image_count();
  check_query_args(text, k, images);
  const std::string texts[] = {text};
  const auto sims = cosine_to_rows(model.encode_text(texts).value(), store.vectors);
  std::unordered_map<std::uint64_t, std::size_t> slot;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const auto [it, fresh] = slot.try_emplace(store.image_ids[i], ids.size());
    if (fresh) {
      ids.push_back(store.image_ids[i]);
      best.push_back(sims[i]);
    } else {
      best[it->second] = std::max(best[it->second], sims[i]);
    }
  }
  return {text, k, top_k(ids, best, k)};
}

ImageFeatureIndex build_image_features(const Model& encoder, const std::vector<const ImageEntry*>& entries,
                                       const PixelLoader& pixels) {
  ImageFeatureIndex index;
  for (const ImageEntry* e : entries) index.ids.push_back(e->image_id);
  index.vectors = encode_in_chunks(entries, pixels, encoder.config().image_dim,
                                   [&](const std::vector<const ImageTensor*>& batch) {
                                     return encoder.encode_images(batch).value();
                                   });
  return index;
}

RankedResult image_only_query(const ImageTensor& image, std::size_t k, const ImageFeatureIndex& index,
                              const Model& encoder) {
  check_query_args("", k, index.ids.size());
  const auto q = encoder.encode_images(std::span<const ImageTensor* const>(std::array{&image})).value();
  return {"", k, top_k(index.ids, cosine_to_rows(q, index.vectors), k)};
}

}  // namespace radsearch
