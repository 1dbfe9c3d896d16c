#include <png.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "radsearch/binary_io.hpp"
#include "radsearch/errors.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

namespace {

constexpr int kManifestVersion = 1;

nlohmann::json entry_to_json(const ImageEntry& e) {
  const auto& r = e.record;
  return {
      {"id", e.image_id},
      {"path", e.path},
      {"split", split_name(e.split)},
      {"patient_id", r.patient_id},
      {"age", r.age},
      {"gender", gender_name(r.gender)},
      {"ethnicity", ethnicity_name(r.ethnicity)},
      {"rbl_percent", r.rbl_percent},
      {"stage", r.stage},
      {"region", region_name(r.region)},
      {"captions", e.captions},
  };
}

ImageEntry entry_from_json(const nlohmann::json& j, std::size_t line) {
  const auto where = [line](const std::string& what) { return "manifest line " + std::to_string(line) + ": " + what; };
  try {
    ImageEntry e;
    e.image_id = j.at("id").get<std::uint64_t>();
    e.path = j.at("path").get<std::string>();
    e.split = split_from_name(j.at("split").get<std::string>());
    auto& r = e.record;
    r.patient_id = j.at("patient_id").get<std::uint64_t>();
    r.age = j.at("age").get<int>();
    const auto gender = gender_from_name(j.at("gender").get<std::string>());
    const auto ethnicity = ethnicity_from_name(j.at("ethnicity").get<std::string>());
    const auto region = region_from_name(j.at("region").get<std::string>());
    if (!gender || !ethnicity || !region) throw FormatError(where("unknown gender, ethnicity or region"));
    r.gender = *gender;
    r.ethnicity = *ethnicity;
    r.region = *region;
    r.rbl_percent = j.at("rbl_percent").get<double>();
    r.stage = j.at("stage").get<int>();
    if (r.stage != stage_from_rbl(r.rbl_percent)) throw FormatError(where("stage disagrees with bone loss"));
    e.captions = j.at("captions").get<std::vector<std::string>>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(where(ex.what()));
  }
}

}  // namespace

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::string text = nlohmann::json{{"format", "radsearch-manifest"}, {"version", kManifestVersion},
                                    {"seed", manifest.seed}}
                         .dump() +
                     "\n";
  for (const auto& e : manifest.entries) text += entry_to_json(e).dump() + "\n";
  bin::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!header) {
      if (j.value("format", "") != "radsearch-manifest" || j.value("version", 0) != kManifestVersion) {
        throw FormatError("manifest " + path + " lacks a supported header line");
      }
      manifest.seed = j.value("seed", std::uint64_t{0});
      header = true;
      continue;
    }
    manifest.entries.push_back(entry_from_json(j, line_no));
  }
  if (!header) throw FormatError("manifest " + path + " is empty");
  return manifest;
}

void write_corpus(const std::string& root, const Corpus& corpus) {
  if (corpus.images.size() != corpus.manifest.entries.size()) {
    throw ContractError("corpus has " + std::to_string(corpus.images.size()) + " images for " +
                        std::to_string(corpus.manifest.entries.size()) + " entries");
  }
  const std::filesystem::path base(root);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    write_png((base / corpus.manifest.entries[i].path).string(), corpus.images[i]);
  }
  write_manifest((base / "manifest.jsonl").string(), corpus.manifest);
}

Corpus read_corpus(const std::string& root) {
  const std::filesystem::path base(root);
  Corpus corpus;
  corpus.manifest = read_manifest((base / "manifest.jsonl").string());
  corpus.images.reserve(corpus.manifest.entries.size());
  for (const auto& e : corpus.manifest.entries) corpus.images.push_back(read_png((base / e.path).string()));
  return corpus;
}

void write_png(const std::string& path, const GrayImage8& image) {
  if (image.pixels.size() != image.height * image.width) {
    throw ContractError("gray image buffer does not match " + std::to_string(image.height) + "x" +
                        std::to_string(image.width));
  }
  std::vector<std::uint8_t> rgb(image.pixels.size() * 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = image.pixels[i];

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encode failed for " + path + ": " + png.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encode failed for " + path + ": " + png.message);
  }
  bytes.resize(size);
  bin::write_file(path, bytes);
}

GrayImage8 read_png(const std::string& path) {
  const auto bytes = bin::read_file(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw FormatError("cannot decode png " + path + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    throw FormatError("cannot decode png " + path + ": " + png.message);
  }
  GrayImage8 out{png.height, png.width, std::vector<std::uint8_t>(std::size_t{png.height} * png.width)};
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = rgb[3 * i];
  return out;
}

}  // namespace radsearch
