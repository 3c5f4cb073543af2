#include "trafficdiff/storage.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "json.hpp"

namespace trafficdiff {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("SHA-256 initialization failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len) != 1) throw std::runtime_error("SHA-256 final failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return out.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string StageManifest::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["stage_key"] = stage_key;
  j["seed"] = seed;
  auto& in = j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [name, sum] : inputs) in[name] = sum;
  auto& fs = j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) fs.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return j.dump(2) + "\n";
}

StageManifest StageManifest::from_json(std::string_view text) {
  const auto j = nlohmann::ordered_json::parse(text);
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.stage_key = j.at("stage_key").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [name, sum] : j.at("inputs").items()) m.inputs.emplace_back(name, sum.get<std::string>());
  for (const auto& f : j.at("files"))
    m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                       f.at("bytes").get<std::uint64_t>()});
  return m;
}

std::vector<FileEntry> StageManifest::scan(const std::filesystem::path& dir) {
  std::vector<FileEntry> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json" || rel.ends_with(".tmp")) continue;
    files.push_back({rel, sha256_file(e.path()), static_cast<std::uint64_t>(e.file_size())});
  }
  std::sort(files.begin(), files.end(), [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
  return files;
}

bool StageManifest::verify(const std::filesystem::path& dir) const {
  for (const auto& f : files) {
    const auto p = dir / f.path;
    if (!std::filesystem::is_regular_file(p) || std::filesystem::file_size(p) != f.bytes) return false;
    if (sha256_file(p) != f.sha256) return false;
  }
  return true;
}

void write_normalized_traces(const std::filesystem::path& path, std::span<const NormalizedTrace> traces) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& t : traces) {
    if (t.trace_id.find(',') != std::string::npos) throw std::invalid_argument("trace id contains a comma: " + t.trace_id);
    out << t.trace_id << ',' << t.class_label;
    for (double v : t.samples) out << ',' << v;
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<NormalizedTrace> read_normalized_traces(const std::filesystem::path& path, const std::string& dataset_id) {
  std::istringstream in(read_file(path));
  std::vector<NormalizedTrace> traces;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    NormalizedTrace t;
    t.dataset_id = dataset_id;
    std::getline(ss, t.trace_id, ',');
    std::getline(ss, cell, ',');
    t.class_label = std::stoi(cell);
    while (std::getline(ss, cell, ',')) t.samples.push_back(std::stod(cell));
    traces.push_back(std::move(t));
  }
  return traces;
}

void write_items(const std::filesystem::path& path, const ItemSet& items) {
  std::ostringstream out(std::ios::binary);
  out.write("TDITEMS1", 8);
  io::write_u64(out, items.size());
  for (const auto& item : items) {
    io::write_string(out, item.id);
    io::write_i32(out, item.label);
    io::write_u32(out, item.synthetic ? 1u : 0u);
    io::write_u64(out, item.trace.size());
    for (double v : item.trace) io::write_f64(out, v);
    const auto& img = item.image;
    io::write_u32(out, static_cast<std::uint32_t>(img.height));
    io::write_u32(out, static_cast<std::uint32_t>(img.width));
    io::write_u32(out, img.stage == PixelStage::kU8 ? 0u : 1u);
    io::write_string(out, img.provenance.dataset_id);
    io::write_i32(out, img.provenance.class_label);
    io::write_u64(out, img.provenance.original_length);
    for (float p : img.pixels) io::write_f32(out, p);
  }
  write_file_atomic(path, out.str());
}

ItemSet read_items(const std::filesystem::path& path) {
  std::istringstream in(read_file(path), std::ios::binary);
  char magic[8];
  if (!in.read(magic, 8) || std::string_view(magic, 8) != "TDITEMS1")
    throw std::runtime_error(path.string() + " is not an item store");
  const auto count = io::read_u64(in);
  ItemSet items;
  items.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Item item;
    item.id = io::read_string(in);
    item.label = io::read_i32(in);
    item.synthetic = io::read_u32(in) != 0;
    item.trace.resize(io::read_u64(in));
    for (double& v : item.trace) v = io::read_f64(in);
    const auto h = io::read_u32(in), w = io::read_u32(in);
    const auto stage = io::read_u32(in) == 0 ? PixelStage::kU8 : PixelStage::kUnit;
    item.image = PixelImage(h, w, stage);
    item.image.provenance.dataset_id = io::read_string(in);
    item.image.provenance.class_label = io::read_i32(in);
    item.image.provenance.original_length = io::read_u64(in);
    for (float& p : item.image.pixels) p = io::read_f32(in);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace trafficdiff
