#include "angio/io/container.hpp"
#include "angio/io/digest.hpp"

#include <bit>
#include <filesystem>
#include <fstream>

namespace angio {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

const NamedTensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const NamedTensor& TensorFile::get(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw LoadError("tensor file has no entry '" + name + "'");
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
  nlohmann::json entries = nlohmann::json::array();
  Sha256 h;
  Index offset = 0;
  for (const auto& t : file.tensors) {
    Index numel = 1;
    for (Index d : t.shape) numel *= d;
    if (numel != t.data.size()) throw ShapeError("tensor '" + t.name + "': shape does not match data size");
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", numel}});
    h.update(t.data.data(), sizeof(float) * static_cast<std::size_t>(numel));
    offset += numel;
  }
  nlohmann::json header = {{"format", "angio-tensors"},
                           {"version", kContainerVersion},
                           {"meta", file.meta},
                           {"tensors", entries},
                           {"payload_sha256", h.hex_digest()}};

  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  // Write to a sibling and rename so readers never observe a partial file.
  const std::string tmp = path + ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << header.dump() << '\n';
    for (const auto& t : file.tensors) {
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(sizeof(float) * t.data.size()));
    }
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path + ": missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": bad header: " + e.what());
  }
  if (header.value("format", "") != "angio-tensors") throw LoadError(path + ": not a tensor file");
  if (header.value("version", 0) != kContainerVersion) {
    throw LoadError(path + ": unsupported container version " + header.value("version", nlohmann::json()).dump());
  }
  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  Sha256 h;
  for (const auto& e : header.at("tensors")) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<std::vector<Index>>();
    const Index count = e.at("count").get<Index>();
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(sizeof(float) * count));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * count)) {
      throw LoadError(path + ": truncated payload at '" + t.name + "'");
    }
    h.update(t.data.data(), sizeof(float) * static_cast<std::size_t>(count));
    file.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError(path + ": trailing bytes after payload");
  if (h.hex_digest() != header.value("payload_sha256", "")) throw LoadError(path + ": payload digest mismatch");
  return file;
}

void write_field(const std::string& path, const Tensor<float>& field) {
  const Shape s = field.shape();
  if (s.n != 1 || s.c != 2) throw ShapeError("write_field expects (1,2,H,W), got " + s.str());
  NamedTensor t{"displacement", {s.h, s.w, 2}, Eigen::ArrayXf(s.numel())};
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x) {
      t.data[(y * s.w + x) * 2] = field(0, 0, y, x);
      t.data[(y * s.w + x) * 2 + 1] = field(0, 1, y, x);
    }
  TensorFile f;
  f.meta = {{"kind", "deformation_field"}, {"units", "pixels"}, {"channels", {"dy", "dx"}}};
  f.tensors.push_back(std::move(t));
  write_tensor_file(path, f);
}

Tensor<float> read_field(const std::string& path) {
  const auto f = read_tensor_file(path);
  const auto& t = f.get("displacement");
  if (t.shape.size() != 3 || t.shape[2] != 2) throw LoadError(path + ": displacement must be [H, W, 2]");
  const Index h = t.shape[0], w = t.shape[1];
  Tensor<float> field(Shape{1, 2, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      field(0, 0, y, x) = t.data[(y * w + x) * 2];
      field(0, 1, y, x) = t.data[(y * w + x) * 2 + 1];
    }
  return field;
}

}  // namespace angio
