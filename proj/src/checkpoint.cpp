#include "nsim/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace nsim {

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  BinaryWriter w(os);
  w.magic("GGCK");
  w.u32(kCheckpointVersion);
  nlohmann::json block = {{"model", ckpt.model}, {"meta", ckpt.meta}};
  w.string(block.dump());
  w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.string(name);
    w.u32(static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) w.u32(static_cast<uint32_t>(d));
    w.f32(t.data());
  }
  if (!os) throw std::runtime_error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic("GGCK");
  const uint64_t version_at = r.offset();
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const uint64_t json_at = r.offset();
  Checkpoint c;
  try {
    const nlohmann::json block = nlohmann::json::parse(r.string("config block"));
    c.model = block.at("model").get<ModelConfig>();
    c.meta = block.value("meta", nlohmann::json::object());
    c.model.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid config block: ") + e.what(), json_at);
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid model config: ") + e.what(), json_at);
  }
  const uint32_t count = r.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.string("tensor name", 4096);
    const uint64_t rank_at = r.offset();
    const uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank), rank_at);
    Shape shape;
    uint64_t n = 1;
    for (uint32_t k = 0; k < rank; ++k) {
      const uint64_t at = r.offset();
      const uint32_t d = r.u32("tensor extent");
      if (d == 0 || n * d > (1ull << 31)) throw FormatError("tensor '" + name + "' has invalid extent", at);
      shape.push_back(d);
      n *= d;
    }
    std::vector<float> values(n);
    r.f32(values, "tensor payload");
    c.tensors.push_back({std::move(name), Tensor(shape, std::move(values))});
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    write_checkpoint(os, ckpt);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

void assign_from(TensorList& dst, const Checkpoint& ckpt) {
  for (auto& [name, t] : dst) {
    const Tensor* src = ckpt.find(name);
    if (src == nullptr) throw FormatError("checkpoint lacks tensor '" + name + "'", 0);
    if (src->shape() != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(src->shape()) + ", model expects " +
                        shape_str(t.shape()), 0);
    }
    auto out = t.mutable_data();
    std::copy(src->data().begin(), src->data().end(), out.begin());
  }
}

}  // namespace nsim
