#include "nsim/dataset.hpp"

#include "json.hpp"

namespace nsim {

void write_dataset(std::ostream& os, const std::vector<Episode>& episodes) {
  DatasetHeader h;
  if (!episodes.empty() && !episodes[0].frames.empty()) {
    h.height = episodes[0].frames[0].height;
    h.width = episodes[0].frames[0].width;
  }
  h.episode_count = episodes.size();
  for (const Episode& e : episodes) {
    if (e.frames.size() != e.actions.size() + 1) throw ContractError("episode must have one more frame than actions");
    for (const Frame& f : e.frames)
      if (f.height != h.height || f.width != h.width) throw ContractError("dataset frames must share one shape");
    for (uint8_t a : e.actions)
      if (a >= h.action_count) throw ContractError("episode action out of range");
  }
  BinaryWriter w(os);
  w.magic("GGEP");
  w.u32(kDatasetVersion);
  const nlohmann::json j = {{"height", h.height},           {"width", h.width},
                            {"channels", h.channels},       {"action_count", h.action_count},
                            {"counterparts", h.counterparts}, {"episode_count", h.episode_count}};
  w.string(j.dump());
  for (const Episode& e : episodes) {
    w.u64(e.seed);
    w.u32(static_cast<uint32_t>(e.frames.size()));
    w.u32(static_cast<uint32_t>(e.actions.size()));
    for (const Frame& f : e.frames) w.bytes(f.pixels);
    w.bytes(e.actions);
  }
  if (!os) throw std::runtime_error("dataset write failed");
}

void write_dataset(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(os, episodes);
}

DatasetReader::DatasetReader(std::istream& is) : reader_(is) {
  reader_.expect_magic("GGEP");
  const uint64_t version_at = reader_.offset();
  const uint32_t version = reader_.u32("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  const uint64_t json_at = reader_.offset();
  try {
    const auto j = nlohmann::json::parse(reader_.string("header", 1 << 20));
    header_.height = j.at("height").get<int>();
    header_.width = j.at("width").get<int>();
    header_.channels = j.at("channels").get<int>();
    header_.action_count = j.at("action_count").get<int>();
    header_.counterparts = j.at("counterparts").get<std::vector<int>>();
    header_.episode_count = j.at("episode_count").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid dataset header: ") + e.what(), json_at);
  }
  if (header_.channels != 3 || header_.height < 0 || header_.width < 0 || header_.action_count < 1 ||
      header_.action_count > 256) {
    throw FormatError("dataset header has unsupported geometry", json_at);
  }
}

bool DatasetReader::next(Episode& out) {
  if (returned_ >= header_.episode_count) return false;
  Episode e;
  e.seed = reader_.u64("episode seed");
  const uint64_t counts_at = reader_.offset();
  const uint32_t frames = reader_.u32("frame count");
  const uint32_t actions = reader_.u32("action count");
  if (frames == 0 || actions + 1 != frames) {
    throw FormatError("episode " + std::to_string(returned_) + " has " + std::to_string(frames) + " frames and " +
                          std::to_string(actions) + " actions",
                      counts_at);
  }
  if (frames > (1u << 20)) throw FormatError("implausible frame count", counts_at);
  const size_t px = static_cast<size_t>(header_.height) * static_cast<size_t>(header_.width) * 3;
  e.frames.resize(frames);
  for (Frame& f : e.frames) {
    f.height = header_.height;
    f.width = header_.width;
    f.pixels.resize(px);
    reader_.bytes(f.pixels, "frame pixels");
  }
  const uint64_t actions_at = reader_.offset();
  e.actions.resize(actions);
  reader_.bytes(e.actions, "actions");
  for (size_t i = 0; i < e.actions.size(); ++i) {
    if (e.actions[i] >= header_.action_count) {
      throw FormatError("episode " + std::to_string(returned_) + " stores action " + std::to_string(e.actions[i]),
                        actions_at + i);
    }
  }
  out = std::move(e);
  ++returned_;
  return true;
}

std::vector<Episode> read_dataset(std::istream& is) {
  DatasetReader reader(is);
  std::vector<Episode> eps;
  Episode e;
  while (reader.next(e)) eps.push_back(std::move(e));
  return eps;
}

std::vector<Episode> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset(is);
}

}  // namespace nsim
