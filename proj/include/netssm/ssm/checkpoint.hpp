#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "netssm/ssm/model.hpp"

namespace netssm::ssm {

// Self-describing checkpoint: magic, JSON header (config, vocabulary
// hash, tensor manifest), then raw little-endian tensor data in
// manifest order.
inline constexpr char kCheckpointMagic[8] = {'N', 'S', 'S', 'M', 'C', 'K', 'P', '1'};

template <class Scalar>
void save_checkpoint(const Parameters<Scalar>& params, uint64_t vocab_hash,
                     const std::string& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<const void*> blobs;
  std::vector<std::size_t> sizes;
  const_cast<Parameters<Scalar>&>(params).for_each_tensor(
      [&](const std::string& name, auto& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
        blobs.push_back(t.data());
        sizes.push_back(static_cast<std::size_t>(t.size()) * sizeof(Scalar));
      });
  nlohmann::json header{
      {"config",
       {{"vocab_size", params.config.vocab_size},
        {"model_dim", params.config.model_dim},
        {"state_dim", params.config.state_dim},
        {"n_layers", params.config.n_layers},
        {"context_len", params.config.context_len}}},
      {"vocab_hash", vocab_hash},
      {"scalar", sizeof(Scalar) == 4 ? "f32" : "f64"},
      {"tensors", tensors}};
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, 8);
  uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (std::size_t i = 0; i < blobs.size(); ++i)
    out.write(reinterpret_cast<const char*>(blobs[i]), static_cast<std::streamsize>(sizes[i]));
}

template <class Scalar>
Parameters<Scalar> load_checkpoint(const std::string& path, uint64_t* vocab_hash = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw TruncationError("checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);

  std::string expected = sizeof(Scalar) == 4 ? "f32" : "f64";
  if (header.at("scalar").get<std::string>() != expected)
    throw FormatError("checkpoint: scalar type mismatch (file holds " +
                      header.at("scalar").get<std::string>() + ")");

  ModelConfig cfg;
  const auto& jc = header.at("config");
  cfg.vocab_size = jc.at("vocab_size");
  cfg.model_dim = jc.at("model_dim");
  cfg.state_dim = jc.at("state_dim");
  cfg.n_layers = jc.at("n_layers");
  cfg.context_len = jc.at("context_len");

  Parameters<Scalar> params = Parameters<Scalar>::init(cfg, 0);
  std::size_t idx = 0;
  const auto& tensors = header.at("tensors");
  params.for_each_tensor([&](const std::string& name, auto& t) {
    const auto& meta = tensors.at(idx);
    if (meta.at("name").get<std::string>() != name ||
        meta.at("rows").get<Eigen::Index>() != t.rows() ||
        meta.at("cols").get<Eigen::Index>() != t.cols())
      throw FormatError("checkpoint: tensor manifest mismatch at " + name);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(std::size_t(t.size()) * sizeof(Scalar)));
    ++idx;
  });
  if (!in) throw TruncationError("checkpoint: truncated tensor data");
  if (vocab_hash) *vocab_hash = header.at("vocab_hash").get<uint64_t>();
  return params;
}

}  // namespace netssm::ssm
