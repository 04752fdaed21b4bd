#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "inertia/error.hpp"
#include "inertia/model.hpp"

namespace inertia::model {

using nlohmann::json;

namespace {

json bias_to_json(const attn::BiasConfig& b) {
  json heads = json::array();
  for (const auto& h : b.head_params) heads.push_back({h.lambda, h.tau});
  return {{"variant", attn::to_string(b.variant)}, {"lambda", b.lambda},     {"tau_fixed", b.tau_fixed},
          {"anchor_len", b.anchor_len},           {"head_params", heads},    {"learnable", b.learnable}};
}

attn::BiasConfig bias_from_json(const json& j) {
  attn::BiasConfig b;
  b.variant = attn::parse_variant(j.at("variant").get<std::string>());
  b.lambda = j.at("lambda").get<double>();
  b.tau_fixed = j.at("tau_fixed").get<double>();
  b.anchor_len = j.at("anchor_len").get<int>();
  for (const auto& h : j.at("head_params")) b.head_params.push_back({h.at(0).get<double>(), h.at(1).get<double>()});
  b.learnable = j.at("learnable").get<bool>();
  return b;
}

}  // namespace

void save_checkpoint(const TinyModel& m, const std::string& path) {
  const ModelConfig& c = m.config();
  json tensors = json::array();
  for (const auto& p : m.parameters())
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  const json header = {
      {"config",
       {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_heads", c.n_heads}, {"n_layers", c.n_layers},
        {"max_seq", c.max_seq}, {"d_ff", c.d_ff}, {"seed", c.seed}}},
      {"bias", bias_to_json(m.bias())},
      {"tensors", tensors}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::InvalidInput, "cannot write checkpoint " + path);
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const auto& p : m.parameters())
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!out) fail(ErrorCode::InvalidInput, "failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorCode::InvalidInput, "cannot move checkpoint into " + path);
}

TinyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidInput, "cannot open checkpoint " + path);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) fail(ErrorCode::InvalidInput, "not a checkpoint (bad magic): " + path);
  std::getline(in, header_line);
  json header;
  try {
    header = json::parse(header_line);
    const json& c = header.at("config");
    ModelConfig cfg;
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.d_model = c.at("d_model").get<int>();
    cfg.n_heads = c.at("n_heads").get<int>();
    cfg.n_layers = c.at("n_layers").get<int>();
    cfg.max_seq = c.at("max_seq").get<int>();
    cfg.d_ff = c.at("d_ff").get<int>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    attn::BiasConfig bias = bias_from_json(header.at("bias"));

    std::vector<Parameter> params;
    for (const auto& t : header.at("tensors")) {
      Parameter p;
      p.name = t.at("name").get<std::string>();
      p.value.resize(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
      in.read(reinterpret_cast<char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * static_cast<Eigen::Index>(sizeof(double))));
      if (!in) fail(ErrorCode::InvalidInput, "truncated checkpoint " + path);
      params.push_back(std::move(p));
    }
    return TinyModel::from_parts(cfg, std::move(bias), std::move(params));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidInput, std::string("malformed checkpoint header: ") + e.what());
  }
}

}  // namespace inertia::model
