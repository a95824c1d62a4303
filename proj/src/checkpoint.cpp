#include "cmcd/checkpoint.hpp"

#include "cmcd/container.hpp"

namespace cmcd {

namespace {

Container open_kind(const std::filesystem::path& path, const std::string& kind) {
  Container c = Container::load(path);
  if (c.kind() != kind) {
    throw FormatError("'" + path.string() + "' holds a '" + c.kind() +
                      "' container, expected '" + kind + "'");
  }
  return c;
}

std::vector<double> checked_bias(const Container& c, const std::string& name,
                                 std::size_t expected) {
  auto b = c.vector(name);
  if (b.size() != expected) {
    throw DimensionError("section 'arrays/" + name + "': bias length " +
                         std::to_string(b.size()) + " does not match weight columns " +
                         std::to_string(expected));
  }
  return b;
}

}  // namespace

void save_encoder(const EncoderParams& params, const std::filesystem::path& path,
                  const std::string& config_hash) {
  Container c("encoder");
  c.meta()["activation"] = to_string(params.activation);
  c.meta()["num_layers"] = params.layers.size();
  c.meta()["config_hash"] = config_hash;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto prefix = "layer" + std::to_string(i);
    c.add(prefix + "/weight", params.layers[i].weight);
    c.add(prefix + "/bias", params.layers[i].bias);
  }
  c.save(path);
}

EncoderParams load_encoder(const std::filesystem::path& path, std::string* config_hash) {
  Container c = open_kind(path, "encoder");
  EncoderParams p;
  std::size_t n = 0;
  try {
    p.activation = parse_activation(c.meta().at("activation").get<std::string>());
    n = c.meta().at("num_layers").get<std::size_t>();
    if (config_hash) *config_hash = c.meta().at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed section 'meta': ") + e.what());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto prefix = "layer" + std::to_string(i);
    DenseLayer l;
    l.weight = c.matrix(prefix + "/weight");
    l.bias = checked_bias(c, prefix + "/bias", l.weight.cols);
    if (!p.layers.empty() && p.layers.back().weight.cols != l.weight.rows) {
      throw DimensionError("section 'arrays/" + prefix + "/weight': input width does "
                           "not match the previous layer");
    }
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw FormatError("encoder checkpoint has no layers");
  return p;
}

void save_head(const HeadParams& params, const std::filesystem::path& path,
               const std::string& config_hash) {
  Container c("head");
  c.meta()["config_hash"] = config_hash;
  c.add("weight", params.weight);
  c.add("bias", params.bias);
  c.save(path);
}

HeadParams load_head(const std::filesystem::path& path, std::string* config_hash) {
  Container c = open_kind(path, "head");
  if (config_hash) *config_hash = c.meta().value("config_hash", std::string{});
  HeadParams h;
  h.weight = c.matrix("weight");
  h.bias = checked_bias(c, "bias", h.weight.cols);
  return h;
}

}  // namespace cmcd
