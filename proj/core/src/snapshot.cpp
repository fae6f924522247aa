#include "fact/snapshot.hpp"

#include <fstream>

#include <json.hpp>

#include "fact/errors.hpp"

namespace fact {

namespace {

using nlohmann::json;

json layer_to_json(const LayerDesc& l) {
  switch (l.kind) {
    case LayerKind::linear:
      return {{"kind", "linear"}, {"in", l.in_dim}, {"out", l.out_dim}};
    case LayerKind::relu:
      return {{"kind", "relu"}};
    case LayerKind::softmax:
      return {{"kind", "softmax"}};
    case LayerKind::dropout:
      return {{"kind", "dropout"}, {"p", l.drop_prob}};
  }
  throw FormatError("snapshot: unknown layer kind");
}

LayerDesc layer_from_json(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") {
    return LayerDesc::Linear(j.at("in").get<size_t>(), j.at("out").get<size_t>());
  }
  if (kind == "relu") return LayerDesc::Relu();
  if (kind == "softmax") return LayerDesc::Softmax();
  if (kind == "dropout") return LayerDesc::Dropout(j.at("p").get<double>());
  throw FormatError("snapshot: unknown layer kind '" + kind + "'");
}

json partition_to_json(const std::vector<Tensor>& partition) {
  json arr = json::array();
  for (const Tensor& t : partition) {
    arr.push_back({{"shape", t.shape()}, {"values", t.values()}});
  }
  return arr;
}

std::vector<Tensor> partition_from_json(const json& arr) {
  std::vector<Tensor> out;
  for (const json& jt : arr) {
    out.emplace_back(jt.at("shape").get<std::vector<size_t>>(),
                     jt.at("values").get<std::vector<double>>());
  }
  return out;
}

}  // namespace

std::string model_to_json(const ModelParams& params) {
  json j;
  j["format_version"] = kSnapshotFormatVersion;
  json gen_spec = json::array(), head_spec = json::array();
  for (const LayerDesc& l : params.spec.generator) gen_spec.push_back(layer_to_json(l));
  for (const LayerDesc& l : params.spec.head) head_spec.push_back(layer_to_json(l));
  j["layer_spec"] = {{"generator", gen_spec}, {"head", head_spec}};
  j["generator"] = partition_to_json(params.generator);
  j["head"] = partition_to_json(params.head);
  return j.dump(2);
}

ModelParams model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("snapshot: invalid json: ") + e.what());
  }
  try {
    int version = j.at("format_version").get<int>();
    if (version != kSnapshotFormatVersion) {
      throw FormatError("snapshot: unsupported format version " +
                        std::to_string(version));
    }
    ModelParams params;
    for (const json& jl : j.at("layer_spec").at("generator")) {
      params.spec.generator.push_back(layer_from_json(jl));
    }
    for (const json& jl : j.at("layer_spec").at("head")) {
      params.spec.head.push_back(layer_from_json(jl));
    }
    params.spec.validate();
    params.generator = partition_from_json(j.at("generator"));
    params.head = partition_from_json(j.at("head"));
    ModelParams reference = zero_params(params.spec);
    if (params.generator.size() != reference.generator.size() ||
        params.head.size() != reference.head.size()) {
      throw FormatError("snapshot: parameter tensors do not match the layer spec");
    }
    for (size_t i = 0; i < params.generator.size(); ++i) {
      if (!params.generator[i].same_shape(reference.generator[i])) {
        throw FormatError("snapshot: generator tensor " + std::to_string(i) +
                          " has the wrong shape");
      }
    }
    for (size_t i = 0; i < params.head.size(); ++i) {
      if (!params.head[i].same_shape(reference.head[i])) {
        throw FormatError("snapshot: head tensor " + std::to_string(i) +
                          " has the wrong shape");
      }
    }
    return params;
  } catch (const json::exception& e) {
    throw FormatError(std::string("snapshot: missing or mistyped field: ") + e.what());
  }
}

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot open " + path);
  out << model_to_json(params) << "\n";
  if (!out) throw IoError("save_model: write failed for " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return model_from_json(text);
}

}  // namespace fact
