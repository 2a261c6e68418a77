#include "advbench/model_io.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "advbench/binary_io.hpp"

namespace advbench {
namespace io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace io

namespace {

constexpr std::string_view kMagic = "ADVB";

std::string join_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw FormatError("bad shape '" + text + "' in graph descriptor");
    }
  }
  if (shape.empty()) throw FormatError("empty shape in graph descriptor");
  return shape;
}

void write_tensor(io::Writer& w, const Tensor& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < t.size(); ++i) w.put<double>(t[i]);
}

Tensor read_tensor(io::Reader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank == 0 || rank > 8) r.fail("bad tensor rank " + std::to_string(rank));
  Shape shape;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0) r.fail("zero tensor extent");
    shape.push_back(d);
    n *= d;
    if (n > (std::size_t{1} << 32)) r.fail("tensor too large");
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < n; ++i) t[i] = r.get<double>();
  return t;
}

ModelFile read_expected(const std::filesystem::path& path, ModelKind kind,
                        std::size_t graphs) {
  ModelFile file = decode_model_file(io::read_file(path));
  if (file.kind != kind || file.graphs.size() != graphs) {
    throw FormatError(path.string() + " holds a different kind of model");
  }
  return file;
}

}  // namespace

std::string describe_graph(const ComputeGraph& graph) {
  std::string out = "input " + join_shape(graph.input_shape()) + "\n";
  for (const Node& node : graph.nodes()) {
    out += op_name(node.op);
    if (!node.param.empty()) out += " " + node.param;
    if (node.op == OpKind::kReshape) out += " " + join_shape(node.out_shape);
    out += "\n";
  }
  return out;
}

ComputeGraph graph_from_descriptor(const std::string& descriptor,
                                   const std::map<std::string, Tensor>& params) {
  std::istringstream lines(descriptor);
  std::string line;
  if (!std::getline(lines, line) || line.rfind("input ", 0) != 0) {
    throw FormatError("graph descriptor must start with an input line");
  }
  ComputeGraph graph(parse_shape(line.substr(6)));
  std::set<std::string> used;
  auto param = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("descriptor references missing parameter " + name);
    used.insert(name);
    return it->second;
  };
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string op_text, arg;
    fields >> op_text >> arg;
    const auto op = op_from_name(op_text);
    if (!op) throw FormatError("unknown node '" + op_text + "' in graph descriptor");
    switch (*op) {
      case OpKind::kMatMul: graph.matmul(arg, param(arg)); break;
      case OpKind::kConv2d: graph.conv2d(arg, param(arg)); break;
      case OpKind::kAddBias: graph.add_bias(arg, param(arg)); break;
      case OpKind::kRelu: graph.relu(); break;
      case OpKind::kSigmoid: graph.sigmoid(); break;
      case OpKind::kMaxPool2: graph.max_pool2(); break;
      case OpKind::kFlatten: graph.flatten(); break;
      case OpKind::kReshape: graph.reshape(parse_shape(arg)); break;
      case OpKind::kSoftmaxCrossEntropy: graph.softmax_cross_entropy(); break;
      case OpKind::kMeanSquaredError: graph.mean_squared_error(); break;
    }
  }
  if (used.size() != params.size()) {
    throw FormatError("model file carries parameters no node references");
  }
  return graph;
}

std::string encode_model_file(const ModelFile& file) {
  io::Writer w;
  w.raw(kMagic);
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(file.kind));
  w.put<std::uint8_t>(file.variant);
  w.put<std::uint32_t>(file.aux);
  if (file.kind == ModelKind::kDefended) w.put<std::uint64_t>(file.provenance);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.graphs.size()));
  for (const ComputeGraph& g : file.graphs) {
    w.str(describe_graph(g));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.parameters().size()));
    for (const auto& [name, value] : g.parameters()) {
      w.str(name);
      write_tensor(w, value);
    }
  }
  return w.bytes();
}

ModelFile decode_model_file(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.raw(std::min<std::size_t>(bytes.size(), 4)) != kMagic) {
    throw FormatError("not a model file (bad magic bytes)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  ModelFile file;
  const auto kind = r.get<std::uint8_t>();
  if (kind < 1 || kind > 3) r.fail("unknown model kind " + std::to_string(kind));
  file.kind = static_cast<ModelKind>(kind);
  file.variant = r.get<std::uint8_t>();
  file.aux = r.get<std::uint32_t>();
  if (file.kind == ModelKind::kDefended) file.provenance = r.get<std::uint64_t>();
  const auto graph_count = r.get<std::uint32_t>();
  if (graph_count > 64) r.fail("implausible graph count");
  for (std::uint32_t g = 0; g < graph_count; ++g) {
    const std::string descriptor = r.str();
    const auto param_count = r.get<std::uint32_t>();
    std::map<std::string, Tensor> params;
    for (std::uint32_t p = 0; p < param_count; ++p) {
      std::string name = r.str();
      Tensor value = read_tensor(r);
      if (!params.emplace(std::move(name), std::move(value)).second) {
        r.fail("duplicate parameter");
      }
    }
    try {
      file.graphs.push_back(graph_from_descriptor(descriptor, params));
    } catch (const ShapeError& e) {
      r.fail(std::string("inconsistent graph: ") + e.what());
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after model");
  return file;
}

void save_model(const std::filesystem::path& path, const Classifier& model) {
  ModelFile file{ModelKind::kClassifier, 0, static_cast<std::uint32_t>(model.class_count),
                 0, {model.extractor, model.head}};
  io::write_file(path, encode_model_file(file));
}

void save_model(const std::filesystem::path& path, const Autoencoder& model) {
  ModelFile file{ModelKind::kAutoencoder, 0, static_cast<std::uint32_t>(model.latent_dim),
                 0, {model.encoder, model.decoder}};
  io::write_file(path, encode_model_file(file));
}

Classifier load_classifier(const std::filesystem::path& path) {
  ModelFile file = read_expected(path, ModelKind::kClassifier, 2);
  Classifier model{std::move(file.graphs[0]), std::move(file.graphs[1]), file.aux};
  if (model.extractor.output_shape() != model.head.input_shape() ||
      model.head.output_shape() != Shape{model.class_count}) {
    throw FormatError(path.string() + ": extractor and head do not compose");
  }
  return model;
}

Autoencoder load_autoencoder(const std::filesystem::path& path) {
  ModelFile file = read_expected(path, ModelKind::kAutoencoder, 2);
  Autoencoder model{std::move(file.graphs[0]), std::move(file.graphs[1]), file.aux};
  if (model.encoder.output_shape() != Shape{model.latent_dim} ||
      model.decoder.input_shape() != Shape{model.latent_dim}) {
    throw FormatError(path.string() + ": encoder and decoder do not compose");
  }
  return model;
}

}  // namespace advbench
