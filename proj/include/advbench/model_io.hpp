#pragma once

// Versioned binary model files:
//
//   "ADVB" | u32 version | u8 kind | u8 variant tag | u32 aux
//   | [u64 provenance, defended models only] | u32 graph count
//   per graph: str descriptor | u32 parameter count
//     per parameter: str name | u32 rank | u32 extents... | f64 values...
//
// Strings are u32-length-prefixed UTF-8. The descriptor lists the input shape
// and one node per line. `aux` is the class count for classifiers and the
// latent dimension for autoencoders. Provenance is the digest of the
// classifier a defended model was built from.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "advbench/graph.hpp"
#include "advbench/models.hpp"

namespace advbench {

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelKind : std::uint8_t {
  kClassifier = 1,
  kAutoencoder = 2,
  kDefended = 3,
};

struct ModelFile {
  ModelKind kind = ModelKind::kClassifier;
  std::uint8_t variant = 0;
  std::uint32_t aux = 0;
  std::uint64_t provenance = 0;
  std::vector<ComputeGraph> graphs;
};

std::string describe_graph(const ComputeGraph& graph);
// Rebuilds a graph from its descriptor, taking parameter values by name.
ComputeGraph graph_from_descriptor(const std::string& descriptor,
                                   const std::map<std::string, Tensor>& params);

std::string encode_model_file(const ModelFile& file);
ModelFile decode_model_file(std::string_view bytes);

void save_model(const std::filesystem::path& path, const Classifier& model);
void save_model(const std::filesystem::path& path, const Autoencoder& model);
Classifier load_classifier(const std::filesystem::path& path);
Autoencoder load_autoencoder(const std::filesystem::path& path);

}  // namespace advbench
