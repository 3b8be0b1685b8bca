#include "idm/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace idm::ad {

namespace {
constexpr const char* kMagic = "idm-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(std::ostream& os,
                     const std::vector<const Parameter*>& params,
                     const std::vector<std::string>& metadata) {
  os << kMagic << " v" << kVersion << "\n";
  os << "meta " << metadata.size() << "\n";
  for (const auto& m : metadata) os << m << "\n";
  os << "params " << params.size() << "\n";
  os << std::setprecision(17);
  for (const Parameter* p : params) {
    os << p->name << " " << p->value.shape.size();
    for (int d : p->value.shape) os << " " << d;
    os << "\n";
    for (size_t i = 0; i < p->value.values.size(); ++i) {
      if (i) os << " ";
      os << p->value.values[i];
    }
    os << "\n";
  }
}

void save_checkpoint(const std::string& path,
                     const std::vector<const Parameter*>& params,
                     const std::vector<std::string>& metadata) {
  std::ofstream f(path);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  save_checkpoint(f, params, metadata);
}

std::vector<std::string> load_checkpoint(
    std::istream& is, const std::vector<Parameter*>& params) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != kMagic || version != "v1")
    throw CheckpointError("bad checkpoint header");
  std::string tok;
  size_t nmeta = 0;
  is >> tok >> nmeta;
  if (tok != "meta") throw CheckpointError("expected meta section");
  is.ignore();
  std::vector<std::string> metadata;
  for (size_t i = 0; i < nmeta; ++i) {
    std::string line;
    std::getline(is, line);
    metadata.push_back(line);
  }
  size_t nparams = 0;
  is >> tok >> nparams;
  if (tok != "params") throw CheckpointError("expected params section");
  if (nparams != params.size())
    throw CheckpointError("parameter count mismatch");
  for (Parameter* p : params) {
    std::string name;
    size_t ndims = 0;
    is >> name >> ndims;
    if (name != p->name) throw CheckpointError("parameter name mismatch: " + name);
    std::vector<int> shape(ndims);
    for (auto& d : shape) is >> d;
    if (shape != p->value.shape)
      throw CheckpointError("parameter shape mismatch: " + name);
    for (double& v : p->value.values) is >> v;
    if (!is) throw CheckpointError("truncated checkpoint at " + name);
  }
  return metadata;
}

std::vector<std::string> load_checkpoint(
    const std::string& path, const std::vector<Parameter*>& params) {
  std::ifstream f(path);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  return load_checkpoint(f, params);
}

}  // namespace idm::ad
