#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pact/models.hpp"

namespace pact {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores little-endian doubles");

namespace {
constexpr const char* kMagic = "pact-checkpoint 1";
}

void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  j["kind"] = model.spec().kind;
  j["fields"] = model.spec().fields;
  j["meta"] = meta;
  out << kMagic << '\n' << "meta " << j.dump() << '\n';
  for (const auto& e : model.params().entries()) {
    out << "tensor " << e.name << ' ' << e.shape.size();
    for (int d : e.shape) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    out << '\n';
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a version-1 checkpoint");
  if (!std::getline(in, line) || line.rfind("meta ", 0) != 0)
    throw std::runtime_error("load_checkpoint: missing meta line");

  Checkpoint ckpt;
  nlohmann::json j = nlohmann::json::parse(line.substr(5));
  ckpt.spec.kind = j.at("kind").get<std::string>();
  ckpt.spec.fields = j.at("fields").get<std::map<std::string, int>>();
  ckpt.meta = j.at("meta").get<std::map<std::string, std::string>>();
  ckpt.model = make_model(ckpt.spec, /*init_seed=*/0);

  while (std::getline(in, line)) {
    if (line == "end") return ckpt;
    std::istringstream hdr(line);
    std::string tag, name;
    size_t ndim = 0;
    if (!(hdr >> tag >> name >> ndim) || tag != "tensor")
      throw std::runtime_error("load_checkpoint: bad tensor header '" + line + "'");
    ad::Shape shape(ndim);
    for (auto& d : shape)
      if (!(hdr >> d)) throw std::runtime_error("load_checkpoint: truncated shape for " + name);
    const int idx = ckpt.model->params().find(name);
    if (idx < 0)
      throw std::runtime_error("load_checkpoint: unknown parameter '" + name + "'");
    auto& entry = ckpt.model->params().entry(idx);
    if (entry.shape != shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(entry.value.data()),
            static_cast<std::streamsize>(entry.value.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(entry.value.size() * sizeof(double)))
      throw std::runtime_error("load_checkpoint: truncated data for '" + name + "'");
    if (in.get() != '\n')
      throw std::runtime_error("load_checkpoint: missing terminator after '" + name + "'");
  }
  throw std::runtime_error("load_checkpoint: missing end marker");
}

}  // namespace pact
