#include "ihid/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ihid {

using nlohmann::json;

void check_json_keys(const json& j, const std::vector<std::string>& allowed,
                     const std::string& context) {
  if (!j.is_object()) throw ParseError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError(context + ": unknown key \"" + it.key() + "\"");
  }
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

std::string to_string(QBackend b) { return b == QBackend::tabular ? "tabular" : "mlp"; }

QBackend qbackend_from_string(const std::string& s) {
  if (s == "tabular") return QBackend::tabular;
  if (s == "mlp") return QBackend::mlp;
  throw ParseError("unknown q backend \"" + s + "\"");
}

void to_json(json& j, const IqlConfig& c) {
  j = json{{"backend", to_string(c.backend)},
           {"gamma_d", c.gamma_d},
           {"alpha_reg", c.alpha_reg},
           {"lr", c.lr},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"embed_dim", c.embed_dim},
           {"hidden_dim", c.hidden_dim},
           {"plateau_tol", c.plateau_tol},
           {"plateau_window", c.plateau_window},
           {"seed", c.seed}};
}

void from_json(const json& j, IqlConfig& c) {
  check_json_keys(j,
                  {"backend", "gamma_d", "alpha_reg", "lr", "epochs", "batch_size", "embed_dim",
                   "hidden_dim", "plateau_tol", "plateau_window", "seed"},
                  "iql config");
  if (j.contains("backend")) c.backend = qbackend_from_string(j.at("backend").get<std::string>());
  get_if(j, "gamma_d", c.gamma_d);
  get_if(j, "alpha_reg", c.alpha_reg);
  get_if(j, "lr", c.lr);
  get_if(j, "epochs", c.epochs);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "embed_dim", c.embed_dim);
  get_if(j, "hidden_dim", c.hidden_dim);
  get_if(j, "plateau_tol", c.plateau_tol);
  get_if(j, "plateau_window", c.plateau_window);
  get_if(j, "seed", c.seed);
}

void to_json(json& j, const DiffusionConfig& c) {
  j = json{{"L", c.L},
           {"latent", c.latent},
           {"layers", c.layers},
           {"heads", c.heads},
           {"ff_mult", c.ff_mult},
           {"dropout", c.dropout},
           {"time_channels", c.time_channels},
           {"subgoal_dim", c.subgoal_dim},
           {"ctx_dim", c.ctx_dim},
           {"rho", c.rho},
           {"T", c.T},
           {"t_inf", c.t_inf},
           {"beta1", c.beta1},
           {"betaT", c.betaT},
           {"lr", c.lr},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed}};
}

void from_json(const json& j, DiffusionConfig& c) {
  check_json_keys(j,
                  {"L", "latent", "layers", "heads", "ff_mult", "dropout", "time_channels",
                   "subgoal_dim", "ctx_dim", "rho", "T", "t_inf", "beta1", "betaT", "lr",
                   "epochs", "batch_size", "seed"},
                  "diffusion config");
  get_if(j, "L", c.L);
  get_if(j, "latent", c.latent);
  get_if(j, "layers", c.layers);
  get_if(j, "heads", c.heads);
  get_if(j, "ff_mult", c.ff_mult);
  get_if(j, "dropout", c.dropout);
  get_if(j, "time_channels", c.time_channels);
  get_if(j, "subgoal_dim", c.subgoal_dim);
  get_if(j, "ctx_dim", c.ctx_dim);
  get_if(j, "rho", c.rho);
  get_if(j, "T", c.T);
  get_if(j, "t_inf", c.t_inf);
  get_if(j, "beta1", c.beta1);
  get_if(j, "betaT", c.betaT);
  get_if(j, "lr", c.lr);
  get_if(j, "epochs", c.epochs);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "seed", c.seed);
}

namespace {

std::string blob_path(const std::string& path) { return path + ".bin"; }

void write_checkpoint(const std::string& path, const std::string& kind, const json& config,
                      std::uint64_t seed, json extra,
                      const std::vector<nn::Param*>& params) {
  json tensors = json::array();
  std::ofstream blob(blob_path(path), std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("cannot open " + blob_path(path) + " for writing");
  std::uint64_t offset = 0;
  for (const nn::Param* p : params) {
    tensors.push_back(json{{"name", p->name},
                           {"rows", p->value.rows()},
                           {"cols", p->value.cols()},
                           {"offset", offset}});
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const float f = static_cast<float>(p->value(r, c));
        blob.write(reinterpret_cast<const char*>(&f), sizeof(float));
      }
    offset += static_cast<std::uint64_t>(p->value.size()) * sizeof(float);
  }
  blob.flush();
  if (!blob) throw std::runtime_error("failed writing " + blob_path(path));

  json manifest = std::move(extra);
  manifest["kind"] = kind;
  manifest["seed"] = seed;
  manifest["config"] = config;
  manifest["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path);
}

json read_manifest(const std::string& path, const std::string& want_kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint manifest " + path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("kind") || !manifest.contains("config") ||
      !manifest.contains("tensors"))
    throw ParseError(path + ": manifest missing kind/config/tensors");
  if (manifest.at("kind").get<std::string>() != want_kind)
    throw ParseError(path + ": expected a " + want_kind + " checkpoint, found \"" +
                     manifest.at("kind").get<std::string>() + "\"");
  return manifest;
}

// Fills the rebuilt model's parameters from the blob, insisting that names
// and shapes line up one-to-one with the manifest's tensor list.
void load_blob(const std::string& path, const json& manifest,
               const std::vector<nn::Param*>& params) {
  const json& tensors = manifest.at("tensors");
  if (!tensors.is_array() || tensors.size() != params.size())
    throw ParseError(path + ": tensor count mismatch (manifest " +
                     std::to_string(tensors.size()) + ", model " +
                     std::to_string(params.size()) + ")");

  std::ifstream blob(blob_path(path), std::ios::binary);
  if (!blob) throw ParseError("cannot open checkpoint data " + blob_path(path));
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)),
                          std::istreambuf_iterator<char>());

  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& t = tensors[i];
    nn::Param* p = params[i];
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    if (name != p->name)
      throw ParseError(path + ": tensor " + std::to_string(i) + " is \"" + name +
                       "\", model expects \"" + p->name + "\"");
    if (rows != p->value.rows() || cols != p->value.cols())
      throw ParseError(path + ": shape mismatch for \"" + name + "\"");
    const std::uint64_t need = offset + static_cast<std::uint64_t>(rows) * cols * sizeof(float);
    if (need > bytes.size()) throw ParseError(blob_path(path) + ": truncated data");
    const char* src = bytes.data() + offset;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        float f;
        std::memcpy(&f, src, sizeof(float));
        src += sizeof(float);
        p->value(r, c) = static_cast<double>(f);
      }
  }
}

std::vector<nn::Param*> param_ptrs(std::vector<nn::Param>& ps) {
  std::vector<nn::Param*> out;
  out.reserve(ps.size());
  for (auto& p : ps) out.push_back(&p);
  return out;
}

}  // namespace

void save_qfunction_checkpoint(const std::string& path, const QFunction& q,
                               const IqlConfig& cfg) {
  write_checkpoint(path, "iql", json(cfg), cfg.seed, json{{"n_nodes", q.n_nodes()}},
                   param_ptrs(q.params()));
}

QFunction load_qfunction_checkpoint(const std::string& path, IqlConfig* cfg_out) {
  const json manifest = read_manifest(path, "iql");
  IqlConfig cfg;
  from_json(manifest.at("config"), cfg);
  if (!manifest.contains("n_nodes")) throw ParseError(path + ": manifest missing n_nodes");
  const int n = manifest.at("n_nodes").get<int>();
  QFunction q = cfg.backend == QBackend::tabular
                    ? QFunction::make_tabular(n)
                    : QFunction::make_mlp(n, cfg.embed_dim, cfg.hidden_dim, cfg.seed);
  load_blob(path, manifest, param_ptrs(q.params()));
  if (cfg_out) *cfg_out = cfg;
  return q;
}

void save_diffusion_checkpoint(const std::string& path, const DiffusionModel& m) {
  write_checkpoint(path, "diffusion", json(m.cfg), m.cfg.seed, json::object(), m.params());
}

DiffusionModel load_diffusion_checkpoint(const std::string& path) {
  const json manifest = read_manifest(path, "diffusion");
  DiffusionConfig cfg;
  from_json(manifest.at("config"), cfg);
  DiffusionModel m = make_diffusion_model(cfg);
  load_blob(path, manifest, m.params());
  return m;
}

}  // namespace ihid
