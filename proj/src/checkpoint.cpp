#include "mixflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mixflow {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'I', 'X', 'F', 'L', 'O', 'W', '\0'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const uint64_t n = get<uint64_t>(is);
  if (n > (1ull << 32)) throw InputError("corrupt checkpoint: oversized string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw InputError("truncated checkpoint");
  return s;
}

void put_doubles(std::ostream& os, std::span<const double> v) {
  put<uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is) {
  const uint64_t n = get<uint64_t>(is);
  if (n > (1ull << 32)) throw InputError("corrupt checkpoint: oversized array");
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw InputError("truncated checkpoint");
  return v;
}

void put_mlp_spec(std::ostream& os, const MlpSpec& s) {
  put<int32_t>(os, s.input_dim);
  put<uint32_t>(os, static_cast<uint32_t>(s.hidden_dims.size()));
  for (int h : s.hidden_dims) put<int32_t>(os, h);
  put<int32_t>(os, s.output_dim);
  put<uint8_t>(os, static_cast<uint8_t>(s.activation));
  put<int32_t>(os, s.time_embed_dim);
}

MlpSpec get_mlp_spec(std::istream& is) {
  MlpSpec s;
  s.input_dim = get<int32_t>(is);
  const uint32_t nh = get<uint32_t>(is);
  for (uint32_t i = 0; i < nh; ++i) s.hidden_dims.push_back(get<int32_t>(is));
  s.output_dim = get<int32_t>(is);
  s.activation = static_cast<Activation>(get<uint8_t>(is));
  s.time_embed_dim = get<int32_t>(is);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const FlowModel& model,
                     const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kCheckpointVersion);
  put_string(os, meta_json);

  const ModelSpec& ms = model.spec;
  put<int32_t>(os, ms.d);
  put<uint8_t>(os, static_cast<uint8_t>(ms.regime));
  put<uint8_t>(os, static_cast<uint8_t>(ms.kappa.kind));
  put<int32_t>(os, ms.kappa.num_classes);
  put<int32_t>(os, ms.kappa.embed_dim);
  put<int32_t>(os, ms.kappa.noise_dim);
  put<double>(os, ms.ema_decay);
  put_mlp_spec(os, ms.v_spec);
  put_mlp_spec(os, ms.src_spec);

  const auto& entries = model.params.entries();
  put<uint32_t>(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_string(os, e.name);
    put<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int s : e.shape) put<int32_t>(os, s);
    put_doubles(os, e.value);
  }

  put<double>(os, model.ema.decay);
  put<uint32_t>(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_string(os, e.name);
    put_doubles(os, model.ema.shadow_of(e));
  }

  put<uint64_t>(os, static_cast<uint64_t>(model.opt.step));
  put<uint64_t>(os, model.seed);
  put<uint64_t>(os, static_cast<uint64_t>(model.iteration));
  if (!os) throw InputError("failed writing checkpoint: " + path);
}

FlowModel load_checkpoint(const std::string& path, std::string* meta_json) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InputError("not a checkpoint file: " + path);
  const uint32_t version = get<uint32_t>(is);
  if (version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  std::string meta = get_string(is);
  if (meta_json) *meta_json = meta;

  FlowModel m;
  m.spec.d = get<int32_t>(is);
  m.spec.regime = static_cast<Regime>(get<uint8_t>(is));
  m.spec.kappa.kind = static_cast<KappaKind>(get<uint8_t>(is));
  m.spec.kappa.num_classes = get<int32_t>(is);
  m.spec.kappa.embed_dim = get<int32_t>(is);
  m.spec.kappa.noise_dim = get<int32_t>(is);
  m.spec.ema_decay = get<double>(is);
  m.spec.v_spec = get_mlp_spec(is);
  m.spec.src_spec = get_mlp_spec(is);

  const uint32_t n_params = get<uint32_t>(is);
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_string(is);
    const uint32_t ns = get<uint32_t>(is);
    std::vector<int> shape;
    for (uint32_t k = 0; k < ns; ++k) shape.push_back(get<int32_t>(is));
    std::vector<double> value = get_doubles(is);
    m.params.add(name, shape);
    auto& e = m.params.at(name);
    if (e.value.size() != value.size()) throw InputError("checkpoint shape/value mismatch");
    e.value = std::move(value);
  }

  m.ema.decay = get<double>(is);
  m.ema.shadow.assign(static_cast<size_t>(m.params.total_size()), 0.0);
  const uint32_t n_shadows = get<uint32_t>(is);
  for (uint32_t i = 0; i < n_shadows; ++i) {
    std::string name = get_string(is);
    std::vector<double> shadow = get_doubles(is);
    const auto& e = m.params.at(name);
    if (shadow.size() != e.value.size()) throw InputError("checkpoint ema shape mismatch");
    std::copy(shadow.begin(), shadow.end(), m.ema.shadow.begin() + e.offset);
  }

  m.opt = AdamState(m.params);
  m.opt.step = static_cast<int64_t>(get<uint64_t>(is));
  m.seed = get<uint64_t>(is);
  m.iteration = static_cast<int64_t>(get<uint64_t>(is));

  int64_t expected = m.spec.v_spec.param_count();
  if (m.spec.regime != Regime::Independent) {
    expected += m.spec.src_spec.param_count();
    if (m.spec.kappa.kind == KappaKind::ClassLabel)
      expected += int64_t(m.spec.kappa.num_classes) * m.spec.src_spec.input_dim;
  }
  if (m.params.total_size() != expected)
    throw InputError("checkpoint parameter count does not match its model layout");
  return m;
}

void export_checkpoint_json(const std::string& path, const FlowModel& model,
                            const std::string& meta_json) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["meta"] = nlohmann::json::parse(meta_json.empty() ? "{}" : meta_json);
  const ModelSpec& ms = model.spec;
  auto spec_json = [](const MlpSpec& s) {
    return nlohmann::json{{"input_dim", s.input_dim},
                          {"hidden_dims", s.hidden_dims},
                          {"output_dim", s.output_dim},
                          {"activation", activation_name(s.activation)},
                          {"time_embed_dim", s.time_embed_dim}};
  };
  j["model"] = {{"d", ms.d},
                {"regime", regime_name(ms.regime)},
                {"kappa", {{"kind", kappa_name(ms.kappa.kind)},
                           {"num_classes", ms.kappa.num_classes},
                           {"embed_dim", ms.kappa.embed_dim},
                           {"noise_dim", ms.kappa.noise_dim}}},
                {"ema_decay", ms.ema_decay},
                {"velocity_net", spec_json(ms.v_spec)},
                {"source_net", spec_json(ms.src_spec)}};
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json shadows = nlohmann::json::object();
  for (const auto& e : model.params.entries()) {
    params[e.name] = {{"shape", e.shape}, {"values", e.value}};
    auto sh = model.ema.shadow_of(e);
    shadows[e.name] = std::vector<double>(sh.begin(), sh.end());
  }
  j["params"] = std::move(params);
  j["ema_shadow"] = std::move(shadows);
  j["optimizer_step"] = model.opt.step;
  j["rng"] = {{"seed", model.seed}, {"iteration", model.iteration}};

  std::ofstream os(path);
  if (!os) throw InputError("cannot open JSON export path: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace mixflow
