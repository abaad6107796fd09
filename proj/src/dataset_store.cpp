#include "dataset_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "random.hpp"

namespace probeforge::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_layers(const std::vector<int>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(layers[i]);
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kLoad, "missing file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + p.string());
}

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

std::vector<float> decode_f32(const std::string& bytes) {
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), out.size() * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : out) f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return out;
}

std::string encode_f32(std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::uint32_t v = bswap32(std::bit_cast<std::uint32_t>(values[i]));
      std::memcpy(bytes.data() + 4 * i, &v, 4);
    }
  } else {
    std::memcpy(bytes.data(), values.data(), bytes.size());
  }
  return bytes;
}

Manifest parse_manifest(const std::string& text, const fs::path& file) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorrupt, file.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.model_name = j.at("model_name").get<std::string>();
    m.task_type = parse_task_type(j.at("task_type").get<std::string>());
    m.n_samples = j.at("n_samples").get<std::size_t>();
    m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    m.layers = j.at("layers").get<std::vector<int>>();
    m.label_kind = parse_label_kind(j.at("label_kind").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorrupt, file.string() + ": " + e.what());
  }
  if (m.format_version != kFormatVersion)
    throw Error(ErrorKind::kCorrupt, file.string() + ": unsupported format_version " +
                                         std::to_string(m.format_version));
  return m;
}

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["dataset_name"] = m.dataset_name;
  j["model_name"] = m.model_name;
  j["task_type"] = to_string(m.task_type);
  j["n_samples"] = m.n_samples;
  j["hidden_dim"] = m.hidden_dim;
  j["layers"] = m.layers;
  j["label_kind"] = to_string(m.label_kind);
  return j;
}

SampleSignals parse_signals(const json& j) {
  SampleSignals s;
  s.id = j.at("id").get<std::string>();
  if (j.contains("choice_logits")) s.choice_logits = j["choice_logits"].get<std::vector<double>>();
  if (j.contains("token_logprobs")) s.token_logprobs = j["token_logprobs"].get<std::vector<double>>();
  if (j.contains("token_entropies"))
    s.token_entropies = j["token_entropies"].get<std::vector<double>>();
  s.answer = j.at("answer").get<std::string>();
  s.gold = j.at("gold").get<std::vector<std::string>>();
  return s;
}

nlohmann::ordered_json signals_to_json(const SampleSignals& s, TaskType t) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  if (t == TaskType::kMultipleChoice) {
    j["choice_logits"] = s.choice_logits;
  } else {
    j["token_logprobs"] = s.token_logprobs;
    j["token_entropies"] = s.token_entropies;
  }
  j["answer"] = s.answer;
  j["gold"] = s.gold;
  return j;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

bool Manifest::has_layer(int layer) const {
  return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

std::size_t Manifest::layer_offset(int layer) const {
  auto it = std::find(layers.begin(), layers.end(), layer);
  if (it == layers.end())
    throw Error(ErrorKind::kArgument, "layer " + std::to_string(layer) +
                                          " is not stored; available layers: " +
                                          join_layers(layers));
  return static_cast<std::size_t>(it - layers.begin()) * hidden_dim;
}

void validate_manifest(const Manifest& m) {
  if (m.n_samples == 0) throw Error(ErrorKind::kValidation, "manifest: n_samples must be > 0");
  if (m.hidden_dim == 0) throw Error(ErrorKind::kValidation, "manifest: hidden_dim must be > 0");
  if (m.layers.empty()) throw Error(ErrorKind::kValidation, "manifest: layers must be non-empty");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i] < 0)
      throw Error(ErrorKind::kValidation, "manifest: negative layer index");
    if (i > 0 && m.layers[i] <= m.layers[i - 1])
      throw Error(ErrorKind::kValidation,
                  "manifest: layers must be strictly ascending without duplicates");
  }
  const LabelKind expected =
      m.task_type == TaskType::kMultipleChoice ? LabelKind::kExactMatch : LabelKind::kRougeL;
  if (m.label_kind != expected)
    throw Error(ErrorKind::kValidation, "manifest: task_type " + to_string(m.task_type) +
                                            " requires label_kind " + to_string(expected));
}

void validate_signals(const Manifest& m, const SampleSignals& s, std::size_t index) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kValidation,
                "sample " + std::to_string(index) + " (id '" + s.id + "'): " + why);
  };
  if (m.task_type == TaskType::kMultipleChoice) {
    if (s.choice_logits.size() != 4) fail("multiple_choice samples need exactly 4 choice_logits");
    if (!s.token_logprobs.empty() || !s.token_entropies.empty())
      fail("multiple_choice samples must not carry token arrays");
    if (!all_finite(s.choice_logits)) fail("non-finite choice logit");
  } else {
    if (!s.choice_logits.empty()) fail("short_form samples must not carry choice_logits");
    if (s.token_logprobs.empty()) fail("short_form samples need at least one token");
    if (s.token_logprobs.size() != s.token_entropies.size())
      fail("token_logprobs has " + std::to_string(s.token_logprobs.size()) +
           " entries but token_entropies has " + std::to_string(s.token_entropies.size()));
    if (!all_finite(s.token_logprobs) || !all_finite(s.token_entropies))
      fail("non-finite token signal");
    for (double lp : s.token_logprobs)
      if (lp > 0.0) fail("token log-probability > 0");
    for (double h : s.token_entropies)
      if (h < 0.0) fail("token entropy < 0");
  }
}

void validate_bundle(const Bundle& b) {
  const Manifest& m = b.manifest;
  validate_manifest(m);
  if (b.hidden.rows() != m.n_samples || b.hidden.cols() != m.row_width())
    throw Error(ErrorKind::kValidation, "hidden matrix shape does not match manifest");
  if (b.signals.size() != m.n_samples)
    throw Error(ErrorKind::kValidation, "signals has " + std::to_string(b.signals.size()) +
                                            " records, manifest says " +
                                            std::to_string(m.n_samples));
  for (std::size_t i = 0; i < m.n_samples; ++i) {
    for (float v : b.hidden.row(i))
      if (!std::isfinite(v))
        throw Error(ErrorKind::kValidation,
                    "non-finite hidden-state value in sample " + std::to_string(i));
    validate_signals(m, b.signals[i], i);
  }
  if (b.labels) {
    if (b.labels->size() != m.n_samples)
      throw Error(ErrorKind::kValidation, "labels length does not match n_samples");
    for (std::size_t i = 0; i < b.labels->size(); ++i) {
      const double v = (*b.labels)[i];
      if (!(v >= 0.0 && v <= 1.0))
        throw Error(ErrorKind::kValidation,
                    "label of sample " + std::to_string(i) + " outside [0,1]");
    }
  }
}

std::vector<double> read_labels(const fs::path& file, std::size_t n) {
  const std::string bytes = read_file(file);
  if (bytes.size() != n * 4)
    throw Error(ErrorKind::kCorrupt, file.string() + ": expected " + std::to_string(n * 4) +
                                         " bytes, found " + std::to_string(bytes.size()));
  const std::vector<float> f = decode_f32(bytes);
  return {f.begin(), f.end()};
}

void write_labels(const fs::path& file, std::span<const double> labels) {
  std::vector<float> f(labels.begin(), labels.end());
  write_file(file, encode_f32(f));
}

Bundle load_bundle(const fs::path& dir) {
  Bundle b;
  const fs::path manifest_path = dir / kManifestFile;
  b.manifest = parse_manifest(read_file(manifest_path), manifest_path);
  validate_manifest(b.manifest);
  const Manifest& m = b.manifest;

  const fs::path hidden_path = dir / kHiddenFile;
  const std::string hidden_bytes = read_file(hidden_path);
  const std::size_t expected = m.n_samples * m.row_width() * 4;
  if (hidden_bytes.size() != expected)
    throw Error(ErrorKind::kCorrupt, hidden_path.string() + ": expected " +
                                         std::to_string(expected) + " bytes (n_samples x " +
                                         "layers x hidden_dim x 4), found " +
                                         std::to_string(hidden_bytes.size()));
  b.hidden = Matrix<float>(m.n_samples, m.row_width(), decode_f32(hidden_bytes));

  const fs::path signals_path = dir / kSignalsFile;
  std::istringstream lines(read_file(signals_path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      b.signals.push_back(parse_signals(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kCorrupt,
                  signals_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }

  const fs::path labels_path = dir / kLabelsFile;
  if (fs::exists(labels_path)) b.labels = read_labels(labels_path, m.n_samples);

  validate_bundle(b);
  return b;
}

void write_bundle(const Bundle& b, const fs::path& dir) {
  validate_bundle(b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / kManifestFile, manifest_to_json(b.manifest).dump(2) + "\n");
  write_file(dir / kHiddenFile, encode_f32(b.hidden.data()));
  std::string signals;
  for (const auto& s : b.signals) signals += signals_to_json(s, b.manifest.task_type).dump() + "\n";
  write_file(dir / kSignalsFile, signals);
  if (b.labels) {
    write_labels(dir / kLabelsFile, *b.labels);
  } else {
    fs::remove(dir / kLabelsFile, ec);
  }
}

Split make_split(std::size_t n_samples, std::uint64_t seed, double train_fraction) {
  if (n_samples < 2)
    throw Error(ErrorKind::kArgument, "make_split needs at least 2 samples, got " +
                                          std::to_string(n_samples));
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::kArgument, "train_fraction must lie in (0,1)");
  std::size_t n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples) + 0.5));
  n_train = std::clamp<std::size_t>(n_train, 1, n_samples - 1);

  std::vector<std::size_t> perm(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) perm[i] = i;
  rng::Rng gen(rng::derive_seed(seed, n_samples));
  for (std::size_t i = n_samples - 1; i > 0; --i) std::swap(perm[i], perm[gen.below(i + 1)]);

  Split s;
  s.seed = seed;
  s.train_fraction = train_fraction;
  s.train_ids.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_ids.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

Matrix<float> slice_layer(const Bundle& b, int layer) {
  std::vector<std::size_t> rows(b.hidden.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return slice_layer(b, layer, rows);
}

Matrix<float> slice_layer(const Bundle& b, int layer, std::span<const std::size_t> rows) {
  const std::size_t offset = b.manifest.layer_offset(layer);
  const std::size_t dim = b.manifest.hidden_dim;
  Matrix<float> out(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= b.hidden.rows())
      throw Error(ErrorKind::kArgument, "row index out of range in slice_layer");
    const auto src = b.hidden.row(rows[r]).subspan(offset, dim);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace probeforge::dataset
