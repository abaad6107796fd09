#include "probe.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "text_format.hpp"

namespace probeforge {
namespace {

constexpr const char* kProbeHeader = "probeforge-probe";
constexpr int kProbeVersion = 1;

std::string read_line(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    const std::string head = line.substr(0, space);
    if (head != key) throw Error(ErrorKind::kCorrupt, "probe file: expected '" + key + "', got '" + head + "'");
    return space == std::string::npos ? std::string{} : line.substr(space + 1);
  }
  throw Error(ErrorKind::kCorrupt, "probe file: unexpected end of file before '" + key + "'");
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

std::vector<double> Probe::score(const features::FeatureView& view, std::size_t jobs) const {
  return model.predict(view.x, jobs);
}

features::FeatureView Probe::view(const dataset::Bundle& bundle, std::span<const std::size_t> rows,
                                  std::span<const double> labels) const {
  return features::project(layout, bundle, rows, labels);
}

void Probe::save(std::ostream& out) const {
  const auto& cfg = layout.config;
  out << kProbeHeader << ' ' << kProbeVersion << '\n';
  out << "sources";
  for (const auto& s : sources) out << ' ' << s;
  out << '\n';
  out << "task_type " << to_string(layout.task_type) << '\n';
  out << "hidden_dim " << layout.hidden_dim << '\n';
  out << "mode " << features::to_string(cfg.mode) << '\n';
  out << "layer " << cfg.layer << '\n';
  out << "layers";
  for (int l : cfg.layers) out << ' ' << l;
  out << '\n';
  out << "k " << cfg.k << '\n';
  out << "include_agnostic " << (cfg.include_agnostic ? 1 : 0) << '\n';
  if (layout.selection) {
    out << "selection\n" << layout.selection->to_text();
  } else {
    out << "selection none\n";
  }
  out << "forest\n";
  model.save(out);
}

Probe Probe::load(std::istream& in) {
  const auto header = split_words(read_line(in, kProbeHeader));
  if (header.size() != 1) throw Error(ErrorKind::kCorrupt, "probe file: malformed header");
  const int version = parse_int<int>(header[0]);
  if (version != kProbeVersion)
    throw Error(ErrorKind::kCorrupt, "probe file version " + std::to_string(version) +
                                         " is not supported (expected " +
                                         std::to_string(kProbeVersion) + ")");
  Probe p;
  p.sources = split_words(read_line(in, "sources"));
  p.layout.task_type = parse_task_type(read_line(in, "task_type"));
  p.layout.hidden_dim = parse_int<std::size_t>(read_line(in, "hidden_dim"));
  auto& cfg = p.layout.config;
  cfg.mode = features::parse_mode(read_line(in, "mode"));
  cfg.layer = parse_int<int>(read_line(in, "layer"));
  cfg.layers.clear();
  for (const auto& w : split_words(read_line(in, "layers"))) cfg.layers.push_back(parse_int<int>(w));
  cfg.k = parse_int<std::size_t>(read_line(in, "k"));
  cfg.include_agnostic = parse_int<int>(read_line(in, "include_agnostic")) != 0;
  const std::string selection = read_line(in, "selection");
  if (selection != "none") {
    // The selection block is self-delimiting: header line with k, then k pairs.
    std::string head;
    std::getline(in, head);
    const auto fields = split_words(head);
    if (fields.size() != 3) throw Error(ErrorKind::kCorrupt, "probe file: malformed selection header");
    std::string text = head + "\n";
    const auto k = parse_int<std::size_t>(fields[2]);
    for (std::size_t i = 0; i < k; ++i) {
      std::string line;
      if (!std::getline(in, line)) throw Error(ErrorKind::kCorrupt, "probe file: truncated selection");
      text += line + "\n";
    }
    p.layout.selection = features::SelectionMap::from_text(text);
  }
  (void)read_line(in, "forest");
  p.model = forest::ForestModel::load(in);
  cfg.validate();
  if (p.model.n_features() != p.layout.width())
    throw Error(ErrorKind::kCorrupt, "probe file: forest expects " +
                                         std::to_string(p.model.n_features()) +
                                         " features but the layout produces " +
                                         std::to_string(p.layout.width()));
  if (cfg.mode == features::Mode::kSelected &&
      (!p.layout.selection || p.layout.selection->source_columns.size() != cfg.k))
    throw Error(ErrorKind::kCorrupt, "probe file: selection map does not match k");
  return p;
}

void Probe::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + file.string());
  save(out);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + file.string());
}

Probe Probe::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::kLoad, "missing file: " + file.string());
  return load(in);
}

Probe train_probe(std::span<const ProbeSource> sources, const features::AssemblyConfig& config,
                  const forest::Params& params, std::size_t jobs) {
  if (sources.empty()) throw Error(ErrorKind::kArgument, "a probe needs at least one training dataset");
  std::vector<features::TrainingSource> fit_sources;
  for (const auto& s : sources) fit_sources.push_back({s.bundle, s.labels, s.split->train_ids});

  Probe p;
  p.layout = features::fit_layout(fit_sources, config);
  std::vector<features::FeatureView> views;
  for (const auto& s : sources) {
    p.sources.push_back(s.bundle->manifest.dataset_name);
    views.push_back(features::project(p.layout, *s.bundle, s.split->train_ids, s.labels));
  }
  const features::FeatureView train = features::concat(views);
  p.model = forest::train(train.x, train.targets, params, jobs);
  return p;
}

}  // namespace probeforge
