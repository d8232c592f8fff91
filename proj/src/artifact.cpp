#include "solarda/artifact.hpp"

#include <fstream>
#include <sstream>

#include "solarda/errors.hpp"
#include "solarda/timeseries.hpp"

namespace solarda {

namespace {

using data::format_double;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::string layer_line(const nn::LayerSpec& spec) {
  return std::visit(
      Overloaded{
          [](const nn::Conv1DSpec& s) {
            return "conv1d in_channels=" + std::to_string(s.in_channels) + " out_channels=" +
                   std::to_string(s.out_channels) + " kernel=" + std::to_string(s.kernel) +
                   " padding=" + std::to_string(s.padding) + " bias=" + std::to_string(int(s.bias));
          },
          [](const nn::BatchNorm1DSpec& s) {
            return "batchnorm1d channels=" + std::to_string(s.channels) + " momentum=" + format_double(s.momentum) +
                   " eps=" + format_double(s.eps);
          },
          [](const nn::ReLUSpec&) { return std::string("relu"); },
          [](const nn::FlattenSpec&) { return std::string("flatten"); },
          [](const nn::DenseSpec& s) {
            return "dense in_features=" + std::to_string(s.in_features) +
                   " out_features=" + std::to_string(s.out_features);
          },
      },
      spec);
}

void write_values(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) out << ' ' << format_double(x);
}

void write_tensor(std::ostream& out, const std::string& tag, const std::string& name, const Tensor& t) {
  out << tag << ' ' << name << ' ';
  const auto& s = t.shape();
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
  for (std::size_t i = 0; i < t.size(); ++i) out << ' ' << format_double(t.raw()[i]);
  out << '\n';
}

class Reader {
 public:
  Reader(const std::string& text, std::string name) : in_(text), name_(std::move(name)) {}

  std::vector<std::string> next(const std::string& wanted) {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file, expected '" + wanted + "'");
    ++line_;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) fail("unexpected blank line");
    return tokens;
  }

  // Next line split into whitespace tokens; the first must equal `tag`.
  std::vector<std::string> expect(const std::string& tag) {
    auto tokens = next(tag);
    if (tokens[0] != tag) fail("expected '" + tag + "'");
    tokens.erase(tokens.begin());
    return tokens;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(name_ + ":" + std::to_string(line_) + ": " + msg);
  }

  std::size_t to_size(const std::string& s) const {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(s, &pos);
      if (pos != s.size()) fail("bad integer '" + s + "'");
      return std::size_t(v);
    } catch (const std::logic_error&) {
      fail("bad integer '" + s + "'");
    }
  }

  double to_double(const std::string& s) const {
    try {
      return data::parse_double(s);
    } catch (const DataError&) {
      fail("bad number '" + s + "'");
    }
  }

  std::vector<double> doubles(const std::vector<std::string>& tokens, std::size_t from = 0) const {
    std::vector<double> out;
    for (std::size_t i = from; i < tokens.size(); ++i) out.push_back(to_double(tokens[i]));
    return out;
  }

  // key=value attributes after the layer kind.
  std::map<std::string, std::string> attrs(const std::vector<std::string>& tokens) const {
    std::map<std::string, std::string> out;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tokens[i] + "'");
      out[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
    return out;
  }

  std::string attr(const std::map<std::string, std::string>& a, const std::string& key) const {
    const auto it = a.find(key);
    if (it == a.end()) fail("missing attribute '" + key + "'");
    return it->second;
  }

 private:
  std::istringstream in_;
  std::string name_;
  std::size_t line_ = 0;
};

nn::LayerSpec parse_layer(const Reader& r, const std::vector<std::string>& tokens) {
  if (tokens.empty()) r.fail("empty layer line");
  const auto a = r.attrs(tokens);
  const std::string& kind = tokens[0];
  if (kind == "conv1d") {
    return nn::Conv1DSpec{r.to_size(r.attr(a, "in_channels")), r.to_size(r.attr(a, "out_channels")),
                          r.to_size(r.attr(a, "kernel")), r.to_size(r.attr(a, "padding")),
                          r.attr(a, "bias") == "1"};
  }
  if (kind == "batchnorm1d") {
    return nn::BatchNorm1DSpec{r.to_size(r.attr(a, "channels")), r.to_double(r.attr(a, "momentum")),
                               r.to_double(r.attr(a, "eps"))};
  }
  if (kind == "relu") return nn::ReLUSpec{};
  if (kind == "flatten") return nn::FlattenSpec{};
  if (kind == "dense") return nn::DenseSpec{r.to_size(r.attr(a, "in_features")), r.to_size(r.attr(a, "out_features"))};
  r.fail("unknown layer kind '" + kind + "'");
}

void read_tensor(Reader& r, const std::string& tag, const std::string& name, Tensor& t) {
  const auto tokens = r.expect(tag);
  if (tokens.size() < 2 || tokens[0] != name) r.fail("expected " + tag + " '" + name + "'");
  Shape shape;
  std::istringstream ss(tokens[1]);
  for (std::string d; std::getline(ss, d, 'x');) shape.push_back(r.to_size(d));
  if (shape != t.shape()) r.fail(tag + " '" + name + "' has shape " + tokens[1] + ", expected " + shape_string(t.shape()));
  const auto values = r.doubles(tokens, 2);
  if (values.size() != t.size()) r.fail(tag + " '" + name + "' has the wrong number of values");
  std::copy(values.begin(), values.end(), t.raw());
}

}  // namespace

std::string ModelArtifact::serialize() const {
  std::ostringstream out;
  const auto& arch = model.architecture();
  out << "solarda-model " << kArtifactVersion << '\n';
  out << "input_shape";
  for (auto d : arch.input_shape) out << ' ' << d;
  out << '\n' << "layers " << arch.layers.size() << '\n';
  for (const auto& l : arch.layers) out << "layer " << layer_line(l) << '\n';
  const auto& names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) write_tensor(out, "param", names[i], model.parameters()[i]);
  const auto& stat_names = model.running_stat_names();
  for (std::size_t i = 0; i < stat_names.size(); ++i) write_tensor(out, "stat", stat_names[i], model.running_stats()[i]);
  out << "normalizer_mean";
  write_values(out, normalizer.mean);
  out << "\nnormalizer_std";
  write_values(out, normalizer.std);
  out << "\nnormalizer_clamped";
  for (bool c : normalizer.clamped) out << ' ' << int(c);
  out << "\nbin_scheme " << data::to_string(bins.scheme) << "\nbin_edges";
  write_values(out, bins.edges);
  out << "\nfeature_indices";
  for (auto i : feature_indices) out << ' ' << i;
  out << "\nfeature_names";
  for (const auto& n : feature_names) out << ' ' << n;
  out << '\n';
  for (const auto& [k, v] : provenance) out << "meta " << k << '=' << v << '\n';
  out << "end\n";
  return out.str();
}

ModelArtifact ModelArtifact::parse(const std::string& text, const std::string& source_name) {
  Reader r(text, source_name);
  const auto header = r.expect("solarda-model");
  if (header.size() != 1 || header[0] != std::to_string(kArtifactVersion)) {
    r.fail("unsupported model format version");
  }
  nn::Architecture arch;
  for (const auto& d : r.expect("input_shape")) arch.input_shape.push_back(r.to_size(d));
  const auto layers = r.expect("layers");
  if (layers.size() != 1) r.fail("expected layer count");
  const std::size_t n_layers = r.to_size(layers[0]);
  for (std::size_t i = 0; i < n_layers; ++i) arch.layers.push_back(parse_layer(r, r.expect("layer")));

  ModelArtifact a;
  try {
    a.model = nn::Network(arch);
  } catch (const ShapeError& e) {
    r.fail(std::string("inconsistent architecture: ") + e.what());
  }
  const auto names = a.model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) read_tensor(r, "param", names[i], a.model.parameters()[i]);
  const auto stat_names = a.model.running_stat_names();
  for (std::size_t i = 0; i < stat_names.size(); ++i) read_tensor(r, "stat", stat_names[i], a.model.running_stats()[i]);
  a.model.set_mode(nn::Mode::eval);

  a.normalizer.mean = r.doubles(r.expect("normalizer_mean"));
  a.normalizer.std = r.doubles(r.expect("normalizer_std"));
  for (const auto& t : r.expect("normalizer_clamped")) a.normalizer.clamped.push_back(t == "1");
  const auto scheme = r.expect("bin_scheme");
  if (scheme.size() != 1) r.fail("expected one bin scheme");
  try {
    a.bins.scheme = data::parse_bin_scheme(scheme[0]);
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  a.bins.edges = r.doubles(r.expect("bin_edges"));
  for (const auto& t : r.expect("feature_indices")) a.feature_indices.push_back(r.to_size(t));
  a.feature_names = r.expect("feature_names");

  const std::size_t width = a.model.input_width();
  if (a.normalizer.mean.size() != width || a.normalizer.std.size() != width || a.normalizer.clamped.size() != width ||
      a.feature_indices.size() != width || a.feature_names.size() != width) {
    r.fail("normaliser/feature lists do not match the model input width " + std::to_string(width));
  }
  if (a.bins.classes() != a.model.output_width()) r.fail("bin edges do not match the model output width");

  for (;;) {
    const auto tokens = r.next("end");
    if (tokens[0] == "end" && tokens.size() == 1) break;
    if (tokens[0] != "meta" || tokens.size() != 2) r.fail("expected 'meta key=value' or 'end'");
    const auto eq = tokens[1].find('=');
    if (eq == std::string::npos) r.fail("expected meta key=value");
    a.provenance[tokens[1].substr(0, eq)] = tokens[1].substr(eq + 1);
  }
  return a;
}

void ModelArtifact::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize();
  if (!out) throw DataError("write failed for " + path.string());
}

ModelArtifact ModelArtifact::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace solarda
