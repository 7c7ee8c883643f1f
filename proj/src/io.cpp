#include "statprec/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace statprec {

using nlohmann::json;

namespace {

std::runtime_error io_error(const std::string& path, const std::string& what) {
  return std::runtime_error("'" + path + "': " + what);
}

void put_double(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

double get_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

class BlobReader {
 public:
  BlobReader(std::string data, std::size_t offset, std::string path)
      : data_(std::move(data)), pos_(offset), path_(std::move(path)) {}

  double next() {
    if (pos_ + 8 > data_.size()) throw io_error(path_, "truncated binary payload");
    const double v = get_double(data_.data() + pos_);
    pos_ += 8;
    return v;
  }
  cplx next_complex() {
    const double re = next();
    return {re, next()};
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string data_;
  std::size_t pos_;
  std::string path_;
};

json channel_model_json(const ChannelModel& m) {
  return {{"angular_spread_rad", m.angular_spread},
          {"grid_size", m.grid_size},
          {"azimuth_range_rad", m.azimuth_range},
          {"elevation_range_rad", m.elevation_range}};
}

ChannelModel channel_model_from(const json& j) {
  ChannelModel m;
  m.angular_spread = j.at("angular_spread_rad").get<double>();
  m.grid_size = j.at("grid_size").get<int>();
  m.azimuth_range = j.at("azimuth_range_rad").get<double>();
  m.elevation_range = j.at("elevation_range_rad").get<double>();
  return m;
}

json info_json(const DatasetInfo& info, const char* kind) {
  return {{"kind", kind},
          {"version", kFormatVersion},
          {"geometry", format_geometry(info.geometry)},
          {"N", info.geometry.antennas()},
          {"seed", info.seed},
          {"normalization_scale", info.normalization_scale},
          {"channel_model", channel_model_json(info.channel_model)}};
}

DatasetInfo info_from(const json& j, const char* kind, const std::string& path) {
  if (j.value("kind", "") != kind)
    throw io_error(path, std::string("sidecar does not describe a ") + kind + " dataset");
  if (j.value("version", 0) != kFormatVersion) throw io_error(path, "unsupported format version");
  DatasetInfo info;
  info.geometry = parse_geometry(j.at("geometry").get<std::string>());
  if (j.at("N").get<int>() != info.geometry.antennas())
    throw io_error(path, "sidecar N does not match its geometry");
  info.seed = j.at("seed").get<std::uint64_t>();
  info.normalization_scale = j.at("normalization_scale").get<double>();
  info.channel_model = channel_model_from(j.at("channel_model"));
  return info;
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw io_error(path, std::string("invalid JSON: ") + e.what());
  }
}

// Splits "<json header>\n<blob>" files.
std::pair<json, BlobReader> read_header_file(const std::string& path) {
  std::string data = read_text_file(path);
  const auto nl = data.find('\n');
  if (nl == std::string::npos) throw io_error(path, "missing header line");
  json header;
  try {
    header = json::parse(data.substr(0, nl));
  } catch (const json::exception& e) {
    throw io_error(path, std::string("invalid header: ") + e.what());
  }
  return {std::move(header), BlobReader(std::move(data), nl + 1, path)};
}

std::string header_file(const json& header, const std::string& blob) {
  return header.dump() + "\n" + blob;
}

template <class T>
T field(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw io_error(path, std::string("missing or malformed field '") + key + "'");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& header) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != header) throw io_error(path, "unexpected CSV header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw io_error(path, "cannot create directory: " + ec.message());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(path, "cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error(path, "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw io_error(path, "cannot move temporary file into place: " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_channel_dataset(const std::string& path, const std::vector<CVec>& channels,
                           const DatasetInfo& info) {
  const int n = info.geometry.antennas();
  std::string blob;
  blob.reserve(channels.size() * static_cast<std::size_t>(n) * 16);
  for (const auto& h : channels) {
    if (h.size() != n) throw std::invalid_argument("write_channel_dataset: channel length != N");
    for (Index i = 0; i < n; ++i) {
      put_double(blob, h[i].real());
      put_double(blob, h[i].imag());
    }
  }
  json side = info_json(info, "channels");
  side["M"] = channels.size();
  write_text_file(path + ".json", side.dump(2) + "\n");
  write_text_file(path, blob);
}

std::vector<CVec> read_channel_dataset(const std::string& path, DatasetInfo* info_out) {
  const json side = read_json_file(path + ".json");
  DatasetInfo info;
  std::size_t m = 0;
  try {
    info = info_from(side, "channels", path + ".json");
    m = side.at("M").get<std::size_t>();
  } catch (const json::exception& e) {
    throw io_error(path + ".json", e.what());
  }
  const int n = info.geometry.antennas();
  BlobReader blob(read_text_file(path), 0, path);
  if (blob.remaining() != m * static_cast<std::size_t>(n) * 16)
    throw io_error(path, "payload size does not match the sidecar");
  std::vector<CVec> out(m, CVec(n));
  for (auto& h : out)
    for (Index i = 0; i < n; ++i) h[i] = blob.next_complex();
  if (info_out) *info_out = info;
  return out;
}

void write_scenario_dataset(const std::string& path, const std::vector<Scenario>& scenarios,
                            const DatasetInfo& info) {
  if (scenarios.empty()) throw std::invalid_argument("write_scenario_dataset: no scenarios");
  const int n = info.geometry.antennas();
  const int users = scenarios.front().user_count();
  std::string blob;
  json clusters = json::array();
  for (const auto& s : scenarios) {
    if (s.user_count() != users)
      throw std::invalid_argument("write_scenario_dataset: scenarios differ in J");
    for (const auto& u : s.users) {
      if (u.channel.size() != n)
        throw std::invalid_argument("write_scenario_dataset: channel length != N");
      for (Index i = 0; i < n; ++i) {
        put_double(blob, u.channel[i].real());
        put_double(blob, u.channel[i].imag());
      }
      clusters.push_back({u.cluster.azimuth, u.cluster.elevation, u.cluster.spread});
    }
  }
  json side = info_json(info, "scenarios");
  side["D"] = scenarios.size();
  side["J"] = users;
  side["clusters"] = std::move(clusters);
  write_text_file(path + ".json", side.dump() + "\n");
  write_text_file(path, blob);
}

std::vector<Scenario> read_scenario_dataset(const std::string& path, DatasetInfo* info_out) {
  const json side = read_json_file(path + ".json");
  DatasetInfo info;
  std::size_t d = 0;
  int users = 0;
  try {
    info = info_from(side, "scenarios", path + ".json");
    d = side.at("D").get<std::size_t>();
    users = side.at("J").get<int>();
  } catch (const json::exception& e) {
    throw io_error(path + ".json", e.what());
  }
  const auto& clusters = side.at("clusters");
  if (users < 1 || clusters.size() != d * static_cast<std::size_t>(users))
    throw io_error(path + ".json", "cluster list does not match D x J");
  const int n = info.geometry.antennas();
  BlobReader blob(read_text_file(path), 0, path);
  if (blob.remaining() != d * static_cast<std::size_t>(users) * static_cast<std::size_t>(n) * 16)
    throw io_error(path, "payload size does not match the sidecar");

  std::vector<Scenario> out(d);
  std::size_t c = 0;
  for (auto& s : out) {
    s.users.resize(static_cast<std::size_t>(users));
    for (auto& u : s.users) {
      u.channel.resize(n);
      for (Index i = 0; i < n; ++i) u.channel[i] = blob.next_complex();
      const auto& a = clusters[c++];
      u.cluster.azimuth = a.at(0).get<double>();
      u.cluster.elevation = a.at(1).get<double>();
      u.cluster.spread = a.at(2).get<double>();
    }
  }
  refresh_genie_rows(out, info.geometry, info.channel_model);
  const double s2 = info.normalization_scale * info.normalization_scale;
  if (s2 != 1.0)
    for (auto& s : out)
      for (auto& u : s.users) u.genie_row *= s2;
  if (info_out) *info_out = info;
  return out;
}

void save_gmm(const std::string& path, const GmmModel& model) {
  const json header = {{"format", "statprec-gmm"},
                       {"version", kFormatVersion},
                       {"K", model.components()},
                       {"B", model.bits()},
                       {"geometry", format_geometry(model.dictionary().geometry())},
                       {"spectrum_length", model.dictionary().spectrum_length()},
                       {"dictionary_normalization", model.dictionary().normalization()},
                       {"floor", model.floor()},
                       {"payload", "weights[K], spectra[L x K] column-major"}};
  std::string blob;
  for (Index k = 0; k < model.weights().size(); ++k) put_double(blob, model.weights()[k]);
  const RMat& q = model.spectra();
  for (Index k = 0; k < q.cols(); ++k)
    for (Index l = 0; l < q.rows(); ++l) put_double(blob, q(l, k));
  write_text_file(path, header_file(header, blob));
}

GmmModel load_gmm(const std::string& path) {
  auto [header, blob] = read_header_file(path);
  if (header.value("format", "") != "statprec-gmm") throw io_error(path, "not a GMM model file");
  if (header.value("version", 0) != kFormatVersion) throw io_error(path, "unsupported version");
  const int k = field<int>(header, "K", path);
  const int bits = field<int>(header, "B", path);
  const int length = field<int>(header, "spectrum_length", path);
  const double floor = field<double>(header, "floor", path);
  ArrayGeometry geometry;
  try {
    geometry = parse_geometry(field<std::string>(header, "geometry", path));
  } catch (const std::invalid_argument& e) {
    throw io_error(path, e.what());
  }
  SpectralDictionary dictionary(geometry);
  if (length != dictionary.spectrum_length())
    throw io_error(path, "spectrum length does not match the geometry");
  if (field<double>(header, "dictionary_normalization", path) != dictionary.normalization())
    throw io_error(path, "dictionary normalisation mismatch");
  if (k < 1 || (1 << bits) != k) throw io_error(path, "K must equal 2^B");
  if (blob.remaining() != static_cast<std::size_t>(k) * static_cast<std::size_t>(1 + length) * 8)
    throw io_error(path, "payload size does not match the header");
  RVec weights(k);
  for (int i = 0; i < k; ++i) weights[i] = blob.next();
  RMat spectra(length, k);
  for (int c = 0; c < k; ++c)
    for (int l = 0; l < length; ++l) spectra(l, c) = blob.next();
  try {
    return GmmModel(std::move(dictionary), std::move(weights), std::move(spectra), floor);
  } catch (const std::invalid_argument& e) {
    throw io_error(path, std::string("invalid model: ") + e.what());
  }
}

void save_gnn(const std::string& path, const GnnModel& model) {
  const GnnShape& shape = model.shape();
  json activations = json::array();
  for (int l = 0; l < shape.layers(); ++l)
    activations.push_back(l + 1 < shape.layers() ? "relu" : "identity");
  const json header = {
      {"format", "statprec-gnn"},
      {"version", kFormatVersion},
      {"N", shape.antennas},
      {"L", shape.layers()},
      {"dims", shape.dims},
      {"alpha", shape.alpha},
      {"beta", shape.beta},
      {"extractor_activation", "prelu"},
      {"activations", activations},
      {"parameter_count", shape.parameter_count()},
      {"tensor_order", "W[2N x 2N], b[2N], prelu[1], then per layer S,T,Q,K,U; column-major"}};
  std::string blob;
  for (double p : model.parameters()) put_double(blob, p);
  write_text_file(path, header_file(header, blob));
}

GnnModel load_gnn(const std::string& path) {
  auto [header, blob] = read_header_file(path);
  if (header.value("format", "") != "statprec-gnn") throw io_error(path, "not a GNN model file");
  if (header.value("version", 0) != kFormatVersion) throw io_error(path, "unsupported version");
  GnnShape shape;
  shape.antennas = field<int>(header, "N", path);
  shape.dims = field<std::vector<int>>(header, "dims", path);
  shape.alpha = field<double>(header, "alpha", path);
  shape.beta = field<double>(header, "beta", path);
  try {
    shape.validate();
  } catch (const std::invalid_argument& e) {
    throw io_error(path, e.what());
  }
  if (field<int>(header, "L", path) != shape.layers()) throw io_error(path, "L does not match dims");
  const auto acts = field<std::vector<std::string>>(header, "activations", path);
  if (static_cast<int>(acts.size()) != shape.layers() || acts.back() != "identity")
    throw io_error(path, "unsupported activation tags");
  for (std::size_t i = 0; i + 1 < acts.size(); ++i)
    if (acts[i] != "relu") throw io_error(path, "unsupported activation tags");
  if (blob.remaining() != shape.parameter_count() * 8)
    throw io_error(path, "payload size does not match the layer dimensions");
  GnnModel model(shape);
  for (double& p : model.parameters()) {
    p = blob.next();
    if (!std::isfinite(p)) throw io_error(path, "non-finite parameter");
  }
  return model;
}

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::string out = "epoch,train_rate,val_rate,lr\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + format_double(r.train_rate) + "," +
           format_double(r.val_rate) + "," + format_double(r.learning_rate) + "\n";
  write_text_file(path, out);
}

std::vector<TrainLogRow> read_training_log(const std::string& path) {
  std::vector<TrainLogRow> log;
  for (const auto& cells : read_csv(path, "epoch,train_rate,val_rate,lr")) {
    if (cells.size() != 4) throw io_error(path, "malformed training log row");
    log.push_back({std::stoi(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
                   std::stod(cells[3])});
  }
  return log;
}

void write_em_log(const std::string& path, const std::vector<double>& log_likelihood,
                  int first_iteration, bool append) {
  std::string out;
  if (append) {
    out = read_text_file(path);
  } else {
    out = "iteration,log_likelihood\n";
  }
  for (std::size_t i = 0; i < log_likelihood.size(); ++i)
    out += std::to_string(first_iteration + static_cast<int>(i)) + "," +
           format_double(log_likelihood[i]) + "\n";
  write_text_file(path, out);
}

std::vector<double> read_em_log(const std::string& path) {
  std::vector<double> out;
  for (const auto& cells : read_csv(path, "iteration,log_likelihood")) {
    if (cells.size() != 2) throw io_error(path, "malformed EM log row");
    out.push_back(std::stod(cells[1]));
  }
  return out;
}

}  // namespace statprec
