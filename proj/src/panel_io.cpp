#include "factorlab/panel_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "factorlab/error.hpp"
#include "csv.hpp"

namespace factorlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw IoError("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw IoError("invalid number '" + std::string(text) + "'");
  return v;
}

json params_to_json(const ParamMap& params) {
  json j = json::object();
  for (const auto& [key, value] : params) {
    std::visit([&](const auto& v) { j[key] = v; }, value);
  }
  return j;
}

ParamMap params_from_json(const json& j) {
  ParamMap out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_boolean()) {
      out[key] = value.get<bool>();
    } else if (value.is_number_integer()) {
      out[key] = value.get<std::int64_t>();
    } else if (value.is_number()) {
      out[key] = value.get<double>();
    } else if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else {
      out[key] = value.dump();
    }
  }
  return out;
}

json provenance_to_json(const Provenance& p) {
  return json{{"op_name", p.op_name},
              {"params", params_to_json(p.params)},
              {"input_ids", p.input_ids},
              {"created_seq", p.created_seq}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.op_name = j.at("op_name").get<std::string>();
  p.params = params_from_json(j.at("params"));
  p.input_ids = j.at("input_ids").get<std::vector<std::string>>();
  p.created_seq = j.value("created_seq", std::uint64_t{0});
  return p;
}

SavedFiles save_panel(const Panel& panel, const fs::path& directory) {
  if (panel.id().empty()) throw IoError("cannot save a panel without an id");
  std::error_code ec;
  fs::create_directories(directory, ec);
  SavedFiles files{directory / (panel.id() + ".csv"), directory / (panel.id() + ".meta.json")};

  std::ofstream csv(files.csv, std::ios::binary);
  if (!csv) throw IoError("cannot write " + files.csv.string());
  csv << "date,asset,value\n";
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    const std::string date = panel.dates()[t].str();
    for (std::size_t i = 0; i < panel.n_assets(); ++i) {
      const double v = panel.at(t, i);
      if (is_missing(v)) continue;
      csv << date << ',' << csv::quote(panel.assets()[i]) << ',' << format_shortest(v) << '\n';
    }
  }
  if (!csv) throw IoError("write failed for " + files.csv.string());

  json meta;
  meta["panel_id"] = panel.id();
  meta["assets"] = panel.assets();
  std::vector<std::string> dates;
  for (Month m : panel.dates()) dates.push_back(m.str());
  meta["date_span"] = panel.dates().empty() ? json(nullptr)
                                            : json{{"start", dates.front()}, {"end", dates.back()}};
  meta["dates"] = dates;
  meta["provenance"] = provenance_to_json(panel.provenance());
  std::ofstream out(files.meta, std::ios::binary);
  if (!out) throw IoError("cannot write " + files.meta.string());
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + files.meta.string());
  return files;
}

Panel load_panel(const fs::path& directory, std::string_view panel_id) {
  const fs::path meta_path = directory / (std::string(panel_id) + ".meta.json");
  const fs::path csv_path = directory / (std::string(panel_id) + ".csv");
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("missing file " + meta_path.string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }

  std::vector<Month> months;
  std::vector<std::string> assets;
  Provenance prov;
  std::string id;
  try {
    for (const auto& d : meta.at("dates")) months.push_back(Month::parse(d.get<std::string>()));
    assets = meta.at("assets").get<std::vector<std::string>>();
    prov = provenance_from_json(meta.at("provenance"));
    id = meta.at("panel_id").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  DateIndex dates(std::move(months));
  const std::size_t n = assets.size();
  std::unordered_map<std::string, std::size_t> asset_pos;
  for (std::size_t i = 0; i < n; ++i) asset_pos.emplace(assets[i], i);

  std::ifstream csv_in(csv_path, std::ios::binary);
  if (!csv_in) throw IoError("missing file " + csv_path.string());
  std::vector<double> values(dates.size() * n, kMissing);
  csv::Reader reader(csv_in, csv_path.string());
  if (reader.header() != std::vector<std::string>{"date", "asset", "value"}) {
    throw IoError(csv_path.string() + ": expected header date,asset,value");
  }
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() != 3) throw IoError(reader.where() + ": expected 3 fields");
    auto t = dates.find(Month::parse(fields[0]));
    auto a = asset_pos.find(fields[1]);
    if (!t || a == asset_pos.end()) {
      throw IoError(reader.where() + ": (" + fields[0] + ", " + fields[1] + ") is outside the metadata frame");
    }
    values[*t * n + a->second] = parse_double(fields[2]);
  }
  return Panel(std::move(dates), std::move(assets), std::move(values)).with_identity(std::move(id), std::move(prov));
}

Panel load_panel_path(const fs::path& path) {
  std::string name = path.filename().string();
  for (std::string_view suffix : {".meta.json", ".csv"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      name.resize(name.size() - suffix.size());
      break;
    }
  }
  return load_panel(path.parent_path().empty() ? fs::path(".") : path.parent_path(), name);
}

}  // namespace factorlab
