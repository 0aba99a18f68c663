#include "factorlab/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>

#include "csv.hpp"
#include "factorlab/error.hpp"
#include "factorlab/panel_io.hpp"
#include "factorlab/transforms.hpp"

namespace factorlab::ingest {
namespace {

struct Cell {
  Month date;
  std::string asset;
  std::vector<double> values;
};

double parse_cell(const std::string& text, const csv::Reader& reader, const std::string& column) {
  if (text.empty() || text == "NA" || text == "NaN" || text == "nan") return kMissing;
  try {
    const double v = parse_double(text);
    if (!std::isfinite(v)) return kMissing;
    return v;
  } catch (const IoError&) {
    throw IoError(reader.where() + ": column '" + column + "' has invalid number '" + text + "'");
  }
}

Month parse_date(const std::string& text, const csv::Reader& reader) {
  try {
    return Month::parse(text);
  } catch (const IoError&) {
    throw IoError(reader.where() + ": invalid date '" + text + "', expected YYYY-MM");
  }
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

/// Reads keyed rows, rejecting malformed lines and duplicate keys.
std::vector<Cell> read_rows(std::istream& in, const std::string& source, const std::vector<std::string>& required,
                            std::vector<std::string>& value_columns) {
  csv::Reader reader(in, source);
  const auto& header = reader.header();
  if (header.size() < required.size() || !std::equal(required.begin(), required.end(), header.begin())) {
    std::string want;
    for (const auto& r : required) want += (want.empty() ? "" : ",") + r;
    throw IoError(source + ": header must start with " + want);
  }
  value_columns.assign(header.begin() + 2, header.end());
  std::vector<Cell> rows;
  std::set<std::pair<std::int32_t, std::string>> keys;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() != header.size()) {
      throw IoError(reader.where() + ": expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));
    }
    Cell cell;
    cell.date = parse_date(fields[0], reader);
    cell.asset = fields[1];
    if (cell.asset.empty()) throw IoError(reader.where() + ": empty asset_id");
    if (!keys.emplace(cell.date.ordinal(), cell.asset).second) {
      throw IoError(reader.where() + ": duplicate key (" + fields[0] + ", " + cell.asset + ")");
    }
    for (std::size_t c = 2; c < fields.size(); ++c) cell.values.push_back(parse_cell(fields[c], reader, header[c]));
    rows.push_back(std::move(cell));
  }
  return rows;
}

Frame frame_of(const std::vector<Cell>& rows) {
  std::set<Month> dates;
  std::set<std::string> assets;
  for (const auto& r : rows) {
    dates.insert(r.date);
    assets.insert(r.asset);
  }
  return Frame{DateIndex(std::vector<Month>(dates.begin(), dates.end())),
               std::vector<std::string>(assets.begin(), assets.end())};
}

}  // namespace

std::size_t IngestReport::total_removed() const {
  std::size_t n = 0;
  for (const auto& [name, count] : removed) n += count;
  return n;
}

const Panel& SourcePanels::get(std::string_view name) const {
  for (const auto& [key, panel] : panels) {
    if (key == name) return panel;
  }
  throw ValidationError("no source panel named '" + std::string(name) + "'");
}

Frame SourcePanels::frame() const {
  if (panels.empty()) return {};
  return Frame{panels.front().second.dates(), panels.front().second.assets()};
}

SourcePanels ingest_monthly(std::istream& in, const std::string& source) {
  std::vector<std::string> columns;
  const auto rows =
      read_rows(in, source, {"date", "asset_id", "ret", "cap", "capco", "exchange_nyse"}, columns);
  if (columns.size() != 4) throw IoError(source + ": monthly header must have exactly 6 columns");
  const Frame frame = frame_of(rows);
  const std::size_t n = frame.assets.size();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(frame.assets[i], i);

  const std::array<std::string, 4> names{"RET", "CAP", "CAPCO", "NYSE"};
  std::array<std::vector<double>, 4> grids;
  for (auto& g : grids) g.assign(frame.dates.size() * n, kMissing);

  SourcePanels out;
  for (const auto& name : names) out.report.removed[name] = 0;
  for (const auto& r : rows) {
    const std::size_t k = *frame.dates.find(r.date) * n + pos.at(r.asset);
    double ret = r.values[0];
    double cap = r.values[1];
    double capco = r.values[2];
    const double nyse = r.values[3];
    if (!is_missing(ret) && ret <= -1.0) {
      ret = kMissing;
      ++out.report.removed["RET"];
    }
    if (!is_missing(cap) && cap < 0.0) {
      cap = kMissing;
      ++out.report.removed["CAP"];
    }
    if (!is_missing(capco) && capco < 0.0) {
      capco = kMissing;
      ++out.report.removed["CAPCO"];
    }
    if (!is_missing(nyse) && nyse != 0.0 && nyse != 1.0) {
      throw IoError(source + ": exchange_nyse must be 0 or 1 for (" + r.date.str() + ", " + r.asset + ")");
    }
    grids[0][k] = ret;
    grids[1][k] = cap;
    grids[2][k] = capco;
    grids[3][k] = nyse;
  }
  out.report.rows = rows.size();
  for (std::size_t c = 0; c < names.size(); ++c) {
    out.panels.emplace_back(names[c], Panel(frame.dates, frame.assets, std::move(grids[c])));
  }
  return out;
}

SourcePanels ingest_monthly_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return ingest_monthly(in, path.string());
}

SourcePanels ingest_annual(std::istream& in, const std::string& source, const Frame* frame) {
  std::vector<std::string> columns;
  const auto rows = read_rows(in, source, {"fiscal_end", "asset_id", "seq", "pstkrv", "pstkl", "pstk"}, columns);
  const Frame own = frame ? *frame : frame_of(rows);
  const std::size_t n = own.assets.size();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(own.assets[i], i);

  std::vector<std::vector<double>> grids(columns.size(), std::vector<double>(own.dates.size() * n, kMissing));
  SourcePanels out;
  std::set<std::string> unknown_assets;
  std::size_t outside = 0;
  for (const auto& r : rows) {
    const auto t = own.dates.find(r.date);
    const auto a = pos.find(r.asset);
    if (a == pos.end()) {
      unknown_assets.insert(r.asset);
      continue;
    }
    if (!t) {
      ++outside;
      continue;
    }
    for (std::size_t c = 0; c < columns.size(); ++c) grids[c][*t * n + a->second] = r.values[c];
  }
  if (!unknown_assets.empty()) {
    out.report.warnings.push_back(std::to_string(unknown_assets.size()) +
                                  " annual asset id(s) absent from the monthly frame were dropped");
  }
  if (outside > 0) {
    out.report.warnings.push_back(std::to_string(outside) + " annual row(s) outside the monthly date range were dropped");
  }
  out.report.rows = rows.size();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.panels.emplace_back(upper(columns[c]), Panel(own.dates, own.assets, std::move(grids[c])));
  }
  return out;
}

SourcePanels ingest_annual_file(const std::filesystem::path& path, const Frame* frame) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return ingest_annual(in, path.string(), frame);
}

Panel book_equity(const Panel& seq, const Panel& pstkrv, const Panel& pstkl, const Panel& pstk) {
  const Alignment al = align({&seq, &pstkrv, &pstkl, &pstk});
  const std::size_t n = al.assets.size();
  std::vector<double> out(al.dates.size() * n, kMissing);
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = al.views[0](t, i);
      if (is_missing(s)) continue;
      double preferred = 0.0;
      for (std::size_t k = 1; k <= 3; ++k) {
        const double v = al.views[k](t, i);
        if (!is_missing(v)) {
          preferred = v;
          break;
        }
      }
      const double be = s - preferred;
      if (be > 0.0) out[t * n + i] = be;
    }
  }
  return Panel(al.dates, al.assets, std::move(out));
}

Panel book_to_market(const Panel& be, const Panel& capco) {
  const Alignment al = align({&be, &capco});
  const std::size_t n = al.assets.size();
  std::vector<double> december(al.dates.size() * n, kMissing);
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    const Month dec = al.dates[t];
    if (dec.month() != 12) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double cap = al.views[1](t, i);
      if (is_missing(cap) || cap <= 0.0) continue;
      double book = kMissing;
      for (int back = 0; back < 12 && is_missing(book); ++back) {
        const auto r = al.dates.find(dec - back);
        if (r) book = al.views[0](*r, i);
      }
      if (is_missing(book) || book <= 0.0) continue;
      december[t * n + i] = book / cap;
    }
  }
  const Panel dec_panel(al.dates, al.assets, std::move(december));
  return transforms::annual_to_monthly(dec_panel, 12, 6, 12);
}

std::map<std::string, std::string> register_sources(PanelRegistry& registry, const SourcePanels& sources,
                                                    const std::string& origin) {
  std::map<std::string, std::string> ids;
  for (const auto& [name, panel] : sources.panels) {
    ids[name] = registry.add_source(panel, name, {{"origin", origin}, {"column", name}});
  }
  return ids;
}

}  // namespace factorlab::ingest
