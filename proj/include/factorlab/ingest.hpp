#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "factorlab/panel.hpp"
#include "factorlab/registry.hpp"

namespace factorlab::ingest {

/// Rows read and anomalous values removed during ingestion.
struct IngestReport {
  std::size_t rows = 0;
  std::map<std::string, std::size_t> removed;  // panel name -> cells screened out
  std::vector<std::string> warnings;

  std::size_t total_removed() const;
};

/// Date/asset frame shared by every panel of one data set.
struct Frame {
  DateIndex dates;
  std::vector<std::string> assets;
};

/// Named source panels in a fixed order.
struct SourcePanels {
  std::vector<std::pair<std::string, Panel>> panels;
  IngestReport report;

  const Panel& get(std::string_view name) const;
  Frame frame() const;
};

/// Header `date,asset_id,ret,cap,capco,exchange_nyse`. Produces RET, CAP,
/// CAPCO and NYSE on a common frame (sorted asset ids, observed months).
/// Negative cap/capco and returns <= -1 become missing and are counted.
SourcePanels ingest_monthly(std::istream& in, const std::string& source = "monthly.csv");
SourcePanels ingest_monthly_file(const std::filesystem::path& path);

/// Header `fiscal_end,asset_id,seq,pstkrv,pstkl,pstk[,extras...]`. One panel
/// per column (upper-cased name), value placed at its fiscal-end month. When
/// `frame` is given, panels use it and rows outside it are dropped with a
/// warning.
SourcePanels ingest_annual(std::istream& in, const std::string& source = "annual.csv", const Frame* frame = nullptr);
SourcePanels ingest_annual_file(const std::filesystem::path& path, const Frame* frame = nullptr);

/// seq - coalesce(pstkrv, pstkl, pstk, 0); missing seq or BE <= 0 gives missing.
Panel book_equity(const Panel& seq, const Panel& pstkrv, const Panel& pstkl, const Panel& pstk);

/// December BE (latest fiscal end within the 12 months ending December)
/// over December CAPCO, usable from the following June for 12 months.
Panel book_to_market(const Panel& be, const Panel& capco);

/// Registers every panel of `sources` under its own name.
std::map<std::string, std::string> register_sources(PanelRegistry& registry, const SourcePanels& sources,
                                                    const std::string& origin);

}  // namespace factorlab::ingest
