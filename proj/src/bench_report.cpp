#include "pqscan/bench_report.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pqscan/error.hpp"

namespace pqscan {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& cell, std::uint64_t offset) {
  T v{};
  const auto* end = cell.data() + cell.size();
  const auto [p, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || p != end) throw FormatError("bench csv: bad number '" + cell + "'", offset);
  return v;
}

}  // namespace

void BenchReport::write_csv(std::ostream& out) const {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.m << ',' << r.b << ',' << r.K << ',' << r.ma << ',' << r.r << ',' << r.r2
        << ',' << fmt(r.recall) << ',' << fmt(r.mean_ms) << ',' << fmt(r.median_ms) << ','
        << fmt(r.mcodes_per_s) << ',';
    if (r.pruned_fraction) out << fmt(*r.pruned_fraction);
    out << '\n';
  }
}

void BenchReport::write_recall_csv(std::ostream& out) const {
  out << kRecallHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.m << ',' << r.b << ',' << r.r << ',' << fmt(r.recall) << ',' << fmt(r.mean_ms)
        << '\n';
  }
}

BenchReport BenchReport::parse_csv(std::istream& in) {
  BenchReport rep;
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || line != kHeader) throw FormatError("bench csv: missing header", 0);
  offset += line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto c = split(line);
    if (c.size() != 12) throw FormatError("bench csv: expected 12 columns", offset);
    BenchRow r;
    r.method = c[0];
    r.m = parse_number<std::size_t>(c[1], offset);
    r.b = parse_number<std::size_t>(c[2], offset);
    r.K = parse_number<std::size_t>(c[3], offset);
    r.ma = parse_number<std::size_t>(c[4], offset);
    r.r = parse_number<std::size_t>(c[5], offset);
    r.r2 = parse_number<std::size_t>(c[6], offset);
    r.recall = parse_number<double>(c[7], offset);
    r.mean_ms = parse_number<double>(c[8], offset);
    r.median_ms = parse_number<double>(c[9], offset);
    r.mcodes_per_s = parse_number<double>(c[10], offset);
    if (!c[11].empty()) r.pruned_fraction = parse_number<double>(c[11], offset);
    rep.rows.push_back(std::move(r));
    offset += line.size() + 1;
  }
  return rep;
}

Timing summarize_times(std::vector<double> ms) {
  Timing t;
  if (ms.empty()) return t;
  t.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t h = ms.size() / 2;
  t.median_ms = ms.size() % 2 ? ms[h] : 0.5 * (ms[h - 1] + ms[h]);
  return t;
}

}  // namespace pqscan
