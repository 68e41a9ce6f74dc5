#include "ihid/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "ihid/common.hpp"

namespace ihid {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_timestamp(const std::string& raw, std::size_t line_no) {
  const std::string s = trim(raw);
  if (s.empty()) throw ParseError("empty timestamp", line_no);
  // ISO-8601: YYYY-MM-DDTHH:MM:SS with optional trailing Z.
  if (s.size() >= 19 && s[4] == '-' && s[7] == '-' && (s[10] == 'T' || s[10] == ' ')) {
    std::tm tm{};
    int y, mo, d, h, mi, sec;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%*c%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &sec) != 6)
      throw ParseError("bad ISO-8601 timestamp: " + s, line_no);
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = sec;
    const time_t t = timegm(&tm);
    if (t == static_cast<time_t>(-1)) throw ParseError("bad ISO-8601 timestamp: " + s, line_no);
    return static_cast<double>(t);
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad timestamp: " + s, line_no);
  }
}

double parse_coord(const std::string& raw, double lo, double hi, const char* what,
                   std::size_t line_no) {
  const std::string s = trim(raw);
  double v;
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + ": " + s, line_no);
  }
  if (!std::isfinite(v) || v < lo || v > hi)
    throw ParseError(std::string(what) + " out of range: " + s, line_no);
  return v;
}

}  // namespace

ParseResult parse_trajectories_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path);
  // Strip a UTF-8 BOM if present.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line = line.substr(3);

  const auto header = split_csv_line(trim(line));
  const bool has_label = header.size() == 5 && trim(header[4]) == "label";
  if (!(header.size() >= 4 && trim(header[0]) == "traj_id" && trim(header[1]) == "t" &&
        trim(header[2]) == "lat" && trim(header[3]) == "lon" &&
        (header.size() == 4 || has_label)))
    throw ParseError("expected header traj_id,t,lat,lon[,label]", 1);

  struct Row {
    double t;
    GeoPoint p;
    Label label;
    std::size_t order;  // file order, tie-break for equal timestamps
  };
  std::map<std::string, std::vector<Row>> by_id;
  std::vector<std::string> id_order;

  std::size_t line_no = 1;
  std::size_t order = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string tl = trim(line);
    if (tl.empty()) continue;
    const auto fields = split_csv_line(tl);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    Row r;
    r.t = parse_timestamp(fields[1], line_no);
    r.p.lat = parse_coord(fields[2], -90.0, 90.0, "lat", line_no);
    r.p.lon = parse_coord(fields[3], -180.0, 180.0, "lon", line_no);
    r.p.t = r.t;
    r.label = has_label ? label_from_string(trim(fields[4])) : Label::unknown;
    r.order = order++;
    const std::string id = trim(fields[0]);
    if (id.empty()) throw ParseError("empty traj_id", line_no);
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) id_order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (by_id.empty()) throw ParseError("no data rows in " + path);

  ParseResult res;
  for (const auto& id : id_order) {
    auto& rows = by_id[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.t != b.t ? a.t < b.t : a.order < b.order;
    });
    Trajectory traj;
    traj.id = id;
    traj.label = rows.front().label;
    for (const auto& r : rows) {
      if (!traj.points.empty() && traj.points.back().same_position(r.p)) continue;
      traj.points.push_back(r.p);
    }
    if (traj.points.size() < 2) {
      ++res.dropped_short;
      continue;
    }
    res.trajectories.push_back(std::move(traj));
  }
  return res;
}

void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  const bool with_label =
      std::any_of(trajs.begin(), trajs.end(), [](const Trajectory& t) {
        return t.label != Label::unknown;
      });
  out << (with_label ? "traj_id,t,lat,lon,label\n" : "traj_id,t,lat,lon\n");
  out.precision(12);
  for (const auto& traj : trajs) {
    double synth_t = 0.0;
    for (const auto& p : traj.points) {
      const double t = p.t.value_or(synth_t);
      out << traj.id << ',' << static_cast<long long>(std::llround(t)) << ',' << p.lat << ','
          << p.lon;
      if (with_label) out << ',' << label_to_string(traj.label);
      out << '\n';
      synth_t = t + 1.0;
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace ihid
