#pragma once

#include <string>
#include <vector>

#include "ihid/geo.hpp"

namespace ihid {

struct ParseResult {
  std::vector<Trajectory> trajectories;
  std::size_t dropped_short = 0;  // trajectories discarded for having < 2 points
};

// CSV ingestion. Header `traj_id,t,lat,lon` with an optional trailing `label`
// column. `t` is integer epoch seconds or ISO-8601 (YYYY-MM-DDTHH:MM:SS[Z]).
// Rows are grouped by traj_id and sorted by t; consecutive duplicate positions
// are collapsed. Malformed or out-of-bounds rows raise ParseError with the
// line number.
ParseResult parse_trajectories_csv(const std::string& path);

// Inverse of the ingestion format. Writes the label column iff any trajectory
// has a label other than unknown.
void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs);

}  // namespace ihid
