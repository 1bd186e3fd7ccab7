#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sce/atlas.hpp"

namespace sce {

// Manifold fixture text format, one directive per line, '#' starts a comment:
//
//   manifold <name>
//   dim <1|2>
//   unit_volume <0|1>
//   chart <id>
//     box <lo0> <hi0> [<lo1> <hi1>]      numbers, or multiples of pi such as 2pi
//     nodes <n0> [<n1>]
//     periodic <0|1> [<0|1>]
//     metric <flat|sphere-polar|exp-warped-1d|scaled-flat <c>>
//     axis <x> <y> <z>                   polar embedding about this axis (sphere)
//     order <2|4>
//   end
//   override <chart id> <file>           sampled metric: h00 [h01 h11] blocks of
//                                        little-endian doubles, row-major
//
// Throws FixtureParseError with the offending line number.
Atlas parse_fixture(const std::string& text, const std::filesystem::path& base_dir = {});

// Built-in name (see builtin_fixture_names) or path to a fixture file.
Atlas load_fixture(const std::string& name_or_path);

std::vector<std::string> builtin_fixture_names();
std::string builtin_fixture_text(const std::string& name);

// Raw little-endian doubles, as used by override blocks.
std::vector<double> read_f64_le(const std::filesystem::path& file);
void write_f64_le(const std::filesystem::path& file, const std::vector<double>& values);

}  // namespace sce
