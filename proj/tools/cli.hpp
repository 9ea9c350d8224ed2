#pragma once

#include "lfiw/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lfiw::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2 };

/// Subcommand name, resolved settings, and where results went. Written as
/// "key = value" lines so the file can be passed back through --config.
struct RunManifest {
  std::string subcommand;
  KeyValues settings;
  std::filesystem::path out_dir;

  void write(std::ostream& out) const;
};

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Entry point shared by the lfiw binary and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lfiw::cli
