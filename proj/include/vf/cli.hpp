#ifndef VF_CLI_HPP
#define VF_CLI_HPP

#include <string>
#include <vector>

namespace vf {

// Entry point shared by the voxelfill binary and the CLI tests. Routes to
// synth-data | gen-masks | augment | train | infer | eval | report.
// Returns 0 on success, 1 on usage errors, 2 on runtime errors; diagnostics
// go to stderr.
int dispatch(int argc, const char* const* argv);

// Convenience form; `args` excludes the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace vf

#endif  // VF_CLI_HPP
