#ifndef QTAR_CLI_HPP
#define QTAR_CLI_HPP

namespace qtar {

// Command-line entry point: subcommands add-noise, denoise, benchmark,
// metrics, segment. Returns 0 on success, 1 on validation errors, 2 on
// I/O errors.
int run_cli(int argc, const char* const* argv);

}  // namespace qtar

#endif
