#pragma once

namespace srot {

// Entry point used by tools/srot_cli.cpp and by the test suite.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
int cli_main(int argc, const char* const* argv);

}  // namespace srot
