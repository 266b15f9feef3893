#pragma once

namespace docnmt::cli {

// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical failure.
int run(int argc, char** argv);

}  // namespace docnmt::cli
