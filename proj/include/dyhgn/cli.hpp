#pragma once

// Batch command line: generate, build-graph, train, evaluate, featurize,
// baseline, importance, export-embeddings.

#include <ostream>
#include <string>

namespace dyhgn::cli {

const char* version();

// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dyhgn::cli
