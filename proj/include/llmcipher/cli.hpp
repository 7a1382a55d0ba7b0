#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace llmcipher::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kNumeric = 3,
};

/// Parses `args` (without the program name) and runs one subcommand:
/// ingest | split | train-mlp | train-cknn | fit-knn | classify | attribute |
/// perturb | evaluate | export-features.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace llmcipher::cli
