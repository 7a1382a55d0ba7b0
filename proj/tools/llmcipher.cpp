#include "llmcipher/cli.hpp"

int main(int argc, char** argv) { return llmcipher::cli::main(argc, argv); }
