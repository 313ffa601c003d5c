#include <arcprobit/cli.hpp>

int main(int argc, char** argv) { return arcprobit::cli::main(argc, argv); }
