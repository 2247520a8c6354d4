#include "tlf/cli.h"

int main(int argc, char** argv) { return tlf::cli::run(argc, argv); }
