#include "cli_app.hpp"

int main(int argc, char** argv) { return bfuse::cli::run(argc, argv); }
