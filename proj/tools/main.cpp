#include "cli_app.hpp"

int main(int argc, char** argv) { return headgate::cli::run(argc, argv); }
