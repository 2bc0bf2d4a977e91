#include "magiclens/cli.hpp"

int main(int argc, char** argv) { return magiclens::cli::run(argc, argv); }
