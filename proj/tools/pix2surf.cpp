#include "pix2surf/cli.hpp"

int main(int argc, char** argv) { return pix2surf::cli::run(argc, argv); }
