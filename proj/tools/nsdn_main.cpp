#include <iostream>

#include "nsdn/app.hpp"

int main(int argc, char** argv) { return nsdn::run_cli(argc, argv, std::cout, std::cerr); }
