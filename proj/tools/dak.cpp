// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "dak/cli.hpp"

int main(int argc, char** argv) { return dak::run_cli(argc, argv, std::cout, std::cerr); }
