#include "vf/cli.hpp"

int main(int argc, char** argv) { return vf::dispatch(argc, argv); }
