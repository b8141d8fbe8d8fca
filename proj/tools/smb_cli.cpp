#include "smb/harness.hpp"

int main(int argc, char** argv) { return smb::cli_main(argc, argv); }
