#include "qdesign/cli.hpp"

int main(int argc, char** argv)
{
    return qdesign::cli::run_cli(argc, argv);
}
