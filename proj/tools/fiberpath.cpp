#include "fiberpath/cli.hpp"

int main(int argc, char** argv)
{
    return fiberpath::cli::run(argc, argv);
}
