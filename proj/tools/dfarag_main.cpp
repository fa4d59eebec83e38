#include "dfarag/cli.hpp"

int main(int argc, char** argv)
{
    return dfarag::cli::run(argc, argv);
}
