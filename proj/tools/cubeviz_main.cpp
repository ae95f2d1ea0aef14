#include <cubeviz/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return cubeviz::run_cli(argc, argv, std::cout, std::cerr);
}
