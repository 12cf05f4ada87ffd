#include "labctl_app.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return vlab::labctl::main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
