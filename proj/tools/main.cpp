#include "qtar/cli.hpp"

int main(int argc, char** argv) {
    return qtar::run_cli(argc, argv);
}
