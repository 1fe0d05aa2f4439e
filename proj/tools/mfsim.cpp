#include "mfsim/cli.hpp"

int main(int argc, char** argv) {
    const auto invocation = mfsim::cli::parse_args(argc, argv);
    return mfsim::cli::dispatch(invocation);
}
