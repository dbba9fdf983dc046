#pragma once

namespace focus {

// Entry point behind the `focus` binary. Subcommands: synth, train, eval,
// infer, inspect-pca. Returns 0 on success, 1 on usage/config/runtime
// errors, 3 when training aborts on a non-finite loss.
int cli_main(int argc, char** argv);

}  // namespace focus
