#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "inertia/model.hpp"

namespace inertia::cli {

// Test hook: applied to analytic gradients inside grad-check before they are
// compared (a negative control for the checker itself).
using GradientTamper = std::function<void(model::Gradients&)>;

struct AppHooks {
  GradientTamper tamper_gradients;
};

// Runs one CLI invocation. args excludes the program name. Returns the
// process exit status: 0 ok, 2 config/input, 3 numeric, 4 provider.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const AppHooks& hooks = {});

}  // namespace inertia::cli
