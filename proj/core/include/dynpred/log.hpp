#pragma once

#include <functional>
#include <string>

namespace dynpred {

// Warnings go to stderr unless a sink is installed (the CLI collects them
// into the run manifest, tests count them).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace dynpred
