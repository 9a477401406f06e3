#pragma once

#include <functional>
#include <string_view>

namespace sedn {

using WarningSink = std::function<void(std::string_view)>;

/// Non-fatal diagnostics (dropped stacks, tied architecture weights, ...).
/// Written to stderr unless a sink is installed.
void warn(std::string_view message);
/// Installs `sink` and returns the previous one; an empty sink restores stderr.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace sedn
