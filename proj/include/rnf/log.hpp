#pragma once

#include <functional>
#include <string>

namespace rnf {

using WarningSink = std::function<void(const std::string&)>;

// Emits a non-fatal diagnostic. Default sink writes "warning: ..." to stderr.
void warn(const std::string& message);

// Replaces the sink and returns the previous one. Passing an empty function restores the default.
WarningSink set_warning_sink(WarningSink sink);

} // namespace rnf
