#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace letnet {

using WarningHandler = std::function<void(std::string_view)>;

// Emits a warning to the handler installed on the calling thread, or to
// stderr when none is installed.
void warn(std::string_view message);

// Installs a warning handler for the current thread for the lifetime of the
// guard. Guards nest; the previous handler is restored on destruction.
class ScopedWarningHandler {
   public:
    explicit ScopedWarningHandler(WarningHandler handler);
    ~ScopedWarningHandler();
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

   private:
    WarningHandler handler_;
    WarningHandler* previous_;
};

}  // namespace letnet
