#include "letnet/diagnostics.hpp"

#include <iostream>

namespace letnet {

namespace {
thread_local WarningHandler* current_handler = nullptr;
}

void warn(std::string_view message) {
    if (current_handler != nullptr && *current_handler) {
        (*current_handler)(message);
        return;
    }
    std::cerr << "warning: " << message << '\n';
}

ScopedWarningHandler::ScopedWarningHandler(WarningHandler handler)
    : handler_(std::move(handler)), previous_(current_handler) {
    current_handler = &handler_;
}

ScopedWarningHandler::~ScopedWarningHandler() { current_handler = previous_; }

}  // namespace letnet
