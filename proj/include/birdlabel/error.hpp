// Copyright 2026 The birdlabel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace birdlabel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input bytes do not follow the expected format.
class FormatError : public Error {
public:
    using Error::Error;
};

namespace log {

enum class Level { debug, info, warning, error };

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
inline std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s;
    return s;
}
inline Level& threshold() {
    static Level l = Level::warning;
    return l;
}
}  // namespace detail

/// Replace the process-wide sink. An empty sink restores stderr output.
inline void set_sink(Sink s) {
    std::lock_guard lock(detail::sink_mutex());
    detail::sink() = std::move(s);
}

inline void set_level(Level l) {
    std::lock_guard lock(detail::sink_mutex());
    detail::threshold() = l;
}

inline void write(Level l, const std::string& msg) {
    std::lock_guard lock(detail::sink_mutex());
    if (detail::sink()) {
        detail::sink()(l, msg);
        return;
    }
    if (l < detail::threshold()) return;
    static constexpr const char* names[] = {"DEBUG", "INFO", "WARNING", "ERROR"};
    std::fputs(names[static_cast<int>(l)], stderr);
    std::fputs(": ", stderr);
    std::fputs(msg.c_str(), stderr);
    std::fputc('\n', stderr);
}

inline void info(const std::string& msg) { write(Level::info, msg); }
inline void warn(const std::string& msg) { write(Level::warning, msg); }
inline void error(const std::string& msg) { write(Level::error, msg); }

}  // namespace log
}  // namespace birdlabel
