// include/iqstream/logging.hpp

// Copyright 2026 The iqstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IQSTREAM_LOGGING_HPP_
#define IQSTREAM_LOGGING_HPP_

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace iqstream {
namespace log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

// Verbosity comes from IQSTREAM_LOG={error,info,debug}; default info.
inline Level level() {
  static Level lvl = [] {
    const char* env = std::getenv("IQSTREAM_LOG");
    if (env == nullptr) return Level::kInfo;
    const std::string v(env);
    if (v == "error") return Level::kError;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return lvl;
}

inline void emit(Level lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(level())) return;
  const char* tag = lvl == Level::kError ? "E" : (lvl == Level::kInfo ? "I" : "D");
  std::cerr << "[iqstream " << tag << "] " << msg << "\n";
}

inline void error(const std::string& msg) { emit(Level::kError, msg); }
inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void debug(const std::string& msg) { emit(Level::kDebug, msg); }

}  // namespace log
}  // namespace iqstream

#endif  // IQSTREAM_LOGGING_HPP_
