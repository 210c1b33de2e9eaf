// Copyright 2026 The CMCD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMCD_ERROR_H_
#define CMCD_ERROR_H_

#include <stdexcept>
#include <string>

namespace cmcd {

// Base of every error raised by the library. The CLI maps these to exit
// code 2 (data/config error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or dimension contracts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (empty input, bad range, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        message_(what),
        line_(line) {}
  std::size_t line() const { return line_; }
  // The message without the line suffix.
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

}  // namespace cmcd

#endif  // CMCD_ERROR_H_
