#ifndef SPECDETECT_ERROR_H_
#define SPECDETECT_ERROR_H_

#include <stdexcept>
#include <string>

namespace specdetect {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape or dimension contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument is outside the operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

// A text file (protocol, score file, config) has a malformed line.
class ParseError : public Error {
 public:
  ParseError(std::string file, int line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

}  // namespace specdetect

#endif  // SPECDETECT_ERROR_H_
