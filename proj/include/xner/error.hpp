#ifndef XNER_ERROR_HPP_
#define XNER_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace xner {

// Exit codes of the command-line tools map one-to-one onto these classes.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad configuration, bad arguments, or inconsistent API use.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// Malformed input files: CoNLL, embeddings, checkpoints.
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Non-finite values during training or gradient checking.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

}  // namespace xner

#endif  // XNER_ERROR_HPP_
