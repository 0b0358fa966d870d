#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mext {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a covariance kernel yields a matrix that is not PSD beyond jitter.
class InvalidKernel : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

// Collects every violated precondition so callers can report them together.
class Violations {
 public:
  void add(std::string msg) { msgs_.push_back(std::move(msg)); }
  void check(bool ok, const std::string& msg) {
    if (!ok) add(msg);
  }
  bool empty() const { return msgs_.empty(); }
  const std::vector<std::string>& messages() const { return msgs_; }

  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < msgs_.size(); ++i) {
      if (i) out += "; ";
      out += msgs_[i];
    }
    return out;
  }

  void throw_if_any(const std::string& ctx) const {
    if (!msgs_.empty()) throw Error(ctx + ": " + joined());
  }

 private:
  std::vector<std::string> msgs_;
};

}  // namespace mext
