#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tvtbip {

// Base class for every failure raised by the library. The CLI maps the
// concrete subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad configuration key, value or missing required setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateSpeechId : public Error {
 public:
  DuplicateSpeechId(int session, const std::string& id)
      : Error("duplicate speech_id '" + id + "' in session " +
              std::to_string(session)),
        session_(session), id_(id) {}
  int session() const noexcept { return session_; }
  const std::string& speech_id() const noexcept { return id_; }

 private:
  int session_;
  std::string id_;
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(int session)
      : Error("no speech survives filtering in session " +
              std::to_string(session)),
        session_(session) {}
  int session() const noexcept { return session_; }

 private:
  int session_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class Overflow : public Error {
 public:
  using Error::Error;
};

class NonFiniteRate : public Error {
 public:
  using Error::Error;
};

class NonPositiveParam : public Error {
 public:
  using Error::Error;
};

// Raised when an ELBO block (loglik, theta, beta, eta, x) is not finite.
class NonFinite : public Error {
 public:
  explicit NonFinite(const std::string& block)
      : Error("non-finite value in ELBO block '" + block + "'"), block_(block) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

class Diverged : public Error {
 public:
  Diverged(long iteration, const std::string& detail)
      : Error("fit diverged at iteration " + std::to_string(iteration) + ": " +
              detail),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

class TopicCountMismatch : public Error {
 public:
  using Error::Error;
};

class MissingParty : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class InsufficientOverlap : public Error {
 public:
  using Error::Error;
};

// Wraps a per-session failure inside fit_chain with the session index.
class SessionError : public Error {
 public:
  SessionError(int session, const std::string& what, bool diverged)
      : Error("session " + std::to_string(session) + ": " + what),
        session_(session), diverged_(diverged) {}
  int session() const noexcept { return session_; }
  bool diverged() const noexcept { return diverged_; }

 private:
  int session_;
  bool diverged_;
};

}  // namespace tvtbip
