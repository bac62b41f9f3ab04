// Error taxonomy shared by all modules. Everything derives from pdgait::Error
// so callers can catch the whole family or a specific failure.
#pragma once

#include <stdexcept>
#include <string>

namespace pdgait {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// vgrf_data
class MalformedRow : public Error {
 public:
  using Error::Error;
};
class NonMonotoneTime : public Error {
 public:
  using Error::Error;
};
class NegativeForce : public Error {
 public:
  using Error::Error;
};
class UnknownSubject : public Error {
 public:
  using Error::Error;
};
class EmptyDataset : public Error {
 public:
  using Error::Error;
};
class OutOfRange : public Error {
 public:
  using Error::Error;
};

// windowing
class TooFewSubjects : public Error {
 public:
  using Error::Error;
};

// nn / model
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class MissingForwardCache : public Error {
 public:
  using Error::Error;
};
class VersionMismatch : public Error {
 public:
  using Error::Error;
};
class ManifestMismatch : public Error {
 public:
  using Error::Error;
};
class CorruptFile : public Error {
 public:
  using Error::Error;
};

// training / evaluation
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};
class SubjectLeakage : public Error {
 public:
  using Error::Error;
};
class EmptyPredictionSet : public Error {
 public:
  using Error::Error;
};

// configuration / manifests
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdgait
