#pragma once

#include <stdexcept>
#include <string>

namespace spb {

/// Base of every error raised by the library. Violations found by
/// validate_sample() are returned as data instead.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSON/CSV syntax, non-numeric cells, NaN).
class FormatError : public Error
{
public:
  using Error::Error;
};

// Well-formed input whose shape is wrong (ragged arrays, duplicate ids).
class StructuralError : public Error
{
public:
  using Error::Error;
};

class BoundsError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

// Operation precondition failed on otherwise valid data.
class PreconditionError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

} // namespace spb
