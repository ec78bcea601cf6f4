// Copyright 2026 The SMT Authors.
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

#include <stdexcept>
#include <string>

namespace smt {

/// Base class of every error raised by the library.
///
/// `is_user_error()` separates bad input (files, parameters, shapes) from
/// failures that indicate a bug or numerical breakdown; the CLI maps the two
/// onto exit codes 1 and 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_user_error() const { return true; }
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a result that violates a numerical invariant,
/// e.g. an inverse FFT whose imaginary residue is too large.
class NumericalError : public Error {
 public:
  using Error::Error;
  bool is_user_error() const override { return false; }
};

/// Training loss became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
  bool is_user_error() const override { return false; }
};

}  // namespace smt
