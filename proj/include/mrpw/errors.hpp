// Copyright (C) 2026 the mrpweights authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MRPW_ERRORS_HPP_
#define MRPW_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mrpw {

// Base class for all library errors. Messages are meant to be actionable:
// they name the offending row/column/value where one exists.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data (unknown category level, bad column,
// unparseable number).
class SchemaError : public Error {
  public:
    using Error::Error;
};

// Structurally valid input that cannot be processed (e.g. an empty sample).
class InputError : public Error {
  public:
    using Error::Error;
};

// Invalid model specification (duplicate terms, unknown variables).
class SpecError : public Error {
  public:
    using Error::Error;
};

// A value outside its mathematical domain (empty cell-id set, non-positive
// scale parameter, inclusion probability outside (0,1]).
class DomainError : public Error {
  public:
    using Error::Error;
};

// A cross-module contract violation (missing draw columns, frame mismatch).
class ContractError : public Error {
  public:
    using Error::Error;
};

// A calibration problem with no feasible solution (raking margin with
// positive target but zero sample mass).
class InfeasibleError : public Error {
  public:
    using Error::Error;
};

// Invalid simulation scenario (coefficient/level mismatch, bad counts).
class ScenarioError : public Error {
  public:
    using Error::Error;
};

// A requested estimate cannot be formed (no sample units in the domain).
class EstimationError : public Error {
  public:
    using Error::Error;
};

}  // namespace mrpw

#endif  // MRPW_ERRORS_HPP_
