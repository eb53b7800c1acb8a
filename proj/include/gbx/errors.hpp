// Copyright 2026 The Graybox Control Authors
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

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gbx {

/// Bad argument to a pure function (shape, Hermiticity, range).
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Infeasible or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Integrator or optimizer produced an unusable result.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Config-hash mismatch inside a single file.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Model file or dataset produced under a different configuration.
struct CompatibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shape in a model file disagrees with the model configuration.
struct ShapeError : std::runtime_error {
    ShapeError(const std::string& tensor, const std::string& what)
        : std::runtime_error("tensor '" + tensor + "': " + what), tensor_(tensor) {}
    const std::string& tensor() const { return tensor_; }

private:
    std::string tensor_;
};

struct TrainingError : std::runtime_error {
    TrainingError(const std::string& what, long iteration, long batch_index)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ", batch " +
                             std::to_string(batch_index) + ")"),
          iteration_(iteration), batch_index_(batch_index) {}
    long iteration() const { return iteration_; }
    long batch_index() const { return batch_index_; }

private:
    long iteration_;
    long batch_index_;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A run directory lacks files a command needs.
struct MissingArtifacts : std::runtime_error {
    explicit MissingArtifacts(std::vector<std::string> files)
        : std::runtime_error("missing artifacts: " + join(files)), files_(std::move(files)) {}
    const std::vector<std::string>& files() const { return files_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (const auto& f : v) s += (s.empty() ? "" : ", ") + f;
        return s;
    }
    std::vector<std::string> files_;
};

}  // namespace gbx
