//*****************************************************************************
// Copyright 2026 The flowgrad Authors
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
//*****************************************************************************
#pragma once

#include <stdexcept>
#include <string>

namespace flowgrad {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// llm_backend
class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable = true)
        : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class ReplayMiss : public Error {
public:
    explicit ReplayMiss(std::string key)
        : Error("replay miss: no recorded response for request " + key), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Raised by extract_json. Both carry the raw model content so callers can re-ask.
class JsonExtractionError : public Error {
public:
    JsonExtractionError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class NoJsonFound : public JsonExtractionError {
public:
    explicit NoJsonFound(std::string raw)
        : JsonExtractionError("no JSON found in model output", std::move(raw)) {}
};

class MalformedJson : public JsonExtractionError {
public:
    MalformedJson(const std::string& detail, std::string raw)
        : JsonExtractionError("malformed JSON in model output: " + detail, std::move(raw)) {}
};

/// complete_json gave up after the repair attempts.
class JsonUnavailable : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// tools
class EmptyCorpus : public Error {
public:
    EmptyCorpus() : Error("corpus is empty") {}
};

class UnknownTool : public Error {
public:
    explicit UnknownTool(const std::string& name) : Error("unknown tool: " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

// gradient_engine / optimizer
class GradientUnavailable : public Error {
public:
    using Error::Error;
};

class PlanInvalid : public Error {
public:
    using Error::Error;
};

class InitFailed : public Error {
public:
    using Error::Error;
};

class BootstrapFailed : public Error {
public:
    using Error::Error;
};

// evaluation / run_store / config
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& detail)
        : Error(path + ":" + std::to_string(line) + ": " + detail), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id) : Error("duplicate sample id: " + id), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class SchemaVersionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidState : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace flowgrad
