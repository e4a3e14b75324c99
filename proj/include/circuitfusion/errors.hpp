#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "circuitfusion/graph.hpp"

namespace cfusion {

/// Base of every error raised by the library. `stage()` names the pipeline
/// stage so the CLI can report where a run failed.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(what), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t position, std::string expected, const std::string& detail);
    std::size_t position;
    std::string expected;
};

class UnsupportedConstruct : public Error {
public:
    UnsupportedConstruct(std::string construct, std::size_t position);
    std::string construct;
    std::size_t position;
};

class UndeclaredIdentifier : public Error {
public:
    explicit UndeclaredIdentifier(std::string name);
    std::string name;
};

class CombinationalLoop : public Error {
public:
    explicit CombinationalLoop(std::vector<std::string> cycle);
    std::vector<std::string> cycle;
};

class WidthMismatch : public Error {
public:
    WidthMismatch(NodeId node, const std::string& detail);
    NodeId node;
};

class DanglingReference : public Error {
public:
    explicit DanglingReference(const std::string& detail) : Error("slice", "dangling reference: " + detail) {}
};

class NotARegister : public Error {
public:
    explicit NotARegister(NodeId id)
        : Error("split", "node " + std::to_string(id) + " is not a register"), node(id) {}
    NodeId node;
};

class RegisterNotFound : public Error {
public:
    explicit RegisterNotFound(std::string reg)
        : Error("split", "register not found in netlist: " + reg), name(std::move(reg)) {}
    std::string name;
};

class BudgetExceeded : public Error {
public:
    BudgetExceeded(int bits, int budget)
        : Error("augment", "boundary has " + std::to_string(bits) + " bits, exhaustive budget is " +
                               std::to_string(budget)) {}
};

class MissingAssignment : public Error {
public:
    explicit MissingAssignment(NodeId id)
        : Error("augment", "no value for boundary node " + std::to_string(id)), node(id) {}
    NodeId node;
};

class BoundaryMismatch : public Error {
public:
    explicit BoundaryMismatch(const std::string& detail) : Error("augment", "boundary mismatch: " + detail) {}
};

class IoError : public Error {
public:
    IoError(std::string stage, const std::string& detail) : Error(std::move(stage), "I/O error: " + detail) {}
};

class HttpError : public Error {
public:
    explicit HttpError(int status)
        : Error("summarize", "HTTP error status " + std::to_string(status)), status(status) {}
    int status;
};

class Timeout : public Error {
public:
    explicit Timeout(const std::string& detail) : Error("summarize", "timeout: " + detail) {}
};

class MalformedResponse : public Error {
public:
    explicit MalformedResponse(const std::string& detail) : Error("summarize", "malformed response: " + detail) {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& detail) : Error("pretrain", "shape mismatch: " + detail) {}
};

class EmptyNegatives : public Error {
public:
    EmptyNegatives() : Error("pretrain", "contrastive batch has no negatives") {}
};

class Diverged : public Error {
public:
    Diverged(int step, const std::string& report)
        : Error("pretrain", "non-finite loss at step " + std::to_string(step) + ": " + report), step(step) {}
    int step;
};

class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id) : Error("index", "duplicate store id: " + id) {}
};

class EmptyStore : public Error {
public:
    EmptyStore() : Error("retrieve", "vector store is empty") {}
};

class MetricMissing : public Error {
public:
    explicit MetricMissing(const std::string& detail) : Error("predict", "metric missing: " + detail) {}
};

class EmptyDesign : public Error {
public:
    EmptyDesign() : Error("finetune", "design has no sub-circuits") {}
};

class ZeroLabel : public Error {
public:
    explicit ZeroLabel(std::size_t index)
        : Error("evaluate", "zero label at index " + std::to_string(index)), index(index) {}
    std::size_t index;
};

class ZeroVariance : public Error {
public:
    ZeroVariance() : Error("evaluate", "zero variance in correlation input") {}
};

}  // namespace cfusion
