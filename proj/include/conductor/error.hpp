#pragma once

#include <stdexcept>
#include <string>

namespace conductor {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// An unknown task name is a planning defect, so it is retried like any parse failure.
class UnknownTaskError : public ParseError {
 public:
  explicit UnknownTaskError(std::string name)
      : ParseError("unknown task type: " + name), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class CycleError : public GraphError {
 public:
  using GraphError::GraphError;
};

class MissingResourceError : public Error {
 public:
  explicit MissingResourceError(int task_id)
      : Error("no resources recorded for task " + std::to_string(task_id)), task_id_(task_id) {}
  int task_id() const noexcept { return task_id_; }

 private:
  int task_id_;
};

class KindMismatchError : public Error {
 public:
  KindMismatchError(int task_id, std::string kind)
      : Error("task " + std::to_string(task_id) + " produced no " + kind + " resource"),
        task_id_(task_id),
        kind_(std::move(kind)) {}
  int task_id() const noexcept { return task_id_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  int task_id_;
  std::string kind_;
};

class UnboundSlotError : public Error {
 public:
  explicit UnboundSlotError(std::string slot)
      : Error("template slot has no binding: " + slot), slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DuplicateModelError : public Error {
 public:
  explicit DuplicateModelError(const std::string& model_id)
      : Error("duplicate model id: " + model_id) {}
};

class NoModelError : public Error {
 public:
  explicit NoModelError(const std::string& task_type)
      : Error("no model supports task type: " + task_type) {}
};

class CategoryError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class UnknownSession : public Error {
 public:
  using Error::Error;
};

}  // namespace conductor
