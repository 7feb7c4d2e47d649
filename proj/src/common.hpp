#ifndef KGCDR_COMMON_HPP
#define KGCDR_COMMON_HPP

#include <stdexcept>
#include <string>

namespace kgcdr {

enum class ErrorCategory {
  io,
  parse,
  data,
  shape,
  config,
  train,
  eval,
  empty_graph,
};

const char* category_name(ErrorCategory c);

/// All library failures surface as Error; the category maps 1:1 onto the
/// C API status codes and the CLI's categorized error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) {
  throw Error(c, msg);
}

enum class Domain { S = 0, T = 1 };

inline char domain_tag(Domain d) { return d == Domain::S ? 'S' : 'T'; }

inline Domain domain_from_tag(const std::string& tag) {
  if (tag == "S" || tag == "s") return Domain::S;
  if (tag == "T" || tag == "t") return Domain::T;
  fail(ErrorCategory::data, "unknown domain tag '" + tag + "' (expected S or T)");
}

constexpr int kDomainCount = 2;

inline int domain_index(Domain d) { return static_cast<int>(d); }

}  // namespace kgcdr

#endif
