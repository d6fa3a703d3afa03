#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "triplekit/error.hpp"
#include "triplekit/rdf.hpp"
#include "triplekit/store.hpp"

namespace triplekit::query {

class QueryError : public Error {
public:
  QueryError(const std::string& message, int line, int column)
      : Error(message + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line), column_(column) {}
  explicit QueryError(const std::string& message) : Error(message), line_(0), column_(0) {}
  int line() const { return line_; }
  int column() const { return column_; }

private:
  int line_, column_;
};

// A pattern slot is a variable or a constant term.
struct Slot {
  bool is_var = false;
  std::string var;
  rdf::Term term;

  static Slot variable(std::string name);
  static Slot constant(rdf::Term t);
};

struct PatternExpr {
  Slot subject, predicate, object;
  std::size_t text_index = 0;  // position in the query text, for tie-breaking
};

struct FilterExpr {
  enum class Op { Eq, Ne, Lt, Le, Gt, Ge };
  Op op = Op::Eq;
  Slot lhs, rhs;
};

struct Query {
  std::vector<std::string> projected;
  std::vector<PatternExpr> patterns;
  std::vector<FilterExpr> filters;
  std::string entailment = "raw";
  bool distinct = false;
  std::optional<std::uint64_t> limit;
};

// Grammar:
//   USING ns = <iri> ...
//   SELECT Var, ... WHERE (t, t, t), ... [FILTER expr ...] [DISTINCT] [LIMIT n]
// Terms are variables (capitalized or _), <iri>, prefixed names, bare names,
// quoted literals or numbers.
Query parse_query(std::string_view text, const std::string& entailment = "raw");

// --- entailment modules -------------------------------------------------------

class Entailment {
public:
  virtual ~Entailment() = default;

  struct Pattern {
    std::optional<rdf::Term> s;
    std::optional<rdf::Iri> p;
    std::optional<rdf::Term> o;
  };
  // Returns false on early stop from the sink.
  using Sink = std::function<bool(const rdf::Triple&)>;
  virtual bool enumerate(const store::Store& st, const Pattern& pat, const Sink& sink) const = 0;
};

// Pluggable registry; raw, rdf and rdfs are registered at startup and new
// modules can be added at runtime.
class EntailmentRegistry {
public:
  static EntailmentRegistry& global();
  void register_module(const std::string& name, std::shared_ptr<const Entailment> module);
  std::shared_ptr<const Entailment> find(const std::string& name) const;  // throws QueryError
  bool known(const std::string& name) const;
  std::vector<std::string> names() const;

private:
  mutable std::mutex mutex_;
  std::vector<std::pair<std::string, std::shared_ptr<const Entailment>>> modules_;
};

std::shared_ptr<const Entailment> entailment(const std::string& name);

// --- optimizer -----------------------------------------------------------------

struct PlanStep {
  PatternExpr pattern;
  double estimated_results = 0;
  std::vector<FilterExpr> filters_after;
};

struct QueryPlan {
  std::vector<PlanStep> steps;
  double estimated_cost = 0;
  std::uint64_t candidates_evaluated = 0;
  std::string entailment;
  std::vector<std::string> projected;
  bool distinct = false;
  std::optional<std::uint64_t> limit;
};

struct OptimizeOptions {
  bool enable_splitting = true;  // independence splitting of conjunctions
};

QueryPlan optimize(const Query& q, const store::Store& st, const OptimizeOptions& opts = {});

// Builds a plan executing the patterns in the given order (indices into
// q.patterns); used to check plan invariance.
QueryPlan manual_plan(const Query& q, const std::vector<std::size_t>& order);

// --- execution -------------------------------------------------------------------

struct BindingRow {
  std::vector<rdf::Term> values;  // column order follows the projection
  auto operator<=>(const BindingRow&) const = default;
};

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<BindingRow> rows;
};

struct ExecStats {
  std::uint64_t rows_touched = 0;  // oracle triples consumed across all steps
};

// Streaming execution; the callback returns false to stop early.
void execute(const QueryPlan& plan, const store::Store& st,
             const std::function<bool(const BindingRow&)>& on_row, ExecStats* stats = nullptr);
ResultSet execute(const QueryPlan& plan, const store::Store& st, ExecStats* stats = nullptr);

// parse + optimize + execute
ResultSet run_query(const store::Store& st, std::string_view text,
                    const std::string& entailment = "raw");

} // namespace triplekit::query
