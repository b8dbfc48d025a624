#pragma once

// Discovery-pattern language.
//
//   pattern  ::= clause ('AND' clause)* ['WHERE' decl (',' decl)*]
//   clause   ::= term | 'NOT' '(' term ')'
//   term     ::= Var '-' PRED ('|' PRED)* '-' Var
//   decl     ::= Var ':' cond ('&' cond)*
//   cond     ::= ('semtype' | 'semgroup' | 'id') '=' value ('|' value)*
//              | 'id' 'in' '{' value (',' value)* '}'
//
// Keywords are case-insensitive; predicates are upper-cased. The positive
// terms must form a simple chain; the start variable is the chain end that
// appears first in the text. Negations relate the start and end variables.
//
//   DrugA-INHIBITS|INTERACTS_WITH-ConceptB
//   AND ConceptB-AFFECTS|CAUSES|PREDISPOSES|ASSOCIATED_WITH-COVIDConcept
//   AND NOT (DrugA-TREATS-COVIDConcept)
//   WHERE DrugA: semtype=phsu, COVIDConcept: id in {C5203670,C5203676,C5203671}

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/error.hpp"
#include "kgr/graph.hpp"

namespace kgr {

class PatternError : public UsageError {
public:
    enum class Kind { kSyntax, kUnknownPredicate, kUnboundVariable };
    PatternError(Kind kind, std::size_t position, const std::string& message);
    Kind kind() const { return kind_; }
    std::size_t position() const { return position_; }
    std::string_view kind_name() const;

private:
    Kind kind_;
    std::size_t position_;
};

// Empty lists leave that dimension unconstrained; every non-empty list must
// match at least one entry.
struct NodeConstraint {
    std::vector<std::string> semantic_types;
    std::vector<std::string> semantic_groups;
    std::vector<std::string> ids;  // sorted, unique

    bool empty() const;
    bool admits(const Concept& c) const;
    bool operator==(const NodeConstraint&) const = default;
};

struct Hop {
    std::vector<std::string> predicates;  // sorted, unique
    bool backward = false;  // written as next-PRED-previous
    bool operator==(const Hop&) const = default;
};

struct Negation {
    std::vector<std::string> predicates;
    bool backward = false;  // written as End-PRED-Start
    bool operator==(const Negation&) const = default;
};

struct Pattern {
    std::vector<std::string> variables;      // chain order, hops.size() + 1
    std::vector<Hop> hops;
    std::vector<NodeConstraint> constraints;  // parallel to variables
    std::vector<Negation> negations;

    const std::string& start_variable() const { return variables.front(); }
    const std::string& end_variable() const { return variables.back(); }
    const NodeConstraint& start_constraint() const { return constraints.front(); }
    const NodeConstraint& end_constraint() const { return constraints.back(); }
    bool operator==(const Pattern&) const = default;
};

// With `known_predicates`, any other predicate raises kUnknownPredicate at
// its position. Without it, every predicate is accepted.
Pattern parse_pattern(std::string_view text);
Pattern parse_pattern(std::string_view text, std::span<const std::string> known_predicates);

// Canonical text form; parses back to an equal pattern.
std::string to_string(const Pattern& pattern);

}  // namespace kgr
