#include "kgr/pattern.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>

namespace kgr {

PatternError::PatternError(Kind kind, std::size_t position, const std::string& message)
    : UsageError(message + " (at position " + std::to_string(position) + ")"),
      kind_(kind),
      position_(position) {}

std::string_view PatternError::kind_name() const {
    switch (kind_) {
        case Kind::kSyntax: return "syntax";
        case Kind::kUnknownPredicate: return "unknown_predicate";
        case Kind::kUnboundVariable: return "unbound_variable";
    }
    return "syntax";
}

bool NodeConstraint::empty() const {
    return semantic_types.empty() && semantic_groups.empty() && ids.empty();
}

bool NodeConstraint::admits(const Concept& c) const {
    if (!ids.empty() && !std::binary_search(ids.begin(), ids.end(), c.id)) return false;
    if (!semantic_types.empty() &&
        std::none_of(semantic_types.begin(), semantic_types.end(),
                     [&](const std::string& t) { return c.has_type(t); }))
        return false;
    if (!semantic_groups.empty() &&
        std::none_of(semantic_groups.begin(), semantic_groups.end(),
                     [&](const std::string& g) { return c.in_group(g); }))
        return false;
    return true;
}

namespace {

enum class Tok { kIdent, kDash, kBar, kLParen, kRParen, kColon, kComma, kLBrace, kRBrace,
                 kEquals, kAmp, kEnd };

struct Token {
    Tok kind;
    std::string text;
    std::size_t pos;
};

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (ident_char(c)) {
            std::size_t j = i;
            while (j < text.size() && ident_char(text[j])) ++j;
            out.push_back({Tok::kIdent, std::string(text.substr(i, j - i)), i});
            i = j;
            continue;
        }
        Tok kind;
        switch (c) {
            case '-': kind = Tok::kDash; break;
            case '|': kind = Tok::kBar; break;
            case '(': kind = Tok::kLParen; break;
            case ')': kind = Tok::kRParen; break;
            case ':': kind = Tok::kColon; break;
            case ',': kind = Tok::kComma; break;
            case '{': kind = Tok::kLBrace; break;
            case '}': kind = Tok::kRBrace; break;
            case '=': kind = Tok::kEquals; break;
            case '&': kind = Tok::kAmp; break;
            default:
                throw PatternError(PatternError::Kind::kSyntax, i,
                                   std::string("unexpected character '") + c + "'");
        }
        out.push_back({kind, std::string(1, c), i});
        ++i;
    }
    out.push_back({Tok::kEnd, "", text.size()});
    return out;
}

bool is_keyword(const std::string& word) {
    auto w = lower(word);
    return w == "and" || w == "not" || w == "where";
}

struct Term {
    std::string left, right;
    std::size_t left_pos, right_pos;
    std::vector<std::string> predicates;
};

class Parser {
public:
    Parser(std::string_view text, std::span<const std::string> known, bool check)
        : toks_(tokenize(text)), known_(known.begin(), known.end()), check_(check) {}

    Pattern parse() {
        std::vector<Term> positive;
        std::vector<std::pair<Term, std::size_t>> negative;
        do {
            if (keyword("not")) {
                std::size_t at = peek().pos;
                next();
                expect(Tok::kLParen, "'(' after NOT");
                negative.emplace_back(term(), at);
                expect(Tok::kRParen, "')' closing NOT");
            } else {
                positive.push_back(term());
            }
        } while (accept_keyword("and"));

        std::map<std::string, std::pair<NodeConstraint, std::size_t>> decls;
        if (accept_keyword("where")) {
            do {
                const auto& var = expect(Tok::kIdent, "a variable name");
                if (decls.count(var.text))
                    fail(var.pos, "variable '" + var.text + "' declared twice");
                auto& [c, pos] = decls[var.text];
                pos = var.pos;
                expect(Tok::kColon, "':' after variable");
                do condition(c);
                while (accept(Tok::kAmp));
            } while (accept(Tok::kComma));
        }
        if (peek().kind != Tok::kEnd) fail(peek().pos, "unexpected '" + peek().text + "'");
        if (positive.empty())
            fail(0, "a pattern needs at least one positive term");
        return assemble(positive, negative, decls);
    }

private:
    const Token& peek() const { return toks_[at_]; }
    const Token& next() { return toks_[at_ < toks_.size() - 1 ? at_++ : at_]; }
    [[noreturn]] void fail(std::size_t pos, const std::string& msg) const {
        throw PatternError(PatternError::Kind::kSyntax, pos, msg);
    }
    bool accept(Tok kind) {
        if (peek().kind != kind) return false;
        next();
        return true;
    }
    const Token& expect(Tok kind, const std::string& what) {
        if (peek().kind != kind) {
            auto found = peek().kind == Tok::kEnd ? std::string("end of pattern")
                                                  : "'" + peek().text + "'";
            fail(peek().pos, "expected " + what + ", found " + found);
        }
        return next();
    }
    bool keyword(std::string_view kw) const {
        return peek().kind == Tok::kIdent && lower(peek().text) == kw;
    }
    bool accept_keyword(std::string_view kw) {
        if (!keyword(kw)) return false;
        next();
        return true;
    }

    const Token& variable() {
        const auto& v = expect(Tok::kIdent, "a variable name");
        if (is_keyword(v.text)) fail(v.pos, "keyword '" + v.text + "' used as a variable");
        return v;
    }

    Term term() {
        Term t;
        const auto& l = variable();
        t.left = l.text;
        t.left_pos = l.pos;
        expect(Tok::kDash, "'-' after variable");
        do {
            const auto& p = expect(Tok::kIdent, "a predicate");
            auto id = upper(p.text);
            if (check_ && !known_.count(id))
                throw PatternError(PatternError::Kind::kUnknownPredicate, p.pos,
                                   "unknown predicate '" + p.text + "'");
            t.predicates.push_back(id);
        } while (accept(Tok::kBar));
        expect(Tok::kDash, "'-' after predicate");
        const auto& r = variable();
        t.right = r.text;
        t.right_pos = r.pos;
        if (t.left == t.right) fail(r.pos, "a term must relate two different variables");
        std::sort(t.predicates.begin(), t.predicates.end());
        t.predicates.erase(std::unique(t.predicates.begin(), t.predicates.end()),
                           t.predicates.end());
        return t;
    }

    std::vector<std::string> value_list(Tok sep) {
        std::vector<std::string> values;
        do values.push_back(expect(Tok::kIdent, "a value").text);
        while (accept(sep));
        return values;
    }

    void condition(NodeConstraint& c) {
        const auto& key = expect(Tok::kIdent, "'semtype', 'semgroup' or 'id'");
        auto k = lower(key.text);
        std::vector<std::string>* target = nullptr;
        if (k == "semtype") target = &c.semantic_types;
        else if (k == "semgroup") target = &c.semantic_groups;
        else if (k == "id") target = &c.ids;
        else fail(key.pos, "unknown constraint '" + key.text + "'");
        std::vector<std::string> values;
        if (k == "id" && accept_keyword("in")) {
            expect(Tok::kLBrace, "'{'");
            values = value_list(Tok::kComma);
            expect(Tok::kRBrace, "'}'");
        } else {
            expect(Tok::kEquals, "'='");
            values = value_list(Tok::kBar);
        }
        if (!target->empty()) fail(key.pos, "constraint '" + key.text + "' given twice");
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        *target = std::move(values);
    }

    Pattern assemble(const std::vector<Term>& positive,
                     const std::vector<std::pair<Term, std::size_t>>& negative,
                     const std::map<std::string, std::pair<NodeConstraint, std::size_t>>& decls) {
        std::map<std::string, std::vector<std::size_t>> incident;
        std::vector<std::string> order;  // first textual appearance
        for (std::size_t i = 0; i < positive.size(); ++i) {
            for (const auto* v : {&positive[i].left, &positive[i].right}) {
                if (!incident.count(*v)) order.push_back(*v);
                incident[*v].push_back(i);
            }
        }
        for (const auto& [v, terms] : incident)
            if (terms.size() > 2)
                fail(positive[terms[2]].left == v ? positive[terms[2]].left_pos
                                                  : positive[terms[2]].right_pos,
                     "variable '" + v + "' joins more than two terms; terms must form a chain");
        if (order.size() != positive.size() + 1)
            fail(positive.back().left_pos, "terms must form a single chain without cycles");

        std::string start;
        for (const auto& v : order)
            if (incident[v].size() == 1) {
                start = v;
                break;
            }

        Pattern p;
        p.variables.push_back(start);
        std::vector<bool> used(positive.size(), false);
        std::string cur = start;
        for (std::size_t step = 0; step < positive.size(); ++step) {
            std::optional<std::size_t> pick;
            for (auto i : incident[cur])
                if (!used[i]) pick = i;
            if (!pick) fail(positive.back().left_pos, "terms must form a single connected chain");
            used[*pick] = true;
            const auto& t = positive[*pick];
            Hop hop;
            hop.predicates = t.predicates;
            hop.backward = t.right == cur;
            cur = hop.backward ? t.left : t.right;
            p.hops.push_back(std::move(hop));
            p.variables.push_back(cur);
        }

        for (const auto& [t, at] : negative) {
            for (auto [v, pos] : {std::pair{&t.left, t.left_pos}, std::pair{&t.right, t.right_pos}})
                if (!incident.count(*v))
                    throw PatternError(PatternError::Kind::kUnboundVariable, pos,
                                       "variable '" + *v + "' does not occur in a positive term");
            bool forward = t.left == p.start_variable() && t.right == p.end_variable();
            bool backward = t.right == p.start_variable() && t.left == p.end_variable();
            if (!forward && !backward)
                fail(at, "a negation must relate the start and end variables");
            p.negations.push_back({t.predicates, backward});
        }

        p.constraints.resize(p.variables.size());
        for (const auto& [v, decl] : decls) {
            auto it = std::find(p.variables.begin(), p.variables.end(), v);
            if (it == p.variables.end())
                throw PatternError(PatternError::Kind::kUnboundVariable, decl.second,
                                   "variable '" + v + "' does not occur in a positive term");
            p.constraints[static_cast<std::size_t>(it - p.variables.begin())] = decl.first;
        }
        return p;
    }

    std::vector<Token> toks_;
    std::size_t at_ = 0;
    std::set<std::string> known_;
    bool check_;
};

}  // namespace

Pattern parse_pattern(std::string_view text) {
    return Parser(text, {}, false).parse();
}

Pattern parse_pattern(std::string_view text, std::span<const std::string> known_predicates) {
    return Parser(text, known_predicates, true).parse();
}

std::string to_string(const Pattern& p) {
    std::string out;
    for (std::size_t i = 0; i < p.hops.size(); ++i) {
        if (i) out += " AND ";
        const auto& a = p.variables[i];
        const auto& b = p.variables[i + 1];
        const auto& hop = p.hops[i];
        out += (hop.backward ? b : a) + "-" + join(hop.predicates, "|") + "-" +
               (hop.backward ? a : b);
    }
    for (const auto& n : p.negations) {
        const auto& s = p.start_variable();
        const auto& e = p.end_variable();
        out += " AND NOT (" + (n.backward ? e : s) + "-" + join(n.predicates, "|") + "-" +
               (n.backward ? s : e) + ")";
    }
    bool first = true;
    for (std::size_t i = 0; i < p.variables.size(); ++i) {
        const auto& c = p.constraints[i];
        if (c.empty()) continue;
        out += first ? " WHERE " : ", ";
        first = false;
        out += p.variables[i] + ":";
        std::vector<std::string> conds;
        if (!c.semantic_types.empty()) conds.push_back(" semtype=" + join(c.semantic_types, "|"));
        if (!c.semantic_groups.empty())
            conds.push_back(" semgroup=" + join(c.semantic_groups, "|"));
        if (!c.ids.empty()) conds.push_back(" id in {" + join(c.ids, ",") + "}");
        out += join(conds, " &");
    }
    return out;
}

}  // namespace kgr
