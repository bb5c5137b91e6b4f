#pragma once

// Structured query language for the explanation dialogue.
//
//   query    := why | whatif | fair | set | show | persona | reset | predict
//   why      := "why" clause*
//   clause   := ("given" assigns) | ("despite" feats) | ("and" clause)
//   assigns  := assign ("," assign | "and" assign)*
//   assign   := FEAT ["=" VALUE]
//   feats    := FEAT ("," FEAT | "and" FEAT)*
//   whatif   := "what" "if" assign ("," assign)* ["on" "explanation" INT]
//   fair     := "is" "the" "decision" "fair"
//   set      := "set" FEAT "=" VALUE
//   show     := "show" ("tree" | "importance" | "rule" | "exemplar" | "data")
//   persona  := "persona" IDENT
//   reset    := "reset"
//   predict  := "predict"
//
// Keywords are case-insensitive. Feature names match longest-first, so a
// feature called "credit amount" is a single identifier; quoted strings may
// name a feature by name or display name.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cfx/counterfactual.hpp"

namespace cfx {

enum class Tok {
  why, given, despite, and_, what, if_, on, explanation, is, the, decision, fair, set, show, persona, reset, predict,
  ident, number, string, equals, comma, end
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t pos = 0;
  std::optional<std::size_t> feature;  // resolved schema feature, when the text names one
};

namespace detail {

inline constexpr std::array<std::pair<std::string_view, Tok>, 17> kKeywords{{
    {"why", Tok::why}, {"given", Tok::given}, {"despite", Tok::despite}, {"and", Tok::and_},
    {"what", Tok::what}, {"if", Tok::if_}, {"on", Tok::on}, {"explanation", Tok::explanation},
    {"is", Tok::is}, {"the", Tok::the}, {"decision", Tok::decision}, {"fair", Tok::fair},
    {"set", Tok::set}, {"show", Tok::show}, {"persona", Tok::persona}, {"reset", Tok::reset},
    {"predict", Tok::predict},
}};

inline std::optional<Tok> keyword(std::string_view w) {
  for (const auto& [k, t] : kKeywords)
    if (iequals(k, w)) return t;
  return std::nullopt;
}

inline bool word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '-' || c == '.' || c == '+' || u >= 0x80;
}

inline std::optional<std::size_t> feature_by_text(const DatasetSchema& schema, std::string_view text) {
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (iequals(schema[f].name, text)) return f;
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (iequals(schema[f].display_name, text)) return f;
  return std::nullopt;
}

}  // namespace detail

inline std::vector<Token> tokenize(std::string_view text, const DatasetSchema* schema = nullptr) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == '?' || c == '!') {
      ++i;
      continue;
    }
    if (c == '=' || c == ',') {
      out.push_back({c == '=' ? Tok::equals : Tok::comma, std::string(1, c), i, std::nullopt});
      ++i;
      continue;
    }
    if (c == '"' || c == '\'') {
      const auto close = text.find(c, i + 1);
      const auto end = close == std::string_view::npos ? text.size() : close;
      Token t{Tok::string, std::string(text.substr(i + 1, end - i - 1)), i, std::nullopt};
      if (schema) t.feature = detail::feature_by_text(*schema, t.text);
      out.push_back(std::move(t));
      i = close == std::string_view::npos ? text.size() : close + 1;
      continue;
    }
    if (!detail::word_char(c)) {
      out.push_back({Tok::ident, std::string(1, c), i, std::nullopt});
      ++i;
      continue;
    }

    std::size_t w_end = i;
    while (w_end < text.size() && detail::word_char(text[w_end])) ++w_end;
    std::string_view word = text.substr(i, w_end - i);
    // A sentence-final full stop is punctuation, not part of the word.
    if (word.size() > 1 && word.back() == '.' && !parse_number(word)) {
      word.remove_suffix(1);
    }

    std::optional<std::size_t> feat;
    std::size_t feat_len = 0;
    if (schema) {
      for (std::size_t f = 0; f < schema->size(); ++f) {
        const auto& name = (*schema)[f].name;
        if (name.size() < feat_len || i + name.size() > text.size()) continue;
        if (!iequals(text.substr(i, name.size()), name)) continue;
        const std::size_t after = i + name.size();
        if (after < text.size() && detail::word_char(text[after]) && text[after] != '.') continue;
        if (name.size() > feat_len) {
          feat = f;
          feat_len = name.size();
        }
      }
    }

    if (feat && feat_len > word.size()) {
      out.push_back({Tok::ident, std::string(text.substr(i, feat_len)), i, feat});
      i += feat_len;
      continue;
    }
    Token t{Tok::ident, std::string(word), i, std::nullopt};
    if (feat && feat_len == word.size()) t.feature = feat;
    if (auto kw = detail::keyword(word)) {
      t.kind = *kw;
    } else if (parse_number(word)) {
      t.kind = Tok::number;
    }
    out.push_back(std::move(t));
    i = w_end;
  }
  out.push_back({Tok::end, "", text.size(), std::nullopt});
  return out;
}

enum class ShowKind { tree, importance, rule, exemplar, data };

inline constexpr std::array<std::string_view, 5> kShowKinds{"tree", "importance", "rule", "exemplar", "data"};

struct WhyQuery {
  ConstraintSet constraints;
  bool operator==(const WhyQuery&) const = default;
};
struct WhatIfQuery {
  std::vector<std::pair<std::size_t, Value>> edits;
  std::optional<std::size_t> explanation;  // 1-based; nullopt targets the current instance
  bool operator==(const WhatIfQuery&) const = default;
};
struct FairQuery {
  bool operator==(const FairQuery&) const = default;
};
struct SetQuery {
  std::size_t feature = 0;
  Value value;
  bool operator==(const SetQuery&) const = default;
};
struct ShowQuery {
  ShowKind kind = ShowKind::tree;
  bool operator==(const ShowQuery&) const = default;
};
struct PersonaQuery {
  std::string id;
  bool operator==(const PersonaQuery&) const = default;
};
struct ResetQuery {
  bool operator==(const ResetQuery&) const = default;
};
struct PredictQuery {
  bool operator==(const PredictQuery&) const = default;
};

using ParsedQuery =
    std::variant<WhyQuery, WhatIfQuery, FairQuery, SetQuery, ShowQuery, PersonaQuery, ResetQuery, PredictQuery>;

struct QueryError {
  enum class Kind { syntax, semantic } kind = Kind::syntax;
  std::size_t position = 0;
  std::string expected;
  std::string found;
  std::string message;

  std::string describe() const {
    if (kind == Kind::semantic) return message;
    return "at position " + std::to_string(position) + ": expected " + expected + ", found " +
           (found.empty() ? "end of input" : "'" + found + "'");
  }
};

struct ParseOutcome {
  std::optional<ParsedQuery> query;
  std::optional<QueryError> error;
  explicit operator bool() const { return query.has_value(); }
};

namespace detail {

class QueryParser {
 public:
  QueryParser(std::string_view text, const DatasetSchema& schema)
      : schema_(schema), tokens_(tokenize(text, &schema)) {}

  ParsedQuery parse() {
    ParsedQuery q = query();
    if (peek().kind != Tok::end) fail("end of query");
    return q;
  }

  struct Failure {
    QueryError error;
  };

 private:

  const Token& peek(std::size_t ahead = 0) const { return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)]; }
  const Token& advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    advance();
    return true;
  }

  [[noreturn]] void fail(std::string expected) const {
    QueryError e;
    e.kind = QueryError::Kind::syntax;
    e.position = peek().pos;
    e.expected = std::move(expected);
    e.found = peek().text;
    throw Failure{std::move(e)};
  }

  [[noreturn]] void semantic(std::size_t pos, std::string message) const {
    QueryError e;
    e.kind = QueryError::Kind::semantic;
    e.position = pos;
    e.message = std::move(message);
    throw Failure{std::move(e)};
  }

  void expect(Tok k, const char* what) {
    if (!accept(k)) fail(what);
  }

  ParsedQuery query() {
    switch (peek().kind) {
      case Tok::why: advance(); return why();
      case Tok::what: advance(); return whatif();
      case Tok::is:
        advance();
        expect(Tok::the, "'the'");
        expect(Tok::decision, "'decision'");
        expect(Tok::fair, "'fair'");
        return FairQuery{};
      case Tok::set: {
        advance();
        auto f = feature();
        expect(Tok::equals, "'='");
        return SetQuery{f, value(f)};
      }
      case Tok::show: {
        advance();
        const auto& t = peek();
        for (std::size_t k = 0; k < kShowKinds.size(); ++k) {
          if (t.kind != Tok::end && iequals(t.text, kShowKinds[k])) {
            advance();
            return ShowQuery{static_cast<ShowKind>(k)};
          }
        }
        fail("one of tree, importance, rule, exemplar, data");
      }
      case Tok::persona: {
        advance();
        const auto& t = peek();
        if (t.kind == Tok::end || t.kind == Tok::equals || t.kind == Tok::comma) fail("persona identifier");
        return PersonaQuery{advance().text};
      }
      case Tok::reset: advance(); return ResetQuery{};
      case Tok::predict: advance(); return PredictQuery{};
      default: fail("a query (why, what if, is the decision fair, set, show, persona, reset, predict)");
    }
  }

  bool at_feature() const {
    const auto& t = peek();
    return t.feature.has_value() && t.kind != Tok::end && t.kind != Tok::equals && t.kind != Tok::comma;
  }

  std::size_t feature() {
    const auto& t = peek();
    if (t.kind == Tok::end || t.kind == Tok::equals || t.kind == Tok::comma) fail("a feature name");
    if (!t.feature) {
      if (t.kind == Tok::ident || t.kind == Tok::string) semantic(t.pos, "unknown feature '" + t.text + "'");
      fail("a feature name");
    }
    advance();
    return *t.feature;
  }

  Value value(std::size_t f) {
    const auto& t = peek();
    if (t.kind == Tok::end || t.kind == Tok::equals || t.kind == Tok::comma) fail("a value");
    advance();
    try {
      return parse_value(schema_[f], t.text);
    } catch (const DataError& e) {
      semantic(t.pos, e.what());
    }
  }

  // After a list separator "and", a GIVEN / DESPITE keyword starts a new clause.
  bool list_continues() const {
    if (peek().kind == Tok::comma) return true;
    if (peek().kind != Tok::and_) return false;
    const auto next = peek(1).kind;
    return next != Tok::given && next != Tok::despite && next != Tok::and_;
  }

  ParsedQuery why() {
    ConstraintSet c;
    std::map<std::size_t, std::size_t> given_pos, despite_pos;
    while (peek().kind != Tok::end) {
      if (accept(Tok::and_)) continue;
      if (accept(Tok::given)) {
        do {
          const auto at = peek().pos;
          const auto f = feature();
          std::optional<Value> pin;
          if (accept(Tok::equals)) pin = value(f);
          auto [it, fresh] = c.required.emplace(f, pin);
          if (!fresh && it->second != pin) {
            if (it->second && pin) semantic(at, schema_[f].name + " is given twice with different values");
            if (pin) it->second = pin;
          }
          given_pos.emplace(f, at);
        } while (list_continues() && advance().kind != Tok::end);
        continue;
      }
      if (accept(Tok::despite)) {
        do {
          const auto at = peek().pos;
          const auto f = feature();
          c.forbidden.insert(f);
          despite_pos.emplace(f, at);
        } while (list_continues() && advance().kind != Tok::end);
        continue;
      }
      fail("'given', 'despite' or end of query");
    }
    for (auto f : c.forbidden)
      if (c.required.count(f))
        semantic(std::max(given_pos[f], despite_pos[f]), schema_[f].name + " is both given and despite");
    return WhyQuery{std::move(c)};
  }

  ParsedQuery whatif() {
    expect(Tok::if_, "'if'");
    WhatIfQuery q;
    do {
      const auto at = peek().pos;
      const auto f = feature();
      if (!accept(Tok::equals)) semantic(at, "what if needs a value for " + schema_[f].name);
      auto v = value(f);
      for (const auto& [g, _] : q.edits)
        if (g == f) semantic(at, schema_[f].name + " is assigned twice");
      q.edits.emplace_back(f, std::move(v));
    } while ((peek().kind == Tok::comma || peek().kind == Tok::and_) && advance().kind != Tok::end);
    if (accept(Tok::on)) {
      expect(Tok::explanation, "'explanation'");
      const auto& t = peek();
      auto n = t.kind == Tok::number ? parse_number(t.text) : std::nullopt;
      if (!n || *n < 1 || *n != std::floor(*n) || *n > 1e9) fail("an explanation number");
      advance();
      q.explanation = static_cast<std::size_t>(*n);
    }
    return q;
  }

  const DatasetSchema& schema_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline bool needs_quotes(std::string_view s) {
  if (s.empty()) return true;
  if (keyword(s)) return true;
  for (char c : s)
    if (!word_char(c)) return true;
  return s.back() == '.';
}

inline std::string quote_if_needed(std::string_view s) {
  return needs_quotes(s) ? "\"" + std::string(s) + "\"" : std::string(s);
}

}  // namespace detail

inline ParseOutcome parse(std::string_view text, const DatasetSchema& schema) {
  ParseOutcome out;
  try {
    detail::QueryParser p(text, schema);
    out.query = p.parse();
  } catch (const detail::QueryParser::Failure& f) {
    out.error = f.error;
  }
  return out;
}

// Canonical query text; parse(render(q)) == q.
inline std::string render_query(const ParsedQuery& q, const DatasetSchema& schema) {
  using detail::quote_if_needed;
  auto feat = [&](std::size_t f) { return quote_if_needed(schema[f].name); };
  auto val = [&](const Value& v) {
    if (std::holds_alternative<double>(v)) return format_number(std::get<double>(v));
    return quote_if_needed(std::get<std::string>(v));
  };
  return std::visit(
      [&](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, WhyQuery>) {
          std::string s = "why";
          if (!x.constraints.required.empty())
            s += " given " + join(x.constraints.required, " and ", [&](const auto& kv) {
                   return feat(kv.first) + (kv.second ? " = " + val(*kv.second) : std::string{});
                 });
          if (!x.constraints.forbidden.empty()) s += " despite " + join(x.constraints.forbidden, " and ", feat);
          return s;
        } else if constexpr (std::is_same_v<T, WhatIfQuery>) {
          std::string s = "what if " + join(x.edits, ", ", [&](const auto& e) { return feat(e.first) + " = " + val(e.second); });
          if (x.explanation) s += " on explanation " + std::to_string(*x.explanation);
          return s;
        } else if constexpr (std::is_same_v<T, FairQuery>) {
          return "is the decision fair";
        } else if constexpr (std::is_same_v<T, SetQuery>) {
          return "set " + feat(x.feature) + " = " + val(x.value);
        } else if constexpr (std::is_same_v<T, ShowQuery>) {
          return "show " + std::string(kShowKinds[static_cast<std::size_t>(x.kind)]);
        } else if constexpr (std::is_same_v<T, PersonaQuery>) {
          return "persona " + quote_if_needed(x.id);
        } else if constexpr (std::is_same_v<T, ResetQuery>) {
          return "reset";
        } else {
          return "predict";
        }
      },
      q);
}

}  // namespace cfx
