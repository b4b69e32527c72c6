#pragma once

// Small arithmetic expression evaluator used by config files for densities,
// time profiles and envelopes.  Supports + - * / ^, parentheses, the
// variables x, y, t, s, and a handful of unary functions.

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace plm {

class ExprError : public std::runtime_error {
public:
  explicit ExprError(const std::string& msg) : std::runtime_error("expr: " + msg) {}
};

// Compiled expression over named variables.
class Expr {
public:
  using Env = std::map<std::string, double>;

  Expr() = default;
  static Expr parse(const std::string& text);

  double eval(const Env& env) const {
    if (!root_) throw ExprError("empty expression");
    return root_->eval(env);
  }
  double eval1(const std::string& var, double value) const {
    Env env;
    env[var] = value;
    return eval(env);
  }
  bool empty() const { return !root_; }
  const std::string& text() const { return text_; }

private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(const Env&) const = 0;
  };
  using NodePtr = std::shared_ptr<const Node>;

  struct Const : Node {
    double v;
    explicit Const(double x) : v(x) {}
    double eval(const Env&) const override { return v; }
  };
  struct Var : Node {
    std::string name;
    explicit Var(std::string n) : name(std::move(n)) {}
    double eval(const Env& env) const override {
      auto it = env.find(name);
      if (it == env.end()) throw ExprError("unbound variable '" + name + "'");
      return it->second;
    }
  };
  struct Unary : Node {
    double (*fn)(double);
    NodePtr arg;
    double eval(const Env& env) const override { return fn(arg->eval(env)); }
  };
  struct Binary : Node {
    char op;
    NodePtr lhs, rhs;
    double eval(const Env& env) const override {
      const double a = lhs->eval(env), b = rhs->eval(env);
      switch (op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return std::pow(a, b);
      }
      throw ExprError("bad operator");
    }
  };

  struct Parser {
    const std::string& s;
    size_t i = 0;

    explicit Parser(const std::string& text) : s(text) {}

    void skip() {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool consume(char c) {
      skip();
      if (i < s.size() && s[i] == c) {
        ++i;
        return true;
      }
      return false;
    }

    NodePtr expr() {
      NodePtr lhs = term();
      for (;;) {
        skip();
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
          char op = s[i++];
          auto n = std::make_shared<Binary>();
          n->op = op;
          n->lhs = lhs;
          n->rhs = term();
          lhs = n;
        } else {
          return lhs;
        }
      }
    }
    NodePtr term() {
      NodePtr lhs = power();
      for (;;) {
        skip();
        if (i < s.size() && (s[i] == '*' || s[i] == '/')) {
          char op = s[i++];
          auto n = std::make_shared<Binary>();
          n->op = op;
          n->lhs = lhs;
          n->rhs = power();
          lhs = n;
        } else {
          return lhs;
        }
      }
    }
    NodePtr power() {
      NodePtr base = unary();
      skip();
      if (i < s.size() && s[i] == '^') {
        ++i;
        auto n = std::make_shared<Binary>();
        n->op = '^';
        n->lhs = base;
        n->rhs = power();  // right associative
        return n;
      }
      return base;
    }
    NodePtr unary() {
      skip();
      if (consume('-')) {
        auto n = std::make_shared<Binary>();
        n->op = '-';
        n->lhs = std::make_shared<Const>(0.0);
        n->rhs = unary();
        return n;
      }
      return atom();
    }
    NodePtr atom() {
      skip();
      if (i >= s.size()) throw ExprError("unexpected end of input");
      if (consume('(')) {
        NodePtr n = expr();
        if (!consume(')')) throw ExprError("missing ')'");
        return n;
      }
      char c = s[i];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        size_t end;
        double v = std::stod(s.substr(i), &end);
        i += end;
        return std::make_shared<Const>(v);
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        size_t j = i;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
        std::string name = s.substr(i, j - i);
        i = j;
        skip();
        if (i < s.size() && s[i] == '(') {
          ++i;
          auto n = std::make_shared<Unary>();
          n->fn = lookup(name);
          n->arg = expr();
          if (!consume(')')) throw ExprError("missing ')' after " + name);
          return n;
        }
        if (name == "pi") return std::make_shared<Const>(3.14159265358979323846);
        if (name == "e") return std::make_shared<Const>(2.71828182845904523536);
        return std::make_shared<Var>(name);
      }
      throw ExprError(std::string("unexpected character '") + c + "'");
    }
    static double (*lookup(const std::string& name))(double) {
      if (name == "sin") return std::sin;
      if (name == "cos") return std::cos;
      if (name == "exp") return std::exp;
      if (name == "log") return std::log;
      if (name == "sqrt") return std::sqrt;
      if (name == "abs") return std::fabs;
      if (name == "tanh") return std::tanh;
      throw ExprError("unknown function '" + name + "'");
    }
  };

  NodePtr root_;
  std::string text_;
};

inline Expr Expr::parse(const std::string& text) {
  Parser p(text);
  Expr e;
  e.root_ = p.expr();
  p.skip();
  if (p.i != text.size()) throw ExprError("trailing input at position " + std::to_string(p.i));
  e.text_ = text;
  return e;
}

}  // namespace plm
