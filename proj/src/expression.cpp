#include "kamtori/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

using Op = Expr::Op;

bool is_const(const ExprPtr& e, double v) { return e->op() == Op::Const && e->constant() == v; }

class Parser {
 public:
  Parser(const std::string& text, const std::vector<std::string>& names, int n)
      : s_(text), names_(names), n_(n) {}

  ExprPtr parse() {
    ExprPtr e = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "expression column " << pos_ + 1 << ": " << what;
    throw Error(ErrorKind::ParseError, msg.str());
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  ExprPtr sum() {
    ExprPtr e = product();
    for (;;) {
      if (accept('+')) e = Expr::make(Op::Add, e, product());
      else if (accept('-')) e = Expr::make(Op::Sub, e, product());
      else return e;
    }
  }
  ExprPtr product() {
    ExprPtr e = unary();
    for (;;) {
      if (accept('*')) e = Expr::make(Op::Mul, e, unary());
      else if (accept('/')) e = Expr::make(Op::Div, e, unary());
      else return e;
    }
  }
  ExprPtr unary() {
    if (accept('-')) return Expr::make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }
  ExprPtr power() {
    ExprPtr base = primary();
    if (accept('^')) return Expr::make(Op::Pow, base, unary());
    return base;
  }
  ExprPtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (accept('(')) {
      ExprPtr e = sum();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return Expr::make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "pi") return Expr::make_const(std::numbers::pi);
      static const std::pair<const char*, Op> functions[] = {
          {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt}};
      for (const auto& [fname, op] : functions)
        if (id == fname) {
          if (!accept('(')) fail("expected '(' after " + id);
          ExprPtr arg = sum();
          if (!accept(')')) fail("expected ')'");
          return Expr::make(op, arg);
        }
      for (std::size_t i = 0; i < names_.size(); ++i)
        if (id == names_[i]) return Expr::make_var(static_cast<int>(i));
      if (n_ == 1) {
        for (std::size_t i = 0; i < names_.size(); ++i)
          if (names_[i].size() == 2 && names_[i][1] == '1' && id.size() == 1 && id[0] == names_[i][0])
            return Expr::make_var(static_cast<int>(i));
      }
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& names_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace

ExprPtr Expr::make_const(double v) { return ExprPtr(new Expr(Op::Const, v, -1, nullptr, nullptr)); }
ExprPtr Expr::make_var(int v) { return ExprPtr(new Expr(Op::Var, 0.0, v, nullptr, nullptr)); }

ExprPtr Expr::make(Op op, ExprPtr a, ExprPtr b) {
  // Constant folding and the identities that keep derivative trees small.
  const bool ca = a && a->op() == Op::Const;
  const bool cb = b && b->op() == Op::Const;
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0.0)) return make_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Neg:
      if (a->op() == Op::Neg) return a->lhs();
      break;
    case Op::Pow:
      if (is_const(b, 0.0)) return make_const(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default:
      break;
  }
  ExprPtr e(new Expr(op, 0.0, -1, std::move(a), std::move(b)));
  if (ca && (!e->b_ || cb)) return make_const(e->eval(Eigen::VectorXd()));
  return e;
}

double Expr::eval(const Eigen::VectorXd& z) const {
  switch (op_) {
    case Op::Const: return value_;
    case Op::Var: return z(var_);
    case Op::Add: return a_->eval(z) + b_->eval(z);
    case Op::Sub: return a_->eval(z) - b_->eval(z);
    case Op::Mul: return a_->eval(z) * b_->eval(z);
    case Op::Div: return a_->eval(z) / b_->eval(z);
    case Op::Neg: return -a_->eval(z);
    case Op::Pow: return std::pow(a_->eval(z), b_->eval(z));
    case Op::Sin: return std::sin(a_->eval(z));
    case Op::Cos: return std::cos(a_->eval(z));
    case Op::Exp: return std::exp(a_->eval(z));
    case Op::Log: return std::log(a_->eval(z));
    case Op::Sqrt: return std::sqrt(a_->eval(z));
  }
  return 0.0;
}

ExprPtr Expr::diff(int var) const {
  const auto C = make_const;
  switch (op_) {
    case Op::Const: return C(0.0);
    case Op::Var: return C(var_ == var ? 1.0 : 0.0);
    case Op::Add: return make(Op::Add, a_->diff(var), b_->diff(var));
    case Op::Sub: return make(Op::Sub, a_->diff(var), b_->diff(var));
    case Op::Mul:
      return make(Op::Add, make(Op::Mul, a_->diff(var), b_), make(Op::Mul, a_, b_->diff(var)));
    case Op::Div:
      return make(Op::Div, make(Op::Sub, make(Op::Mul, a_->diff(var), b_), make(Op::Mul, a_, b_->diff(var))),
                  make(Op::Mul, b_, b_));
    case Op::Neg: return make(Op::Neg, a_->diff(var));
    case Op::Pow: {
      const ExprPtr da = a_->diff(var), db = b_->diff(var);
      ExprPtr out = C(0.0);
      if (!is_const(da, 0.0))
        out = make(Op::Mul, make(Op::Mul, b_, make(Op::Pow, a_, make(Op::Sub, b_, C(1.0)))), da);
      if (!is_const(db, 0.0))
        out = make(Op::Add, out,
                   make(Op::Mul, make(Op::Mul, make(Op::Pow, a_, b_), make(Op::Log, a_)), db));
      return out;
    }
    case Op::Sin: return make(Op::Mul, make(Op::Cos, a_), a_->diff(var));
    case Op::Cos: return make(Op::Neg, make(Op::Mul, make(Op::Sin, a_), a_->diff(var)));
    case Op::Exp: return make(Op::Mul, make(Op::Exp, a_), a_->diff(var));
    case Op::Log: return make(Op::Div, a_->diff(var), a_);
    case Op::Sqrt: return make(Op::Div, a_->diff(var), make(Op::Mul, C(2.0), make(Op::Sqrt, a_)));
  }
  return C(0.0);
}

std::string Expr::to_string(const std::vector<std::string>& names) const {
  auto bin = [&](const char* sym) {
    return "(" + a_->to_string(names) + " " + sym + " " + b_->to_string(names) + ")";
  };
  auto fn = [&](const char* f) { return std::string(f) + "(" + a_->to_string(names) + ")"; };
  switch (op_) {
    case Op::Const: {
      std::ostringstream s;
      s.precision(17);
      s << value_;
      return s.str();
    }
    case Op::Var: return names[static_cast<std::size_t>(var_)];
    case Op::Add: return bin("+");
    case Op::Sub: return bin("-");
    case Op::Mul: return bin("*");
    case Op::Div: return bin("/");
    case Op::Neg: return "(-" + a_->to_string(names) + ")";
    case Op::Pow: return bin("^");
    case Op::Sin: return fn("sin");
    case Op::Cos: return fn("cos");
    case Op::Exp: return fn("exp");
    case Op::Log: return fn("log");
    case Op::Sqrt: return fn("sqrt");
  }
  return {};
}

std::vector<std::string> expression_variable_names(int n, int d) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("q" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("p" + std::to_string(i));
  if (d == 2 * n) {
    for (int i = 1; i <= n; ++i) names.push_back("a" + std::to_string(i));
    for (int i = 1; i <= n; ++i) names.push_back("b" + std::to_string(i));
  } else {
    for (int i = 1; i <= d; ++i) names.push_back("l" + std::to_string(i));
  }
  return names;
}

ExprPtr parse_expression(const std::string& text, int n, int d) {
  const auto names = expression_variable_names(n, d);
  return Parser(text, names, n).parse();
}

HamiltonianFamily expression_family(const std::string& text, int n, int d, const std::string& name) {
  const int m = 2 * n;
  const ExprPtr h = parse_expression(text, n, d);
  auto grad = std::make_shared<std::vector<ExprPtr>>();
  auto hess = std::make_shared<std::vector<ExprPtr>>();   // m x m, row-major
  auto mixed = std::make_shared<std::vector<ExprPtr>>();  // m x d, row-major
  for (int i = 0; i < m; ++i) grad->push_back(h->diff(i));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) hess->push_back(j < i ? (*hess)[static_cast<std::size_t>(j * m + i)] : (*grad)[static_cast<std::size_t>(i)]->diff(j));
    for (int j = 0; j < d; ++j) mixed->push_back((*grad)[static_cast<std::size_t>(i)]->diff(m + j));
  }
  auto join = [m, d](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    Eigen::VectorXd z(m + d);
    z << x, l;
    return z;
  };
  HamiltonianFamily::Evaluators ev;
  ev.value = [h, join](const Eigen::VectorXd& x, const Eigen::VectorXd& l) { return h->eval(join(x, l)); };
  ev.grad_x = [grad, join, m](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    const Eigen::VectorXd z = join(x, l);
    Eigen::VectorXd g(m);
    for (int i = 0; i < m; ++i) g(i) = (*grad)[static_cast<std::size_t>(i)]->eval(z);
    return g;
  };
  ev.hess_x = [hess, join, m](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    const Eigen::VectorXd z = join(x, l);
    Eigen::MatrixXd H(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) H(i, j) = (*hess)[static_cast<std::size_t>(i * m + j)]->eval(z);
    return H;
  };
  ev.dgrad_dlambda = [mixed, join, m, d](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    const Eigen::VectorXd z = join(x, l);
    Eigen::MatrixXd B(m, d);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) B(i, j) = (*mixed)[static_cast<std::size_t>(i * d + j)]->eval(z);
    return B;
  };
  return HamiltonianFamily(name, n, d, std::move(ev));
}

}  // namespace kam
