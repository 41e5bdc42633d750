#pragma once

// Monomial feature bases over (X, M, Y), written as term lists such as
// "1,x1,x1^2,x1*m,y". Variables: x1..xd (plain `x` means x1), m1..mk for the
// expanded M features (plain `m` means m1), and y.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnarfuse/error.hpp"

namespace mnarfuse {

enum class Variable { X, M, Y };

struct Factor {
  Variable var = Variable::X;
  std::size_t index = 0;  // 0-based feature index (unused for Y)
  int power = 1;

  bool operator==(const Factor&) const = default;
};

/// Product of factors; the empty product is the constant term.
class BasisTerm {
 public:
  BasisTerm() = default;
  explicit BasisTerm(std::vector<Factor> factors) : factors_(std::move(factors)) { canonicalize(); }

  static BasisTerm constant() { return {}; }
  static BasisTerm x(std::size_t index, int power = 1) { return BasisTerm({{Variable::X, index, power}}); }
  static BasisTerm m(std::size_t index = 0, int power = 1) { return BasisTerm({{Variable::M, index, power}}); }
  static BasisTerm y(int power = 1) { return BasisTerm({{Variable::Y, 0, power}}); }

  static BasisTerm parse(std::string_view text) {
    text = trim(text);
    if (text.empty()) throw PreconditionError("empty basis term");
    if (text == "1") return constant();
    std::vector<Factor> factors;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto stop = text.find('*', start);
      const auto piece = trim(text.substr(start, stop == std::string_view::npos ? stop : stop - start));
      factors.push_back(parse_factor(piece, text));
      if (stop == std::string_view::npos) break;
      start = stop + 1;
    }
    return BasisTerm(std::move(factors));
  }

  const std::vector<Factor>& factors() const noexcept { return factors_; }
  bool is_constant() const noexcept { return factors_.empty(); }

  bool uses(Variable v) const noexcept {
    return std::any_of(factors_.begin(), factors_.end(), [v](const Factor& f) { return f.var == v; });
  }

  /// Highest feature index (1-based count) referenced for variable v.
  std::size_t arity(Variable v) const noexcept {
    std::size_t n = 0;
    for (const auto& f : factors_) {
      if (f.var == v) n = std::max(n, f.index + 1);
    }
    return n;
  }

  double evaluate(std::span<const double> x, std::optional<std::span<const double>> m,
                  std::optional<double> y) const {
    double v = 1.0;
    for (const auto& f : factors_) {
      double base = 0.0;
      switch (f.var) {
        case Variable::X:
          if (f.index >= x.size()) throw PreconditionError("basis term " + to_string() + " needs x" + std::to_string(f.index + 1));
          base = x[f.index];
          break;
        case Variable::M:
          if (!m) throw PreconditionError("basis term " + to_string() + " references absent M");
          if (f.index >= m->size()) throw PreconditionError("basis term " + to_string() + " needs M feature " + std::to_string(f.index + 1));
          base = (*m)[f.index];
          break;
        case Variable::Y:
          if (!y) throw PreconditionError("basis term " + to_string() + " references absent Y");
          base = *y;
          break;
      }
      v *= f.power == 1 ? base : std::pow(base, f.power);
    }
    return v;
  }

  std::string to_string() const {
    if (factors_.empty()) return "1";
    std::string out;
    for (const auto& f : factors_) {
      if (!out.empty()) out += '*';
      switch (f.var) {
        case Variable::X: out += "x" + std::to_string(f.index + 1); break;
        case Variable::M: out += f.index == 0 ? std::string("m") : "m" + std::to_string(f.index + 1); break;
        case Variable::Y: out += "y"; break;
      }
      if (f.power != 1) out += "^" + std::to_string(f.power);
    }
    return out;
  }

  bool operator==(const BasisTerm&) const = default;

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  }

  static Factor parse_factor(std::string_view piece, std::string_view whole) {
    auto fail = [&]() -> Factor {
      throw PreconditionError("cannot parse basis term '" + std::string(whole) + "'");
    };
    if (piece.empty()) return fail();
    Factor f;
    int power = 1;
    if (const auto caret = piece.find('^'); caret != std::string_view::npos) {
      const auto p = piece.substr(caret + 1);
      if (p.empty() || !std::all_of(p.begin(), p.end(), [](char c) { return c >= '0' && c <= '9'; })) return fail();
      power = std::stoi(std::string(p));
      if (power < 1) return fail();
      piece = piece.substr(0, caret);
    }
    f.power = power;
    const char head = piece.front();
    const auto digits = piece.substr(1);
    std::size_t index = 1;
    if (!digits.empty()) {
      if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return fail();
      index = static_cast<std::size_t>(std::stoul(std::string(digits)));
      if (index == 0) return fail();
    }
    if (head == 'x') f.var = Variable::X;
    else if (head == 'm') f.var = Variable::M;
    else if (head == 'y' && digits.empty()) f.var = Variable::Y;
    else return fail();
    f.index = f.var == Variable::Y ? 0 : index - 1;
    return f;
  }

  void canonicalize() {
    std::sort(factors_.begin(), factors_.end(), [](const Factor& a, const Factor& b) {
      return a.var != b.var ? a.var < b.var : a.index < b.index;
    });
    std::vector<Factor> merged;
    for (const auto& f : factors_) {
      if (!merged.empty() && merged.back().var == f.var && merged.back().index == f.index) {
        merged.back().power += f.power;
      } else {
        merged.push_back(f);
      }
    }
    factors_ = std::move(merged);
  }

  std::vector<Factor> factors_;
};

/// Ordered list of distinct terms whose first term is the constant.
class BasisSpec {
 public:
  BasisSpec() : terms_{BasisTerm::constant()} {}

  explicit BasisSpec(std::vector<BasisTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty() || !terms_.front().is_constant()) {
      throw PreconditionError("basis must start with the constant term");
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      for (std::size_t j = i + 1; j < terms_.size(); ++j) {
        if (terms_[i] == terms_[j]) throw PreconditionError("duplicate basis term " + terms_[i].to_string());
      }
    }
  }

  static BasisSpec parse(std::string_view text) {
    std::vector<BasisTerm> terms;
    std::size_t start = 0;
    while (true) {
      const auto stop = text.find(',', start);
      terms.push_back(BasisTerm::parse(text.substr(start, stop == std::string_view::npos ? stop : stop - start)));
      if (stop == std::string_view::npos) break;
      start = stop + 1;
    }
    return BasisSpec(std::move(terms));
  }

  /// 1, x_j^p for every covariate j and power 1..degree.
  static BasisSpec polynomial_x(std::size_t x_dim, int degree) {
    std::vector<BasisTerm> terms{BasisTerm::constant()};
    for (int p = 1; p <= degree; ++p) {
      for (std::size_t j = 0; j < x_dim; ++j) terms.push_back(BasisTerm::x(j, p));
    }
    return BasisSpec(std::move(terms));
  }

  /// 1, x_1..x_d, m_1..m_k.
  static BasisSpec linear_xm(std::size_t x_dim, std::size_t m_features) {
    std::vector<BasisTerm> terms{BasisTerm::constant()};
    for (std::size_t j = 0; j < x_dim; ++j) terms.push_back(BasisTerm::x(j));
    for (std::size_t k = 0; k < m_features; ++k) terms.push_back(BasisTerm::m(k));
    return BasisSpec(std::move(terms));
  }

  const std::vector<BasisTerm>& terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }

  bool uses(Variable v) const noexcept {
    return std::any_of(terms_.begin(), terms_.end(), [v](const BasisTerm& t) { return t.uses(v); });
  }

  std::size_t arity(Variable v) const noexcept {
    std::size_t n = 0;
    for (const auto& t : terms_) n = std::max(n, t.arity(v));
    return n;
  }

  std::vector<double> evaluate(std::span<const double> x, std::optional<std::span<const double>> m = std::nullopt,
                               std::optional<double> y = std::nullopt) const {
    std::vector<double> out(terms_.size());
    evaluate_into(out, x, m, y);
    return out;
  }

  void evaluate_into(std::span<double> out, std::span<const double> x,
                     std::optional<std::span<const double>> m, std::optional<double> y) const {
    for (std::size_t i = 0; i < terms_.size(); ++i) out[i] = terms_[i].evaluate(x, m, y);
  }

  std::string to_string() const {
    std::string out;
    for (const auto& t : terms_) {
      if (!out.empty()) out += ',';
      out += t.to_string();
    }
    return out;
  }

  bool operator==(const BasisSpec&) const = default;

 private:
  std::vector<BasisTerm> terms_;
};

}  // namespace mnarfuse
