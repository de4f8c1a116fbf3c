#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <boost/multiprecision/cpp_int.hpp>

namespace fanout {

using Rational = boost::multiprecision::cpp_rational;

/// Parses "3", "-0.25", "1e-3" or "2/5" into an exact rational.  Decimal
/// literals are read as written, not through a binary double.
Rational parse_rational(std::string_view text);
std::string rational_to_string(const Rational &r);
/// Exact conversion of a finite double (every finite double is a dyadic rational).
Rational rational_from_double(double d);
double to_double(const Rational &r);

/// The commutative semirings (D, +, x, 0, 1) backing the supported aggregates.
///
///   Count        non-negative rationals, ordinary + and x
///   SumReal      reals, ordinary + and x
///   Avg          (count, sum) pairs; + componentwise, x is the dual-number product
///                (c1 c2, c1 s2 + c2 s1); a plain count c lifts to (c, 0)
///   MaxTropical  reals with -inf, + is max, x is +, 0 = -inf, 1 = 0
///   MinTropical  reals with +inf, + is min, x is +, 0 = +inf, 1 = 0
enum class SemiringKind { Count, SumReal, Avg, MaxTropical, MinTropical };

std::string_view to_string(SemiringKind kind);
SemiringKind semiring_kind_from_string(std::string_view name);

/// Tropical kinds are not scalable: min/max is consistent under fanout without weighing.
constexpr bool is_scalable(SemiringKind kind) {
    return kind == SemiringKind::Count or kind == SemiringKind::SumReal or kind == SemiringKind::Avg;
}

struct AvgPair
{
    double count = 0;
    double sum = 0;

    bool operator==(const AvgPair &) const = default;
};

/// A non-negative exact weight.  Strategy outputs lie in [0, 1]; custom tables may exceed 1.
class Weight
{
  public:
    Weight() = default;
    explicit Weight(Rational value);
    Weight(long numerator, long denominator = 1) : Weight(Rational(numerator) / Rational(denominator)) { }

    static Weight parse(std::string_view text) { return Weight(parse_rational(text)); }
    static Weight one() { return Weight(1); }

    const Rational & value() const { return value_; }
    double to_double() const { return fanout::to_double(value_); }
    std::string to_string() const { return rational_to_string(value_); }

    friend Weight operator*(const Weight &a, const Weight &b) { return Weight(a.value_ * b.value_); }
    std::strong_ordering operator<=>(const Weight &other) const
    {
        return value_ < other.value_ ? std::strong_ordering::less
             : value_ > other.value_ ? std::strong_ordering::greater : std::strong_ordering::equal;
    }
    bool operator==(const Weight &other) const { return value_ == other.value_; }

  private:
    Rational value_{0};
};

/// A semiring element tagged with its kind.  Immutable value type.
class Annotation
{
  public:
    /// Count zero; placeholder for unannotated rows.
    Annotation() = default;

    static Annotation zero(SemiringKind kind);
    static Annotation one(SemiringKind kind);

    static Annotation count(Rational c);
    static Annotation sum(double s);
    static Annotation avg(double count, double sum);
    static Annotation max(double v);
    static Annotation min(double v);

    /// Embeds a plain multiplicity into `kind`.  For tropical kinds only 0 and 1 have
    /// an image (the semiring zero and one).
    static Annotation lift(SemiringKind kind, const Rational &c);

    SemiringKind kind() const { return kind_; }

    const Rational & count_value() const;
    double real_value() const;       ///< SumReal, MaxTropical, MinTropical
    AvgPair avg_value() const;

    bool is_zero() const;
    bool is_one() const;

    /// Exact structural equality (no tolerance).
    bool operator==(const Annotation &other) const;

    std::string to_string() const;

  private:
    using Carrier = std::variant<Rational, double, AvgPair>;

    Annotation(SemiringKind kind, Carrier value) : kind_(kind), value_(std::move(value)) { }

    SemiringKind kind_ = SemiringKind::Count;
    Carrier value_ = Rational(0);
};

Annotation sr_add(const Annotation &a, const Annotation &b);
Annotation sr_mul(const Annotation &a, const Annotation &b);
Annotation sr_scale(const Annotation &a, const Weight &w);
/// The user-facing aggregate: Count and SumReal as reals, Avg as sum/count, tropical as the
/// extreme value.  Degenerate annotations (empty average, +-inf) have no value.
std::optional<double> sr_finalize(const Annotation &a);

inline Annotation operator+(const Annotation &a, const Annotation &b) { return sr_add(a, b); }
inline Annotation operator*(const Annotation &a, const Annotation &b) { return sr_mul(a, b); }
inline Annotation & operator+=(Annotation &a, const Annotation &b) { return a = sr_add(a, b); }

/// |x - y| <= tol * max(1, |x|, |y|) for every real component; Count is compared exactly.
bool approx_equal(const Annotation &a, const Annotation &b, double rel_tol = 1e-9);
bool approx_equal(double x, double y, double rel_tol = 1e-9);

}
