#include <fanout/semiring.hpp>

#include <fanout/error.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace fanout {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string kind_name(SemiringKind kind) { return std::string(to_string(kind)); }

void require_same_kind(const Annotation &a, const Annotation &b, const char *op)
{
    if (a.kind() != b.kind())
        throw Error(errc::KindMismatch,
                    std::string(op) + ": cannot combine " + kind_name(a.kind()) + " with " + kind_name(b.kind()),
                    {{"left", kind_name(a.kind())}, {"right", kind_name(b.kind())}});
}

Rational pow10(int e)
{
    Rational r(1);
    for (int i = 0; i < e; ++i) r *= 10;
    return r;
}

}

Rational parse_rational(std::string_view text)
{
    auto fail = [&] {
        return Error(errc::ParseError, "not a number: '" + std::string(text) + "'", {{"text", std::string(text)}});
    };
    while (not text.empty() and std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (not text.empty() and std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (text.empty()) throw fail();

    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        Rational num = parse_rational(text.substr(0, slash));
        Rational den = parse_rational(text.substr(slash + 1));
        if (den == 0) throw fail();
        return num / den;
    }

    bool negative = false;
    if (text.front() == '+' or text.front() == '-') {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    boost::multiprecision::cpp_int mantissa = 0;
    int frac_digits = 0;
    bool seen_dot = false, seen_digit = false;
    std::size_t i = 0;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' and c <= '9') {
            mantissa = mantissa * 10 + (c - '0');
            seen_digit = true;
            if (seen_dot) ++frac_digits;
        } else if (c == '.' and not seen_dot) {
            seen_dot = true;
        } else {
            break;
        }
    }
    if (not seen_digit) throw fail();
    int exponent = 0;
    if (i < text.size()) {
        if (text[i] != 'e' and text[i] != 'E') throw fail();
        auto exp_text = text.substr(i + 1);
        if (not exp_text.empty() and exp_text.front() == '+') exp_text.remove_prefix(1);
        auto [ptr, ec] = std::from_chars(exp_text.data(), exp_text.data() + exp_text.size(), exponent);
        if (ec != std::errc() or ptr != exp_text.data() + exp_text.size() or std::abs(exponent) > 400) throw fail();
    }
    Rational r(mantissa);
    int shift = exponent - frac_digits;
    if (shift >= 0) r *= pow10(shift);
    else r /= pow10(-shift);
    return negative ? Rational(-r) : r;
}

std::string rational_to_string(const Rational &r)
{
    std::ostringstream os;
    os << boost::multiprecision::numerator(r);
    if (boost::multiprecision::denominator(r) != 1) os << '/' << boost::multiprecision::denominator(r);
    return os.str();
}

Rational rational_from_double(double d)
{
    if (not std::isfinite(d))
        throw Error(errc::InvalidWeight, "non-finite value has no rational form");
    int exp = 0;
    double frac = std::frexp(d, &exp);
    // frac * 2^53 is an exact integer
    auto mant = static_cast<long long>(std::ldexp(frac, 53));
    exp -= 53;
    Rational r(mant);
    Rational two_pow(1);
    for (int i = 0; i < std::abs(exp); ++i) two_pow *= 2;
    return exp >= 0 ? Rational(r * two_pow) : Rational(r / two_pow);
}

double to_double(const Rational &r) { return r.convert_to<double>(); }

std::string_view to_string(SemiringKind kind)
{
    switch (kind) {
        case SemiringKind::Count: return "Count";
        case SemiringKind::SumReal: return "SumReal";
        case SemiringKind::Avg: return "Avg";
        case SemiringKind::MaxTropical: return "MaxTropical";
        case SemiringKind::MinTropical: return "MinTropical";
    }
    return "?";
}

SemiringKind semiring_kind_from_string(std::string_view name)
{
    for (auto k : {SemiringKind::Count, SemiringKind::SumReal, SemiringKind::Avg, SemiringKind::MaxTropical,
                   SemiringKind::MinTropical})
        if (to_string(k) == name) return k;
    throw Error(errc::ParseError, "unknown semiring kind '" + std::string(name) + "'");
}

Weight::Weight(Rational value) : value_(std::move(value))
{
    if (value_ < 0)
        throw Error(errc::InvalidWeight, "weights must be non-negative, got " + rational_to_string(value_),
                    {{"weight", rational_to_string(value_)}});
}

/*======================================================================================================================
 * Annotation
 *====================================================================================================================*/

Annotation Annotation::zero(SemiringKind kind)
{
    switch (kind) {
        case SemiringKind::Count: return {kind, Rational(0)};
        case SemiringKind::SumReal: return {kind, 0.0};
        case SemiringKind::Avg: return {kind, AvgPair{0, 0}};
        case SemiringKind::MaxTropical: return {kind, -kInf};
        case SemiringKind::MinTropical: return {kind, kInf};
    }
    return {};
}

Annotation Annotation::one(SemiringKind kind)
{
    switch (kind) {
        case SemiringKind::Count: return {kind, Rational(1)};
        case SemiringKind::SumReal: return {kind, 1.0};
        case SemiringKind::Avg: return {kind, AvgPair{1, 0}};
        case SemiringKind::MaxTropical:
        case SemiringKind::MinTropical: return {kind, 0.0};
    }
    return {};
}

Annotation Annotation::count(Rational c)
{
    if (c < 0) throw Error(errc::InvalidWeight, "Count annotations are non-negative");
    return {SemiringKind::Count, std::move(c)};
}

Annotation Annotation::sum(double s) { return {SemiringKind::SumReal, s}; }
Annotation Annotation::avg(double count, double sum) { return {SemiringKind::Avg, AvgPair{count, sum}}; }

Annotation Annotation::max(double v)
{
    if (v == kInf) throw Error(errc::TypeError, "+inf is not in the max-tropical carrier");
    return {SemiringKind::MaxTropical, v};
}

Annotation Annotation::min(double v)
{
    if (v == -kInf) throw Error(errc::TypeError, "-inf is not in the min-tropical carrier");
    return {SemiringKind::MinTropical, v};
}

Annotation Annotation::lift(SemiringKind kind, const Rational &c)
{
    switch (kind) {
        case SemiringKind::Count: return count(c);
        case SemiringKind::SumReal: return sum(to_double(c));
        case SemiringKind::Avg: return avg(to_double(c), 0);
        case SemiringKind::MaxTropical:
        case SemiringKind::MinTropical:
            if (c == 0) return zero(kind);
            if (c == 1) return one(kind);
            throw Error(errc::UnsupportedScale, "tropical semirings only embed 0 and 1");
    }
    return {};
}

const Rational & Annotation::count_value() const
{
    if (kind_ != SemiringKind::Count) throw Error(errc::KindMismatch, "not a Count annotation");
    return std::get<Rational>(value_);
}

double Annotation::real_value() const
{
    if (kind_ == SemiringKind::Count or kind_ == SemiringKind::Avg)
        throw Error(errc::KindMismatch, "not a real-valued annotation");
    return std::get<double>(value_);
}

AvgPair Annotation::avg_value() const
{
    if (kind_ != SemiringKind::Avg) throw Error(errc::KindMismatch, "not an Avg annotation");
    return std::get<AvgPair>(value_);
}

bool Annotation::is_zero() const { return *this == zero(kind_); }
bool Annotation::is_one() const { return *this == one(kind_); }

bool Annotation::operator==(const Annotation &other) const
{
    return kind_ == other.kind_ and value_ == other.value_;
}

std::string Annotation::to_string() const
{
    std::ostringstream os;
    os << fanout::to_string(kind_) << '(';
    switch (kind_) {
        case SemiringKind::Count: os << rational_to_string(std::get<Rational>(value_)); break;
        case SemiringKind::Avg: {
            auto p = std::get<AvgPair>(value_);
            os << p.count << ", " << p.sum;
            break;
        }
        default: os << std::get<double>(value_);
    }
    os << ')';
    return os.str();
}

Annotation sr_add(const Annotation &a, const Annotation &b)
{
    require_same_kind(a, b, "sr_add");
    switch (a.kind()) {
        case SemiringKind::Count: return Annotation::count(a.count_value() + b.count_value());
        case SemiringKind::SumReal: return Annotation::sum(a.real_value() + b.real_value());
        case SemiringKind::Avg: {
            auto x = a.avg_value(), y = b.avg_value();
            return Annotation::avg(x.count + y.count, x.sum + y.sum);
        }
        case SemiringKind::MaxTropical: return Annotation::max(std::max(a.real_value(), b.real_value()));
        case SemiringKind::MinTropical: return Annotation::min(std::min(a.real_value(), b.real_value()));
    }
    return {};
}

Annotation sr_mul(const Annotation &a, const Annotation &b)
{
    require_same_kind(a, b, "sr_mul");
    switch (a.kind()) {
        case SemiringKind::Count: return Annotation::count(a.count_value() * b.count_value());
        case SemiringKind::SumReal: return Annotation::sum(a.real_value() * b.real_value());
        case SemiringKind::Avg: {
            auto x = a.avg_value(), y = b.avg_value();
            return Annotation::avg(x.count * y.count, x.count * y.sum + y.count * x.sum);
        }
        case SemiringKind::MaxTropical:
        case SemiringKind::MinTropical: {
            // the semiring zero (an infinity) annihilates
            if (a.is_zero() or b.is_zero()) return Annotation::zero(a.kind());
            double v = a.real_value() + b.real_value();
            return a.kind() == SemiringKind::MaxTropical ? Annotation::max(v) : Annotation::min(v);
        }
    }
    return {};
}

Annotation sr_scale(const Annotation &a, const Weight &w)
{
    switch (a.kind()) {
        case SemiringKind::Count: return Annotation::count(a.count_value() * w.value());
        case SemiringKind::SumReal:
            if (w == Weight::one()) return a;
            return Annotation::sum(a.real_value() * w.to_double());
        case SemiringKind::Avg: {
            if (w == Weight::one()) return a;
            auto p = a.avg_value();
            double wd = w.to_double();
            return Annotation::avg(wd * p.count, wd * p.sum);
        }
        case SemiringKind::MaxTropical:
        case SemiringKind::MinTropical:
            throw Error(errc::UnsupportedScale, "cannot scale a " + kind_name(a.kind()) + " annotation",
                        {{"kind", kind_name(a.kind())}});
    }
    return {};
}

std::optional<double> sr_finalize(const Annotation &a)
{
    switch (a.kind()) {
        case SemiringKind::Count: return to_double(a.count_value());
        case SemiringKind::SumReal: return a.real_value();
        case SemiringKind::Avg: {
            auto p = a.avg_value();
            if (p.count == 0) return std::nullopt;
            return p.sum / p.count;
        }
        case SemiringKind::MaxTropical:
        case SemiringKind::MinTropical:
            if (std::isinf(a.real_value())) return std::nullopt;
            return a.real_value();
    }
    return std::nullopt;
}

bool approx_equal(double x, double y, double rel_tol)
{
    if (x == y) return true; // also covers equal infinities
    if (std::isinf(x) or std::isinf(y)) return false;
    return std::abs(x - y) <= rel_tol * std::max({1.0, std::abs(x), std::abs(y)});
}

bool approx_equal(const Annotation &a, const Annotation &b, double rel_tol)
{
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
        case SemiringKind::Count: return a.count_value() == b.count_value();
        case SemiringKind::Avg: {
            auto x = a.avg_value(), y = b.avg_value();
            return approx_equal(x.count, y.count, rel_tol) and approx_equal(x.sum, y.sum, rel_tol);
        }
        default: return approx_equal(a.real_value(), b.real_value(), rel_tol);
    }
}

}
