#pragma once

#include <fanout/semiring.hpp>

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fanout {

/*======================================================================================================================
 * Values
 *====================================================================================================================*/

/// A cell: Null, Int, Real or Text.  The variant ordering (Null < Int < Real < Text, then by value) is the
/// deterministic ascending order used for group keys.  Equality treats Null == Null, which is the group-by
/// semantics; join semantics (Null never matches) are provided by `join_key_has_null`.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;
using Tuple = std::vector<Value>;
using RowId = std::int64_t;

enum class ValueType { Int, Real, Text };

std::string_view to_string(ValueType type);
ValueType value_type_from_string(std::string_view name);

inline bool is_null(const Value &v) { return std::holds_alternative<std::monostate>(v); }
bool join_key_has_null(const Tuple &key);
bool is_numeric(ValueType type);
/// Numeric view of an Int or Real cell; nullopt for Null and Text.
std::optional<double> numeric_value(const Value &v);
/// Exact rational view of an Int or Real cell.
std::optional<Rational> exact_numeric_value(const Value &v);

/// Parses a cell of the given type; throws TypeError on malformed input.
Value parse_value(std::string_view text, ValueType type);
/// Round-trippable text form (shortest double representation).  Null renders as `null_text`.
std::string format_value(const Value &v, std::string_view null_text = "NULL");

/// Int and Real as JSON numbers, Text as a string, Null as null.
nlohmann::json value_to_json(const Value &v);
nlohmann::json tuple_to_json(const Tuple &t);

struct TupleHash
{
    std::size_t operator()(const Tuple &t) const noexcept;
};

/*======================================================================================================================
 * Schema
 *====================================================================================================================*/

struct Attribute
{
    std::string name;
    ValueType type;

    bool operator==(const Attribute &) const = default;
};

/// Ordered attributes of a relation.  Base relations carry their name in `relation_name`; derived relations
/// (join and aggregate outputs) leave it empty and store already-qualified attribute names ("H.uid").
class Schema
{
  public:
    Schema() = default;
    Schema(std::string relation_name, std::vector<Attribute> attributes);

    const std::string & relation_name() const { return relation_name_; }
    const std::vector<Attribute> & attributes() const { return attributes_; }
    std::size_t size() const { return attributes_.size(); }
    const Attribute & operator[](std::size_t i) const { return attributes_[i]; }

    /// Accepts a bare name ("uid") or a qualified one ("H.uid").
    std::optional<std::size_t> find(std::string_view name) const;
    /// As `find`, throwing UnknownAttribute.
    std::size_t index_of(std::string_view name) const;
    std::string qualified_name(std::size_t i) const;
    /// All attributes renamed to their qualified names, relation name dropped.
    Schema qualified() const;

    bool operator==(const Schema &) const = default;

  private:
    std::string relation_name_;
    std::vector<Attribute> attributes_;
};

/// Splits "Rel.attr" into its parts; throws UnknownAttribute when there is no dot.
std::pair<std::string, std::string> split_qualified(std::string_view qualified);

/*======================================================================================================================
 * Annotated relations
 *====================================================================================================================*/

struct Row
{
    RowId id;
    Tuple values;
    Annotation ann;
};

/// Schema plus rows; each row carries a semiring annotation once `annotation_kind` is set.  Relations are
/// treated as immutable values: operations return new relations.
class AnnotatedRelation
{
  public:
    AnnotatedRelation() = default;
    explicit AnnotatedRelation(Schema schema, std::optional<SemiringKind> kind = std::nullopt)
        : schema_(std::move(schema)), kind_(kind)
    { }

    const Schema & schema() const { return schema_; }
    const std::string & name() const { return schema_.relation_name(); }
    const std::vector<Row> & rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    std::optional<SemiringKind> annotation_kind() const { return kind_; }
    /// Throws KindMismatch when the relation has not been annotated.
    SemiringKind require_annotated() const;

    /// Appends a row; checks arity, cell types (Null allowed anywhere), row-id uniqueness and annotation kind.
    void add_row(RowId id, Tuple values, Annotation ann = {});
    /// Appends without checks, for operators that construct rows known to conform.
    void add_row_unchecked(RowId id, Tuple values, Annotation ann);

    /// Same tuples, every annotation replaced by f(row).
    template<typename F>
    AnnotatedRelation reannotated(SemiringKind kind, F &&f) const {
        AnnotatedRelation out(schema_, kind);
        out.rows_.reserve(rows_.size());
        for (const auto &r : rows_) out.rows_.push_back(Row{r.id, r.values, f(r)});
        return out;
    }

    /// Row ids grouped by the projection onto `attrs`, in ascending key order.  Rows whose key contains a
    /// Null are grouped too; callers that need join semantics skip those keys.
    std::map<Tuple, std::vector<std::size_t>> group_rows(const std::vector<std::string> &attrs) const;
    Tuple project(const Row &row, const std::vector<std::size_t> &positions) const;
    std::vector<std::size_t> positions(const std::vector<std::string> &attrs) const;

  private:
    Schema schema_;
    std::vector<Row> rows_;
    std::optional<SemiringKind> kind_;
};

/// Named relations.  Names are unique.
class Database
{
  public:
    void add(AnnotatedRelation rel);
    void replace(AnnotatedRelation rel);
    bool contains(std::string_view name) const;
    const AnnotatedRelation & at(std::string_view name) const;
    const std::map<std::string, AnnotatedRelation, std::less<>> & relations() const { return relations_; }
    std::vector<std::string> names() const;

  private:
    std::map<std::string, AnnotatedRelation, std::less<>> relations_;
};

/*======================================================================================================================
 * CSV
 *====================================================================================================================*/

/// RFC-4180 style: comma separated, double-quote quoting with "" escapes, header row required.  An unquoted
/// cell equal to `null_token` is Null; a quoted one is the literal text.  Row ids are assigned in file order
/// from 0.  The header must list exactly the schema's attribute names, in order.
AnnotatedRelation read_csv(std::istream &in, const Schema &schema, std::string_view null_token = "",
                           std::string_view source = "<stream>");
AnnotatedRelation load_csv(const std::string &path, const Schema &schema, std::string_view null_token = "");
void write_csv(std::ostream &out, const AnnotatedRelation &rel, std::string_view null_token = "");

/// Raw CSV records (each a list of cells plus a per-cell quoted flag).
struct CsvCell
{
    std::string text;
    bool quoted = false;
};
std::vector<std::vector<CsvCell>> parse_csv_records(std::istream &in, std::string_view source = "<stream>");

}
