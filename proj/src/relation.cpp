#include <fanout/relation.hpp>

#include <fanout/error.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace fanout {

/*======================================================================================================================
 * Values
 *====================================================================================================================*/

std::string_view to_string(ValueType type)
{
    switch (type) {
        case ValueType::Int: return "Int";
        case ValueType::Real: return "Real";
        case ValueType::Text: return "Text";
    }
    return "?";
}

ValueType value_type_from_string(std::string_view name)
{
    std::string lower(name);
    for (auto &c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "int" or lower == "integer") return ValueType::Int;
    if (lower == "real" or lower == "double" or lower == "float") return ValueType::Real;
    if (lower == "text" or lower == "string") return ValueType::Text;
    throw Error(errc::ParseError, "unknown attribute type '" + std::string(name) + "'");
}

bool join_key_has_null(const Tuple &key)
{
    for (const auto &v : key)
        if (is_null(v)) return true;
    return false;
}

bool is_numeric(ValueType type) { return type == ValueType::Int or type == ValueType::Real; }

std::optional<double> numeric_value(const Value &v)
{
    if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto d = std::get_if<double>(&v)) return *d;
    return std::nullopt;
}

std::optional<Rational> exact_numeric_value(const Value &v)
{
    if (auto i = std::get_if<std::int64_t>(&v)) return Rational(*i);
    if (auto d = std::get_if<double>(&v)) return rational_from_double(*d);
    return std::nullopt;
}

Value parse_value(std::string_view text, ValueType type)
{
    switch (type) {
        case ValueType::Text: return std::string(text);
        case ValueType::Int: {
            std::int64_t out = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
            if (ec != std::errc() or ptr != text.data() + text.size() or text.empty())
                throw Error(errc::TypeError, "expected Int, got '" + std::string(text) + "'");
            return out;
        }
        case ValueType::Real: {
            double out = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
            if (ec != std::errc() or ptr != text.data() + text.size() or text.empty() or not std::isfinite(out))
                throw Error(errc::TypeError, "expected Real, got '" + std::string(text) + "'");
            return out;
        }
    }
    return {};
}

std::string format_value(const Value &v, std::string_view null_text)
{
    return std::visit([&](const auto &x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return std::string(null_text);
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) {
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
            return std::string(buf, ptr);
        } else return x;
    }, v);
}

nlohmann::json value_to_json(const Value &v)
{
    return std::visit([](const auto &x) -> nlohmann::json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
        else return x;
    }, v);
}

nlohmann::json tuple_to_json(const Tuple &t)
{
    auto out = nlohmann::json::array();
    for (const auto &v : t) out.push_back(value_to_json(v));
    return out;
}

std::size_t TupleHash::operator()(const Tuple &t) const noexcept
{
    std::size_t h = 0x9e3779b97f4a7c15ULL;
    for (const auto &v : t) {
        std::size_t x = std::visit([](const auto &x) -> std::size_t {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) return 0x51;
            else return std::hash<T>{}(x);
        }, v);
        h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2) + v.index();
    }
    return h;
}

/*======================================================================================================================
 * Schema
 *====================================================================================================================*/

Schema::Schema(std::string relation_name, std::vector<Attribute> attributes)
    : relation_name_(std::move(relation_name)), attributes_(std::move(attributes))
{
    std::set<std::string> seen;
    for (const auto &a : attributes_)
        if (not seen.insert(a.name).second)
            throw Error(errc::ParseError, "duplicate attribute '" + a.name + "' in relation '" + relation_name_ + "'");
}

std::optional<std::size_t> Schema::find(std::string_view name) const
{
    for (std::size_t i = 0; i != attributes_.size(); ++i)
        if (attributes_[i].name == name) return i;
    if (not relation_name_.empty() and name.size() > relation_name_.size() + 1 and
        name.substr(0, relation_name_.size()) == relation_name_ and name[relation_name_.size()] == '.')
        return find(name.substr(relation_name_.size() + 1));
    return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const
{
    if (auto i = find(name)) return *i;
    throw Error(errc::UnknownAttribute,
                "unknown attribute '" + std::string(name) + "'" +
                    (relation_name_.empty() ? std::string() : " in relation '" + relation_name_ + "'"),
                {{"attribute", std::string(name)}, {"relation", relation_name_}});
}

std::string Schema::qualified_name(std::size_t i) const
{
    return relation_name_.empty() ? attributes_[i].name : relation_name_ + "." + attributes_[i].name;
}

Schema Schema::qualified() const
{
    std::vector<Attribute> attrs;
    attrs.reserve(attributes_.size());
    for (std::size_t i = 0; i != attributes_.size(); ++i) attrs.push_back({qualified_name(i), attributes_[i].type});
    return Schema("", std::move(attrs));
}

std::pair<std::string, std::string> split_qualified(std::string_view qualified)
{
    auto dot = qualified.find('.');
    if (dot == std::string_view::npos or dot == 0 or dot + 1 == qualified.size())
        throw Error(errc::UnknownAttribute, "expected a qualified attribute 'Relation.attr', got '" +
                                                std::string(qualified) + "'",
                    {{"attribute", std::string(qualified)}});
    return {std::string(qualified.substr(0, dot)), std::string(qualified.substr(dot + 1))};
}

/*======================================================================================================================
 * AnnotatedRelation
 *====================================================================================================================*/

SemiringKind AnnotatedRelation::require_annotated() const
{
    if (not kind_)
        throw Error(errc::KindMismatch, "relation '" + name() + "' has no annotations", {{"relation", name()}});
    return *kind_;
}

void AnnotatedRelation::add_row(RowId id, Tuple values, Annotation ann)
{
    if (values.size() != schema_.size())
        throw Error(errc::TypeError, "row " + std::to_string(id) + " has " + std::to_string(values.size()) +
                                         " cells, schema has " + std::to_string(schema_.size()));
    for (std::size_t i = 0; i != values.size(); ++i) {
        const auto &v = values[i];
        if (is_null(v)) continue;
        bool ok = (schema_[i].type == ValueType::Int and std::holds_alternative<std::int64_t>(v)) or
                  (schema_[i].type == ValueType::Real and std::holds_alternative<double>(v)) or
                  (schema_[i].type == ValueType::Text and std::holds_alternative<std::string>(v));
        if (not ok)
            throw Error(errc::TypeError, "row " + std::to_string(id) + ": cell '" + schema_[i].name + "' is not " +
                                             std::string(to_string(schema_[i].type)));
    }
    for (const auto &r : rows_)
        if (r.id == id) throw Error(errc::ParseError, "duplicate row id " + std::to_string(id));
    if (kind_ and ann.kind() != *kind_)
        throw Error(errc::KindMismatch, "row annotation kind differs from relation kind");
    rows_.push_back(Row{id, std::move(values), std::move(ann)});
}

void AnnotatedRelation::add_row_unchecked(RowId id, Tuple values, Annotation ann)
{
    rows_.push_back(Row{id, std::move(values), std::move(ann)});
}

std::vector<std::size_t> AnnotatedRelation::positions(const std::vector<std::string> &attrs) const
{
    std::vector<std::size_t> out;
    out.reserve(attrs.size());
    for (const auto &a : attrs) out.push_back(schema_.index_of(a));
    return out;
}

Tuple AnnotatedRelation::project(const Row &row, const std::vector<std::size_t> &positions) const
{
    Tuple key;
    key.reserve(positions.size());
    for (auto p : positions) key.push_back(row.values[p]);
    return key;
}

std::map<Tuple, std::vector<std::size_t>> AnnotatedRelation::group_rows(const std::vector<std::string> &attrs) const
{
    auto pos = positions(attrs);
    std::map<Tuple, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i != rows_.size(); ++i) groups[project(rows_[i], pos)].push_back(i);
    return groups;
}

/*======================================================================================================================
 * Database
 *====================================================================================================================*/

void Database::add(AnnotatedRelation rel)
{
    if (rel.name().empty()) throw Error(errc::UnknownRelation, "relations in a database must be named");
    if (contains(rel.name()))
        throw Error(errc::ParseError, "duplicate relation '" + rel.name() + "'", {{"relation", rel.name()}});
    std::string key = rel.name();
    relations_.emplace(std::move(key), std::move(rel));
}

void Database::replace(AnnotatedRelation rel)
{
    std::string key = rel.name();
    relations_.insert_or_assign(std::move(key), std::move(rel));
}

bool Database::contains(std::string_view name) const { return relations_.find(name) != relations_.end(); }

const AnnotatedRelation & Database::at(std::string_view name) const
{
    auto it = relations_.find(name);
    if (it == relations_.end())
        throw Error(errc::UnknownRelation, "unknown relation '" + std::string(name) + "'",
                    {{"relation", std::string(name)}});
    return it->second;
}

std::vector<std::string> Database::names() const
{
    std::vector<std::string> out;
    for (const auto &[name, _] : relations_) out.push_back(name);
    return out;
}

/*======================================================================================================================
 * CSV
 *====================================================================================================================*/

std::vector<std::vector<CsvCell>> parse_csv_records(std::istream &in, std::string_view source)
{
    std::vector<std::vector<CsvCell>> records;
    std::vector<CsvCell> record;
    CsvCell cell;
    bool in_quotes = false, cell_started = false, after_quote = false;
    std::size_t line = 1;

    auto end_cell = [&] {
        record.push_back(std::move(cell));
        cell = {};
        cell_started = after_quote = false;
    };
    auto end_record = [&] {
        end_cell();
        records.push_back(std::move(record));
        record.clear();
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    cell.text.push_back('"');
                } else {
                    in_quotes = false;
                    after_quote = true;
                }
            } else {
                if (c == '\n') ++line;
                cell.text.push_back(c);
            }
            continue;
        }
        switch (c) {
            case ',': end_cell(); break;
            case '\r':
                if (in.peek() == '\n') break;
                [[fallthrough]];
            case '\n':
                end_record();
                ++line;
                break;
            case '"':
                if (cell_started)
                    throw Error(errc::ParseError, std::string(source) + ":" + std::to_string(line) +
                                                      ": stray quote inside unquoted cell",
                                {{"line", line}});
                in_quotes = cell.quoted = cell_started = true;
                break;
            default:
                if (after_quote)
                    throw Error(errc::ParseError, std::string(source) + ":" + std::to_string(line) +
                                                      ": text after closing quote",
                                {{"line", line}});
                cell.text.push_back(c);
                cell_started = true;
        }
    }
    if (in_quotes)
        throw Error(errc::ParseError, std::string(source) + ": unterminated quoted cell", {{"line", line}});
    if (cell_started or not record.empty() or cell.quoted) end_record();
    return records;
}

AnnotatedRelation read_csv(std::istream &in, const Schema &schema, std::string_view null_token, std::string_view source)
{
    auto records = parse_csv_records(in, source);
    if (records.empty())
        throw Error(errc::ParseError, std::string(source) + ": missing header row", {{"source", std::string(source)}});

    const auto &header = records.front();
    bool header_ok = header.size() == schema.size();
    for (std::size_t i = 0; header_ok and i != header.size(); ++i) header_ok = header[i].text == schema[i].name;
    if (not header_ok) {
        std::vector<std::string> got, want;
        for (const auto &c : header) got.push_back(c.text);
        for (const auto &a : schema.attributes()) want.push_back(a.name);
        throw Error(errc::ParseError, std::string(source) + ": header does not match schema of '" +
                                          schema.relation_name() + "'",
                    {{"header", got}, {"expected", want}});
    }

    AnnotatedRelation rel(schema);
    RowId id = -1;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto &rec = records[r];
        // blank lines are skipped unless a one-column relation makes them a Null/empty cell
        if (schema.size() != 1 and rec.size() == 1 and rec[0].text.empty() and not rec[0].quoted) continue;
        ++id;
        if (rec.size() != schema.size())
            throw Error(errc::ParseError, std::string(source) + ": row " + std::to_string(id) + " has " +
                                              std::to_string(rec.size()) + " cells, expected " +
                                              std::to_string(schema.size()),
                        {{"row", id}});
        Tuple values;
        values.reserve(rec.size());
        for (std::size_t c = 0; c != rec.size(); ++c) {
            if (not rec[c].quoted and rec[c].text == null_token) {
                values.emplace_back(std::monostate{});
                continue;
            }
            try {
                values.push_back(parse_value(rec[c].text, schema[c].type));
            } catch (const Error &e) {
                throw Error(errc::TypeError, std::string(source) + ": row " + std::to_string(id) + ", column '" +
                                                 schema[c].name + "': " + e.what(),
                            {{"row", id},
                             {"column", schema[c].name},
                             {"expected", std::string(to_string(schema[c].type))},
                             {"cell", rec[c].text}});
            }
        }
        rel.add_row_unchecked(id, std::move(values), Annotation{});
    }
    return rel;
}

AnnotatedRelation load_csv(const std::string &path, const Schema &schema, std::string_view null_token)
{
    std::ifstream in(path, std::ios::binary);
    if (not in) throw Error(errc::IoError, "cannot open '" + path + "'", {{"path", path}});
    return read_csv(in, schema, null_token, path);
}

namespace {

bool needs_quotes(const std::string &text, std::string_view null_token)
{
    if (text == null_token) return true;
    for (char c : text)
        if (c == ',' or c == '"' or c == '\n' or c == '\r') return true;
    return false;
}

void write_cell(std::ostream &out, const std::string &text, bool quote)
{
    if (not quote) {
        out << text;
        return;
    }
    out << '"';
    for (char c : text) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

}

void write_csv(std::ostream &out, const AnnotatedRelation &rel, std::string_view null_token)
{
    const auto &schema = rel.schema();
    for (std::size_t i = 0; i != schema.size(); ++i) {
        if (i) out << ',';
        write_cell(out, schema[i].name, needs_quotes(schema[i].name, "\x01"));
    }
    out << '\n';
    for (const auto &row : rel.rows()) {
        for (std::size_t i = 0; i != row.values.size(); ++i) {
            if (i) out << ',';
            if (is_null(row.values[i])) {
                out << null_token;
                continue;
            }
            auto text = format_value(row.values[i]);
            write_cell(out, text, std::holds_alternative<std::string>(row.values[i]) and needs_quotes(text, null_token));
        }
        out << '\n';
    }
}

}
