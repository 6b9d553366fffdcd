#include "bsmp/io.hpp"

#include "bsmp/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace bsmp {

std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

void dump_to(std::ostringstream& os, const Json& v, int indent, int depth)
{
    const auto newline = [&](int level) {
        if (indent < 0)
            return;
        os << '\n' << std::string(static_cast<std::size_t>(indent * level), ' ');
    };
    switch (v.type()) {
    case Json::value_t::object: {
        if (v.empty()) {
            os << "{}";
            return;
        }
        os << '{';
        bool first = true;
        for (const auto& [key, item] : v.items()) {
            if (!first)
                os << ',';
            first = false;
            newline(depth + 1);
            os << Json(key).dump() << (indent < 0 ? ":" : ": ");
            dump_to(os, item, indent, depth + 1);
        }
        newline(depth);
        os << '}';
        return;
    }
    case Json::value_t::array: {
        if (v.empty()) {
            os << "[]";
            return;
        }
        os << '[';
        bool first = true;
        for (const auto& item : v) {
            if (!first)
                os << ',';
            first = false;
            newline(depth + 1);
            dump_to(os, item, indent, depth + 1);
        }
        newline(depth);
        os << ']';
        return;
    }
    case Json::value_t::number_float: {
        const double x = v.get<double>();
        os << (std::isfinite(x) ? format_double(x) : "null");
        return;
    }
    default:
        os << v.dump();
    }
}

}  // namespace

std::string dump_json(const Json& value, int indent)
{
    std::ostringstream os;
    dump_to(os, value, indent, 0);
    os << '\n';
    return os.str();
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary)
{
    if (!out_)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& h : header)
        cell(h);
    end_row();
}

CsvWriter& CsvWriter::cell(double x)
{
    return cell(format_double(x));
}

CsvWriter& CsvWriter::cell(long long x)
{
    return cell(std::to_string(x));
}

CsvWriter& CsvWriter::cell(const std::string& x)
{
    if (!first_)
        out_ << ',';
    first_ = false;
    out_ << x;
    return *this;
}

CsvWriter& CsvWriter::empty()
{
    return cell(std::string());
}

void CsvWriter::end_row()
{
    out_ << '\n';
    first_ = true;
}

std::string hash_hex(const std::string& text)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
    return buf;
}

}  // namespace bsmp
