#pragma once

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace bsmp {

using Json = nlohmann::ordered_json;

/// Round-trip formatting with 17 significant digits; non-finite values print as nan/inf.
std::string format_double(double x);

/// JSON text with every floating-point number printed at 17 significant
/// digits. NaN and infinities become null.
std::string dump_json(const Json& value, int indent = 2);

void write_text(const std::string& path, const std::string& text);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    CsvWriter& cell(double x);
    CsvWriter& cell(long long x);
    CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
    CsvWriter& cell(const std::string& x);
    CsvWriter& empty();
    void end_row();

private:
    std::ofstream out_;
    bool first_ = true;
};

/// 16-digit hexadecimal FNV-1a hash of a string.
std::string hash_hex(const std::string& text);

}  // namespace bsmp
