#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace lac {

/// Locale-independent, round-trippable enough for CSV artifacts.
inline std::string format_real(double v, int digits = 10)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string format_fixed(double v, int decimals = 3)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::vector<std::string> split_csv_line(std::string_view line, char sep = ',')
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

template <class T>
std::string join(const std::vector<T>& items, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(items[i]);
    }
    return out;
}

} // namespace lac
