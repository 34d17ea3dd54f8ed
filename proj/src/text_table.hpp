#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace sweepkit::detail {

/// Column-aligned plain-text table. A row with no cells renders as a rule.
class TextTable {
public:
    void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
    void rule() { rows_.emplace_back(); }

    [[nodiscard]] std::string str() const
    {
        std::vector<std::size_t> width;
        for (const auto& r : rows_)
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (width.size() <= i)
                    width.resize(i + 1, 0);
                width[i] = std::max(width[i], r[i].size());
            }
        std::size_t total = 0;
        for (std::size_t w : width)
            total += w + 3;
        std::string out;
        for (const auto& r : rows_) {
            if (r.empty()) {
                out += std::string(total > 3 ? total - 3 : 0, '-') + "\n";
                continue;
            }
            std::string line;
            for (std::size_t i = 0; i < r.size(); ++i) {
                std::string cell = r[i];
                cell.resize(width[i], ' ');
                line += cell;
                if (i + 1 < r.size())
                    line += i == 0 ? " | " : "   ";
            }
            while (!line.empty() && line.back() == ' ')
                line.pop_back();
            out += line + "\n";
        }
        return out;
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

inline std::string fixed3(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

} // namespace sweepkit::detail
