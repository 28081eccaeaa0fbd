// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "invnorm/serialize.hpp"

namespace invnorm {

namespace {

std::string fmt(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::vector<std::string> domain_union(const std::vector<EvalReport>& reports) {
    std::set<std::string> names;
    for (const EvalReport& r : reports) {
        for (const auto& [name, acc] : r.per_domain_accuracy) names.insert(name);
    }
    return {names.begin(), names.end()};
}

}  // namespace

std::string comparison_table_text(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << "model     held-out   seed  held-acc  macro-f1  train-acc  style-gap  gap-raw   params\n";
    os << "--------  ---------  ----  --------  --------  ---------  ---------  --------  --------\n";
    for (const EvalReport& r : reports) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-8s  %-9s  %4llu  %8.4f  %8.4f  %9.4f  %9.4f  %8.4f  %8lld\n",
                      r.model_kind.c_str(), r.held_out_domain.c_str(),
                      static_cast<unsigned long long>(r.seed), r.held_out_accuracy, r.macro_f1,
                      r.train_accuracy, r.feature_style_gap, r.feature_style_gap_raw,
                      r.params_total);
        os << line;
    }
    return os.str();
}

std::string comparison_table_csv(const std::vector<EvalReport>& reports) {
    std::vector<std::string> domains = domain_union(reports);
    std::ostringstream os;
    os << "model,held_out,seed,held_out_accuracy,macro_f1,train_accuracy,"
          "feature_style_gap,feature_style_gap_raw,params_total,epochs";
    for (const std::string& d : domains) os << ",acc_" << d;
    os << "\n";
    for (const EvalReport& r : reports) {
        os << r.model_kind << "," << r.held_out_domain << "," << r.seed << ","
           << fmt(r.held_out_accuracy) << "," << fmt(r.macro_f1) << "," << fmt(r.train_accuracy)
           << "," << fmt(r.feature_style_gap, 6) << "," << fmt(r.feature_style_gap_raw, 6) << ","
           << r.params_total << "," << r.epochs;
        for (const std::string& d : domains) {
            auto it = r.per_domain_accuracy.find(d);
            os << "," << (it != r.per_domain_accuracy.end() ? fmt(it->second) : "");
        }
        os << "\n";
    }
    return os.str();
}

std::string accuracy_bar_svg(const std::vector<EvalReport>& reports) {
    const std::vector<std::string> domains = domain_union(reports);
    const int bars_per_group = static_cast<int>(reports.size());
    const int bar_w = 18;
    const int group_gap = 26;
    const int group_w = bars_per_group * bar_w + group_gap;
    const int chart_h = 220;
    const int left = 56, top = 24, bottom = 56;
    const int width = left + static_cast<int>(domains.size()) * group_w + 24;
    const int height = top + chart_h + bottom;
    static const char* palette[] = {"#4878cf", "#d65f5f", "#6acc65", "#b47cc7",
                                    "#c4ad66", "#77bedb"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // y axis with 0..1 ticks
    for (int tick = 0; tick <= 5; ++tick) {
        const double frac = tick / 5.0;
        const int y = top + static_cast<int>((1.0 - frac) * chart_h);
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 12 << "\" y2=\""
           << y << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
           << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(frac, 1)
           << "</text>\n";
    }
    for (std::size_t d = 0; d < domains.size(); ++d) {
        const int gx = left + static_cast<int>(d) * group_w + group_gap / 2;
        for (std::size_t ri = 0; ri < reports.size(); ++ri) {
            auto it = reports[ri].per_domain_accuracy.find(domains[d]);
            if (it == reports[ri].per_domain_accuracy.end()) continue;
            const double acc = std::clamp(it->second, 0.0, 1.0);
            const int h = static_cast<int>(acc * chart_h);
            const int x = gx + static_cast<int>(ri) * bar_w;
            const int y = top + chart_h - h;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w - 3
               << "\" height=\"" << h << "\" fill=\"" << palette[ri % 6] << "\"/>\n";
        }
        os << "<text x=\"" << gx + bars_per_group * bar_w / 2 << "\" y=\"" << top + chart_h + 16
           << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">"
           << domains[d] << "</text>\n";
    }
    // legend
    for (std::size_t ri = 0; ri < reports.size(); ++ri) {
        const int y = top + chart_h + 30 + static_cast<int>(ri / 3) * 16;
        const int x = left + static_cast<int>(ri % 3) * 220;
        os << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
           << palette[ri % 6] << "\"/>\n";
        os << "<text x=\"" << x + 14 << "\" y=\"" << y
           << "\" font-size=\"11\" font-family=\"sans-serif\">" << reports[ri].model_kind
           << " (held-out " << reports[ri].held_out_domain << ", seed " << reports[ri].seed
           << ")</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

EvalReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return EvalReport::from_json(ss.str());
}

}  // namespace invnorm
