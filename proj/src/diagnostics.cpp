#include "nsch/diagnostics.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

namespace nsch {

namespace {

constexpr const char* kHeader = "# nsch-ledger v1";

struct Column {
    const char* name;
    double LedgerRow::*field = nullptr;
    double EnergyBreakdown::*energy = nullptr;
    long long LedgerRow::*counter = nullptr;
};

const std::vector<Column>& columns() {
    static const std::vector<Column> c = {
        {"time", &LedgerRow::time},
        {"h", &LedgerRow::h},
        {"kinetic", nullptr, &EnergyBreakdown::kinetic},
        {"grad_phi", nullptr, &EnergyBreakdown::grad_phi},
        {"grad_psi", nullptr, &EnergyBreakdown::grad_psi},
        {"nonlocal", nullptr, &EnergyBreakdown::nonlocal},
        {"f_phi_int", nullptr, &EnergyBreakdown::f_phi_int},
        {"f_psi_int", nullptr, &EnergyBreakdown::f_psi_int},
        {"g_int", nullptr, &EnergyBreakdown::g_int},
        {"total", nullptr, &EnergyBreakdown::total},
        {"viscous", &LedgerRow::viscous},
        {"diss_phi", &LedgerRow::diss_phi},
        {"diss_psi", &LedgerRow::diss_psi},
        {"oono_source", &LedgerRow::oono_source},
        {"mean_phi", &LedgerRow::mean_phi},
        {"mean_psi", &LedgerRow::mean_psi},
        {"mean_sigma1", &LedgerRow::mean_sigma1},
        {"entropy_phi", &LedgerRow::entropy_phi},
        {"entropy_psi", &LedgerRow::entropy_psi},
        {"min_phi", &LedgerRow::min_phi},
        {"max_phi", &LedgerRow::max_phi},
        {"min_psi", &LedgerRow::min_psi},
        {"max_psi", &LedgerRow::max_psi},
        {"newton_iters_ch", nullptr, nullptr, &LedgerRow::newton_iters_ch},
        {"picard_iters_outer", nullptr, nullptr, &LedgerRow::picard_iters_outer},
        {"cg_iters_total", nullptr, nullptr, &LedgerRow::cg_iters_total},
        {"extra_nonneg", &LedgerRow::extra_nonneg},
        {"inequality_residual", &LedgerRow::inequality_residual},
    };
    return c;
}

std::string format_row(const LedgerRow& r) {
    std::string line;
    char buf[64];
    bool first = true;
    for (const Column& c : columns()) {
        if (!first) line += ',';
        first = false;
        if (c.counter) {
            std::snprintf(buf, sizeof buf, "%lld", r.*c.counter);
        } else {
            double v = c.field ? r.*c.field : r.energy.*c.energy;
            std::snprintf(buf, sizeof buf, "%.17g", v);
        }
        line += buf;
    }
    return line;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = s.find(',', start);
        out.push_back(s.substr(start, p == std::string::npos ? std::string::npos : p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

void fill_state(LedgerRow& row, const SimState& s, const ModelSpec& spec) {
    row.time = s.time;
    row.mean_phi = s.phi.mean();
    row.mean_psi = s.psi.mean();
    row.entropy_phi = entropy_integral(s.phi, *spec.entropy_phi);
    row.entropy_psi = entropy_integral(s.psi, *spec.entropy_psi);
    row.min_phi = s.phi.min();
    row.max_phi = s.phi.max();
    row.min_psi = s.psi.min();
    row.max_psi = s.psi.max();
}

}  // namespace

double entropy_integral(const ScalarField& f, const EntropyFunction& w) {
    double s = 0.0;
    for (double v : f.data()) s += w.value_closed(v);
    return s * f.grid().cell_volume();
}

LedgerRow ledger_row(const SimState& s, const ModelSpec& spec) {
    LedgerRow row;
    row.energy = total_energy(s.u, s.phi, s.psi, spec);
    fill_state(row, s, spec);
    return row;
}

LedgerRow ledger_row(const SimState& s, const StepReport& r, const ModelSpec& spec) {
    LedgerRow row;
    row.h = r.h;
    row.energy = r.after;
    fill_state(row, s, spec);
    row.viscous = r.viscous;
    row.diss_phi = r.diss_phi;
    row.diss_psi = r.diss_psi;
    row.oono_source = r.oono_source;
    row.mean_sigma1 = r.mean_sigma1;
    row.newton_iters_ch = r.newton_iters_ch;
    row.picard_iters_outer = r.picard_iters_outer;
    row.cg_iters_total = r.cg_iters_total;
    row.extra_nonneg = r.extra_nonneg;
    row.inequality_residual = r.inequality_residual;
    return row;
}

MassLawReport mass_laws(const std::vector<LedgerRow>& rows, double c) {
    if (rows.size() < 2) throw std::invalid_argument("mass_laws: need at least 2 ledger rows");
    MassLawReport m;
    const double phi0 = rows[0].mean_phi - c;
    const double psi0 = rows[0].mean_psi;
    double product = phi0, integral = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        product *= 1.0 - rows[k].h * rows[k].mean_sigma1;
        integral += rows[k].h * rows[k].mean_sigma1;
        m.phi_product_error = std::max(m.phi_product_error, std::abs(rows[k].mean_phi - c - product));
        m.psi_drift = std::max(m.psi_drift, std::abs(rows[k].mean_psi - psi0));
    }
    m.product_value = product;
    m.exponential_value = phi0 * std::exp(-integral);
    m.exponential_gap = std::abs(m.product_value - m.exponential_value);
    return m;
}

const std::vector<std::string>& ledger_columns() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const Column& c : columns()) n.emplace_back(c.name);
        return n;
    }();
    return names;
}

static std::string ledger_column_line() {
    std::string s;
    for (const std::string& n : ledger_columns()) s += (s.empty() ? "" : ",") + n;
    return s;
}

LedgerWriter::LedgerWriter(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "w");
    if (!f_) throw LedgerError("cannot open ledger for writing: " + path);
    std::fprintf(f_, "%s\n%s\n", kHeader, ledger_column_line().c_str());
    std::fflush(f_);
}

LedgerWriter::~LedgerWriter() {
    if (f_) std::fclose(f_);
}

void LedgerWriter::append(const LedgerRow& row) {
    if (std::fprintf(f_, "%s\n", format_row(row).c_str()) < 0 || std::fflush(f_) != 0)
        throw LedgerError("write failed: " + path_);
}

void write_ledger(const std::vector<LedgerRow>& rows, const std::string& path) {
    LedgerWriter w(path);
    for (const LedgerRow& r : rows) w.append(r);
}

std::vector<LedgerRow> read_ledger(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LedgerError("cannot open ledger: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw LedgerError(path + ": not an nsch ledger v1 (bad first line)");
    if (!std::getline(in, line) || line != ledger_column_line())
        throw LedgerError(path + ": column header does not match schema v1");
    std::vector<LedgerRow> rows;
    const auto& cols = columns();
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = split(line);
        if (cells.size() != cols.size())
            throw LedgerError(path + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(cols.size()) + " columns, got " +
                              std::to_string(cells.size()));
        LedgerRow r;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const char* b = cells[k].c_str();
            char* end = nullptr;
            errno = 0;
            if (cols[k].counter) {
                long long v = std::strtoll(b, &end, 10);
                if (end == b || *end != '\0' || errno == ERANGE)
                    throw LedgerError(path + ":" + std::to_string(lineno) + ": bad integer '" +
                                      cells[k] + "' in " + cols[k].name);
                r.*cols[k].counter = v;
                continue;
            }
            double v = std::strtod(b, &end);
            if (end == b || *end != '\0')
                throw LedgerError(path + ":" + std::to_string(lineno) + ": bad number '" +
                                  cells[k] + "' in " + cols[k].name);
            if (cols[k].field)
                r.*cols[k].field = v;
            else
                r.energy.*cols[k].energy = v;
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace nsch
