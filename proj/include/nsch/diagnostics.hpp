#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsch/timestepper.hpp"

namespace nsch {

struct LedgerRow {
    double time = 0.0;
    double h = 0.0;
    EnergyBreakdown energy;
    double viscous = 0.0;
    double diss_phi = 0.0;
    double diss_psi = 0.0;
    double oono_source = 0.0;
    double mean_phi = 0.0;
    double mean_psi = 0.0;
    double mean_sigma1 = 0.0;  // mean of sigma1(phi^k) used by the step that produced this row
    double entropy_phi = 0.0;
    double entropy_psi = 0.0;
    double min_phi = 0.0, max_phi = 0.0, min_psi = 0.0, max_psi = 0.0;
    long long newton_iters_ch = 0;
    long long picard_iters_outer = 0;
    long long cg_iters_total = 0;
    double extra_nonneg = 0.0;
    double inequality_residual = 0.0;

    bool operator==(const LedgerRow&) const = default;
};

// Row for the initial state: energy, means, entropies and bounds; step columns zero.
LedgerRow ledger_row(const SimState& s, const ModelSpec& spec);
// Row for the state produced by a step with the given report.
LedgerRow ledger_row(const SimState& s, const StepReport& r, const ModelSpec& spec);

// Cell sums of W(phi), W(psi) times the cell volume; +inf if a value sits on a divergent endpoint.
double entropy_integral(const ScalarField& f, const EntropyFunction& w);

struct MassLawReport {
    double psi_drift = 0.0;         // max |mean_psi - mean_psi(0)|
    double phi_product_error = 0.0; // max |mean_phi - c - product law|
    double product_value = 0.0;     // last product-law value of mean_phi - c
    double exponential_value = 0.0; // (mean_phi(0) - c) exp(-sum h mean_sigma1)
    double exponential_gap = 0.0;   // |product_value - exponential_value|, reported only
};

// rows[0] is the initial state; rows[k] carries the h and mean_sigma1 of step k.
// Throws std::invalid_argument with fewer than 2 rows.
MassLawReport mass_laws(const std::vector<LedgerRow>& rows, double c);

class LedgerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

const std::vector<std::string>& ledger_columns();

void write_ledger(const std::vector<LedgerRow>& rows, const std::string& path);
std::vector<LedgerRow> read_ledger(const std::string& path);

// Appends rows to an open ledger file, header written on construction.
class LedgerWriter {
  public:
    explicit LedgerWriter(const std::string& path);
    ~LedgerWriter();
    LedgerWriter(const LedgerWriter&) = delete;
    LedgerWriter& operator=(const LedgerWriter&) = delete;
    void append(const LedgerRow& row);

  private:
    std::FILE* f_ = nullptr;
    std::string path_;
};

}  // namespace nsch
