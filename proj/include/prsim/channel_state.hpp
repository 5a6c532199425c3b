#pragma once

#include <vector>

#include "prsim/channel.hpp"
#include "prsim/frontend.hpp"
#include "prsim/txsim.hpp"

namespace prsim {

/// Everything the receiver models about the link: transmitter impairments,
/// accumulated fiber dispersion, polarization state, per-branch O/E responses
/// and branch delays. This is what channel estimation fits and what the
/// reconstruction loop assumes.
struct ChannelState {
    TxImpairments tx;
    double fiber_ps_per_nm = 0.0;
    double wavelength_nm = 1550.0;
    JonesMatrix jones;
    std::vector<FrequencyResponse> rx;           // per branch; empty = flat
    std::vector<double> branch_delays_symbols;   // per branch; empty = use FrontendSpec

    static ChannelState neutral() { return {}; }

    double delay_for(const FrontendSpec& spec, std::size_t branch) const {
        if (branch < branch_delays_symbols.size()) return branch_delays_symbols[branch];
        return spec.branches[branch].delay_symbols;
    }

    const FrequencyResponse* rx_for(std::size_t branch) const {
        if (branch < rx.size() && !(rx[branch].is_taps() && rx[branch].taps.size() == 1))
            return &rx[branch];
        return nullptr;
    }
};

/// Channel state matching the simulation truth for a given run.
ChannelState true_channel_state(const TxImpairments& tx, const FiberSpec& fiber,
                                const JonesMatrix& jones, const FrontendSpec& spec);

}  // namespace prsim
