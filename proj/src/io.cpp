#include "prsim/io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace prsim {

using nlohmann::json;

namespace {

constexpr char kMagicWaveform[9] = "PRSIMWF1";
constexpr char kMagicCapture[9] = "PRSIMCP1";
constexpr char kMagicFrame[9] = "PRSIMFR1";
constexpr char kMagicEstimate[9] = "PRSIMFE1";

void write_container(const std::filesystem::path& path, const char magic[9], const json& header,
                     const std::vector<std::pair<const void*, std::size_t>>& blocks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw stage_error("io", "cannot open for writing: " + path.string());
    const std::string h = header.dump();
    const auto hlen = static_cast<std::uint32_t>(h.size());
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [ptr, bytes] : blocks)
        out.write(static_cast<const char*>(ptr), static_cast<std::streamsize>(bytes));
    if (!out) throw stage_error("io", "write failed: " + path.string());
}

json read_container(const std::filesystem::path& path, const char magic[9], std::ifstream& in) {
    in.open(path, std::ios::binary);
    if (!in) throw stage_error("io", "cannot open: " + path.string());
    char m[8];
    std::uint32_t hlen = 0;
    in.read(m, 8);
    in.read(reinterpret_cast<char*>(&hlen), 4);
    if (!in || std::memcmp(m, magic, 8) != 0)
        throw stage_error("io", "bad magic in " + path.string());
    std::string h(hlen, '\0');
    in.read(h.data(), hlen);
    if (!in) throw stage_error("io", "truncated header in " + path.string());
    json j = json::parse(h, nullptr, false);
    if (j.is_discarded()) throw stage_error("io", "malformed header JSON in " + path.string());
    return j;
}

template <typename T>
void read_block(std::ifstream& in, std::vector<T>& out, std::size_t count,
                const std::string& what) {
    out.resize(count);
    in.read(reinterpret_cast<char*>(out.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw stage_error("io", "truncated block: " + what);
}

json response_to_json(const FrequencyResponse& h) {
    if (!h.is_taps())
        throw stage_error("io", "dense-spectrum responses are grid-bound and not serializable");
    json j;
    j["kind"] = (h.kind == FrequencyResponse::Kind::real) ? "real" : "complex";
    j["spacing_symbols"] = h.tap_spacing_symbols;
    json re = json::array(), im = json::array();
    for (const auto& t : h.taps) {
        re.push_back(t.real());
        im.push_back(t.imag());
    }
    j["taps_re"] = re;
    j["taps_im"] = im;
    return j;
}

FrequencyResponse response_from_json(const json& j) {
    const auto kind = (j.at("kind").get<std::string>() == "real")
                          ? FrequencyResponse::Kind::real
                          : FrequencyResponse::Kind::complex_valued;
    const auto& re = j.at("taps_re");
    const auto& im = j.at("taps_im");
    std::vector<cdouble> taps;
    for (std::size_t i = 0; i < re.size(); ++i)
        taps.emplace_back(re[i].get<double>(), im[i].get<double>());
    return FrequencyResponse::from_taps(kind, std::move(taps), j.at("spacing_symbols").get<double>());
}

json frontend_to_json(const FrontendSpec& spec) {
    json j;
    j["sample_rate_hz"] = spec.sample_rate;
    json branches = json::array();
    for (const auto& b : spec.branches) {
        json jb;
        jb["label"] = b.label;
        jb["delay_symbols"] = b.delay_symbols;
        jb["dispersive_ps_per_nm"] = b.dispersive_ps_per_nm;
        if (b.combine_with) jb["combine_with"] = *b.combine_with;
        jb["coupler_ratio"] = b.coupler_ratio;
        jb["oe_response"] = response_to_json(b.oe_response);
        jb["thermal_noise_density"] = b.thermal_noise_density;
        if (b.adc_bits) jb["adc_bits"] = *b.adc_bits;
        branches.push_back(jb);
    }
    j["branches"] = branches;
    return j;
}

FrontendSpec frontend_from_json(const json& j) {
    FrontendSpec spec;
    spec.sample_rate = j.at("sample_rate_hz").get<double>();
    for (const auto& jb : j.at("branches")) {
        BranchSpec b;
        b.label = jb.at("label").get<std::string>();
        b.delay_symbols = jb.at("delay_symbols").get<double>();
        b.dispersive_ps_per_nm = jb.at("dispersive_ps_per_nm").get<double>();
        if (jb.contains("combine_with")) b.combine_with = jb.at("combine_with").get<std::size_t>();
        b.coupler_ratio = jb.at("coupler_ratio").get<double>();
        b.oe_response = response_from_json(jb.at("oe_response"));
        b.thermal_noise_density = jb.at("thermal_noise_density").get<double>();
        if (jb.contains("adc_bits")) b.adc_bits = jb.at("adc_bits").get<int>();
        spec.branches.push_back(std::move(b));
    }
    return spec;
}

}  // namespace

void save_waveform(const std::filesystem::path& path, const ComplexWaveform& w) {
    json h;
    h["kind"] = "complex";
    h["sample_rate_hz"] = w.sample_rate;
    h["symbol_rate_baud"] = w.symbol_rate;
    h["length"] = w.samples.size();
    h["edge_invalid"] = w.edge_invalid;
    write_container(path, kMagicWaveform, h,
                    {{w.samples.data(), w.samples.size() * sizeof(cdouble)}});
}

void save_waveform(const std::filesystem::path& path, const RealWaveform& w) {
    json h;
    h["kind"] = "real";
    h["sample_rate_hz"] = w.sample_rate;
    h["length"] = w.samples.size();
    h["edge_invalid"] = w.edge_invalid;
    write_container(path, kMagicWaveform, h,
                    {{w.samples.data(), w.samples.size() * sizeof(double)}});
}

ComplexWaveform load_complex_waveform(const std::filesystem::path& path) {
    std::ifstream in;
    const json h = read_container(path, kMagicWaveform, in);
    if (h.at("kind").get<std::string>() != "complex")
        throw stage_error("io", "waveform kind mismatch in " + path.string());
    ComplexWaveform w;
    w.sample_rate = h.at("sample_rate_hz").get<double>();
    w.symbol_rate = h.value("symbol_rate_baud", 0.0);
    w.edge_invalid = h.value("edge_invalid", std::size_t{0});
    read_block(in, w.samples, h.at("length").get<std::size_t>(), "samples");
    return w;
}

RealWaveform load_real_waveform(const std::filesystem::path& path) {
    std::ifstream in;
    const json h = read_container(path, kMagicWaveform, in);
    if (h.at("kind").get<std::string>() != "real")
        throw stage_error("io", "waveform kind mismatch in " + path.string());
    RealWaveform w;
    w.sample_rate = h.at("sample_rate_hz").get<double>();
    w.edge_invalid = h.value("edge_invalid", std::size_t{0});
    read_block(in, w.samples, h.at("length").get<std::size_t>(), "samples");
    return w;
}

void save_capture(const std::filesystem::path& path, const CaptureFile& c) {
    json h;
    h["frontend"] = frontend_to_json(c.frontend);
    json info;
    info["sps"] = c.info.mod.sps;
    info["rolloff"] = c.info.mod.rolloff;
    info["span_symbols"] = c.info.mod.span;
    info["symbol_rate_baud"] = c.info.mod.symbol_rate;
    info["training_len"] = c.info.training_len;
    info["payload_len"] = c.info.payload_len;
    info["pilot_positions"] = c.info.pilot_positions;
    info["symbol_gain"] = c.info.symbol_gain;
    info["payload_qam_order"] = c.info.payload_qam_order;
    info["payload_entropy_bits"] = c.info.payload_entropy_bits;
    h["frame_info"] = info;
    const std::size_t grid = c.capture.pol_x.branches.at(0).samples.size();
    h["grid"] = grid;
    h["sample_rate_hz"] = c.capture.pol_x.branches.at(0).sample_rate;
    h["branch_count"] = c.capture.pol_x.branches.size();

    std::vector<std::pair<const void*, std::size_t>> blocks;
    for (const auto* pol : {&c.capture.pol_x, &c.capture.pol_y})
        for (const auto& b : pol->branches)
            blocks.emplace_back(b.samples.data(), b.samples.size() * sizeof(double));
    for (int p = 0; p < 2; ++p)
        blocks.emplace_back(c.info.training_symbols[static_cast<std::size_t>(p)].data(),
                            c.info.training_symbols[static_cast<std::size_t>(p)].size() * sizeof(cdouble));
    for (int p = 0; p < 2; ++p)
        blocks.emplace_back(c.info.pilot_symbols[static_cast<std::size_t>(p)].data(),
                            c.info.pilot_symbols[static_cast<std::size_t>(p)].size() * sizeof(cdouble));
    write_container(path, kMagicCapture, h, blocks);
}

CaptureFile load_capture(const std::filesystem::path& path) {
    std::ifstream in;
    const json h = read_container(path, kMagicCapture, in);
    CaptureFile c;
    c.frontend = frontend_from_json(h.at("frontend"));
    const auto& info = h.at("frame_info");
    c.info.mod.sps = info.at("sps").get<int>();
    c.info.mod.rolloff = info.at("rolloff").get<double>();
    c.info.mod.span = info.at("span_symbols").get<int>();
    c.info.mod.symbol_rate = info.at("symbol_rate_baud").get<double>();
    c.info.training_len = info.at("training_len").get<std::size_t>();
    c.info.payload_len = info.at("payload_len").get<std::size_t>();
    c.info.pilot_positions = info.at("pilot_positions").get<std::vector<std::size_t>>();
    c.info.symbol_gain = info.at("symbol_gain").get<std::vector<double>>();
    c.info.payload_qam_order = info.at("payload_qam_order").get<int>();
    c.info.payload_entropy_bits = info.at("payload_entropy_bits").get<double>();

    const auto grid = h.at("grid").get<std::size_t>();
    const auto fs = h.at("sample_rate_hz").get<double>();
    const auto nb = h.at("branch_count").get<std::size_t>();
    for (auto* pol : {&c.capture.pol_x, &c.capture.pol_y}) {
        for (std::size_t i = 0; i < nb; ++i) {
            RealWaveform w;
            w.sample_rate = fs;
            read_block(in, w.samples, grid, "capture branch");
            pol->branches.push_back(std::move(w));
        }
    }
    c.info.training_symbols.resize(2);
    c.info.pilot_symbols.resize(2);
    for (int p = 0; p < 2; ++p)
        read_block(in, c.info.training_symbols[static_cast<std::size_t>(p)], c.info.training_len,
                   "training symbols");
    for (int p = 0; p < 2; ++p)
        read_block(in, c.info.pilot_symbols[static_cast<std::size_t>(p)],
                   c.info.pilot_positions.size(), "pilot symbols");
    return c;
}

void save_frame(const std::filesystem::path& path, const FrameData& frame) {
    json h;
    h["payload_len"] = frame.layout.payload_len;
    h["pilot_ratio"] = frame.layout.pilot_ratio;
    h["training_len"] = frame.layout.training_len;
    h["training_qam_order"] = frame.layout.training_qam_order;
    h["seed"] = frame.seed;
    h["qam_order"] = frame.qam_order;
    h["entropy_bits"] = frame.entropy_bits;
    h["pilot_positions"] = frame.pilot_positions;
    h["symbol_gain"] = frame.symbol_gain;
    std::vector<std::pair<const void*, std::size_t>> blocks;
    for (int p = 0; p < 2; ++p)
        blocks.emplace_back(frame.symbols[static_cast<std::size_t>(p)].data(),
                            frame.symbols[static_cast<std::size_t>(p)].size() * sizeof(cdouble));
    for (int p = 0; p < 2; ++p)
        blocks.emplace_back(frame.payload_indices[static_cast<std::size_t>(p)].data(),
                            frame.payload_indices[static_cast<std::size_t>(p)].size() *
                                sizeof(std::uint32_t));
    blocks.emplace_back(frame.is_pilot.data(), frame.is_pilot.size());
    write_container(path, kMagicFrame, h, blocks);
}

FrameData load_frame(const std::filesystem::path& path) {
    std::ifstream in;
    const json h = read_container(path, kMagicFrame, in);
    FrameData f;
    f.layout.payload_len = h.at("payload_len").get<std::size_t>();
    f.layout.pilot_ratio = h.at("pilot_ratio").get<double>();
    f.layout.training_len = h.at("training_len").get<std::size_t>();
    f.layout.training_qam_order = h.at("training_qam_order").get<int>();
    f.seed = h.at("seed").get<std::uint64_t>();
    f.qam_order = h.at("qam_order").get<int>();
    f.entropy_bits = h.at("entropy_bits").get<double>();
    f.pilot_positions = h.at("pilot_positions").get<std::vector<std::size_t>>();
    f.symbol_gain = h.at("symbol_gain").get<std::vector<double>>();
    f.symbols.resize(2);
    f.payload_indices.resize(2);
    const std::size_t frame_len = f.layout.training_len + f.layout.payload_len;
    for (int p = 0; p < 2; ++p)
        read_block(in, f.symbols[static_cast<std::size_t>(p)], frame_len, "frame symbols");
    for (int p = 0; p < 2; ++p)
        read_block(in, f.payload_indices[static_cast<std::size_t>(p)], f.layout.payload_len,
                   "payload indices");
    read_block(in, f.is_pilot, f.layout.payload_len, "pilot mask");
    return f;
}

void save_channel_state(const std::filesystem::path& path, const ChannelState& cs) {
    json j;
    j["tool"] = kToolVersion;
    json tx;
    tx["eo_response"] = response_to_json(cs.tx.eo_response);
    tx["iq_gain_db"] = cs.tx.iq_gain_imbalance_db;
    tx["iq_phase_deg"] = cs.tx.iq_phase_error_deg;
    tx["iq_skew_symbols"] = cs.tx.iq_skew_symbols;
    tx["mzm_drive_ratio"] = cs.tx.mzm_drive_ratio;
    j["tx"] = tx;
    j["fiber_total_dispersion_ps_per_nm"] = cs.fiber_ps_per_nm;
    j["wavelength_nm"] = cs.wavelength_nm;
    json jm = json::array();
    for (const auto& v : cs.jones.m) jm.push_back(json::array({v.real(), v.imag()}));
    j["jones"] = jm;
    json rx = json::array();
    for (const auto& r : cs.rx) rx.push_back(response_to_json(r));
    j["rx_responses"] = rx;
    j["branch_delays_symbols"] = cs.branch_delays_symbols;
    write_text_file(path, j.dump(2) + "\n");
}

ChannelState load_channel_state(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw stage_error("io", "cannot open: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw stage_error("io", "malformed channel state JSON: " + path.string());
    ChannelState cs;
    const auto& tx = j.at("tx");
    cs.tx.eo_response = response_from_json(tx.at("eo_response"));
    cs.tx.iq_gain_imbalance_db = tx.at("iq_gain_db").get<double>();
    cs.tx.iq_phase_error_deg = tx.at("iq_phase_deg").get<double>();
    cs.tx.iq_skew_symbols = tx.at("iq_skew_symbols").get<double>();
    cs.tx.mzm_drive_ratio = tx.at("mzm_drive_ratio").get<double>();
    cs.fiber_ps_per_nm = j.at("fiber_total_dispersion_ps_per_nm").get<double>();
    cs.wavelength_nm = j.at("wavelength_nm").get<double>();
    const auto& jm = j.at("jones");
    for (std::size_t i = 0; i < 4; ++i)
        cs.jones.m[i] = cdouble{jm[i][0].get<double>(), jm[i][1].get<double>()};
    for (const auto& r : j.at("rx_responses")) cs.rx.push_back(response_from_json(r));
    cs.branch_delays_symbols = j.at("branch_delays_symbols").get<std::vector<double>>();
    return cs;
}

void save_field_estimate(const std::filesystem::path& path, const FieldEstimate& est) {
    json h;
    h["payload_len"] = est.payload_symbols.at(0).size();
    h["low_confidence"] = est.low_confidence;
    h["mzm_clip_count"] = est.mzm_clip_count;
    std::vector<std::pair<const void*, std::size_t>> blocks;
    for (int p = 0; p < 2; ++p)
        blocks.emplace_back(est.payload_symbols[static_cast<std::size_t>(p)].data(),
                            est.payload_symbols[static_cast<std::size_t>(p)].size() * sizeof(cdouble));
    blocks.emplace_back(est.valid_mask.data(), est.valid_mask.size());
    write_container(path, kMagicEstimate, h, blocks);
}

FieldEstimate load_field_estimate(const std::filesystem::path& path) {
    std::ifstream in;
    const json h = read_container(path, kMagicEstimate, in);
    FieldEstimate est;
    const auto n = h.at("payload_len").get<std::size_t>();
    est.low_confidence = h.at("low_confidence").get<bool>();
    est.mzm_clip_count = h.at("mzm_clip_count").get<std::size_t>();
    est.payload_symbols.resize(2);
    for (int p = 0; p < 2; ++p)
        read_block(in, est.payload_symbols[static_cast<std::size_t>(p)], n, "payload symbols");
    read_block(in, est.valid_mask, n, "valid mask");
    return est;
}

namespace {

std::string csv_header_line(std::uint64_t config_hash) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    return std::string("# ") + kToolVersion + " config_hash=" + buf + "\n";
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string trace_csv(const GsTrace& trace, std::uint64_t config_hash) {
    std::string s = csv_header_line(config_hash);
    s += "iteration,objective,snr_db\n";
    for (std::size_t i = 0; i < trace.objective.size(); ++i) {
        s += std::to_string(i + 1) + "," + fmt_double(trace.objective[i]) + "," +
             fmt_double(trace.snr_db[i]) + "\n";
    }
    return s;
}

std::string report_csv(const ScoreReport& r, std::uint64_t config_hash) {
    std::string s = csv_header_line(config_hash);
    s += "recovery_snr_db_x,recovery_snr_db_y,gmi_bits,ngmi,net_rate_gbps,net_ose_bps_per_hz,"
         "symbol_count,low_confidence\n";
    s += fmt_double(r.recovery_snr_db_x) + "," + fmt_double(r.recovery_snr_db_y) + "," +
         fmt_double(r.gmi_bits) + "," + fmt_double(r.ngmi) + "," + fmt_double(r.net_rate_gbps) +
         "," + fmt_double(r.net_ose_bps_per_hz) + "," + std::to_string(r.symbol_count) + "," +
         (r.low_confidence ? "1" : "0") + "\n";
    return s;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw stage_error("io", "cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw stage_error("io", "write failed: " + path.string());
}

}  // namespace prsim
