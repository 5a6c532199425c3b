#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prsim/chanest.hpp"
#include "prsim/metrics.hpp"
#include "prsim/recon.hpp"

namespace prsim {

// Binary container files: 8-byte magic, u32 little-endian header length, a
// JSON header describing the payload blocks, then raw little-endian data.

void save_waveform(const std::filesystem::path& path, const ComplexWaveform& w);
void save_waveform(const std::filesystem::path& path, const RealWaveform& w);
ComplexWaveform load_complex_waveform(const std::filesystem::path& path);
RealWaveform load_real_waveform(const std::filesystem::path& path);

/// Capture file: both polarizations, the front-end spec and the receiver-side
/// frame info, enough to run `reconstruct` standalone and bit-identically.
struct CaptureFile {
    DualPolCapture capture;
    FrontendSpec frontend;
    ReceiverFrameInfo info;
};
void save_capture(const std::filesystem::path& path, const CaptureFile& c);
CaptureFile load_capture(const std::filesystem::path& path);

void save_frame(const std::filesystem::path& path, const FrameData& frame);
FrameData load_frame(const std::filesystem::path& path);

void save_channel_state(const std::filesystem::path& path, const ChannelState& cs);
ChannelState load_channel_state(const std::filesystem::path& path);

void save_field_estimate(const std::filesystem::path& path, const FieldEstimate& est);
FieldEstimate load_field_estimate(const std::filesystem::path& path);

/// CSV emission. Every file starts with a "# <tool> config_hash=<hex>" line.
std::string trace_csv(const GsTrace& trace, std::uint64_t config_hash);
std::string report_csv(const ScoreReport& report, std::uint64_t config_hash);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace prsim
