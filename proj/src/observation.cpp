#include "mmwmap/observation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mmwmap/errors.hpp"
#include "mmwmap/kernels.hpp"
#include "mmwmap/rng.hpp"

namespace mmwmap {

void WaveformConfig::validate() const {
    if (n_subcarriers < 1) throw ConfigError("waveform needs at least one subcarrier");
    if (n_symbols < 1) throw ConfigError("waveform needs at least one symbol");
    if (!(subcarrier_spacing > 0.0)) throw ConfigError("subcarrier spacing must be positive");
    if (!(carrier_frequency > 0.0)) throw ConfigError("carrier frequency must be positive");
}

Eigen::Map<const Eigen::MatrixXcd> ObservationGrid::received_symbol(int m) const {
    return {received.data() + index(0, 0, m), n_subcarriers(), n_beams()};
}

Eigen::Map<const Eigen::MatrixXcd> ObservationGrid::transmitted_symbol(int m) const {
    return {transmitted.data() + index(0, 0, m), n_subcarriers(), n_beams()};
}

void ObservationGrid::validate() const {
    waveform.validate();
    if (beam_angles.empty()) throw ConfigError("observation grid has no beams");
    for (std::size_t i = 1; i < beam_angles.size(); ++i)
        if (!(beam_angles[i] > beam_angles[i - 1]))
            throw ConfigError("beam angles must be strictly increasing");
    if (received.size() != size() || transmitted.size() != size())
        throw ConfigError("observation tensor size does not match N x I x M");
    auto finite = [](const cd& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); };
    if (!std::all_of(received.begin(), received.end(), finite) ||
        !std::all_of(transmitted.begin(), transmitted.end(), finite))
        throw ConfigError("observation tensor contains non-finite samples");
}

std::vector<double> beam_grid(double first, double last, int count) {
    if (count < 1) throw ConfigError("beam grid needs at least one beam");
    if (!(last >= first)) throw ConfigError("beam grid range is reversed");
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = 0.5 * (first + last);
        return out;
    }
    const bool full_circle = last - first >= 2.0 * kPi - 1e-12;
    const double step = (last - first) / (full_circle ? count : count - 1);
    for (int i = 0; i < count; ++i) out[i] = first + i * step;
    return out;
}

namespace {

cd draw_symbol(Constellation c, std::mt19937_64& rng) {
    const std::uint64_t r = rng();
    if (c == Constellation::Qpsk) {
        const double s = 1.0 / std::sqrt(2.0);
        return {(r & 1) ? s : -s, (r & 2) ? s : -s};
    }
    static constexpr double kLevels[4] = {-3.0, -1.0, 1.0, 3.0};
    const double s = 1.0 / std::sqrt(10.0);
    return {kLevels[r & 3] * s, kLevels[(r >> 2) & 3] * s};
}

}  // namespace

Eigen::MatrixXcd channel_matrix(const std::vector<PropagationPath>& paths, const Pose& pose,
                                const WaveformConfig& waveform, const ArrayConfig& arrays,
                                const std::vector<double>& beam_angles) {
    const int n_sub = waveform.n_subcarriers;
    const int n_beam = static_cast<int>(beam_angles.size());
    const int k_paths = static_cast<int>(paths.size());
    if (k_paths == 0) return Eigen::MatrixXcd::Zero(n_sub, n_beam);
    Eigen::MatrixXcd gamma(n_sub, k_paths);
    Eigen::MatrixXcd gains(k_paths, n_beam);
    for (int k = 0; k < k_paths; ++k) {
        const auto& p = paths[k];
        for (int n = 0; n < n_sub; ++n) {
            const double f = waveform.carrier_frequency + n * waveform.subcarrier_spacing;
            gamma(n, k) = p.coefficient * waveform.wavelength(n) *
                          std::polar(1.0, -2.0 * kPi * p.geometry.delay * f);
        }
        const double tx = wrap_angle(p.geometry.tx_angle - pose.orientation);
        const double rx = wrap_angle(p.geometry.rx_angle - pose.orientation);
        for (int i = 0; i < n_beam; ++i) gains(k, i) = combined_pattern(arrays, beam_angles[i], tx, rx);
    }
    return gamma * gains;
}

std::pair<ObservationGrid, GroundTruth> synthesize(const Scene& scene, const Pose& pose,
                                                   const WaveformConfig& waveform,
                                                   const ArrayConfig& arrays,
                                                   const std::vector<double>& beam_angles,
                                                   std::uint64_t seed) {
    waveform.validate();
    scene.validate();
    ObservationGrid grid;
    grid.pose = pose;
    grid.waveform = waveform;
    grid.beam_angles = beam_angles;
    const std::size_t total = grid.size();
    grid.transmitted.resize(total);
    grid.received.resize(total);
    std::vector<cd> noise(total, cd(0.0));

    const auto paths = enumerate_paths(scene, pose, waveform.reference_wavelength());
    std::vector<double> steered = beam_angles;
    if (arrays.pointing_error_std > 0.0) {
        for (std::size_t i = 0; i < steered.size(); ++i) {
            auto rng = make_stream(seed, {std::uint64_t(StreamTag::Pointing),
                                          static_cast<std::uint64_t>(pose.index), i});
            steered[i] += arrays.pointing_error_std * std::normal_distribution<double>(0.0, 1.0)(rng);
        }
    }
    const Eigen::MatrixXcd h = channel_matrix(paths, pose, waveform, arrays, steered);

    const int n_sub = grid.n_subcarriers();
    const int n_beam = grid.n_beams();
    const int n_sym = grid.n_symbols();
    const double sigma = std::sqrt(scene.noise_power / 2.0);
    const auto pose_key = static_cast<std::uint64_t>(pose.index);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_beam; ++i) {
        const auto beam_key = static_cast<std::uint64_t>(i);
        auto sym_rng = make_stream(seed, {std::uint64_t(StreamTag::Symbols), pose_key, beam_key});
        auto noise_rng = make_stream(seed, {std::uint64_t(StreamTag::Noise), pose_key, beam_key});
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int m = 0; m < n_sym; ++m) {
            for (int n = 0; n < n_sub; ++n) {
                const std::size_t idx = grid.index(n, i, m);
                grid.transmitted[idx] = draw_symbol(waveform.constellation, sym_rng);
                if (sigma > 0.0) {
                    const double re = normal(noise_rng);
                    const double im = normal(noise_rng);
                    noise[idx] = {sigma * re, sigma * im};
                }
            }
        }
    }
    kernels::apply_channel_parallel(grid.transmitted.data(), h, noise.data(), grid.received.data(),
                                    n_sym);
    return {std::move(grid), ground_truth_of(paths, pose.index)};
}

// ------------------------------------------------------------ binary format

namespace {

constexpr const char* kMagic = "mmwobs 1";

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* constellation_name(Constellation c) {
    return c == Constellation::Qpsk ? "qpsk" : "qam16";
}

void put_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(const unsigned char* bytes) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_observations(std::ostream& out, const std::vector<ObservationGrid>& grids) {
    for (const auto& g : grids) {
        g.validate();
        std::ostringstream h;
        h << kMagic << '\n'
          << "subcarriers " << g.n_subcarriers() << '\n'
          << "beams " << g.n_beams() << '\n'
          << "symbols " << g.n_symbols() << '\n'
          << "subcarrier_spacing " << fmt(g.waveform.subcarrier_spacing) << '\n'
          << "carrier_frequency " << fmt(g.waveform.carrier_frequency) << '\n'
          << "constellation " << constellation_name(g.waveform.constellation) << '\n'
          << "pose_index " << g.pose.index << '\n'
          << "ue_position " << fmt(g.pose.ue_position.x()) << ' ' << fmt(g.pose.ue_position.y())
          << '\n'
          << "orientation " << fmt(g.pose.orientation) << '\n'
          << "tx_position " << fmt(g.pose.tx_position.x()) << ' ' << fmt(g.pose.tx_position.y())
          << '\n'
          << "rx_position " << fmt(g.pose.rx_position.x()) << ' ' << fmt(g.pose.rx_position.y())
          << '\n'
          << "beam_angles_rad";
        for (double a : g.beam_angles) h << ' ' << fmt(a);
        h << '\n' << "payload_bytes " << g.size() * 2 * 16 << '\n' << "end\n";
        const std::string header = h.str();
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (const auto& v : g.received) {
            put_le(out, v.real());
            put_le(out, v.imag());
        }
        for (const auto& v : g.transmitted) {
            put_le(out, v.real());
            put_le(out, v.imag());
        }
    }
    if (!out) throw Error("failed to write observations");
}

void write_observations(const std::filesystem::path& path,
                        const std::vector<ObservationGrid>& grids) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    write_observations(out, grids);
}

namespace {

struct HeaderReader {
    std::istream& in;
    std::uint64_t offset = 0;

    // Returns false at clean end of input.
    bool line(std::string& out, std::uint64_t& start) {
        start = offset;
        out.clear();
        char c;
        bool any = false;
        while (in.get(c)) {
            any = true;
            ++offset;
            if (c == '\n') return true;
            out.push_back(c);
            if (out.size() > (1u << 20)) throw ParseError("header line too long", start);
        }
        if (any) throw ParseError("unterminated header line", start);
        return false;
    }
};

long parse_int(const std::string& v, std::uint64_t at, const std::string& key) {
    std::size_t used = 0;
    long out = 0;
    try {
        out = std::stol(v, &used);
    } catch (const std::exception&) {
        throw ParseError("header field '" + key + "' is not an integer", at);
    }
    if (used != v.size()) throw ParseError("header field '" + key + "' is not an integer", at);
    return out;
}

std::vector<double> parse_doubles(const std::string& v, std::uint64_t at, const std::string& key) {
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw ParseError("header field '" + key + "' has a malformed number", at);
        }
        if (used != tok.size() || !std::isfinite(d))
            throw ParseError("header field '" + key + "' has a malformed number", at);
        out.push_back(d);
    }
    return out;
}

}  // namespace

std::vector<ObservationGrid> read_observations(std::istream& in) {
    std::vector<ObservationGrid> out;
    HeaderReader reader{in};
    std::string line;
    std::uint64_t at = 0;
    while (reader.line(line, at)) {
        if (line != kMagic) throw ParseError("expected record magic '" + std::string(kMagic) + "'", at);
        std::map<std::string, std::pair<std::string, std::uint64_t>> fields;
        bool ended = false;
        while (reader.line(line, at)) {
            if (line == "end") {
                ended = true;
                break;
            }
            const auto sp = line.find(' ');
            if (sp == std::string::npos) throw ParseError("malformed header line '" + line + "'", at);
            fields[line.substr(0, sp)] = {line.substr(sp + 1), at};
        }
        if (!ended) throw ParseError("header ended before 'end' marker", reader.offset);
        auto get = [&](const std::string& key) -> const std::pair<std::string, std::uint64_t>& {
            auto it = fields.find(key);
            if (it == fields.end()) throw ParseError("missing header field '" + key + "'", reader.offset);
            return it->second;
        };
        auto get_int = [&](const std::string& key) {
            const auto& [v, pos] = get(key);
            return parse_int(v, pos, key);
        };
        auto get_doubles = [&](const std::string& key, std::size_t expect) {
            const auto& [v, pos] = get(key);
            auto d = parse_doubles(v, pos, key);
            if (expect != 0 && d.size() != expect)
                throw ParseError("header field '" + key + "' expects " + std::to_string(expect) +
                                     " values, found " + std::to_string(d.size()),
                                 pos);
            return d;
        };

        ObservationGrid g;
        const long n_sub = get_int("subcarriers");
        const long n_beam = get_int("beams");
        const long n_sym = get_int("symbols");
        if (n_sub < 1) throw ParseError("subcarriers must be >= 1", get("subcarriers").second);
        if (n_beam < 1) throw ParseError("beams must be >= 1", get("beams").second);
        if (n_sym < 1) throw ParseError("symbols must be >= 1", get("symbols").second);
        g.waveform.n_subcarriers = static_cast<int>(n_sub);
        g.waveform.n_symbols = static_cast<int>(n_sym);
        g.waveform.subcarrier_spacing = get_doubles("subcarrier_spacing", 1)[0];
        g.waveform.carrier_frequency = get_doubles("carrier_frequency", 1)[0];
        const auto& [cname, cpos] = get("constellation");
        if (cname == "qpsk")
            g.waveform.constellation = Constellation::Qpsk;
        else if (cname == "qam16")
            g.waveform.constellation = Constellation::Qam16;
        else
            throw ParseError("unknown constellation '" + cname + "'", cpos);
        g.pose.index = static_cast<int>(get_int("pose_index"));
        auto ue = get_doubles("ue_position", 2);
        auto tx = get_doubles("tx_position", 2);
        auto rx = get_doubles("rx_position", 2);
        g.pose.ue_position = {ue[0], ue[1]};
        g.pose.tx_position = {tx[0], tx[1]};
        g.pose.rx_position = {rx[0], rx[1]};
        g.pose.orientation = get_doubles("orientation", 1)[0];
        g.beam_angles = get_doubles("beam_angles_rad", static_cast<std::size_t>(n_beam));
        try {
            g.waveform.validate();
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), reader.offset);
        }

        const std::uint64_t expected = static_cast<std::uint64_t>(n_sub) * n_beam * n_sym * 2 * 16;
        if (fields.count("payload_bytes") &&
            static_cast<std::uint64_t>(get_int("payload_bytes")) != expected)
            throw ParseError("payload_bytes does not match N x I x M (expected " +
                                 std::to_string(expected) + ")",
                             get("payload_bytes").second);
        const std::uint64_t payload_start = reader.offset;
        std::vector<unsigned char> payload(expected);
        in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
        const auto got = static_cast<std::uint64_t>(in.gcount());
        if (got != expected)
            throw ParseError("truncated payload: expected " + std::to_string(expected) +
                                 " bytes, found " + std::to_string(got),
                             payload_start + got);
        reader.offset += expected;

        const std::size_t count = g.size();
        g.received.resize(count);
        g.transmitted.resize(count);
        for (std::size_t k = 0; k < 2 * count; ++k) {
            const unsigned char* p = payload.data() + 16 * k;
            const double re = get_le(p);
            const double im = get_le(p + 8);
            if (!std::isfinite(re) || !std::isfinite(im))
                throw ParseError("non-finite sample", payload_start + 16 * k);
            (k < count ? g.received[k] : g.transmitted[k - count]) = {re, im};
        }
        for (std::size_t i = 1; i < g.beam_angles.size(); ++i)
            if (!(g.beam_angles[i] > g.beam_angles[i - 1]))
                throw ParseError("beam angles must be strictly increasing", get("beam_angles_rad").second);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<ObservationGrid> ingest_observations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open observation file " + path.string(), 0);
    return read_observations(in);
}

}  // namespace mmwmap
