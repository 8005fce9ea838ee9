// File formats. Fields and phase maps are flat little-endian binaries of
// 64-bit floats (interleaved re/im for complex), row-major, with a
// plain-text `key: value` sidecar at <file>.txt carrying the grid and any
// acquisition metadata. Holograms are 16-bit binary PGMs (big-endian
// samples, per the format) with the physical intensity scale in the
// sidecar. CSVs are written with fixed formatting so identical data yields
// identical bytes.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qpi/field.hpp"
#include "qpi/hologram.hpp"

namespace qpi {

static_assert(std::endian::native == std::endian::little,
              "binary field files are little-endian; big-endian hosts are unsupported");

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Ordered key/value sidecar.
class Sidecar {
public:
    void set(const std::string& key, const std::string& value) {
        if (map_.insert({key, value}).second) order_.push_back(key);
        else map_[key] = value;
    }
    void set_double(const std::string& key, double v) { set(key, format_double(v)); }
    void set_u64(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }

    bool has(const std::string& key) const { return map_.count(key) != 0; }

    std::string get(const std::string& key) const {
        auto it = map_.find(key);
        if (it == map_.end())
            throw std::runtime_error("sidecar: missing key '" + key + "'");
        return it->second;
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = map_.find(key);
        return it == map_.end() ? fallback : it->second;
    }
    double get_double(const std::string& key) const { return std::stod(get(key)); }
    std::uint64_t get_u64(const std::string& key) const { return std::stoull(get(key)); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("sidecar: cannot write " + path.string());
        for (const auto& key : order_) out << key << ": " << map_.at(key) << "\n";
    }

    static Sidecar load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("sidecar: cannot read " + path.string());
        Sidecar sc;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string key = line.substr(0, colon);
            std::string value = line.substr(colon + 1);
            while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
                value.erase(value.begin());
            sc.set(key, value);
        }
        return sc;
    }

private:
    std::map<std::string, std::string> map_;
    std::vector<std::string> order_;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& file) {
    return std::filesystem::path(file.string() + ".txt");
}

namespace detail {

inline void write_grid(Sidecar& sc, const GridSpec& g) {
    sc.set_u64("width", g.width);
    sc.set_u64("height", g.height);
    sc.set_double("pixel_pitch", g.pixel_pitch);
    sc.set_double("wavelength", g.wavelength);
}

inline GridSpec read_grid(const Sidecar& sc) {
    GridSpec g;
    g.width = static_cast<std::size_t>(sc.get_u64("width"));
    g.height = static_cast<std::size_t>(sc.get_u64("height"));
    g.pixel_pitch = sc.get_double("pixel_pitch");
    g.wavelength = sc.get_double("wavelength");
    g.validate();
    return g;
}

inline void write_raw(const std::filesystem::path& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

inline void read_raw(std::ifstream& in, void* data, std::size_t bytes,
                     const std::string& what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (in.gcount() != static_cast<std::streamsize>(bytes))
        throw std::runtime_error("truncated read from " + what);
}

} // namespace detail

inline void save_complex_field(const ComplexField& f, const std::filesystem::path& path,
                               Sidecar extras = {}) {
    f.grid.validate();
    detail::write_grid(extras, f.grid);
    extras.set("kind", "complex_field");
    detail::write_raw(path, f.values.data(), f.values.size() * sizeof(cplx));
    extras.save(sidecar_path(path));
}

inline ComplexField load_complex_field(const std::filesystem::path& path) {
    const Sidecar sc = Sidecar::load(sidecar_path(path));
    ComplexField f(detail::read_grid(sc));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    detail::read_raw(in, f.values.data(), f.values.size() * sizeof(cplx), path.string());
    return f;
}

inline void save_phase_map(const PhaseMap& p, const std::filesystem::path& path,
                           Sidecar extras = {}) {
    p.validate();
    detail::write_grid(extras, p.grid);
    extras.set("kind", "phase_map");
    extras.set("wrapped", p.wrapped ? "true" : "false");
    detail::write_raw(path, p.values.data(), p.values.size() * sizeof(double));
    extras.save(sidecar_path(path));
}

inline PhaseMap load_phase_map(const std::filesystem::path& path) {
    const Sidecar sc = Sidecar::load(sidecar_path(path));
    PhaseMap p(detail::read_grid(sc), sc.get("wrapped") == "true");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    detail::read_raw(in, p.values.data(), p.values.size() * sizeof(double), path.string());
    p.validate();
    return p;
}

// 16-bit PGM plus sidecar. Intensities are stored as round(H / scale) with
// scale = max/65535 recorded in the sidecar, so the physical values are
// recovered on load (up to the 16-bit quantization).
inline void save_hologram(const Hologram& holo, const std::filesystem::path& path,
                          Sidecar extras = {}) {
    holo.validate();
    double mx = 0.0;
    for (double v : holo.intensity.values) mx = std::max(mx, v);
    const double scale = mx > 0.0 ? mx / 65535.0 : 1.0;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << holo.grid.width << " " << holo.grid.height << "\n65535\n";
    std::vector<unsigned char> row(holo.grid.width * 2);
    for (std::size_t y = 0; y < holo.grid.height; ++y) {
        for (std::size_t x = 0; x < holo.grid.width; ++x) {
            const double v = holo.intensity.at(x, y) / scale;
            const auto q = static_cast<std::uint16_t>(std::min(65535.0, std::max(0.0, std::round(v))));
            row[2 * x] = static_cast<unsigned char>(q >> 8); // PGM samples are big-endian
            row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("short write to " + path.string());

    detail::write_grid(extras, holo.grid);
    extras.set("kind", "hologram");
    extras.set_double("intensity_scale", scale);
    extras.set_double("reference_fx", holo.reference.fx);
    extras.set_double("reference_fy", holo.reference.fy);
    extras.set_double("reference_amplitude", holo.reference.amplitude);
    extras.set_double("reference_phase_offset", holo.reference.phase_offset);
    extras.save(sidecar_path(path));
}

inline Hologram load_hologram(const std::filesystem::path& path) {
    const Sidecar sc = Sidecar::load(sidecar_path(path));
    Hologram holo;
    holo.grid = detail::read_grid(sc);
    holo.reference.fx = sc.get_double("reference_fx");
    holo.reference.fy = sc.get_double("reference_fy");
    holo.reference.amplitude = sc.get_double("reference_amplitude");
    holo.reference.phase_offset = sc.get_double("reference_phase_offset");
    const double scale = sc.get_double("intensity_scale");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 65535)
        throw std::runtime_error(path.string() + ": expected 16-bit binary PGM");
    if (w != holo.grid.width || h != holo.grid.height)
        throw std::runtime_error(path.string() + ": PGM dimensions disagree with sidecar");
    in.get(); // single whitespace after maxval
    holo.intensity = RealImage(holo.grid);
    std::vector<unsigned char> row(w * 2);
    for (std::size_t y = 0; y < h; ++y) {
        detail::read_raw(in, row.data(), row.size(), path.string());
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint16_t q =
                static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
            holo.intensity.at(x, y) = static_cast<double>(q) * scale;
        }
    }
    holo.validate();
    return holo;
}

// Minimal deterministic CSV writer.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }
    static std::string num(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return buf;
    }
    static std::string num_exact(double v) { return format_double(v); }

private:
    std::ofstream out_;
};

// FNV-1a, used to stamp outputs with the configuration they came from.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace qpi
