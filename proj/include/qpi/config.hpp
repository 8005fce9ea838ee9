// Plain-text pipeline configuration: `[section]` headers over `key = value`
// lines, '#' comments. Keys are addressed as "section.key"; values keep
// their raw text and are parsed on access.
#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qpi {

class Config {
public:
    Config() = default;

    static Config parse(const std::string& text) {
        Config cfg;
        cfg.text_ = text;
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) +
                                             ": malformed section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[section.empty() ? key : section + "." + key] = value;
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read config " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': not a number: " + it->second);
        }
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return static_cast<std::size_t>(std::stoull(it->second));
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': not a count: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::runtime_error("config key '" + key + "': expected true/false: " + it->second);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Canonical text for hashing: sorted key = value lines.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    const std::string& raw_text() const { return text_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    std::map<std::string, std::string> values_;
    std::string text_;
};

} // namespace qpi
