#include "dj/jsonio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dj/error.hpp"

namespace dj {

std::string format_real(double v) {
    if (!std::isfinite(v)) throw ArgumentError("refusing to serialize non-finite real");
    if (v == 0.0) return "0"; // canonical zero, keeps rewrites hash-stable
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (unsigned char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (c < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                out += buf;
            } else {
                out.push_back(static_cast<char>(c));
            }
        }
    }
    return out;
}

void JsonWriter::separator() {
    if (after_key_) {
        after_key_ = false;
        return;
    }
    if (!first_stack_.empty()) {
        if (!first_stack_.back()) out_ += ",";
        first_stack_.back() = false;
    }
}

JsonWriter& JsonWriter::begin_object() {
    separator();
    out_ += "{";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_object() {
    out_ += "}";
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::begin_array() {
    separator();
    out_ += "[";
    first_stack_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_array() {
    out_ += "]";
    first_stack_.pop_back();
    return *this;
}

JsonWriter& JsonWriter::key(const std::string& name) {
    separator();
    out_ += "\"" + json_escape(name) + "\":";
    after_key_ = true;
    return *this;
}

JsonWriter& JsonWriter::value(double v) {
    separator();
    out_ += format_real(v);
    return *this;
}

JsonWriter& JsonWriter::value(int v) {
    separator();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
    separator();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::value(std::size_t v) {
    separator();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::value(bool v) {
    separator();
    out_ += v ? "true" : "false";
    return *this;
}

JsonWriter& JsonWriter::value(const std::string& v) {
    separator();
    out_ += "\"" + json_escape(v) + "\"";
    return *this;
}

JsonWriter& JsonWriter::value(const char* v) { return value(std::string(v)); }

JsonWriter& JsonWriter::real_array(const std::vector<double>& vs) {
    begin_array();
    for (double v : vs) value(v);
    end_array();
    return *this;
}

JsonWriter& JsonWriter::int_array(const std::vector<int>& vs) {
    begin_array();
    for (int v : vs) value(v);
    end_array();
    return *this;
}

Json parse_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError("invalid JSON in " + path);
    return j;
}

Json parse_json_text(const std::string& text, const std::string& origin) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("invalid JSON in " + origin);
    return j;
}

const Json& require_field(const Json& obj, const std::string& name, const std::string& context) {
    if (!obj.is_object() || !obj.contains(name))
        throw FormatError(context + ": missing field '" + name + "'");
    return obj.at(name);
}

std::vector<double> require_real_array(const Json& obj, const std::string& name, const std::string& context) {
    const Json& arr = require_field(obj, name, context);
    if (!arr.is_array()) throw FormatError(context + ": field '" + name + "' must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) throw FormatError(context + ": field '" + name + "' has a non-numeric entry");
        out.push_back(v.get<double>());
        if (!std::isfinite(out.back()))
            throw FormatError(context + ": field '" + name + "' has a non-finite entry");
    }
    return out;
}

std::vector<int> require_int_array(const Json& obj, const std::string& name, const std::string& context) {
    const Json& arr = require_field(obj, name, context);
    if (!arr.is_array()) throw FormatError(context + ": field '" + name + "' must be an array");
    std::vector<int> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number_integer()) throw FormatError(context + ": field '" + name + "' has a non-integer entry");
        out.push_back(v.get<int>());
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write file: " + path);
    out << text;
    if (!out) throw FormatError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace dj
