#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace dj {

// All artifact files are emitted through these helpers so that reruns are
// byte-identical: fixed field order, reals at 17 significant digits.
std::string format_real(double v);

// Incremental writer for the artifact JSON schemas. Field order is the call
// order; callers are responsible for schema layout.
class JsonWriter {
public:
    JsonWriter& begin_object();
    JsonWriter& end_object();
    JsonWriter& begin_array();
    JsonWriter& end_array();
    JsonWriter& key(const std::string& name);
    JsonWriter& value(double v);
    JsonWriter& value(int v);
    JsonWriter& value(std::int64_t v);
    JsonWriter& value(std::size_t v);
    JsonWriter& value(bool v);
    JsonWriter& value(const std::string& v);
    JsonWriter& value(const char* v);
    JsonWriter& real_array(const std::vector<double>& vs);
    JsonWriter& int_array(const std::vector<int>& vs);

    const std::string& str() const { return out_; }

private:
    void separator();
    std::string out_;
    std::vector<bool> first_stack_; // per open scope: no element written yet
    bool after_key_ = false;
};

std::string json_escape(const std::string& s);

// Parse helpers over nlohmann::json that raise FormatError naming the field.
using Json = nlohmann::json;

Json parse_json_file(const std::string& path);
Json parse_json_text(const std::string& text, const std::string& origin);
const Json& require_field(const Json& obj, const std::string& name, const std::string& context);
std::vector<double> require_real_array(const Json& obj, const std::string& name, const std::string& context);
std::vector<int> require_int_array(const Json& obj, const std::string& name, const std::string& context);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace dj
