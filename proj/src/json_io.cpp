#include "tabenc/json_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tabenc {

using nlohmann::json;

std::string json_quote(const std::string& s) { return json(s).dump(); }

std::string json_string_array(const std::vector<std::string>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += json_quote(xs[i]);
    }
    out += "]";
    return out;
}

std::string table_to_json(const Table& t) {
    std::string out = "{\"header\": " + json_string_array(t.headers()) + ", \"rows\": [";
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        if (r) out += ", ";
        out += json_string_array(t.rows()[r]);
    }
    out += "]}";
    return out;
}

std::string example_to_json_line(const QAExample& ex) {
    return "{\"table\": " + table_to_json(ex.table) + ", \"query\": " + json_quote(ex.query) +
           ", \"answer\": " + json_string_array(ex.answer) + "}";
}

namespace {

std::vector<std::string> string_array(const json& j, const char* what) {
    if (!j.is_array()) throw InputError(std::string(what) + " must be an array");
    std::vector<std::string> out;
    for (const auto& x : j) {
        if (x.is_string())
            out.push_back(x.get<std::string>());
        else if (x.is_number_integer())
            out.push_back(std::to_string(x.get<long long>()));
        else
            throw InputError(std::string(what) + " entries must be strings");
    }
    return out;
}

Table table_from_json(const json& j) {
    const json& t = j.contains("table") ? j.at("table") : j;
    if (!t.contains("header") || !t.contains("rows")) throw InputError("table object needs 'header' and 'rows'");
    Row header = string_array(t.at("header"), "header");
    std::vector<Row> rows;
    for (const auto& r : t.at("rows")) rows.push_back(string_array(r, "row"));
    return Table(std::move(header), std::move(rows));
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace

Table table_from_json_text(const std::string& text) { return table_from_json(parse_json(text)); }

QAExample example_from_json_line(const std::string& line) {
    json j = parse_json(line);
    if (!j.contains("query") || !j.contains("answer")) throw InputError("dataset line needs 'query' and 'answer'");
    return QAExample{table_from_json(j), j.at("query").get<std::string>(), string_array(j.at("answer"), "answer")};
}

namespace {
template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(line);
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}
}  // namespace

std::vector<QAExample> read_dataset(const std::filesystem::path& path) {
    std::vector<QAExample> out;
    for_each_line(path, [&](const std::string& line) { out.push_back(example_from_json_line(line)); });
    return out;
}

std::vector<std::vector<std::string>> read_answers(const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> out;
    for_each_line(path, [&](const std::string& line) {
        json j = parse_json(line);
        if (!j.contains("answer")) throw InputError("line has no 'answer'");
        out.push_back(string_array(j.at("answer"), "answer"));
    });
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot write " + tmp.string());
        out << contents;
        if (!out) throw RuntimeFailure("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace tabenc
