#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhrs/errors.hpp"

namespace mhrs {

/// One simulation event. Serialized as one JSON object per line; nlohmann
/// keeps object keys sorted, so logs are byte-stable for identical runs.
struct Event {
    double t = 0.0;
    std::string kind;
    nlohmann::json fields;  // event-specific payload

    nlohmann::json to_json() const {
        nlohmann::json j = fields;
        j["t"] = t;
        j["kind"] = kind;
        return j;
    }
};

class EventLog {
public:
    void add(double t, std::string kind, nlohmann::json fields = nlohmann::json::object()) {
        events_.push_back(Event{t, std::move(kind), std::move(fields)});
    }

    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }

    void write_jsonl(std::ostream& out) const {
        for (const auto& e : events_) out << e.to_json().dump() << "\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw io_error("EventLog::save: cannot open " + path);
        write_jsonl(out);
    }

    static EventLog load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw io_error("EventLog::load: cannot open " + path);
        return parse(in);
    }

    static EventLog parse(std::istream& in) {
        EventLog log;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const std::exception& e) {
                throw format_error(std::string("EventLog: bad jsonl line: ") + e.what());
            }
            Event ev;
            ev.t = j.at("t").get<double>();
            ev.kind = j.at("kind").get<std::string>();
            j.erase("t");
            j.erase("kind");
            ev.fields = std::move(j);
            log.events_.push_back(std::move(ev));
        }
        return log;
    }

private:
    std::vector<Event> events_;
};

}  // namespace mhrs
