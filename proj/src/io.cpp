#include "crowdscore/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace crowdscore::io {

using nlohmann::json;

std::string format_rfc3339(std::int64_t epoch_seconds) {
    std::time_t t = static_cast<std::time_t>(epoch_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::int64_t parse_rfc3339(const std::string& s) {
    std::tm tm{};
    int y, mo, d, h, mi, se;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi, &se) != 6)
        fail(Errc::value, "bad RFC 3339 timestamp '" + s + "'");
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    return static_cast<std::int64_t>(timegm(&tm));
}

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(const std::string& line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted) fail(Errc::parse, "unterminated quote at line " + std::to_string(line_no));
    out.push_back(std::move(field));
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open " + path.string() + " for reading");
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
    return out;
}

struct CsvReader {
    std::string origin;
    std::vector<std::string> header;
    std::vector<std::string> fields;
    std::size_t line_no = 0;

    // column lookup by name; missing columns are schema errors
    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        fail(Errc::schema, origin + ": missing column '" + name + "'");
    }

    const std::string& get(std::size_t idx) const {
        if (idx >= fields.size())
            fail(Errc::parse, origin + ": too few fields at line " + std::to_string(line_no));
        return fields[idx];
    }

    double get_double(std::size_t idx) const {
        const std::string& s = get(idx);
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            fail(Errc::value,
                 origin + ": bad number '" + s + "' at line " + std::to_string(line_no));
        }
    }

    int get_int(std::size_t idx) const {
        const std::string& s = get(idx);
        try {
            std::size_t used = 0;
            int v = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            fail(Errc::value,
                 origin + ": bad integer '" + s + "' at line " + std::to_string(line_no));
        }
    }

    bool get_bool(std::size_t idx) const {
        const std::string& s = get(idx);
        if (s == "true") return true;
        if (s == "false") return false;
        fail(Errc::value, origin + ": bad boolean '" + s + "' at line " + std::to_string(line_no));
    }
};

} // namespace

const char* const kLabelLogHeader =
    "image_id,contributor_id,label,elapsed_seconds,mode,is_test,timestamp,valid,"
    "trust_at_submission";

std::string label_log_row(const qc::LogRecord& rec) {
    const auto* label = std::get_if<ClassLabel>(&rec.payload);
    if (!label) fail(Errc::value, "label log row requires a class-label payload");
    std::string out;
    out += csv_escape(rec.image_id);
    out += ',';
    out += csv_escape(rec.contributor_id);
    out += ',';
    out += label->letter();
    out += ',';
    out += fmt("%.3f", rec.elapsed_seconds);
    out += ',';
    out += mode_name(rec.mode);
    out += ',';
    out += rec.is_test ? "true" : "false";
    out += ',';
    out += format_rfc3339(rec.timestamp_utc);
    out += ',';
    out += rec.valid ? "true" : "false";
    out += ',';
    out += fmt("%.6f", rec.trust_at_submission);
    return out;
}

void write_label_log(const std::filesystem::path& path, const std::vector<qc::LogRecord>& log) {
    auto out = open_output(path);
    out << kLabelLogHeader << '\n';
    for (const auto& rec : log) out << label_log_row(rec) << '\n';
}

std::vector<qc::LogRecord> ingest_label_judgments(const std::filesystem::path& path) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_image = r.col("image_id"), c_contrib = r.col("contributor_id"),
                c_label = r.col("label"), c_elapsed = r.col("elapsed_seconds"),
                c_mode = r.col("mode"), c_test = r.col("is_test"), c_ts = r.col("timestamp"),
                c_valid = r.col("valid"), c_trust = r.col("trust_at_submission");

    std::vector<qc::LogRecord> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        qc::LogRecord rec;
        rec.image_id = r.get(c_image);
        rec.contributor_id = r.get(c_contrib);
        const std::string& tok = r.get(c_label);
        if (tok.size() != 1)
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        try {
            rec.payload = ClassLabel::from_letter(tok[0]);
        } catch (const Error&) {
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        }
        rec.elapsed_seconds = r.get_double(c_elapsed);
        if (!(rec.elapsed_seconds > 0.0))
            fail(Errc::value, r.origin + ": non-positive elapsed_seconds at line " +
                                  std::to_string(r.line_no));
        rec.mode = mode_from_name(r.get(c_mode));
        rec.is_test = r.get_bool(c_test);
        if (rec.mode == Mode::Quiz && !rec.is_test)
            fail(Errc::consistency, r.origin + ": quiz-mode row without is_test at line " +
                                        std::to_string(r.line_no));
        rec.timestamp_utc = parse_rfc3339(r.get(c_ts));
        rec.valid = r.get_bool(c_valid);
        rec.trust_at_submission = r.get_double(c_trust);
        out.push_back(std::move(rec));
    }
    return out;
}

std::string nuclei_log_line(const qc::LogRecord& rec) {
    const auto* ann = std::get_if<NucleiAnnotation>(&rec.payload);
    if (!ann) fail(Errc::value, "nuclei log line requires a dot-annotation payload");
    json dots_pos = json::array(), dots_neg = json::array();
    for (const auto& [x, y] : ann->positive) dots_pos.push_back({x, y});
    for (const auto& [x, y] : ann->negative) dots_neg.push_back({x, y});
    json j{{"image_id", rec.image_id},
           {"contributor_id", rec.contributor_id},
           {"has_nuclei", ann->has_nuclei},
           {"positive", dots_pos},
           {"negative", dots_neg},
           {"elapsed_seconds", rec.elapsed_seconds},
           {"mode", mode_name(rec.mode)},
           {"is_test", rec.is_test},
           {"timestamp", format_rfc3339(rec.timestamp_utc)},
           {"valid", rec.valid},
           {"trust_at_submission", rec.trust_at_submission}};
    return j.dump();
}

void write_nuclei_log(const std::filesystem::path& path, const std::vector<qc::LogRecord>& log) {
    auto out = open_output(path);
    for (const auto& rec : log) out << nuclei_log_line(rec) << '\n';
}

std::vector<qc::LogRecord> ingest_nuclei_judgments(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string origin = path.filename().string();
    std::vector<qc::LogRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(Errc::parse,
                 origin + ": bad JSON at line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            qc::LogRecord rec;
            rec.image_id = j.at("image_id").get<std::string>();
            rec.contributor_id = j.at("contributor_id").get<std::string>();
            NucleiAnnotation ann;
            ann.has_nuclei = j.at("has_nuclei").get<bool>();
            for (const auto& d : j.at("positive"))
                ann.positive.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
            for (const auto& d : j.at("negative"))
                ann.negative.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
            try {
                ann.validate();
            } catch (const Error& e) {
                fail(Errc::consistency,
                     origin + ": line " + std::to_string(line_no) + ": " + e.what());
            }
            rec.payload = std::move(ann);
            rec.elapsed_seconds = j.at("elapsed_seconds").get<double>();
            if (!(rec.elapsed_seconds > 0.0))
                fail(Errc::value,
                     origin + ": non-positive elapsed_seconds at line " + std::to_string(line_no));
            rec.mode = mode_from_name(j.value("mode", "work"));
            rec.is_test = j.value("is_test", false);
            if (rec.mode == Mode::Quiz && !rec.is_test)
                fail(Errc::consistency,
                     origin + ": quiz-mode row without is_test at line " + std::to_string(line_no));
            rec.timestamp_utc = parse_rfc3339(j.value("timestamp", "1970-01-01T00:00:00Z"));
            rec.valid = j.value("valid", true);
            rec.trust_at_submission = j.value("trust_at_submission", 0.0);
            out.push_back(std::move(rec));
        } catch (const json::exception& e) {
            fail(Errc::parse,
                 origin + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<qc::LogRecord> effective_records(const std::vector<qc::LogRecord>& log) {
    std::map<std::pair<std::string, std::string>, std::size_t> last;
    for (std::size_t i = 0; i < log.size(); ++i)
        last[{log[i].image_id, log[i].contributor_id}] = i;
    std::vector<qc::LogRecord> out;
    out.reserve(last.size());
    for (std::size_t i = 0; i < log.size(); ++i)
        if (last.at({log[i].image_id, log[i].contributor_id}) == i) out.push_back(log[i]);
    return out;
}

void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<GroundTruthImage>& truth) {
    auto out = open_output(path);
    out << "image_id,patient_id,label\n";
    for (const auto& img : truth) {
        ClassLabel l3 = merge_classes(img.true_label, Scheme::ThreeClass);
        out << csv_escape(img.image_id) << ',' << csv_escape(img.patient_id) << ','
            << l3.letter() << '\n';
    }
}

std::vector<GroundTruthImage> read_truth_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_image = r.col("image_id"), c_patient = r.col("patient_id"),
                c_label = r.col("label");
    std::vector<GroundTruthImage> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        GroundTruthImage img;
        img.image_id = r.get(c_image);
        img.patient_id = r.get(c_patient);
        const std::string& tok = r.get(c_label);
        if (tok.size() != 1)
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        img.true_label = ClassLabel::from_letter(tok[0], Scheme::ThreeClass);
        out.push_back(std::move(img));
    }
    return out;
}

void write_sim_truth_csv(const std::filesystem::path& path,
                         const std::vector<GroundTruthImage>& truth) {
    auto out = open_output(path);
    out << "image_id,patient_id,label,pindex,nuclei_total\n";
    for (const auto& img : truth) {
        out << csv_escape(img.image_id) << ',' << csv_escape(img.patient_id) << ','
            << img.true_label.letter() << ',';
        if (img.true_pindex) out << fmt("%.17g", *img.true_pindex);
        out << ',';
        if (img.nuclei_total) out << *img.nuclei_total;
        out << '\n';
    }
}

std::vector<GroundTruthImage> read_sim_truth_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_image = r.col("image_id"), c_patient = r.col("patient_id"),
                c_label = r.col("label"), c_pindex = r.col("pindex"),
                c_total = r.col("nuclei_total");
    std::vector<GroundTruthImage> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        GroundTruthImage img;
        img.image_id = r.get(c_image);
        img.patient_id = r.get(c_patient);
        img.true_label = ClassLabel::from_letter(r.get(c_label)[0], Scheme::FourClass);
        if (!r.get(c_pindex).empty()) img.true_pindex = r.get_double(c_pindex);
        if (!r.get(c_total).empty()) img.nuclei_total = r.get_int(c_total);
        img.validate(ClassBins::defaults());
        out.push_back(std::move(img));
    }
    return out;
}

void write_states_csv(const std::filesystem::path& path,
                      const std::vector<qc::ContributorState>& states) {
    auto out = open_output(path);
    out << "contributor_id,status,test_seen,test_correct,work_images_reviewed,"
           "judgments_submitted,speed_violations,passed_quiz,cumulative_seconds,"
           "slots_seen,images_labeled\n";
    for (const auto& st : states) {
        out << csv_escape(st.contributor_id) << ',' << qc::status_name(st.status) << ','
            << st.test_seen << ',' << st.test_correct << ',' << st.work_images_reviewed << ','
            << st.judgments_submitted << ',' << st.speed_violations << ','
            << (st.passed_quiz ? "true" : "false") << ',' << fmt("%.3f", st.cumulative_seconds)
            << ',' << st.slots_seen << ',' << st.images_labeled << '\n';
    }
}

std::vector<qc::ContributorState> read_states_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_id = r.col("contributor_id"), c_status = r.col("status"),
                c_seen = r.col("test_seen"), c_correct = r.col("test_correct"),
                c_reviewed = r.col("work_images_reviewed"),
                c_submitted = r.col("judgments_submitted"),
                c_speed = r.col("speed_violations"), c_quiz = r.col("passed_quiz"),
                c_secs = r.col("cumulative_seconds"), c_slots = r.col("slots_seen"),
                c_labeled = r.col("images_labeled");
    std::vector<qc::ContributorState> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        qc::ContributorState st;
        st.contributor_id = r.get(c_id);
        st.status = qc::status_from_name(r.get(c_status));
        st.test_seen = r.get_int(c_seen);
        st.test_correct = r.get_int(c_correct);
        st.work_images_reviewed = r.get_int(c_reviewed);
        st.judgments_submitted = r.get_int(c_submitted);
        st.speed_violations = r.get_int(c_speed);
        st.passed_quiz = r.get_bool(c_quiz);
        st.cumulative_seconds = r.get_double(c_secs);
        st.slots_seen = r.get_int(c_slots);
        st.images_labeled = r.get_int(c_labeled);
        out.push_back(std::move(st));
    }
    return out;
}

void write_labels_csv(const std::filesystem::path& path, const std::string& id_column,
                      const std::vector<std::pair<std::string, ClassLabel>>& rows) {
    auto out = open_output(path);
    out << id_column << ",label\n";
    for (const auto& [id, label] : rows) out << csv_escape(id) << ',' << label.letter() << '\n';
}

std::vector<std::pair<std::string, ClassLabel>> read_labels_csv(
    const std::filesystem::path& path, Scheme scheme) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    if (r.header.size() < 2 || r.header[1] != "label")
        fail(Errc::schema, r.origin + ": expected '<id>,label' header");
    std::vector<std::pair<std::string, ClassLabel>> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        const std::string& tok = r.get(1);
        if (tok.size() != 1)
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        out.emplace_back(r.get(0), ClassLabel::from_letter(tok[0], scheme));
    }
    return out;
}

metrics::RatingsMatrix read_ratings_csv(const std::filesystem::path& path, Scheme scheme) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_item = r.col("item_id"), c_rater = r.col("rater_id"), c_label = r.col("label");

    std::vector<std::string> items, raters;
    std::map<std::string, std::size_t> item_idx, rater_idx;
    std::vector<std::tuple<std::size_t, std::size_t, int>> cells;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        const std::string& item = r.get(c_item);
        const std::string& rater = r.get(c_rater);
        if (!item_idx.count(item)) {
            item_idx[item] = items.size();
            items.push_back(item);
        }
        if (!rater_idx.count(rater)) {
            rater_idx[rater] = raters.size();
            raters.push_back(rater);
        }
        const std::string& tok = r.get(c_label);
        if (tok.size() != 1)
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        ClassLabel l = ClassLabel::from_letter(tok[0], scheme);
        cells.emplace_back(item_idx[item], rater_idx[rater], l.value());
    }
    if (items.empty() || raters.size() < 2)
        fail(Errc::empty_input, r.origin + ": need ratings from at least 2 raters");
    metrics::RatingsMatrix m(items.size(), raters.size());
    for (const auto& [i, rr, v] : cells) m.set(i, rr, v);
    return m;
}

sens::LabelGrid read_grid_csv(const std::filesystem::path& path,
                              std::vector<std::string>* image_ids) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_image = r.col("image_id"), c_slot = r.col("slot"), c_label = r.col("label");
    bool has_trust = false;
    std::size_t c_trust = 0;
    for (std::size_t i = 0; i < r.header.size(); ++i)
        if (r.header[i] == "trust") {
            has_trust = true;
            c_trust = i;
        }

    std::map<std::string, std::map<int, std::pair<ClassLabel, double>>> by_image;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        const std::string& image = r.get(c_image);
        if (!by_image.count(image)) order.push_back(image);
        int slot = r.get_int(c_slot);
        const std::string& tok = r.get(c_label);
        if (tok.size() != 1)
            fail(Errc::value, r.origin + ": unknown label token '" + tok + "' at line " +
                                  std::to_string(r.line_no));
        double trust = has_trust ? r.get_double(c_trust) : 0.0;
        auto [it, fresh] =
            by_image[image].emplace(slot, std::make_pair(ClassLabel::from_letter(tok[0]), trust));
        (void)it;
        if (!fresh)
            fail(Errc::value, r.origin + ": duplicate slot " + std::to_string(slot) +
                                  " for image " + image);
    }
    if (order.empty()) fail(Errc::empty_input, r.origin + ": no grid rows");

    std::size_t n_labels = by_image[order.front()].size();
    sens::LabelGrid grid;
    grid.n_images = order.size();
    grid.n_labels = n_labels;
    grid.labels.reserve(order.size() * n_labels);
    if (has_trust) grid.trusts.reserve(order.size() * n_labels);
    for (const auto& image : order) {
        const auto& slots = by_image[image];
        if (slots.size() != n_labels)
            fail(Errc::shape, r.origin + ": image " + image + " has " +
                                  std::to_string(slots.size()) + " labels, expected " +
                                  std::to_string(n_labels));
        for (const auto& [slot, lv] : slots) {
            grid.labels.push_back(lv.first);
            if (has_trust) grid.trusts.push_back(lv.second);
        }
    }
    if (image_ids) *image_ids = order;
    return grid;
}

std::vector<qc::ScriptRow> read_script_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    CsvReader r;
    r.origin = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) fail(Errc::schema, r.origin + ": empty file, header expected");
    r.header = csv_split(line, 1);
    r.line_no = 1;
    std::size_t c_id = r.col("contributor_id"), c_task = r.col("task_seq"),
                c_slot = r.col("slot_seq"), c_answer = r.col("answer"),
                c_elapsed = r.col("elapsed_seconds");
    std::vector<qc::ScriptRow> out;
    while (std::getline(in, line)) {
        ++r.line_no;
        if (line.empty()) continue;
        r.fields = csv_split(line, r.line_no);
        qc::ScriptRow row;
        row.contributor_id = r.get(c_id);
        row.task_seq = r.get_int(c_task);
        row.slot_seq = r.get_int(c_slot);
        row.answer = r.get(c_answer);
        row.elapsed_seconds = r.get_double(c_elapsed);
        out.push_back(std::move(row));
    }
    return out;
}

void write_script_csv(const std::filesystem::path& path, const std::vector<qc::ScriptRow>& rows) {
    auto out = open_output(path);
    out << "contributor_id,task_seq,slot_seq,answer,elapsed_seconds\n";
    for (const auto& row : rows) {
        out << csv_escape(row.contributor_id) << ',' << row.task_seq << ',' << row.slot_seq
            << ',' << csv_escape(row.answer) << ',' << fmt("%.3f", row.elapsed_seconds) << '\n';
    }
}

void write_sensitivity_csv(const std::filesystem::path& path,
                           const std::vector<sens::SizeSummary>& summaries) {
    auto out = open_output(path);
    out << "crowd_size,pattern_count,mean,median,q1,q3,min,max\n";
    for (const auto& s : summaries) {
        out << s.crowd_size << ',' << s.pattern_count << ',' << fmt("%.6f", s.mean) << ','
            << fmt("%.6f", s.median) << ',' << fmt("%.6f", s.q1) << ',' << fmt("%.6f", s.q3)
            << ',' << fmt("%.6f", s.min) << ',' << fmt("%.6f", s.max) << '\n';
    }
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse(in, path.filename().string());
}

ConfigFile ConfigFile::parse(std::istream& in, const std::string& origin) {
    ConfigFile cfg;
    std::string line;
    std::size_t line_no = 0;
    Section* current = nullptr;
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                fail(Errc::parse, origin + ": bad section header at line " + std::to_string(line_no));
            cfg.sections_.push_back({trim(t.substr(1, t.size() - 2)), {}});
            current = &cfg.sections_.back();
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            fail(Errc::parse, origin + ": expected key = value at line " + std::to_string(line_no));
        if (!current)
            fail(Errc::parse, origin + ": key outside any section at line " + std::to_string(line_no));
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (!current->entries.emplace(key, value).second)
            fail(Errc::parse, origin + ": duplicate key '" + key + "' at line " +
                                  std::to_string(line_no));
    }
    return cfg;
}

bool ConfigFile::has_section(const std::string& name) const { return find(name) != nullptr; }

const ConfigFile::Section* ConfigFile::find(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

std::vector<const ConfigFile::Section*> ConfigFile::matching(const std::string& prefix) const {
    std::vector<const Section*> out;
    for (const auto& s : sections_)
        if (s.name.rfind(prefix, 0) == 0) out.push_back(&s);
    return out;
}

std::string ConfigFile::get(const Section& s, const std::string& key,
                            const std::string& fallback) {
    auto it = s.entries.find(key);
    return it == s.entries.end() ? fallback : it->second;
}

double ConfigFile::get_double(const Section& s, const std::string& key, double fallback) {
    auto it = s.entries.find(key);
    if (it == s.entries.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        fail(Errc::value, "bad number for key '" + key + "' in [" + s.name + "]");
    }
}

int ConfigFile::get_int(const Section& s, const std::string& key, int fallback) {
    auto it = s.entries.find(key);
    if (it == s.entries.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        fail(Errc::value, "bad integer for key '" + key + "' in [" + s.name + "]");
    }
}

bool ConfigFile::get_bool(const Section& s, const std::string& key, bool fallback) {
    auto it = s.entries.find(key);
    if (it == s.entries.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    fail(Errc::value, "bad boolean for key '" + key + "' in [" + s.name + "]");
}

qc::JobConfig job_config_from(const ConfigFile& cfg) {
    qc::JobConfig job;
    const auto* s = cfg.find("job");
    if (!s) return job;
    job.min_test_accuracy = ConfigFile::get_double(*s, "min_test_accuracy", job.min_test_accuracy);
    job.min_task_seconds = ConfigFile::get_double(*s, "min_task_seconds", job.min_task_seconds);
    job.max_judgments_per_contributor =
        ConfigFile::get_int(*s, "max_judgments_per_contributor", job.max_judgments_per_contributor);
    job.min_images_before_filter =
        ConfigFile::get_int(*s, "min_images_before_filter", job.min_images_before_filter);
    job.labels_per_image = ConfigFile::get_int(*s, "labels_per_image", job.labels_per_image);
    job.quiz_size = ConfigFile::get_int(*s, "quiz_size", job.quiz_size);
    job.task_real_images = ConfigFile::get_int(*s, "task_real_images", job.task_real_images);
    job.task_test_images = ConfigFile::get_int(*s, "task_test_images", job.task_test_images);
    job.max_speed_violations =
        ConfigFile::get_int(*s, "max_speed_violations", job.max_speed_violations);
    std::string epoch = ConfigFile::get(*s, "epoch", "");
    if (!epoch.empty()) job.epoch_utc = parse_rfc3339(epoch);
    job.validate();
    return job;
}

agg::ClassWeights weights_from(const ConfigFile& cfg) {
    const auto* s = cfg.find("weights");
    bool midpoint = s && ConfigFile::get_bool(*s, "midpoint_b", false);
    agg::ClassWeights w = agg::ClassWeights::defaults(midpoint);
    if (s) {
        w.w[0] = ConfigFile::get_double(*s, "a", w.w[0]);
        w.w[1] = ConfigFile::get_double(*s, "b", w.w[1]);
        w.w[2] = ConfigFile::get_double(*s, "c", w.w[2]);
        w.w[3] = ConfigFile::get_double(*s, "d", w.w[3]);
    }
    w.validate();
    return w;
}

namespace {

std::array<double, 4> parse_prior(const std::string& csv) {
    std::array<double, 4> out{};
    std::stringstream ss(csv);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 4) fail(Errc::value, "class_prior needs exactly 4 entries");
        out[static_cast<std::size_t>(i++)] = std::stod(item);
    }
    if (i != 4) fail(Errc::value, "class_prior needs exactly 4 entries");
    return out;
}

std::array<double, 4> parse_row(const std::string& csv, const std::string& key) {
    std::array<double, 4> out{};
    std::stringstream ss(csv);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= 4) fail(Errc::value, key + " needs exactly 4 entries");
        out[static_cast<std::size_t>(i++)] = std::stod(item);
    }
    if (i != 4) fail(Errc::value, key + " needs exactly 4 entries");
    return out;
}

} // namespace

sim::SimConfig sim_config_from(const ConfigFile& cfg) {
    sim::SimConfig sc;
    if (const auto* s = cfg.find("sim")) {
        sc.n_images = ConfigFile::get_int(*s, "n_images", sc.n_images);
        sc.n_patients = ConfigFile::get_int(*s, "n_patients", sc.n_patients);
        std::string prior = ConfigFile::get(*s, "class_prior", "");
        if (!prior.empty()) sc.class_prior = parse_prior(prior);
        sc.nuclei_per_image = ConfigFile::get_double(*s, "nuclei_per_image", sc.nuclei_per_image);
        sc.labels_per_image = ConfigFile::get_int(*s, "labels_per_image", sc.labels_per_image);
        sc.test_pool_size = ConfigFile::get_int(*s, "test_pool_size", sc.test_pool_size);
        sc.master_seed = static_cast<std::uint64_t>(
            ConfigFile::get_double(*s, "seed", static_cast<double>(sc.master_seed)));
    }
    for (const auto* s : cfg.matching("profile")) {
        sim::ContributorProfile p;
        std::string diag = ConfigFile::get(*s, "diagonal", "");
        if (!diag.empty()) p = sim::ContributorProfile::with_diagonal(std::stod(diag));
        for (int row = 0; row < 4; ++row) {
            std::string key = std::string("confusion_") + static_cast<char>('a' + row);
            std::string val = ConfigFile::get(*s, key, "");
            if (!val.empty()) p.confusion[static_cast<std::size_t>(row)] = parse_row(val, key);
        }
        p.seconds_per_image_mean =
            ConfigFile::get_double(*s, "seconds_per_image_mean", p.seconds_per_image_mean);
        p.seconds_per_image_sigma =
            ConfigFile::get_double(*s, "seconds_per_image_sigma", p.seconds_per_image_sigma);
        p.nuclei_detect_prob = ConfigFile::get_double(*s, "nuclei_detect_prob", p.nuclei_detect_prob);
        p.nuclei_flip_prob = ConfigFile::get_double(*s, "nuclei_flip_prob", p.nuclei_flip_prob);
        p.nuclei_false_positive_rate =
            ConfigFile::get_double(*s, "nuclei_false_positives", p.nuclei_false_positive_rate);
        int quit = ConfigFile::get_int(*s, "quit_after", 0);
        if (quit > 0) p.quit_after = quit;
        int count = ConfigFile::get_int(*s, "count", 1);
        p.validate();
        sc.contributor_pool.emplace_back(std::move(p), count);
    }
    return sc;
}

} // namespace crowdscore::io
