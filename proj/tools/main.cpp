#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdscore/io.hpp"
#include "crowdscore/pipeline.hpp"
#include "crowdscore/sensitivity.hpp"
#include "crowdscore/server.hpp"
#include "crowdscore/sim.hpp"

namespace fs = std::filesystem;
using namespace crowdscore;
using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

io::ConfigFile load_config(const std::string& path) {
    if (path.empty()) {
        std::istringstream empty;
        return io::ConfigFile::parse(empty, "<defaults>");
    }
    return io::ConfigFile::parse_file(path);
}

Scheme scheme_from_flag(int n) { return scheme_from_classes(n); }

json report_json(const qc::ContributorStatsTable& t) {
    auto pop = [](const qc::PopulationStats& p) {
        return json{{"contributors", p.contributors},
                    {"mean_test_accuracy", p.mean_test_accuracy},
                    {"mean_seconds_per_image", p.mean_seconds_per_image}};
    };
    return json{{"trusted", pop(t.trusted)},
                {"untrusted", pop(t.untrusted)},
                {"quiz", {{"passed", t.quiz_passed}, {"failed", t.quiz_failed}}},
                {"work", {{"passed", t.work_passed}, {"failed", t.work_failed}}},
                {"trust_volume",
                 {{"rho", t.trust_volume_rho}, {"p", t.trust_volume_p}, {"n", t.trust_volume_n}}}};
}

void print_report(const qc::ContributorStatsTable& t) {
    std::printf("                 %10s %10s\n", "passed", "failed");
    std::printf("quiz mode        %10d %10d\n", t.quiz_passed, t.quiz_failed);
    std::printf("work mode        %10d %10d\n", t.work_passed, t.work_failed);
    std::printf("trusted:   %d contributors, mean accuracy %.3f, %.1f s/image\n",
                t.trusted.contributors, t.trusted.mean_test_accuracy,
                t.trusted.mean_seconds_per_image);
    std::printf("untrusted: %d contributors, mean accuracy %.3f, %.1f s/image\n",
                t.untrusted.contributors, t.untrusted.mean_test_accuracy,
                t.untrusted.mean_seconds_per_image);
    if (t.trust_volume_n >= 3)
        std::printf("trust vs volume: rho=%.3f (p=%.2g, n=%d)\n", t.trust_volume_rho,
                    t.trust_volume_p, t.trust_volume_n);
}

void print_metrics(const char* level, std::size_t count, const metrics::MetricReport& m) {
    std::printf("%s (n=%zu): Ag=%.4f kappa=%.4f fleiss=%.4f rho=%.4f icc=%.4f\n", level, count,
                m.percent_agreement, m.cohen_kappa_pairwise_mean, m.fleiss_kappa,
                m.spearman_rho_mean, m.icc);
}

// Ground truth file sniffing: the simulation detail schema carries a pindex
// column, the interchange schema does not.
std::vector<GroundTruthImage> read_any_truth(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    in.close();
    if (header.find("pindex") != std::string::npos) return io::read_sim_truth_csv(path);
    return io::read_truth_csv(path);
}

struct GlobalFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_simulate(const GlobalFlags& g, const std::string& job_kind) {
    auto cfg = load_config(g.config);
    sim::SimConfig sc = io::sim_config_from(cfg);
    if (sc.contributor_pool.empty())
        fail(Errc::configuration, "simulate needs at least one [profile ...] section");
    if (g.seed_set) sc.master_seed = g.seed;
    qc::JobConfig job = io::job_config_from(cfg);
    qc::JobKind kind =
        job_kind == "nuclei" ? qc::JobKind::NucleiLabeling : qc::JobKind::ImageLabeling;

    sim::SimResult r = sim::run_simulation(sc, job, kind);

    fs::path out_dir = g.out.empty() ? fs::path("sim-out") : fs::path(g.out);
    fs::create_directories(out_dir);
    if (kind == qc::JobKind::ImageLabeling)
        io::write_label_log(out_dir / "judgments.csv", r.log);
    else
        io::write_nuclei_log(out_dir / "nuclei.jsonl", r.log);
    io::write_truth_csv(out_dir / "truth.csv", r.truth);
    io::write_sim_truth_csv(out_dir / "sim_truth.csv", r.truth);
    io::write_sim_truth_csv(out_dir / "test_pool.csv", r.test_pool);
    io::write_states_csv(out_dir / "states.csv", r.states);

    auto table = qc::contributor_report(r.log, r.states);
    std::ofstream rep(out_dir / "report.json", std::ios::binary);
    rep << report_json(table).dump(2) << '\n';

    std::printf("simulated %zu judgment rows over %d images (%s)\n", r.log.size(),
                r.progress.images_total, r.complete ? "complete" : "PARTIAL");
    print_report(table);
    std::printf("outputs in %s\n", out_dir.string().c_str());
    return 0;
}

int cmd_aggregate(const GlobalFlags& g, const std::string& in, const std::string& truth,
                  const std::string& method_name, int scheme_classes, bool allow_partial,
                  bool nuclei) {
    auto cfg = load_config(g.config);
    agg::ClassWeights weights = io::weights_from(cfg);
    fs::path out_dir = g.out.empty() ? fs::path(nuclei ? "nuclei-out" : "aggregate-out")
                                     : fs::path(g.out);

    if (!truth.empty()) {
        app::PipelineConfig pc;
        pc.judgments = in;
        pc.truth = truth;
        pc.out_dir = out_dir;
        pc.nuclei = nuclei;
        if (!nuclei) pc.method = agg::method_from_name(method_name);
        pc.weights = weights;
        pc.scheme = scheme_from_flag(scheme_classes == 4 ? 3 : scheme_classes);
        pc.allow_partial = allow_partial;
        app::PipelineResult res = app::run_pipeline(pc);
        std::printf("%zu judgments -> %zu images, %zu patients\n", res.judgments_used,
                    res.images, res.patients);
        print_metrics("images", res.images, res.image_metrics);
        print_metrics("patients", res.patients, res.patient_metrics);
        std::printf("outputs in %s\n", out_dir.string().c_str());
        return 0;
    }

    // no truth: aggregate only
    std::vector<qc::LogRecord> raw =
        nuclei ? io::ingest_nuclei_judgments(in) : io::ingest_label_judgments(in);
    auto records = io::effective_records(raw);
    std::erase_if(records, [](const qc::LogRecord& rec) {
        return !rec.valid || rec.is_test || rec.mode != Mode::Work;
    });
    if (records.empty()) fail(Errc::reconciliation, "no valid judgments in " + in);

    std::map<std::string, std::vector<const qc::LogRecord*>> by_image;
    for (const auto& rec : records) by_image[rec.image_id].push_back(&rec);

    Scheme scheme = scheme_from_flag(nuclei && scheme_classes == 4 ? 3 : scheme_classes);
    ClassBins bins = ClassBins::defaults(scheme);
    std::vector<std::pair<std::string, ClassLabel>> image_rows;
    fs::create_directories(out_dir);
    std::ofstream counts;
    if (nuclei) {
        counts.open(out_dir / "nuclei_counts.csv", std::ios::binary);
        counts << "image_id,positive,negative,pindex,no_nuclei\n";
    }
    for (const auto& [image_id, rows] : by_image) {
        if (nuclei) {
            std::vector<NucleiAnnotation> anns;
            for (const auto* rec : rows) anns.push_back(std::get<NucleiAnnotation>(rec->payload));
            auto [pos, neg] = agg::nuclei_aggregate(anns);
            auto pi = agg::pindex(pos, neg);
            ClassLabel label = pi ? classify_fraction(pi->value, bins) : ClassLabel(0, scheme);
            char buf[64];
            if (pi)
                std::snprintf(buf, sizeof buf, "%.6f", pi->value);
            else
                buf[0] = '\0';
            counts << image_id << ',' << pos << ',' << neg << ',' << buf << ','
                   << (pi ? "false" : "true") << '\n';
            image_rows.emplace_back(image_id, label);
        } else {
            std::vector<agg::Vote> votes;
            for (const auto* rec : rows)
                votes.push_back({rec->contributor_id, std::get<ClassLabel>(rec->payload),
                                 rec->trust_at_submission});
            ClassLabel four =
                app::aggregate_image(votes, agg::method_from_name(method_name), weights);
            image_rows.emplace_back(image_id, merge_classes(four, scheme));
        }
    }
    std::sort(image_rows.begin(), image_rows.end());
    io::write_labels_csv(out_dir / "images.csv", "image_id", image_rows);
    std::printf("aggregated %zu images -> %s\n", image_rows.size(),
                (out_dir / "images.csv").string().c_str());
    return 0;
}

int cmd_patient_rollup(const GlobalFlags& g, const std::string& in, const std::string& truth,
                       int scheme_classes) {
    Scheme scheme = scheme_from_flag(scheme_classes);
    auto labels = io::read_labels_csv(in, scheme);
    auto truth_rows = read_any_truth(truth);
    std::map<std::string, std::string> patient_of;
    for (const auto& img : truth_rows) patient_of[img.image_id] = img.patient_id;

    std::map<std::string, std::vector<ClassLabel>> by_patient;
    for (const auto& [image_id, label] : labels) {
        auto it = patient_of.find(image_id);
        if (it == patient_of.end())
            fail(Errc::reconciliation, "image " + image_id + " missing from truth");
        by_patient[it->second].push_back(label);
    }
    std::vector<std::pair<std::string, ClassLabel>> rows;
    for (const auto& [patient, ls] : by_patient)
        rows.emplace_back(patient, agg::patient_label(ls));
    fs::path out = g.out.empty() ? fs::path("patients.csv") : fs::path(g.out);
    io::write_labels_csv(out, "patient_id", rows);
    std::printf("rolled up %zu images into %zu patients -> %s\n", labels.size(), rows.size(),
                out.string().c_str());
    return 0;
}

int cmd_metrics(const GlobalFlags& g, const std::string& ratings, int scheme_classes) {
    auto matrix = io::read_ratings_csv(ratings, scheme_from_flag(scheme_classes));
    std::vector<std::string> warnings;
    metrics::MetricReport rep = metrics::compute_report(matrix, &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    print_metrics("items", matrix.items(), rep);
    if (!g.out.empty()) {
        std::ofstream out(g.out, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write " + g.out);
        out << json{{"items", matrix.items()},
                    {"raters", matrix.raters()},
                    {"percent_agreement", rep.percent_agreement},
                    {"cohen_kappa_pairwise_mean", rep.cohen_kappa_pairwise_mean},
                    {"fleiss_kappa", rep.fleiss_kappa},
                    {"spearman_rho_mean", rep.spearman_rho_mean},
                    {"icc", rep.icc}}
                   .dump(2)
            << '\n';
    }
    return 0;
}

// Accepts a ready-made grid CSV (image_id,slot,label[,trust]) or a judgment
// log, whose valid work-mode labels become the grid slots in log order.
sens::LabelGrid load_grid(const std::string& in, std::vector<std::string>* image_ids) {
    std::ifstream probe(in);
    if (!probe) fail(Errc::io, "cannot open " + in);
    std::string header;
    std::getline(probe, header);
    probe.close();
    if (header.find("slot") != std::string::npos) return io::read_grid_csv(in, image_ids);

    auto records = io::effective_records(io::ingest_label_judgments(in));
    std::erase_if(records, [](const qc::LogRecord& r) {
        return !r.valid || r.is_test || r.mode != Mode::Work;
    });
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<ClassLabel, double>>> by_image;
    for (const auto& rec : records) {
        if (!by_image.count(rec.image_id)) order.push_back(rec.image_id);
        by_image[rec.image_id].emplace_back(std::get<ClassLabel>(rec.payload),
                                            rec.trust_at_submission);
    }
    if (order.empty()) fail(Errc::empty_input, "no valid judgments in " + in);
    std::size_t n_labels = by_image[order.front()].size();
    sens::LabelGrid grid;
    grid.n_images = order.size();
    grid.n_labels = n_labels;
    for (const auto& image : order) {
        const auto& slots = by_image[image];
        if (slots.size() != n_labels)
            fail(Errc::shape, "image " + image + " has " + std::to_string(slots.size()) +
                                  " labels, expected " + std::to_string(n_labels));
        for (const auto& [label, trust] : slots) {
            grid.labels.push_back(label);
            grid.trusts.push_back(trust);
        }
    }
    if (image_ids) *image_ids = order;
    return grid;
}

int cmd_sensitivity(const GlobalFlags& g, const std::string& in, const std::string& truth,
                    const std::string& method_name, int scheme_classes, int max_size) {
    auto cfg = load_config(g.config);
    std::vector<std::string> image_ids;
    sens::LabelGrid grid = load_grid(in, &image_ids);
    auto truth_rows = read_any_truth(truth);
    std::map<std::string, const GroundTruthImage*> truth_of;
    for (const auto& img : truth_rows) truth_of[img.image_id] = &img;

    Scheme scheme = scheme_from_flag(scheme_classes);
    std::vector<ClassLabel> truth_labels;
    for (const auto& id : image_ids) {
        auto it = truth_of.find(id);
        if (it == truth_of.end()) fail(Errc::reconciliation, "image " + id + " missing from truth");
        truth_labels.push_back(merge_classes(it->second->true_label, scheme));
    }
    if (max_size == 0) max_size = static_cast<int>(grid.n_labels);
    auto summaries =
        sens::sensitivity_analysis(grid, truth_labels, agg::method_from_name(method_name),
                                   io::weights_from(cfg), max_size, scheme);

    std::printf("%5s %9s %8s %8s %8s %8s\n", "size", "patterns", "mean", "median", "q1", "q3");
    for (const auto& s : summaries)
        std::printf("%5d %9llu %8.4f %8.4f %8.4f %8.4f\n", s.crowd_size,
                    static_cast<unsigned long long>(s.pattern_count), s.mean, s.median, s.q1,
                    s.q3);
    fs::path out = g.out.empty() ? fs::path("sensitivity.csv") : fs::path(g.out);
    io::write_sensitivity_csv(out, summaries);
    std::printf("table -> %s\n", out.string().c_str());
    return 0;
}

int cmd_report(const GlobalFlags& g, const std::string& log_path, const std::string& states_path,
               bool nuclei) {
    auto log = nuclei ? io::ingest_nuclei_judgments(log_path)
                      : io::ingest_label_judgments(log_path);
    auto states = io::read_states_csv(states_path);
    auto table = qc::contributor_report(log, states);
    print_report(table);
    if (!g.out.empty()) {
        std::ofstream out(g.out, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write " + g.out);
        out << report_json(table).dump(2) << '\n';
    }
    return 0;
}

int cmd_serve(const GlobalFlags& g, const std::string& test_pool_path,
              const std::string& images_path, int port, const std::string& job_kind) {
    auto cfg = load_config(g.config);
    qc::JobConfig job = io::job_config_from(cfg);
    qc::JobKind kind =
        job_kind == "nuclei" ? qc::JobKind::NucleiLabeling : qc::JobKind::ImageLabeling;

    auto test_pool = io::read_sim_truth_csv(test_pool_path);
    std::vector<std::string> images;
    {
        std::ifstream in(images_path);
        if (!in) fail(Errc::io, "cannot open " + images_path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line != "image_id") images.push_back(line);
        }
    }
    if (images.empty()) fail(Errc::configuration, "no work images listed in " + images_path);

    std::uint64_t seed = g.seed_set ? g.seed : 1;
    qc::JobEngine engine(job, kind, test_pool, images, seed);
    fs::path log_path = g.out.empty()
                            ? fs::path(kind == qc::JobKind::ImageLabeling ? "judgments.csv"
                                                                          : "nuclei.jsonl")
                            : fs::path(g.out);
    app::JobService service(engine, log_path);
    service.start(port);
    std::printf("serving on port %d, logging to %s (ctrl-c to stop)\n", service.port(),
                log_path.string().c_str());
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    std::printf("stopped; log flushed\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"consensus scoring for crowdsourced IHC annotation"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config, "key=value config file");
    app.add_option("--out", g.out, "output file or directory");
    auto* seed_opt = app.add_option("--seed", g.seed, "master seed override");

    std::string job_kind = "image";
    auto* sim_cmd = app.add_subcommand("simulate", "run a synthetic crowdsourcing job");
    sim_cmd->add_option("--job", job_kind, "image|nuclei")
        ->check(CLI::IsMember({"image", "nuclei"}));

    std::string in_path, truth_path, method = "cv";
    int scheme_classes = 3;
    bool allow_partial = false;
    auto* agg_cmd = app.add_subcommand("aggregate", "aggregate crowd labels per image");
    agg_cmd->add_option("--in", in_path, "judgment log CSV")->required();
    agg_cmd->add_option("--truth", truth_path, "ground truth CSV (enables metrics)");
    agg_cmd->add_option("--method", method, "cv|ct|wcv|wct")
        ->check(CLI::IsMember({"cv", "ct", "wcv", "wct"}));
    agg_cmd->add_option("--scheme", scheme_classes, "2|3|4 classes")
        ->check(CLI::IsMember({2, 3, 4}));
    agg_cmd->add_flag("--allow-partial", allow_partial, "tolerate unlabeled truth images");

    auto* nuc_cmd = app.add_subcommand("nuclei-aggregate", "median nucleus counts and PIndex");
    nuc_cmd->add_option("--in", in_path, "nuclei annotation JSONL")->required();
    nuc_cmd->add_option("--truth", truth_path, "ground truth CSV (enables metrics)");
    nuc_cmd->add_option("--scheme", scheme_classes, "2|3 classes")->check(CLI::IsMember({2, 3}));
    nuc_cmd->add_flag("--allow-partial", allow_partial, "tolerate unlabeled truth images");

    auto* roll_cmd = app.add_subcommand("patient-rollup", "median image label per patient");
    roll_cmd->add_option("--in", in_path, "aggregated image labels CSV")->required();
    roll_cmd->add_option("--truth", truth_path, "truth CSV supplying the patient map")->required();
    roll_cmd->add_option("--scheme", scheme_classes, "2|3|4 classes")
        ->check(CLI::IsMember({2, 3, 4}));

    std::string ratings_path;
    auto* met_cmd = app.add_subcommand("metrics", "inter-rater reliability from ratings");
    met_cmd->add_option("--ratings", ratings_path, "CSV: item_id,rater_id,label")->required();
    met_cmd->add_option("--scheme", scheme_classes, "2|3|4 classes")
        ->check(CLI::IsMember({2, 3, 4}));

    int max_size = 0;
    auto* sens_cmd = app.add_subcommand("sensitivity", "agreement across crowd sizes");
    sens_cmd->add_option("--in", in_path, "label grid CSV: image_id,slot,label[,trust]")
        ->required();
    sens_cmd->add_option("--truth", truth_path, "ground truth CSV")->required();
    sens_cmd->add_option("--method", method, "cv|ct|wcv|wct")
        ->check(CLI::IsMember({"cv", "ct", "wcv", "wct"}));
    sens_cmd->add_option("--scheme", scheme_classes, "2|3|4 classes")
        ->check(CLI::IsMember({2, 3, 4}));
    sens_cmd->add_option("--max-size", max_size, "largest crowd size (default: all labels)");

    std::string states_path;
    bool report_nuclei = false;
    auto* rep_cmd = app.add_subcommand("report", "contributor performance table");
    rep_cmd->add_option("--log", in_path, "judgment log")->required();
    rep_cmd->add_option("--states", states_path, "contributor states CSV")->required();
    rep_cmd->add_flag("--nuclei", report_nuclei, "log is a nuclei JSONL file");

    std::string test_pool_path, images_path;
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "headless task-serving API");
    serve_cmd->add_option("--test-pool", test_pool_path, "test questions (sim truth CSV)")
        ->required();
    serve_cmd->add_option("--images", images_path, "work image ids, one per line")->required();
    serve_cmd->add_option("--port", port, "listen port");
    serve_cmd->add_option("--job", job_kind, "image|nuclei")
        ->check(CLI::IsMember({"image", "nuclei"}));

    try {
        app.parse(argc, argv);
        g.seed_set = seed_opt->count() > 0;
        if (sim_cmd->parsed()) return cmd_simulate(g, job_kind);
        if (agg_cmd->parsed())
            return cmd_aggregate(g, in_path, truth_path, method, scheme_classes, allow_partial,
                                 false);
        if (nuc_cmd->parsed())
            return cmd_aggregate(g, in_path, truth_path, method, scheme_classes, allow_partial,
                                 true);
        if (roll_cmd->parsed()) return cmd_patient_rollup(g, in_path, truth_path, scheme_classes);
        if (met_cmd->parsed()) return cmd_metrics(g, ratings_path, scheme_classes);
        if (sens_cmd->parsed())
            return cmd_sensitivity(g, in_path, truth_path, method, scheme_classes, max_size);
        if (rep_cmd->parsed()) return cmd_report(g, in_path, states_path, report_nuclei);
        if (serve_cmd->parsed())
            return cmd_serve(g, test_pool_path, images_path, port, job_kind);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", errc_name(e.code()), e.what());
        return e.code() == Errc::io ? 2 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
