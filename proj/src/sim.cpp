#include "crowdscore/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace crowdscore::sim {

namespace {

constexpr int kFrameWidth = 828;
constexpr int kFrameHeight = 848;
constexpr int kMinNuclei = 10; // keeps every class bin realizable as k/total

std::string seq_id(const char* prefix, int n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, n);
    return buf;
}

int draw_class(const std::array<double, 4>& prior, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        acc += prior[k];
        if (u < acc) return k;
    }
    return 3;
}

double draw_task_seconds(const ContributorProfile& p, int slots, Rng& rng) {
    double mu = std::log(p.seconds_per_image_mean) -
                0.5 * p.seconds_per_image_sigma * p.seconds_per_image_sigma;
    return p.seconds_per_image_mean <= 0.0
               ? 1.0
               : rng.lognormal(mu, p.seconds_per_image_sigma) * slots;
}

// Integer positive-count range whose ratio k/total falls in class bin t.
std::pair<int, int> count_range(const ClassBins& bins, int cls, int total) {
    double lo = bins.lower(cls), hi = bins.upper(cls);
    int kmin = cls == 0 ? 0 : static_cast<int>(std::floor(lo * total)) + 1;
    int kmax = static_cast<int>(std::floor(hi * total));
    return {kmin, kmax};
}

GroundTruthImage draw_image(const SimConfig& cfg, const ClassBins& bins,
                            const std::string& image_id, const std::string& patient_id,
                            Rng& rng) {
    int cls = draw_class(cfg.class_prior, rng);
    int total = std::max<int>(kMinNuclei, static_cast<int>(rng.poisson(cfg.nuclei_per_image)));
    auto [kmin, kmax] = count_range(bins, cls, total);
    double p0 = rng.uniform(bins.lower(cls), bins.upper(cls));
    int k = std::clamp(static_cast<int>(std::llround(p0 * total)), kmin, kmax);

    GroundTruthImage img;
    img.image_id = image_id;
    img.patient_id = patient_id;
    img.true_label = ClassLabel(cls, Scheme::FourClass);
    img.true_pindex = static_cast<double>(k) / total; // quantized to the count grid
    img.nuclei_total = total;
    img.validate(bins);
    return img;
}

} // namespace

ContributorProfile ContributorProfile::with_diagonal(double d) {
    if (d <= 0.0 || d > 1.0) fail(Errc::domain, "diagonal accuracy must be in (0,1]");
    ContributorProfile p;
    for (int t = 0; t < 4; ++t) {
        p.confusion[t] = {0, 0, 0, 0};
        p.confusion[t][t] = d;
        double rest = 1.0 - d;
        if (t < 3) {
            int higher = 3 - t;
            for (int k = t + 1; k < 4; ++k) p.confusion[t][k] = rest / higher;
        } else {
            p.confusion[3][2] = rest;
        }
    }
    return p;
}

void ContributorProfile::validate() const {
    for (int t = 0; t < 4; ++t) {
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
            if (confusion[t][k] < 0.0 || confusion[t][k] > 1.0)
                fail(Errc::domain, "confusion entries must be probabilities");
            sum += confusion[t][k];
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            fail(Errc::domain, "confusion row " + std::to_string(t) + " does not sum to 1");
    }
    if (seconds_per_image_mean <= 0.0) fail(Errc::domain, "seconds_per_image_mean must be > 0");
    if (seconds_per_image_sigma < 0.0) fail(Errc::domain, "seconds_per_image_sigma must be >= 0");
    for (double v : {nuclei_detect_prob, nuclei_flip_prob})
        if (v < 0.0 || v > 1.0) fail(Errc::domain, "nuclei probabilities must be in [0,1]");
    if (nuclei_false_positive_rate < 0.0) fail(Errc::domain, "false-positive rate must be >= 0");
    if (quit_after && *quit_after <= 0) fail(Errc::domain, "quit_after must be positive");
}

void SimConfig::validate() const {
    if (n_patients < 1 || n_images < 1) fail(Errc::domain, "need at least one patient and image");
    if (n_images < n_patients || n_images > 3 * n_patients)
        fail(Errc::domain, "n_images must lie in [n_patients, 3*n_patients]");
    double sum = 0.0;
    for (double v : class_prior) {
        if (v < 0.0) fail(Errc::domain, "class prior entries must be non-negative");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) fail(Errc::domain, "class prior must sum to 1");
    if (nuclei_per_image <= 0.0) fail(Errc::domain, "nuclei_per_image must be positive");
    if (labels_per_image < 1) fail(Errc::domain, "labels_per_image must be positive");
    if (test_pool_size < 1) fail(Errc::domain, "test_pool_size must be positive");
    if (contributor_pool.empty()) fail(Errc::domain, "contributor pool is empty");
    for (const auto& [profile, count] : contributor_pool) {
        profile.validate();
        if (count < 1) fail(Errc::domain, "pool entry count must be positive");
    }
}

std::vector<GroundTruthImage> sample_ground_truth(const SimConfig& cfg) {
    cfg.validate();
    Rng rng = Rng(cfg.master_seed).stream("truth");
    ClassBins bins = ClassBins::defaults();

    // per-patient image counts: start at 1, then add to random patients < 3
    std::vector<int> per_patient(static_cast<std::size_t>(cfg.n_patients), 1);
    std::vector<int> open(per_patient.size());
    for (std::size_t i = 0; i < open.size(); ++i) open[i] = static_cast<int>(i);
    int remaining = cfg.n_images - cfg.n_patients;
    while (remaining > 0) {
        std::size_t j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(open.size()) - 1));
        int patient = open[j];
        if (++per_patient[static_cast<std::size_t>(patient)] == 3) {
            open[j] = open.back();
            open.pop_back();
        }
        --remaining;
    }

    std::vector<GroundTruthImage> out;
    out.reserve(static_cast<std::size_t>(cfg.n_images));
    int image_no = 0;
    for (int p = 0; p < cfg.n_patients; ++p) {
        std::string patient_id = seq_id("pat", p + 1, 5);
        for (int i = 0; i < per_patient[static_cast<std::size_t>(p)]; ++i) {
            ++image_no;
            out.push_back(draw_image(cfg, bins, seq_id("img", image_no, 5), patient_id, rng));
        }
    }
    return out;
}

ClassLabel simulate_label(const ContributorProfile& p, const ClassLabel& truth, Rng& rng) {
    const auto& row = p.confusion[static_cast<std::size_t>(truth.value())];
    double u = rng.uniform();
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        acc += row[static_cast<std::size_t>(k)];
        if (u < acc) return ClassLabel(k, Scheme::FourClass);
    }
    return ClassLabel(3, Scheme::FourClass);
}

NucleiAnnotation simulate_nuclei(const ContributorProfile& p, const GroundTruthImage& gt,
                                 Rng& rng) {
    if (!gt.nuclei_total || !gt.true_pindex)
        fail(Errc::consistency, "image " + gt.image_id + " lacks nucleus ground truth");
    int total = *gt.nuclei_total;
    int true_pos = static_cast<int>(std::llround(*gt.true_pindex * total));

    NucleiAnnotation ann;
    auto drop_dot = [&](bool positive) {
        auto& dots = positive ? ann.positive : ann.negative;
        dots.emplace_back(static_cast<int>(rng.uniform_int(0, kFrameWidth - 1)),
                          static_cast<int>(rng.uniform_int(0, kFrameHeight - 1)));
    };
    for (int i = 0; i < total; ++i) {
        if (!rng.bernoulli(p.nuclei_detect_prob)) continue;
        bool truly_positive = i < true_pos;
        bool flipped = rng.bernoulli(p.nuclei_flip_prob);
        drop_dot(truly_positive != flipped);
    }
    std::int64_t fp = rng.poisson(p.nuclei_false_positive_rate);
    for (std::int64_t i = 0; i < fp; ++i) drop_dot(rng.bernoulli(0.5));
    ann.has_nuclei = !ann.positive.empty() || !ann.negative.empty();
    return ann;
}

SimResult run_simulation(const SimConfig& cfg, const qc::JobConfig& job, qc::JobKind kind) {
    cfg.validate();
    job.validate();

    SimResult result;
    result.truth = sample_ground_truth(cfg);

    // test-question pool, same generative process, separate id space
    Rng pool_rng = Rng(cfg.master_seed).stream("test-pool");
    ClassBins bins = ClassBins::defaults();
    result.test_pool.reserve(static_cast<std::size_t>(cfg.test_pool_size));
    for (int i = 0; i < cfg.test_pool_size; ++i)
        result.test_pool.push_back(
            draw_image(cfg, bins, seq_id("tq", i + 1, 4), "test", pool_rng));

    std::vector<std::string> work_ids;
    std::map<std::string, const GroundTruthImage*> truth_of;
    for (const auto& img : result.truth) {
        work_ids.push_back(img.image_id);
        truth_of[img.image_id] = &img;
    }
    for (const auto& img : result.test_pool) truth_of[img.image_id] = &img;

    qc::JobConfig engine_job = job;
    engine_job.labels_per_image = cfg.labels_per_image;
    qc::JobEngine engine(engine_job, kind, result.test_pool, work_ids,
                         Rng(cfg.master_seed).stream("engine").next_u64());

    struct Worker {
        std::string id;
        const ContributorProfile* profile;
        Rng rng{0};
        bool quit = false;
    };
    std::vector<Worker> workers;
    int serial = 0;
    for (std::size_t entry = 0; entry < cfg.contributor_pool.size(); ++entry) {
        for (int i = 0; i < cfg.contributor_pool[entry].second; ++i) {
            Worker w;
            w.id = seq_id("w", ++serial, 5);
            w.profile = &cfg.contributor_pool[entry].first;
            w.rng = Rng(cfg.master_seed).stream("worker", static_cast<std::uint64_t>(serial));
            result.profile_of[w.id] = entry;
            workers.push_back(std::move(w));
        }
    }

    auto answer_slot = [&](const Worker& w, const std::string& image_id, Rng& rng) -> Answer {
        const GroundTruthImage& gt = *truth_of.at(image_id);
        if (kind == qc::JobKind::ImageLabeling)
            return simulate_label(*w.profile, gt.true_label, rng);
        return simulate_nuclei(*w.profile, gt, rng);
    };

    // quiz phase: every contributor qualifies (or not) up front
    for (auto& w : workers) {
        auto [st, task] = engine.start_session(w.id);
        (void)st;
        std::vector<Answer> answers;
        answers.reserve(task.image_ids.size());
        for (const auto& image_id : task.image_ids) answers.push_back(answer_slot(w, image_id, w.rng));
        double elapsed =
            draw_task_seconds(*w.profile, static_cast<int>(task.image_ids.size()), w.rng);
        engine.submit_task(task.task_id, answers, elapsed);
    }

    // work phase: round-robin until the job completes or nobody can work
    bool progressed = true;
    while (!engine.job_complete() && progressed) {
        progressed = false;
        for (auto& w : workers) {
            if (w.quit) continue;
            const auto& st = engine.state(w.id);
            if (st.status != qc::Status::Active) continue;
            if (w.profile->quit_after && st.judgments_submitted >= *w.profile->quit_after) {
                w.quit = true;
                continue;
            }
            qc::VisibleTask task;
            try {
                task = engine.current_task(w.id);
            } catch (const Error& e) {
                if (e.code() == Errc::no_work) continue;
                throw;
            }
            std::vector<Answer> answers;
            answers.reserve(task.image_ids.size());
            for (const auto& image_id : task.image_ids)
                answers.push_back(answer_slot(w, image_id, w.rng));
            double elapsed =
                draw_task_seconds(*w.profile, static_cast<int>(task.image_ids.size()), w.rng);
            engine.submit_task(task.task_id, answers, elapsed);
            progressed = true;
        }
    }

    engine.finish_active();
    result.log = engine.log();
    result.states = engine.states();
    result.progress = engine.progress();
    result.complete = result.progress.complete;
    return result;
}

} // namespace crowdscore::sim
