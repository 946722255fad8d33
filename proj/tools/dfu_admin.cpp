// dfu-admin: operator commands for the DFU detection service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "dfu/dfu.hpp"

namespace {

using namespace dfu;

struct Settings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token;
    std::string store = "dfu.sqlite";
    std::string blob_strategy = "inline";
    std::string object_root;
    std::size_t max_photo_bytes = kDefaultMaxPhotoBytes;
    DetectorConfig detector;
    int poll_ms = 500;
    int lease_ms = 60'000;
    int max_attempts = kDefaultMaxAttempts;
};

struct DemoOptions {
    std::string patient;
    std::string image;
    std::string server;
    int ulcers = 1;
    int timeout_ms = 30'000;
};

int fail(const std::string& message) {
    std::cerr << "error: " << message << '\n';
    return 1;
}

int fail(const Error& e) { return fail(e.to_string()); }

LogSink console(std::string prefix = {}) {
    return [prefix = std::move(prefix)](const std::string& line) {
        static std::mutex m;
        std::lock_guard lock(m);
        std::cout << prefix << line << std::endl;
    };
}

Result<StoreConfig> store_config(const Settings& s) {
    auto strategy = parse_blob_strategy(s.blob_strategy);
    if (!strategy) return make_error(ErrorCode::InvalidConfig, "unknown blob strategy '" + s.blob_strategy + "'");
    StoreConfig cfg;
    cfg.blob_strategy = *strategy;
    cfg.data_path = s.store;
    cfg.max_photo_bytes = s.max_photo_bytes;
    cfg.object_store_root = s.object_root;
    if (cfg.blob_strategy == BlobStrategy::object_store && cfg.object_store_root.empty()) {
        cfg.object_store_root = fs::absolute(s.store).parent_path() / "objects";
    }
    if (auto ok = cfg.validate(); !ok) return ok.error();
    if (auto ok = s.detector.validate(); !ok) return ok.error();
    return cfg;
}

QueueConfig queue_config(const Settings& s) {
    return QueueConfig{std::chrono::milliseconds(s.lease_ms), s.max_attempts};
}

WorkerConfig worker_config(const Settings& s, std::string id) {
    WorkerConfig cfg;
    cfg.worker_id = std::move(id);
    cfg.poll_interval = std::chrono::milliseconds(s.poll_ms);
    cfg.max_attempts = s.max_attempts;
    return cfg;
}

/// Blocks SIGINT and SIGTERM so that threads started afterwards inherit the mask.
sigset_t block_shutdown_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return set;
}

int wait_for_shutdown(const sigset_t& set) {
    int sig = 0;
    sigwait(&set, &sig);
    return sig;
}

Result<Bytes> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrorCode::BadRequest, "cannot read " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int run_serve(const Settings& s) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    const auto signals = block_shutdown_signals();
    Store store(*cfg);
    JobQueue queue(store, queue_config(s));
    ApiConfig api;
    api.host = s.host;
    api.port = s.port;
    api.token = s.token;
    ApiServer server(store, queue, api, system_clock(), random_ids(), console());
    if (server.bind() < 0) return fail("cannot bind " + s.host + ":" + std::to_string(s.port));
    std::thread listener([&] { server.listen(); });
    server.wait_until_ready();
    std::cout << "listening on http://" << s.host << ':' << server.port()
              << (s.token.empty() ? " (authentication disabled)" : "") << std::endl;
    const int sig = wait_for_shutdown(signals);
    server.stop();
    listener.join();
    std::cout << "stopped on signal " << sig << std::endl;
    return 0;
}

int run_work(const Settings& s, int n_workers) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    const auto signals = block_shutdown_signals();
    Store store(*cfg);
    JobQueue queue(store, queue_config(s));
    RednessDetector detector(s.detector);
    std::vector<std::unique_ptr<Worker>> workers;
    for (int i = 1; i <= n_workers; ++i) {
        const std::string id = "worker-" + std::to_string(i);
        workers.push_back(std::make_unique<Worker>(store, queue, detector, worker_config(s, id), console(id + ": ")));
    }
    std::vector<std::jthread> threads;
    for (auto& w : workers) threads.emplace_back([&w](std::stop_token stop) { w->run_loop(stop); });
    std::cout << n_workers << " worker(s) polling every " << s.poll_ms << " ms" << std::endl;
    const int sig = wait_for_shutdown(signals);
    threads.clear();
    std::cout << "stopped on signal " << sig << std::endl;
    return 0;
}

int run_seed_patient(const Settings& s, const std::string& id) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    Store store(*cfg);
    auto patient = make_patient(id);
    if (!patient) return fail(patient.error());
    if (auto ok = store.put_patient(*patient); !ok) return fail(ok.error());
    std::cout << "seeded patient " << patient->patient_id << " qr=" << patient->qr_payload << std::endl;
    return 0;
}

int run_qr(const Settings& s, const std::string& id) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    Store store(*cfg);
    auto patient = store.get_patient(id);
    if (!patient) return fail(patient.error());
    std::cout << patient->qr_payload << std::endl;
    return 0;
}

int run_queue(const Settings& s) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    Store store(*cfg);
    JobQueue queue(store, queue_config(s));
    auto stats = queue.stats();
    if (!stats) return fail(stats.error());
    std::cout << "pending=" << stats->pending << " in_progress=" << stats->in_progress
              << " complete=" << stats->complete << " failed=" << stats->failed << std::endl;
    return 0;
}

int run_export(const Settings& s, const std::string& dest) {
    auto cfg = store_config(s);
    if (!cfg) return fail(cfg.error());
    Store store(*cfg);
    auto n = store.export_dataset(dest);
    if (!n) return fail(n.error());
    std::cout << "exported " << *n << " photo(s) to " << dest << std::endl;
    return 0;
}

int run_synth_png(const std::string& out_path, std::size_t size) {
    auto png = demo_png(size);
    if (!png) return fail(png.error());
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(png->data()), static_cast<std::streamsize>(png->size()));
    if (!out) return fail("cannot write " + out_path);
    std::cout << "wrote " << out_path << " (" << png->size() << " bytes)" << std::endl;
    return 0;
}

void print_detections(FootSide side, const InferenceResult& r) {
    std::printf("%s foot: %zu detection(s)\n", std::string{to_string(side)}.c_str(), r.detections.size());
    for (const auto& d : r.detections) {
        std::printf("  box=(%d,%d,%d,%d) confidence=%.3f\n", d.box.left, d.box.top, d.box.width, d.box.height,
                    d.confidence);
    }
    std::fflush(stdout);
}

int run_demo_exam(const Settings& s, const DemoOptions& d) {
    auto png = read_bytes(d.image);
    if (!png) return fail(png.error());

    // in-process service, used when no --server is given
    std::optional<Store> store;
    std::optional<JobQueue> queue;
    std::optional<RednessDetector> detector;
    std::optional<Worker> worker;
    std::optional<BackgroundServer> server;
    std::optional<std::jthread> loop;

    std::string url = d.server;
    if (url.empty()) {
        auto cfg = store_config(s);
        if (!cfg) return fail(cfg.error());
        store.emplace(*cfg);
        if (!store->get_patient(d.patient)) {
            auto patient = make_patient(d.patient);
            if (!patient) return fail(patient.error());
            if (auto ok = store->put_patient(*patient); !ok) return fail(ok.error());
            std::cout << "seeded patient " << d.patient << std::endl;
        }
        queue.emplace(*store, queue_config(s));
        detector.emplace(s.detector);
        worker.emplace(*store, *queue, *detector, worker_config(s, "demo-worker"));
        ApiConfig api;
        api.host = s.host;
        api.port = 0;
        api.token = s.token;
        server.emplace(*store, *queue, api);
        loop.emplace([&worker](std::stop_token stop) { worker->run_loop(stop); });
        url = server->base_url();
    }

    Client client(url, s.token);
    auto check = client.check_server(kClientVersion);
    if (!check) return fail(check.error());
    std::cout << "server " << url << " version " << check->status.server_version << std::endl;

    auto exam_id = client.create_exam(d.patient);
    if (!exam_id) return fail(exam_id.error());
    std::cout << "exam " << *exam_id << " opened for patient " << d.patient << std::endl;

    std::vector<std::pair<FootSide, std::string>> jobs;
    for (FootSide side : kFootSides) {
        auto job = client.submit_foot_exam(*exam_id, side, true, d.ulcers, *png);
        if (!job) return fail(job.error());
        std::cout << to_string(side) << " foot: photo uploaded, job " << *job << std::endl;
        jobs.emplace_back(side, *job);
    }
    for (const auto& [side, job] : jobs) {
        auto result = client.await_result(job, std::chrono::milliseconds(d.timeout_ms), std::chrono::milliseconds(50));
        if (!result) return fail(result.error());
        print_detections(side, *result);
    }
    for (const auto& [side, job] : jobs) {
        if (auto ok = client.confirm(*exam_id, side, true); !ok) return fail(ok.error());
    }
    auto done = client.complete(*exam_id);
    if (!done) return fail(done.error());
    std::cout << "exam completed " << done->exam_id << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operator commands for the DFU detection service"};
    app.set_config("--config", "", "TOML or INI file with option defaults");
    app.require_subcommand(1);
    app.set_version_flag("--version", kClientVersion);

    Settings s;
    app.add_option("--host", s.host, "Listen address")->envname("DFU_HOST")->capture_default_str();
    app.add_option("--port", s.port, "Listen port (0 picks a free port)")
        ->envname("DFU_PORT")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    app.add_option("--token", s.token, "Bearer token; empty disables authentication")->envname("DFU_TOKEN");
    app.add_option("--store", s.store, "SQLite database path")->envname("DFU_STORE")->capture_default_str();
    app.add_option("--blob-strategy", s.blob_strategy, "Photo persistence: inline or object_store")
        ->envname("DFU_BLOB_STRATEGY")
        ->check(CLI::IsMember({"inline", "object_store"}))
        ->capture_default_str();
    app.add_option("--object-root", s.object_root, "Object store directory (default: objects/ next to the store)")
        ->envname("DFU_OBJECT_ROOT");
    app.add_option("--max-photo-bytes", s.max_photo_bytes, "Upload size cap")->capture_default_str();
    app.add_option("--redness-threshold", s.detector.redness_threshold)->capture_default_str();
    app.add_option("--min-red-channel", s.detector.min_red_channel)->capture_default_str();
    app.add_option("--min-area-fraction", s.detector.min_area_fraction)->capture_default_str();
    app.add_option("--min-area-floor", s.detector.min_area_floor)->capture_default_str();
    app.add_option("--report-threshold", s.detector.report_threshold)->capture_default_str();
    app.add_option("--nms-iou", s.detector.nms_iou)->capture_default_str();
    app.add_option("--poll-ms", s.poll_ms, "Worker poll interval when idle")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--lease-ms", s.lease_ms, "Job lease before an abandoned claim is retried")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-attempts", s.max_attempts)->check(CLI::PositiveNumber)->capture_default_str();

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");

    int n_workers = 1;
    auto* work = app.add_subcommand("work", "Run inference workers");
    work->add_option("--workers", n_workers)->check(CLI::PositiveNumber)->capture_default_str();

    std::string patient_id;
    auto* seed = app.add_subcommand("seed-patient", "Register a patient");
    seed->add_option("--id", patient_id)->required();
    auto* qr = app.add_subcommand("qr", "Print the QR payload of a patient");
    qr->add_option("--id", patient_id)->required();

    auto* queue = app.add_subcommand("queue", "Print job queue counts");

    std::string dest;
    auto* exporter = app.add_subcommand("export", "Write photos and manifest.csv to a directory");
    exporter->add_option("--dest", dest)->required();

    DemoOptions demo;
    auto* demo_cmd = app.add_subcommand("demo-exam", "Run one complete exam and print the detections");
    demo_cmd->add_option("--patient", demo.patient)->required();
    demo_cmd->add_option("--image", demo.image, "PNG uploaded for both feet")->required()->check(CLI::ExistingFile);
    demo_cmd->add_option("--server", demo.server, "Base URL of a running server (default: in-process)");
    demo_cmd->add_option("--ulcers", demo.ulcers, "Visible ulcer count entered per foot")->capture_default_str();
    demo_cmd->add_option("--timeout-ms", demo.timeout_ms)->check(CLI::PositiveNumber)->capture_default_str();

    std::string png_out;
    std::size_t png_size = 0;
    auto* synth = app.add_subcommand("synth-png", "Write the planted red-square test image");
    synth->add_option("--out", png_out)->required();
    synth->add_option("--size", png_size, "Pad the file to this many bytes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return run_serve(s);
        if (*work) return run_work(s, n_workers);
        if (*seed) return run_seed_patient(s, patient_id);
        if (*qr) return run_qr(s, patient_id);
        if (*queue) return run_queue(s);
        if (*exporter) return run_export(s, dest);
        if (*demo_cmd) return run_demo_exam(s, demo);
        if (*synth) return run_synth_png(png_out, png_size);
    } catch (const std::exception& e) {
        return fail(e.what());
    }
    return 1;
}
