#include "dynhat/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace dynhat {

std::pair<const OperatingPoint*, bool> select_point(const OperatingLibrary& library,
                                                    double constraint_ms) {
    if (library.points.empty()) throw std::invalid_argument("select_point: empty library");

    const OperatingPoint* best = nullptr;
    for (const auto& p : library.points) {
        if (p.measured_latency_ms > constraint_ms) continue;
        if (!best || p.val_loss < best->val_loss ||
            (p.val_loss == best->val_loss && p.measured_latency_ms < best->measured_latency_ms))
            best = &p;
    }
    if (best) return {best, false};

    const OperatingPoint* fastest = &library.points.front();
    for (const auto& p : library.points)
        if (p.measured_latency_ms < fastest->measured_latency_ms) fastest = &p;
    return {fastest, true};
}

void to_json(nlohmann::json& j, const ControllerEvent& e) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "0x%016llx",
                  static_cast<unsigned long long>(e.chosen_config_hash));
    j = nlohmann::json{
        {"t_ms", e.t_ms},
        {"constraint_ms", e.constraint_ms},
        {"chosen_config_hash", hash},
        {"chosen_measured_ms", e.chosen_measured_ms},
        {"chosen_decoder_layers", e.chosen_decoder_layers},
        {"switch_time_ms", e.switch_time_ms},
        {"violation", e.violation},
    };
}

Controller::Controller(std::shared_ptr<const SuperWeights> bank, OperatingLibrary library)
    : bank_(std::move(bank)), library_(std::move(library)),
      start_(std::chrono::steady_clock::now()) {
    if (!bank_) throw std::invalid_argument("Controller: null bank");
    if (library_.points.empty()) throw std::invalid_argument("Controller: empty library");
    std::sort(library_.points.begin(), library_.points.end(),
              [](const OperatingPoint& a, const OperatingPoint& b) {
                  return a.measured_latency_ms < b.measured_latency_ms;
              });
    install(library_.points.front());
}

OperatingPoint Controller::active_point() const { return snapshot()->point; }

std::shared_ptr<const Controller::Active> Controller::snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return active_;
}

double Controller::install(const OperatingPoint& point) {
    const auto t0 = std::chrono::steady_clock::now();
    auto next = std::make_shared<Active>(Active{inherit(*bank_, point.config), point});
    {
        std::lock_guard<std::mutex> lock(mu_);
        active_ = std::move(next);
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

double Controller::switch_active(const OperatingPoint& point) {
    const bool member = std::any_of(library_.points.begin(), library_.points.end(),
                                    [&](const OperatingPoint& p) { return p.config == point.config; });
    if (!member) throw std::invalid_argument("switch_active: point not in library");
    return install(point);
}

ControllerEvent Controller::handle_constraint_event(double constraint_ms) {
    auto [chosen, violation] = select_point(library_, constraint_ms);

    ControllerEvent e;
    e.constraint_ms = constraint_ms;
    e.chosen_config_hash = config_hash(chosen->config);
    e.chosen_measured_ms = chosen->measured_latency_ms;
    e.chosen_decoder_layers = chosen->config.n_decoder_layers;
    e.violation = violation;

    if (!(snapshot()->point.config == chosen->config))
        e.switch_time_ms = install(*chosen);

    e.t_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
                 .count();
    {
        std::lock_guard<std::mutex> lock(mu_);
        log_.push_back(e);
    }
    return e;
}

std::vector<int> Controller::translate_current(std::span<const int> src_tokens, int max_len) const {
    // The snapshot keeps the view alive for the whole request even if a
    // switch lands mid-translation.
    auto active = snapshot();
    return greedy_translate(active->view, src_tokens, max_len);
}

std::vector<ControllerEvent> Controller::event_log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
}

ControllerStats Controller::stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    ControllerStats s;
    s.n_events = log_.size();
    for (const auto& e : log_) {
        if (e.switch_time_ms > 0.0) s.n_switches += 1;
        if (e.violation) s.n_violations += 1;
    }
    s.active_measured_ms = active_->point.measured_latency_ms;
    s.active_val_loss = active_->point.val_loss;
    s.active_decoder_layers = active_->point.config.n_decoder_layers;
    return s;
}

}  // namespace dynhat
