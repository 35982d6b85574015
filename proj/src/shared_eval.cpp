#include "unislide/shared_eval.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "unislide/assets.hpp"
#include "unislide/text.hpp"

namespace unislide::eval {

std::size_t DefectFlagSheet::errors() const {
    return static_cast<std::size_t>(std::count(has_critical_defect.begin(), has_critical_defect.end(), true));
}

double visual_integrity(const DefectFlagSheet& flags) {
    const auto total = flags.total();
    if (total == 0) throw Error(Errc::empty_deck, "visual integrity needs at least one slide");
    const auto errors = flags.errors();
    return 10.0 * static_cast<double>(total - errors) / static_cast<double>(total);
}

std::vector<double> normalize_batch(std::span<const double> raw, double epsilon) {
    if (raw.empty()) return {};
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double min = *lo;
    const double range = *hi - *lo + epsilon;
    std::vector<double> out;
    out.reserve(raw.size());
    for (double x : raw) out.push_back(10.0 * (x - min) / range);
    return out;
}

double shared_mean(std::span<const double> scores) {
    if (scores.size() != 5)
        throw Error(Errc::arity, "shared_mean takes exactly 5 values, got " + std::to_string(scores.size()));
    return mean(scores);
}

double setting_avg(std::span<const double> shared_scores, std::span<const double> scenario_scores) {
    const double s = shared_mean(shared_scores);
    double sum = 5.0 * s;
    for (double v : scenario_scores) sum += v;
    return sum / static_cast<double>(5 + scenario_scores.size());
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error(Errc::arity, "mean of an empty list");
    double sum = 0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

RepeatResult repeat_average(const std::function<double(int)>& score_fn, int runs) {
    if (runs < 1) throw Error(Errc::precondition, "runs must be >= 1");
    RepeatResult r;
    for (int i = 0; i < runs; ++i) r.values.push_back(score_fn(i));
    r.mean = mean(r.values);
    r.std = population_std(r.values);
    return r;
}

// ---------------------------------------------------------------------------

std::string deck_for_judge(const task::Deck& deck) {
    std::string out;
    for (const auto& s : deck.slides) {
        out += "=== SLIDE " + std::to_string(s.index) + " role=" + std::string(task::to_string(s.role));
        if (s.image_ref) out += " image=" + *s.image_ref;
        out += " ===\n";
        if (s.html) out += *s.html + "\n";
    }
    return out;
}

std::vector<JudgeSlide> parse_deck_for_judge(std::string_view text) {
    static const std::regex header(R"(^=== SLIDE (\d+) role=(\w+)(?: image=(\S+))? ===$)");
    std::vector<JudgeSlide> out;
    for (const auto& line : text::split_lines(text)) {
        std::smatch m;
        if (std::regex_match(line, m, header)) {
            out.push_back({std::stoi(m[1].str()), m[2].str(), m[3].matched ? m[3].str() : std::string(), {}});
            continue;
        }
        if (out.empty()) continue;
        if (!out.back().markup.empty()) out.back().markup += "\n";
        out.back().markup += line;
    }
    for (auto& s : out) {
        while (!s.markup.empty() && s.markup.back() == '\n') s.markup.pop_back();
    }
    return out;
}

std::vector<std::string> deck_images(const task::Deck& deck) {
    std::vector<std::string> out;
    for (const auto& s : deck.slides) {
        if (s.image_ref) out.push_back((deck.base_dir / *s.image_ref).string());
    }
    return out;
}

std::string task_brief(const task::Task& task) {
    std::string out = "setting: " + std::string(task::to_string(task.setting)) + "\n";
    if (!task.domain.empty()) out += "domain: " + task.domain + "\n";
    out += "intent: " + task.intent + "\n";
    for (const auto& d : task.documents) out += "document: " + d.id + " | " + d.title + "\n";
    return out;
}

SharedJudgment judge_shared_metric(const task::Deck& deck, const task::Task& task, std::string_view metric,
                                   const gateway::JudgeContext& ctx) {
    if (metric == "visual_integrity")
        throw Error(Errc::precondition, "visual_integrity is computed from defect flags, not judged");
    if (std::find(task::kSharedMetricIds.begin(), task::kSharedMetricIds.end(), metric) == task::kSharedMetricIds.end())
        throw Error(Errc::precondition, "unknown shared metric " + std::string(metric));
    const auto rubric = assets::rubric("shared/" + std::string(metric), "shared_metric");
    SharedJudgment out;
    out.judgment = gateway::judge_rubric(rubric, std::string(metric),
                                         {{"TASK", task_brief(task)}, {"DECK", deck_for_judge(deck)}}, ctx,
                                         deck_images(deck));
    out.score = out.judgment.value();
    return out;
}

DefectFlagSheet judge_defect_flags(const task::Deck& deck, const gateway::JudgeContext& ctx,
                                   std::vector<gateway::Judgment>* traces) {
    if (deck.slides.empty()) throw Error(Errc::empty_deck, "deck " + deck.id + " has no slides");
    const auto rubric = assets::rubric("shared/visual_integrity", "slide_defect_check");
    DefectFlagSheet flags;
    for (const auto& s : deck.slides) {
        task::Deck single;
        single.slides = {s};
        std::vector<std::string> images;
        if (s.image_ref) images.push_back((deck.base_dir / *s.image_ref).string());
        auto j = gateway::judge_rubric(rubric, "slide_" + std::to_string(s.index), {{"SLIDE", deck_for_judge(single)}},
                                       ctx, images);
        flags.has_critical_defect.push_back(j.value() >= 1.0);
        if (traces) traces->push_back(std::move(j));
    }
    return flags;
}

}  // namespace unislide::eval
