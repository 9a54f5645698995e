#include "glyphrl/prompt_layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "glyphrl/errors.hpp"
#include "glyphrl/glyph_env.hpp"
#include "glyphrl/rng.hpp"
#include "glyphrl/text_format.hpp"

namespace glyphrl {

PromptSpec extract_keywords(const std::string& prompt) {
    PromptSpec spec;
    spec.raw_prompt = prompt;
    // Double-quoted spans only; splitting happens on whitespace, never on
    // slashes or other punctuation.
    static const std::regex quoted(R"re("([^"]*)")re");
    for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), quoted);
         it != std::sregex_iterator(); ++it) {
        std::istringstream words((*it)[1].str());
        std::string word;
        while (words >> word) spec.keywords.push_back(word);
    }
    for (std::size_t i = 0; i < spec.keywords.size(); ++i) {
        if (i > 0) spec.keyword_string += '/';
        spec.keyword_string += spec.keywords[i];
    }
    return spec;
}

Layout generate_layout(const PromptSpec& prompt, const Checkpoint& checkpoint,
                       const std::string& checkpoint_id, std::uint64_t seed,
                       bool reading_order) {
    if (prompt.keywords.empty()) {
        throw EmptyLayoutError(
            "prompt has no quoted text; wrap the words to lay out in double quotes");
    }
    const int policy_boxes = checkpoint.env_cfg.num_rectan;
    const int num_boxes = std::min<int>(static_cast<int>(prompt.keywords.size()), policy_boxes);

    // Labels: one keyword per box, surplus keywords merged into the last.
    std::vector<std::string> labels(prompt.keywords.begin(), prompt.keywords.begin() + num_boxes);
    for (std::size_t i = static_cast<std::size_t>(num_boxes); i < prompt.keywords.size(); ++i) {
        labels.back() += ' ' + prompt.keywords[i];
    }

    EnvConfig cfg = checkpoint.env_cfg;
    cfg.num_rectan = num_boxes;
    cfg.seed = derive_seed(seed, "layout-env");
    GlyphEnv env(cfg);

    const int policy_dim = checkpoint.params.obs_dim();
    StepOutcome out;
    while (true) {
        const std::vector<double> obs = env.observation();
        Vec padded = Vec::Zero(policy_dim);
        for (std::size_t i = 0; i < obs.size(); ++i) padded(static_cast<Eigen::Index>(i)) = obs[i];
        const Vec full_action = deterministic_action(checkpoint.params, padded);
        Action act;
        act.deltas.assign(full_action.data(), full_action.data() + num_boxes * 4);
        out = env.step(act);
        if (out.done || out.truncated) break;
    }

    std::vector<Rect> boxes = out.state.rects;
    if (reading_order) {
        std::stable_sort(boxes.begin(), boxes.end(), [](const Rect& a, const Rect& b) {
            if (a.y1 != b.y1) return a.y1 < b.y1;
            return a.x1 < b.x1;
        });
    }

    Layout layout;
    layout.window_size = cfg.window_size;
    layout.checkpoint_id = checkpoint_id;
    layout.seed = seed;
    layout.steps_used = out.steps_elapsed;
    layout.final_overlap = out.overlap;
    for (int i = 0; i < num_boxes; ++i) {
        layout.entries.push_back(LayoutEntry{labels[static_cast<std::size_t>(i)],
                                             boxes[static_cast<std::size_t>(i)]});
    }
    return layout;
}

namespace {

using nlohmann::json;

long round_clamped(double value, double window_size) {
    const double rounded = std::round(value);  // half away from zero
    return static_cast<long>(std::clamp(rounded, 0.0, window_size));
}

}  // namespace

std::string serialize_layout(const Layout& layout) {
    if (layout.entries.empty()) {
        throw EmptyLayoutError("refusing to serialize a layout with no entries");
    }
    json j;
    j["format"] = "glyphrl-layout";
    j["version"] = 1;
    j["window_size"] = layout.window_size;
    j["checkpoint_id"] = layout.checkpoint_id;
    j["seed"] = layout.seed;
    j["steps_used"] = layout.steps_used;
    j["final_overlap"] = layout.final_overlap;
    json entries = json::array();
    for (const LayoutEntry& e : layout.entries) {
        entries.push_back(json{{"keyword", e.keyword},
                               {"box", {round_clamped(e.box.x1, layout.window_size),
                                        round_clamped(e.box.y1, layout.window_size),
                                        round_clamped(e.box.x2, layout.window_size),
                                        round_clamped(e.box.y2, layout.window_size)}}});
    }
    j["entries"] = std::move(entries);
    return j.dump(1) + '\n';
}

Layout parse_layout(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("format", "") != std::string("glyphrl-layout")) {
        throw ContractViolationError("not a layout document");
    }
    if (j.at("version").get<int>() != 1) throw ContractViolationError("unsupported layout version");
    Layout layout;
    layout.window_size = j.at("window_size").get<double>();
    layout.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    layout.seed = j.at("seed").get<std::uint64_t>();
    layout.steps_used = j.at("steps_used").get<int>();
    layout.final_overlap = j.at("final_overlap").get<double>();
    for (const auto& e : j.at("entries")) {
        const auto& box = e.at("box");
        layout.entries.push_back(LayoutEntry{
            e.at("keyword").get<std::string>(),
            Rect{box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
                 box.at(3).get<double>()}});
    }
    return layout;
}

void save_layout(const std::filesystem::path& path, const Layout& layout) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open layout for writing: " + path.string());
    out << serialize_layout(layout);
}

Layout load_layout(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_layout(buf.str());
}

namespace {

std::string xml_escape(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (const char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                    "#46f0f0", "#f032e6", "#9a6324", "#008080", "#800000"};

}  // namespace

std::string render_svg(const Layout& layout, double scale) {
    const double canvas = layout.window_size * scale;
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(canvas)
        << "\" height=\"" << format_double(canvas) << "\" viewBox=\"0 0 " << format_double(canvas)
        << ' ' << format_double(canvas) << "\">\n";
    constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);
    for (std::size_t i = 0; i < layout.entries.size(); ++i) {
        const LayoutEntry& e = layout.entries[i];
        const char* color = kPalette[i % kPaletteSize];
        const double x = e.box.x1 * scale;
        const double y = e.box.y1 * scale;
        const double w = e.box.width() * scale;
        const double h = e.box.height() * scale;
        const double font = std::max(4.0, std::min(10.0 * scale, h * 0.5));
        svg << "  <rect x=\"" << format_double(x) << "\" y=\"" << format_double(y) << "\" width=\""
            << format_double(w) << "\" height=\"" << format_double(h)
            << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
            << format_double(std::max(1.0, scale)) << "\"/>\n";
        svg << "  <text x=\"" << format_double(x + 2.0 * scale) << "\" y=\""
            << format_double(y + font + 1.0 * scale) << "\" font-family=\"sans-serif\" font-size=\""
            << format_double(font) << "\" fill=\"" << color << "\">" << xml_escape(e.keyword)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace glyphrl
