#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "unislide/text.hpp"
#include "unislide/visual_design.hpp"

namespace unislide::visual {

BrowserRenderer::BrowserRenderer(std::filesystem::path script, std::string python, std::chrono::milliseconds timeout)
    : script_(std::move(script)), python_(std::move(python)), timeout_(timeout) {}

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

RenderResult BrowserRenderer::render(const std::string& markup, const std::filesystem::path& asset_dir) {
    if (!std::filesystem::exists(script_))
        throw Error(Errc::render_crash, "renderer script not found: " + script_.string());
    const auto work = std::filesystem::temp_directory_path() /
                      ("unislide-render-" + std::to_string(::getpid()) + "-" +
                       std::to_string(text::fnv1a64(markup) & 0xFFFFFFFF));
    std::filesystem::create_directories(work);
    const auto page = work / "page.html";
    const auto shot = work / "page.png";
    const auto geometry = work / "geometry.json";
    const auto errlog = work / "stderr.txt";
    {
        std::ofstream out(page, std::ios::binary);
        out << markup;
    }

    const std::vector<std::string> args = {python_,
                                           script_.string(),
                                           "--html", page.string(),
                                           "--base", std::filesystem::absolute(asset_dir).string(),
                                           "--png", shot.string(),
                                           "--geometry", geometry.string(),
                                           "--width", std::to_string(kCanvasWidth),
                                           "--height", std::to_string(kCanvasHeight)};
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(Errc::render_crash, "fork failed");
    if (pid == 0) {
        const int fd = ::open(errlog.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDERR_FILENO);
            ::dup2(fd, STDOUT_FILENO);
        }
        std::vector<char*> argv;
        for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    int status = 0;
    while (true) {
        const pid_t done = ::waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (std::chrono::steady_clock::now() > deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            std::filesystem::remove_all(work);
            throw Error(Errc::render_timeout, "renderer exceeded " + std::to_string(timeout_.count()) + " ms");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        auto err = slurp(errlog);
        std::filesystem::remove_all(work);
        throw Error(Errc::render_crash, "renderer exited abnormally: " + text::truncate_cp(err, 400));
    }

    RenderResult r;
    r.markup = markup;
    r.screenshot_png = slurp(shot);
    try {
        const auto j = nlohmann::json::parse(slurp(geometry));
        for (const auto& e : j.at("elements")) {
            ElementBox b;
            b.id = e.value("id", std::string());
            b.type = e.value("type", std::string());
            b.x = e.at("x").get<double>();
            b.y = e.at("y").get<double>();
            b.w = e.at("w").get<double>();
            b.declared_h = e.at("h").get<double>();
            b.h = std::max(b.declared_h, e.value("scroll_h", b.declared_h));
            b.text_bearing = is_text_bearing(parse_element_type(b.type).value_or(ElementType::figure));
            r.geometry.push_back(std::move(b));
        }
        for (const auto& l : j.value("log", std::vector<std::string>{})) r.log.push_back(l);
    } catch (const std::exception& e) {
        std::filesystem::remove_all(work);
        throw Error(Errc::render_crash, std::string("renderer geometry unreadable: ") + e.what());
    }
    std::filesystem::remove_all(work);
    return r;
}

}  // namespace unislide::visual
