#include "mei3d/external_model.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

#include "mei3d/errors.hpp"

namespace mei3d {

namespace {

void put_u32_le(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back(static_cast<unsigned char>(v));
    buf.push_back(static_cast<unsigned char>(v >> 8));
    buf.push_back(static_cast<unsigned char>(v >> 16));
    buf.push_back(static_cast<unsigned char>(v >> 24));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<unsigned char> encode_image_request(const Image& img) {
    std::vector<unsigned char> buf;
    buf.reserve(8 + img.pixel_count() * 8);
    put_u32_le(buf, static_cast<std::uint32_t>(img.width));
    put_u32_le(buf, static_cast<std::uint32_t>(img.height));
    const unsigned char* raw = reinterpret_cast<const unsigned char*>(img.values.data());
    buf.insert(buf.end(), raw, raw + img.pixel_count() * 8);
    return buf;
}

bool decode_image_request(const unsigned char* data, std::size_t size, Image& out) {
    if (size < 8) return false;
    std::uint32_t w = get_u32_le(data);
    std::uint32_t h = get_u32_le(data + 4);
    std::size_t need = 8 + static_cast<std::size_t>(w) * h * 8;
    if (w == 0 || h == 0 || size < need) return false;
    out = Image(static_cast<int>(w), static_cast<int>(h));
    std::memcpy(out.values.data(), data + 8, static_cast<std::size_t>(w) * h * 8);
    return true;
}

ExternalProcessModel::ExternalProcessModel(std::vector<std::string> argv, int timeout_ms)
    : argv_(std::move(argv)), timeout_ms_(timeout_ms) {
    if (argv_.empty()) throw ModelError("external model: empty command");
    // writes into a dead child's pipe should surface as EPIPE, not kill us
    ::signal(SIGPIPE, SIG_IGN);
    start();
}

ExternalProcessModel::~ExternalProcessModel() { shutdown(); }

void ExternalProcessModel::start() {
    int to_pipe[2], from_pipe[2];
    if (::pipe(to_pipe) != 0 || ::pipe(from_pipe) != 0) {
        throw ModelError("external model: pipe() failed");
    }
    pid_t pid = ::fork();
    if (pid < 0) throw ModelError("external model: fork() failed");
    if (pid == 0) {
        ::dup2(to_pipe[0], STDIN_FILENO);
        ::dup2(from_pipe[1], STDOUT_FILENO);
        ::close(to_pipe[0]);
        ::close(to_pipe[1]);
        ::close(from_pipe[0]);
        ::close(from_pipe[1]);
        std::vector<char*> cargv;
        for (auto& a : argv_) cargv.push_back(a.data());
        cargv.push_back(nullptr);
        ::execvp(cargv[0], cargv.data());
        ::_exit(127);
    }
    ::close(to_pipe[0]);
    ::close(from_pipe[1]);
    child_pid_ = pid;
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];
}

void ExternalProcessModel::shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (child_pid_ > 0) {
        int status = 0;
        if (::waitpid(child_pid_, &status, WNOHANG) == 0) {
            ::kill(child_pid_, SIGTERM);
            ::waitpid(child_pid_, &status, 0);
        }
        child_pid_ = -1;
    }
}

void ExternalProcessModel::exchange(const Image& img) {
    if (have_cache_ && cached_w_ == img.width && cached_h_ == img.height &&
        cached_pixels_ == img.values) {
        return;
    }
    if (child_pid_ < 0) throw ModelError("external model: process not running");

    auto request = encode_image_request(img);
    std::size_t sent = 0;
    while (sent < request.size()) {
        ssize_t n = ::write(to_child_, request.data() + sent, request.size() - sent);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ModelError(std::string("external model: write failed (") + std::strerror(errno) +
                             "); command: " + argv_[0]);
        }
        sent += static_cast<std::size_t>(n);
    }

    const std::size_t expect = 8 + img.pixel_count() * 8;
    std::vector<unsigned char> reply(expect);
    std::size_t got = 0;
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    while (got < expect) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                             deadline - std::chrono::steady_clock::now())
                             .count();
        if (remaining <= 0) {
            shutdown();
            throw ModelError("external model: timeout after " + std::to_string(timeout_ms_) +
                             " ms waiting for " + argv_[0]);
        }
        struct pollfd pfd{from_child_, POLLIN, 0};
        int pr = ::poll(&pfd, 1, static_cast<int>(remaining));
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw ModelError("external model: poll failed");
        }
        if (pr == 0) continue;
        ssize_t n = ::read(from_child_, reply.data() + got, expect - got);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ModelError("external model: read failed");
        }
        if (n == 0) {
            shutdown();
            throw ModelError("external model: " + argv_[0] + " closed the pipe mid-reply (got " +
                             std::to_string(got) + " of " + std::to_string(expect) + " bytes)");
        }
        got += static_cast<std::size_t>(n);
    }

    double response;
    std::memcpy(&response, reply.data(), 8);
    if (!std::isfinite(response)) {
        throw ModelError("external model: non-finite response from " + argv_[0]);
    }
    Image grad(img.width, img.height);
    std::memcpy(grad.values.data(), reply.data() + 8, img.pixel_count() * 8);
    if (!image_finite(grad)) {
        throw ModelError("external model: non-finite gradient from " + argv_[0]);
    }

    have_cache_ = true;
    cached_pixels_ = img.values;
    cached_w_ = img.width;
    cached_h_ = img.height;
    cached_response_ = response;
    cached_gradient_ = std::move(grad);
}

double ExternalProcessModel::respond(const Image& img) {
    std::lock_guard<std::mutex> lock(mutex_);
    exchange(img);
    return cached_response_;
}

Image ExternalProcessModel::respond_gradient(const Image& img) {
    std::lock_guard<std::mutex> lock(mutex_);
    exchange(img);
    return cached_gradient_;
}

}  // namespace mei3d
