// Reference response model speaking the mei3d external-model pipe protocol:
// reads (u32 width, u32 height, f64 pixels) requests from stdin and replies
// with (f64 response, f64 gradient per pixel). The response is the mean pixel
// value, so the gradient is a constant 1/(width*height).
//
// Flags for adapter failure testing:
//   --nan        reply with a NaN response
//   --sleep MS   wait before each reply
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace {

bool read_exact(void* buf, std::size_t n) {
    unsigned char* p = static_cast<unsigned char*>(buf);
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::read(STDIN_FILENO, p + got, n - got);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        if (r == 0) return false;  // EOF
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool write_exact(const void* buf, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(buf);
    std::size_t sent = 0;
    while (sent < n) {
        ssize_t r = ::write(STDOUT_FILENO, p + sent, n - sent);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    bool emit_nan = false;
    int sleep_ms = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--nan") == 0) {
            emit_nan = true;
        } else if (std::strcmp(argv[i], "--sleep") == 0 && i + 1 < argc) {
            sleep_ms = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--nan] [--sleep MS]\n", argv[0]);
            return 2;
        }
    }

    for (;;) {
        std::uint32_t header[2];
        if (!read_exact(header, sizeof(header))) return 0;
        std::size_t npix = static_cast<std::size_t>(header[0]) * header[1];
        if (npix == 0 || npix > (1u << 26)) return 1;

        std::vector<double> pixels(npix);
        if (!read_exact(pixels.data(), npix * sizeof(double))) return 1;

        if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));

        double mean = 0.0;
        for (double v : pixels) mean += v;
        mean /= static_cast<double>(npix);
        if (emit_nan) mean = std::numeric_limits<double>::quiet_NaN();

        std::vector<double> grad(npix, 1.0 / static_cast<double>(npix));
        if (!write_exact(&mean, sizeof(mean))) return 1;
        if (!write_exact(grad.data(), npix * sizeof(double))) return 1;
    }
}
