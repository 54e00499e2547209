#pragma once
#include <mutex>
#include <string>
#include <vector>

#include "mei3d/response.hpp"

namespace mei3d {

// Exchange format, little-endian:
//   request:  u32 width, u32 height, then width*height f64 pixels row-major
//   response: one f64 response, then width*height f64 gradient values
// One request in flight at a time; the child process persists across requests.
std::vector<unsigned char> encode_image_request(const Image& img);
bool decode_image_request(const unsigned char* data, std::size_t size, Image& out);

// Runs the command once and keeps the pipes open. Protocol violations,
// timeouts, process death, and non-finite values surface as ModelError.
class ExternalProcessModel : public ResponseModel {
public:
    explicit ExternalProcessModel(std::vector<std::string> argv, int timeout_ms = 30000);
    ~ExternalProcessModel() override;

    ExternalProcessModel(const ExternalProcessModel&) = delete;
    ExternalProcessModel& operator=(const ExternalProcessModel&) = delete;

    double respond(const Image& img) override;
    Image respond_gradient(const Image& img) override;
    const char* name() const override { return "external"; }

private:
    void start();
    void shutdown();
    // One protocol round trip; fills the response/gradient cache.
    void exchange(const Image& img);

    std::vector<std::string> argv_;
    int timeout_ms_;
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::mutex mutex_;  // keeps one request in flight

    // respond() and respond_gradient() are usually called on the same image;
    // one round trip serves both.
    bool have_cache_ = false;
    std::vector<double> cached_pixels_;
    int cached_w_ = 0, cached_h_ = 0;
    double cached_response_ = 0.0;
    Image cached_gradient_;
};

}  // namespace mei3d
