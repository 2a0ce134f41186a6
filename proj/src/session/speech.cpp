#include "persp/speech.hpp"

#include <chrono>
#include <ostream>

#include "persp/errors.hpp"

namespace persp {
namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

ConsoleSpeechAdapter::ConsoleSpeechAdapter(std::ostream& out) : out_(out) {}

DeliveryReceipt ConsoleSpeechAdapter::speak(const Utterance& utterance) {
    const auto start = std::chrono::steady_clock::now();
    std::lock_guard lock(mutex_);
    out_ << '[' << to_string(utterance.role) << "] " << utterance.text << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kDeliveryFailed, "console stream is not writable");
    return {true, elapsed_ms(start)};
}

CallbackSpeechAdapter::CallbackSpeechAdapter(std::function<bool(const Utterance&)> callback)
    : callback_(std::move(callback)) {
    if (!callback_) throw Error(ErrorCode::kInvalidArgument, "speech callback is empty");
}

DeliveryReceipt CallbackSpeechAdapter::speak(const Utterance& utterance) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = callback_(utterance);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::kDeliveryFailed, e.what());
    }
    if (!ok) throw Error(ErrorCode::kDeliveryFailed, "speech callback reported failure");
    return {true, elapsed_ms(start)};
}

DeliveryReceipt SilentSpeechAdapter::speak(const Utterance& utterance) {
    std::lock_guard lock(mutex_);
    spoken_.push_back(utterance);
    return {true, 0.0};
}

std::vector<Utterance> SilentSpeechAdapter::spoken() const {
    std::lock_guard lock(mutex_);
    return spoken_;
}

DeliveryReceipt speak(SpeechAdapter& adapter, const Utterance& utterance) {
    return adapter.speak(utterance);
}

}  // namespace persp
