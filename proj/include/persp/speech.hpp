#pragma once

#include <functional>
#include <iosfwd>
#include <mutex>
#include <vector>

#include "persp/session.hpp"

namespace persp {

struct DeliveryReceipt {
    bool success = false;
    double duration_ms = 0.0;
};

/// Renders an utterance to the outside world. Failures are reported by
/// throwing DeliveryFailed; the session state is never touched here.
class SpeechAdapter {
public:
    virtual ~SpeechAdapter() = default;
    virtual DeliveryReceipt speak(const Utterance& utterance) = 0;
};

/// Writes "[role] text" lines.
class ConsoleSpeechAdapter final : public SpeechAdapter {
public:
    explicit ConsoleSpeechAdapter(std::ostream& out);
    DeliveryReceipt speak(const Utterance& utterance) override;

private:
    std::ostream& out_;
    std::mutex mutex_;
};

/// Hands the utterance to a callback (for example a robot bridge). A false
/// return or an exception becomes DeliveryFailed.
class CallbackSpeechAdapter final : public SpeechAdapter {
public:
    explicit CallbackSpeechAdapter(std::function<bool(const Utterance&)> callback);
    DeliveryReceipt speak(const Utterance& utterance) override;

private:
    std::function<bool(const Utterance&)> callback_;
};

/// Records everything; does nothing else.
class SilentSpeechAdapter final : public SpeechAdapter {
public:
    DeliveryReceipt speak(const Utterance& utterance) override;
    std::vector<Utterance> spoken() const;

private:
    mutable std::mutex mutex_;
    std::vector<Utterance> spoken_;
};

DeliveryReceipt speak(SpeechAdapter& adapter, const Utterance& utterance);

}  // namespace persp
