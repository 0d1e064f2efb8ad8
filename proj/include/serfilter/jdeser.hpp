#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace serfilter {

enum class ClassKind { plain, proxy, enumeration, array };

const char* to_string(ClassKind k);

/// One class observed while reading a serialized stream, in the order a
/// deserialization filter would see it. Dotted names; arrays keep JVM
/// bracket form ("[Ljava.lang.Object;").
struct ClassEvent {
    std::string class_name;
    ClassKind kind = ClassKind::plain;
    std::size_t offset = 0;  // byte offset of the descriptor in the stream

    bool operator==(const ClassEvent&) const = default;
};

enum class TraceLabel { benign, malicious, unlabeled };

struct TraceRecord {
    TraceLabel label = TraceLabel::unlabeled;
    std::vector<ClassEvent> events;
    std::string source;
};

struct StreamError {
    enum class Kind { BadMagic, BadVersion, UnsupportedTag, Truncated, TrailingData };
    Kind kind;
    std::string detail;
    std::size_t offset = 0;
};

const char* to_string(StreamError::Kind k);

struct ParseResult {
    TraceRecord trace;
    std::optional<StreamError> error;
    bool complete = false;  // top-level object graph fully read
};

/// Parses a whole Java Object Serialization stream (protocol version 5)
/// without executing any deserialization. Best-effort: on error the events
/// gathered so far are kept.
ParseResult parse_stream(std::span<const std::uint8_t> bytes);

/// Incremental front end with the same semantics: feeding the chunks of a
/// stream in order yields exactly the events parse_stream emits on the
/// concatenation. One session per stream; a session is single-threaded.
class StreamSession {
public:
    StreamSession();
    ~StreamSession();
    StreamSession(StreamSession&&) noexcept;
    StreamSession& operator=(StreamSession&&) noexcept;

    // Returns events newly emitted by this chunk.
    std::vector<ClassEvent> feed(std::span<const std::uint8_t> chunk);

    bool complete() const;  // top-level graph closed
    const std::optional<StreamError>& error() const;

    // Signals end of input; flags Truncated if the graph is still open.
    ParseResult finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace serfilter
