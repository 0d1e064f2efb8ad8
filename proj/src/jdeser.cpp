#include "serfilter/jdeser.hpp"

#include <cstring>
#include <memory>
#include <utility>

namespace serfilter {

const char* to_string(ClassKind k) {
    switch (k) {
        case ClassKind::plain: return "plain";
        case ClassKind::proxy: return "proxy";
        case ClassKind::enumeration: return "enum";
        case ClassKind::array: return "array";
    }
    return "plain";
}

const char* to_string(StreamError::Kind k) {
    switch (k) {
        case StreamError::Kind::BadMagic: return "BadMagic";
        case StreamError::Kind::BadVersion: return "BadVersion";
        case StreamError::Kind::UnsupportedTag: return "UnsupportedTag";
        case StreamError::Kind::Truncated: return "Truncated";
        case StreamError::Kind::TrailingData: return "TrailingData";
    }
    return "Truncated";
}

namespace {

// Stream constants (Java Object Serialization protocol, version 5).
constexpr std::uint16_t kMagic = 0xACED;
constexpr std::uint16_t kVersion = 0x0005;
constexpr std::uint8_t TC_NULL = 0x70;
constexpr std::uint8_t TC_REFERENCE = 0x71;
constexpr std::uint8_t TC_CLASSDESC = 0x72;
constexpr std::uint8_t TC_OBJECT = 0x73;
constexpr std::uint8_t TC_STRING = 0x74;
constexpr std::uint8_t TC_ARRAY = 0x75;
constexpr std::uint8_t TC_CLASS = 0x76;
constexpr std::uint8_t TC_BLOCKDATA = 0x77;
constexpr std::uint8_t TC_ENDBLOCKDATA = 0x78;
constexpr std::uint8_t TC_RESET = 0x79;
constexpr std::uint8_t TC_BLOCKDATALONG = 0x7A;
constexpr std::uint8_t TC_EXCEPTION = 0x7B;
constexpr std::uint8_t TC_LONGSTRING = 0x7C;
constexpr std::uint8_t TC_PROXYCLASSDESC = 0x7D;
constexpr std::uint8_t TC_ENUM = 0x7E;
constexpr std::uint32_t kBaseWireHandle = 0x7E0000;

constexpr std::uint8_t SC_WRITE_METHOD = 0x01;
constexpr std::uint8_t SC_SERIALIZABLE = 0x02;
constexpr std::uint8_t SC_EXTERNALIZABLE = 0x04;
constexpr std::uint8_t SC_BLOCK_DATA = 0x08;
constexpr std::uint8_t SC_ENUM = 0x10;

struct Incomplete {};

struct HardError {
    StreamError err;
};

struct FieldDesc {
    char typecode;
};

struct ClassDescInfo {
    std::string name;  // dotted
    std::uint8_t flags = 0;
    bool proxy = false;
    std::vector<FieldDesc> fields;
    std::shared_ptr<ClassDescInfo> super;
};

int primitive_width(char code) {
    switch (code) {
        case 'B': case 'Z': return 1;
        case 'C': case 'S': return 2;
        case 'F': case 'I': return 4;
        case 'D': case 'J': return 8;
        default: return -1;
    }
}

enum class Outcome { Complete, NeedMore, NeedMoreAtBoundary, Failed };

class StreamParser {
public:
    explicit StreamParser(std::span<const std::uint8_t> buf) : buf_(buf) {}

    Outcome run() {
        try {
            parse_header();
            if (pos_ == buf_.size()) return Outcome::NeedMoreAtBoundary;
            parse_content(require_u8("content tag"));
            complete_end_ = pos_;
            if (pos_ < buf_.size()) {
                fail(StreamError::Kind::TrailingData, "bytes after top-level object graph", pos_);
            }
            return Outcome::Complete;
        } catch (const Incomplete&) {
            return Outcome::NeedMore;
        } catch (const HardError& e) {
            error_ = e.err;
            return Outcome::Failed;
        }
    }

    std::vector<ClassEvent> events;
    std::optional<StreamError> error_;
    std::size_t complete_end_ = 0;

private:
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
    // Handle table: non-null entries are class descriptors, null entries are
    // opaque values (strings, objects, arrays, enums, classes).
    std::vector<std::shared_ptr<ClassDescInfo>> handles_;
    bool string_event_emitted_ = false;

    [[noreturn]] void fail(StreamError::Kind kind, std::string detail, std::size_t offset) {
        throw HardError{StreamError{kind, std::move(detail), offset}};
    }

    void need(std::size_t n) {
        if (buf_.size() - pos_ < n) throw Incomplete{};
    }

    std::uint8_t require_u8(const char*) {
        need(1);
        return buf_[pos_++];
    }
    std::uint16_t read_u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] << 8 | buf_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t read_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | buf_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }
    std::uint64_t read_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | buf_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 8;
        return v;
    }
    void skip(std::uint64_t n) {
        if (buf_.size() - pos_ < n) throw Incomplete{};
        pos_ += static_cast<std::size_t>(n);
    }
    std::string read_utf() {
        std::uint16_t len = read_u16();
        need(len);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    std::uint32_t new_handle(std::shared_ptr<ClassDescInfo> desc) {
        handles_.push_back(std::move(desc));
        return kBaseWireHandle + static_cast<std::uint32_t>(handles_.size() - 1);
    }

    std::shared_ptr<ClassDescInfo> lookup_class_handle(std::uint32_t handle, std::size_t at) {
        if (handle < kBaseWireHandle || handle - kBaseWireHandle >= handles_.size())
            fail(StreamError::Kind::UnsupportedTag, "reference to unknown handle", at);
        auto desc = handles_[handle - kBaseWireHandle];
        if (!desc) fail(StreamError::Kind::UnsupportedTag, "class-descriptor reference to non-class handle", at);
        return desc;
    }

    void parse_header() {
        std::size_t at = pos_;
        if (read_u16() != kMagic)
            fail(StreamError::Kind::BadMagic, "stream does not start with 0xACED", at);
        at = pos_;
        if (read_u16() != kVersion)
            fail(StreamError::Kind::BadVersion, "unsupported protocol version", at);
    }

    // String object (TC_STRING / TC_LONGSTRING / TC_REFERENCE). New string
    // instances get a handle. The filter sees java.lang.String once, on the
    // first string instance; strings used as descriptor metadata don't count.
    void parse_string_object(std::uint8_t tag, std::size_t tag_at, bool instance) {
        if (tag == TC_REFERENCE) {
            std::size_t at = pos_;
            std::uint32_t h = read_u32();
            if (h < kBaseWireHandle || h - kBaseWireHandle >= handles_.size())
                fail(StreamError::Kind::UnsupportedTag, "reference to unknown handle", at);
            return;
        }
        if (tag == TC_STRING) {
            read_utf();
        } else if (tag == TC_LONGSTRING) {
            std::uint64_t len = read_u64();
            skip(len);
        } else {
            fail(StreamError::Kind::UnsupportedTag, "expected string object", tag_at);
        }
        new_handle(nullptr);
        if (instance && !string_event_emitted_) {
            events.push_back({"java.lang.String", ClassKind::plain, tag_at});
            string_event_emitted_ = true;
        }
    }

    // classDesc: TC_CLASSDESC | TC_PROXYCLASSDESC | TC_NULL | TC_REFERENCE
    std::shared_ptr<ClassDescInfo> parse_class_desc() {
        std::size_t tag_at = pos_;
        std::uint8_t tag = require_u8("classDesc tag");
        switch (tag) {
            case TC_NULL:
                return nullptr;
            case TC_REFERENCE: {
                std::size_t at = pos_;
                return lookup_class_handle(read_u32(), at);
            }
            case TC_CLASSDESC: {
                auto desc = std::make_shared<ClassDescInfo>();
                desc->name = read_utf();
                if (desc->name.empty())
                    fail(StreamError::Kind::UnsupportedTag, "empty class name in descriptor", tag_at);
                read_u64();  // serialVersionUID
                new_handle(desc);
                desc->flags = require_u8("classDescFlags");
                ClassKind kind = ClassKind::plain;
                if (!desc->name.empty() && desc->name[0] == '[')
                    kind = ClassKind::array;
                else if (desc->flags & SC_ENUM)
                    kind = ClassKind::enumeration;
                events.push_back({desc->name, kind, tag_at});
                std::uint16_t field_count = read_u16();
                desc->fields.reserve(field_count);
                for (std::uint16_t i = 0; i < field_count; ++i) {
                    std::size_t at = pos_;
                    char code = static_cast<char>(require_u8("field typecode"));
                    if (primitive_width(code) < 0 && code != 'L' && code != '[')
                        fail(StreamError::Kind::UnsupportedTag, "bad field typecode", at);
                    read_utf();  // field name
                    if (code == 'L' || code == '[') {
                        std::size_t nat = pos_;
                        parse_string_object(require_u8("field type name"), nat, /*instance=*/false);
                    }
                    desc->fields.push_back({code});
                }
                parse_annotation();  // classAnnotation
                desc->super = parse_class_desc();
                return desc;
            }
            case TC_PROXYCLASSDESC: {
                auto desc = std::make_shared<ClassDescInfo>();
                desc->proxy = true;
                desc->name = "java.lang.reflect.Proxy";
                desc->flags = SC_SERIALIZABLE;
                new_handle(desc);
                std::uint32_t n_ifaces = read_u32();
                // Each interface name needs at least a 2-byte length.
                if (static_cast<std::uint64_t>(n_ifaces) * 2 > buf_.size() - pos_) throw Incomplete{};
                events.push_back({desc->name, ClassKind::proxy, tag_at});
                for (std::uint32_t i = 0; i < n_ifaces; ++i) read_utf();
                parse_annotation();
                desc->super = parse_class_desc();
                return desc;
            }
            default:
                fail(StreamError::Kind::UnsupportedTag, "unexpected tag where class descriptor expected", tag_at);
        }
    }

    // contents until TC_ENDBLOCKDATA (class/object annotations).
    void parse_annotation() {
        for (;;) {
            std::size_t at = pos_;
            std::uint8_t tag = require_u8("annotation tag");
            if (tag == TC_ENDBLOCKDATA) return;
            pos_ = at;
            parse_content(require_u8("annotation element"));
        }
    }

    void parse_content(std::uint8_t tag) {
        std::size_t tag_at = pos_ - 1;
        switch (tag) {
            case TC_NULL:
                return;
            case TC_REFERENCE: {
                std::size_t at = pos_;
                std::uint32_t h = read_u32();
                if (h < kBaseWireHandle || h - kBaseWireHandle >= handles_.size())
                    fail(StreamError::Kind::UnsupportedTag, "reference to unknown handle", at);
                return;
            }
            case TC_STRING:
            case TC_LONGSTRING:
                parse_string_object(tag, tag_at, /*instance=*/true);
                return;
            case TC_BLOCKDATA: {
                std::uint8_t len = require_u8("blockdata length");
                skip(len);
                return;
            }
            case TC_BLOCKDATALONG: {
                std::uint32_t len = read_u32();
                skip(len);
                return;
            }
            case TC_OBJECT:
                parse_object(tag_at);
                return;
            case TC_CLASS: {
                auto desc = parse_class_desc();
                if (!desc) fail(StreamError::Kind::UnsupportedTag, "TC_CLASS with null descriptor", tag_at);
                new_handle(nullptr);
                return;
            }
            case TC_ARRAY:
                parse_array(tag_at);
                return;
            case TC_ENUM:
                parse_enum(tag_at);
                return;
            case TC_CLASSDESC:
            case TC_PROXYCLASSDESC:
                // A bare descriptor is a valid content element (rare).
                pos_ = tag_at;
                parse_class_desc();
                return;
            case TC_RESET:
                fail(StreamError::Kind::UnsupportedTag, "TC_RESET not supported", tag_at);
            case TC_EXCEPTION:
                fail(StreamError::Kind::UnsupportedTag, "TC_EXCEPTION not supported", tag_at);
            default:
                fail(StreamError::Kind::UnsupportedTag, "unknown content tag", tag_at);
        }
    }

    void parse_object(std::size_t tag_at) {
        auto desc = parse_class_desc();
        if (!desc) fail(StreamError::Kind::UnsupportedTag, "object with null class descriptor", tag_at);
        new_handle(nullptr);

        // classdata is stored super-most class first.
        std::vector<const ClassDescInfo*> chain;
        for (const ClassDescInfo* d = desc.get(); d; d = d->super.get()) chain.push_back(d);
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            const ClassDescInfo* d = *it;
            if (d->flags & SC_SERIALIZABLE) {
                for (const FieldDesc& f : d->fields) {
                    int w = primitive_width(f.typecode);
                    if (w > 0)
                        skip(static_cast<std::uint64_t>(w));
                    else
                        parse_content(require_u8("object field value"));
                }
                if (d->flags & SC_WRITE_METHOD) parse_annotation();
            } else if (d->flags & SC_EXTERNALIZABLE) {
                if (d->flags & SC_BLOCK_DATA)
                    parse_annotation();
                else
                    fail(StreamError::Kind::UnsupportedTag,
                         "externalizable contents without block-data framing", tag_at);
            }
        }
    }

    void parse_array(std::size_t tag_at) {
        auto desc = parse_class_desc();
        if (!desc) fail(StreamError::Kind::UnsupportedTag, "array with null class descriptor", tag_at);
        new_handle(nullptr);
        std::uint32_t size = read_u32();
        if (desc->name.size() < 2 || desc->name[0] != '[')
            fail(StreamError::Kind::UnsupportedTag, "array descriptor without bracket type", tag_at);
        char component = desc->name[1];
        int w = primitive_width(component);
        if (w > 0) {
            skip(static_cast<std::uint64_t>(size) * static_cast<std::uint64_t>(w));
        } else if (component == 'L' || component == '[') {
            for (std::uint32_t i = 0; i < size; ++i) parse_content(require_u8("array element"));
        } else {
            fail(StreamError::Kind::UnsupportedTag, "bad array component type", tag_at);
        }
    }

    void parse_enum(std::size_t tag_at) {
        auto desc = parse_class_desc();
        if (!desc) fail(StreamError::Kind::UnsupportedTag, "enum with null class descriptor", tag_at);
        new_handle(nullptr);
        std::size_t at = pos_;
        parse_string_object(require_u8("enum constant name"), at, /*instance=*/true);
        (void)tag_at;
    }
};

}  // namespace

struct StreamSession::Impl {
    std::vector<std::uint8_t> buffer;
    std::size_t emitted = 0;
    bool complete = false;
    bool finished = false;
    std::optional<StreamError> error;
    std::vector<ClassEvent> all_events;

    std::vector<ClassEvent> feed(std::span<const std::uint8_t> chunk) {
        if (error || finished) return {};
        if (complete) {
            if (!chunk.empty()) {
                error = StreamError{StreamError::Kind::TrailingData,
                                    "data after top-level object graph", buffer.size()};
            }
            return {};
        }
        buffer.insert(buffer.end(), chunk.begin(), chunk.end());
        return reparse();
    }

    std::vector<ClassEvent> reparse() {
        StreamParser parser(buffer);
        Outcome outcome = parser.run();
        all_events = parser.events;
        std::vector<ClassEvent> fresh(all_events.begin() + static_cast<std::ptrdiff_t>(emitted),
                                      all_events.end());
        emitted = all_events.size();
        switch (outcome) {
            case Outcome::Complete:
                complete = true;
                break;
            case Outcome::Failed:
                error = parser.error_;
                break;
            case Outcome::NeedMore:
            case Outcome::NeedMoreAtBoundary:
                break;
        }
        return fresh;
    }

    ParseResult finish() {
        finished = true;
        if (!error && !complete) {
            if (buffer.empty()) {
                error = StreamError{StreamError::Kind::BadMagic, "empty input", 0};
            } else {
                // Re-run to distinguish a clean empty body from a cut element.
                StreamParser parser(buffer);
                Outcome outcome = parser.run();
                if (outcome == Outcome::NeedMoreAtBoundary)
                    complete = true;
                else if (outcome == Outcome::Failed)
                    error = parser.error_;
                else if (outcome == Outcome::Complete)
                    complete = true;
                else
                    error = StreamError{StreamError::Kind::Truncated, "stream ends mid-element",
                                        buffer.size()};
            }
        }
        ParseResult r;
        r.trace.events = all_events;
        r.trace.label = TraceLabel::unlabeled;
        r.error = error;
        r.complete = complete && !error;
        return r;
    }
};

StreamSession::StreamSession() : impl_(std::make_unique<Impl>()) {}
StreamSession::~StreamSession() = default;
StreamSession::StreamSession(StreamSession&&) noexcept = default;
StreamSession& StreamSession::operator=(StreamSession&&) noexcept = default;

std::vector<ClassEvent> StreamSession::feed(std::span<const std::uint8_t> chunk) {
    return impl_->feed(chunk);
}

bool StreamSession::complete() const { return impl_->complete; }
const std::optional<StreamError>& StreamSession::error() const { return impl_->error; }
ParseResult StreamSession::finish() { return impl_->finish(); }

ParseResult parse_stream(std::span<const std::uint8_t> bytes) {
    StreamSession session;
    session.feed(bytes);
    return session.finish();
}

}  // namespace serfilter
