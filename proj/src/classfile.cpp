#include "serfilter/classfile.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include <zlib.h>

namespace serfilter {

namespace {

using Kind = ClassFileError::Kind;

std::string dotted(std::string slashed) {
    std::replace(slashed.begin(), slashed.end(), '/', '.');
    return slashed;
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> buf) : buf_(buf) {}

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] << 8 | buf_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | buf_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void skip(std::uint64_t n) {
        if (buf_.size() - pos_ < n) throw ClassFileError(Kind::Truncated, "class file ends early");
        pos_ += static_cast<std::size_t>(n);
    }

private:
    void need(std::size_t n) {
        if (buf_.size() - pos_ < n) throw ClassFileError(Kind::Truncated, "class file ends early");
    }
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

struct PoolEntry {
    std::uint8_t tag = 0;
    std::string utf8;                  // tag 1
    std::uint16_t ref1 = 0, ref2 = 0;  // index operands
};

std::string pool_utf8(const std::vector<PoolEntry>& pool, std::uint16_t idx) {
    if (idx == 0 || idx >= pool.size() || pool[idx].tag != 1)
        throw ClassFileError(Kind::MalformedConstantPool, "bad Utf8 index");
    return pool[idx].utf8;
}

std::string pool_class_name(const std::vector<PoolEntry>& pool, std::uint16_t idx) {
    if (idx == 0 || idx >= pool.size() || pool[idx].tag != 7)
        throw ClassFileError(Kind::MalformedConstantPool, "bad Class index");
    return dotted(pool_utf8(pool, pool[idx].ref1));
}

}  // namespace

ClassInfo parse_class(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    std::uint32_t magic;
    try {
        magic = r.u32();
    } catch (const ClassFileError&) {
        throw ClassFileError(Kind::BadClassMagic, "input shorter than class-file magic");
    }
    if (magic != 0xCAFEBABEu) throw ClassFileError(Kind::BadClassMagic, "missing 0xCAFEBABE magic");
    r.u16();  // minor
    r.u16();  // major; any documented version accepted

    std::uint16_t pool_count = r.u16();
    if (pool_count == 0) throw ClassFileError(Kind::MalformedConstantPool, "constant pool count 0");
    std::vector<PoolEntry> pool(pool_count);
    for (std::uint16_t i = 1; i < pool_count; ++i) {
        PoolEntry& e = pool[i];
        e.tag = r.u8();
        switch (e.tag) {
            case 1: {  // Utf8
                std::uint16_t len = r.u16();
                e.utf8 = r.bytes(len);
                break;
            }
            case 7:   // Class
            case 8:   // String
            case 16:  // MethodType
            case 19:  // Module
            case 20:  // Package
                e.ref1 = r.u16();
                break;
            case 9:   // Fieldref
            case 10:  // Methodref
            case 11:  // InterfaceMethodref
            case 12:  // NameAndType
            case 17:  // Dynamic
            case 18:  // InvokeDynamic
                e.ref1 = r.u16();
                e.ref2 = r.u16();
                break;
            case 3:  // Integer
            case 4:  // Float
                r.skip(4);
                break;
            case 5:  // Long
            case 6:  // Double
                r.skip(8);
                ++i;  // occupies two pool slots
                break;
            case 15:  // MethodHandle
                r.skip(3);
                break;
            default:
                throw ClassFileError(Kind::MalformedConstantPool, "unknown constant pool tag");
        }
    }

    ClassInfo info;
    r.u16();  // access flags
    std::uint16_t this_class = r.u16();
    std::uint16_t super_class = r.u16();
    info.name = pool_class_name(pool, this_class);
    if (super_class != 0) info.super_name = pool_class_name(pool, super_class);

    std::uint16_t iface_count = r.u16();
    for (std::uint16_t i = 0; i < iface_count; ++i) info.interfaces.push_back(pool_class_name(pool, r.u16()));

    auto skip_attributes = [&] {
        std::uint16_t n = r.u16();
        for (std::uint16_t i = 0; i < n; ++i) {
            r.u16();  // attribute name
            r.skip(r.u32());
        }
    };

    std::uint16_t field_count = r.u16();
    for (std::uint16_t i = 0; i < field_count; ++i) {
        r.u16();  // access
        std::string name = pool_utf8(pool, r.u16());
        std::string desc = pool_utf8(pool, r.u16());
        skip_attributes();
        info.fields.emplace_back(std::move(name), std::move(desc));
    }

    std::uint16_t method_count = r.u16();
    for (std::uint16_t i = 0; i < method_count; ++i) {
        MethodInfo m;
        m.access_flags = r.u16();
        m.name = pool_utf8(pool, r.u16());
        m.descriptor = pool_utf8(pool, r.u16());
        skip_attributes();
        info.methods.push_back(std::move(m));
    }

    for (std::uint16_t i = 1; i < pool_count; ++i) {
        if (pool[i].tag != 10 && pool[i].tag != 11) continue;
        const PoolEntry& nat = pool.at(pool[i].ref2);
        if (nat.tag != 12) throw ClassFileError(Kind::MalformedConstantPool, "methodref without NameAndType");
        MethodRef ref;
        ref.owner = pool_class_name(pool, pool[i].ref1);
        ref.name = pool_utf8(pool, nat.ref1);
        ref.descriptor = pool_utf8(pool, nat.ref2);
        info.method_refs.push_back(std::move(ref));
    }
    return info;
}

// ---------------------------------------------------------------------------
// ZIP reading

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }
std::uint32_t le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t out_size) {
    std::vector<std::uint8_t> out(out_size);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK) throw std::runtime_error("inflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("zip entry: inflate failed");
    return out;
}

}  // namespace

ZipArchive::ZipArchive(const std::filesystem::path& path) : path_(path) {
    auto data = read_file(path);
    // End-of-central-directory record: scan backwards for PK\x05\x06.
    if (data.size() < 22) throw std::runtime_error("zip too small: " + path.string());
    std::size_t eocd = std::string::npos;
    std::size_t scan_start = data.size() >= 22 + 65535 ? data.size() - 22 - 65535 : 0;
    for (std::size_t i = data.size() - 22 + 1; i-- > scan_start;) {
        if (data[i] == 0x50 && data[i + 1] == 0x4B && data[i + 2] == 0x05 && data[i + 3] == 0x06) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos) throw std::runtime_error("zip: no end-of-central-directory: " + path.string());
    std::uint16_t n_entries = le16(&data[eocd + 10]);
    std::uint32_t cd_offset = le32(&data[eocd + 16]);

    std::size_t pos = cd_offset;
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        if (pos + 46 > data.size() || le32(&data[pos]) != 0x02014b50)
            throw std::runtime_error("zip: bad central directory entry: " + path.string());
        Entry e;
        e.method = le16(&data[pos + 10]);
        e.compressed_size = le32(&data[pos + 20]);
        e.uncompressed_size = le32(&data[pos + 24]);
        std::uint16_t name_len = le16(&data[pos + 28]);
        std::uint16_t extra_len = le16(&data[pos + 30]);
        std::uint16_t comment_len = le16(&data[pos + 32]);
        e.local_header_offset = le32(&data[pos + 42]);
        if (pos + 46 + name_len > data.size())
            throw std::runtime_error("zip: truncated entry name: " + path.string());
        std::string name(reinterpret_cast<const char*>(&data[pos + 46]), name_len);
        entries_.emplace(std::move(name), e);
        pos += 46u + name_len + extra_len + comment_len;
    }
}

bool ZipArchive::contains(const std::string& entry_name) const {
    return entries_.count(entry_name) != 0;
}

std::vector<std::string> ZipArchive::entry_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& [name, _] : entries_) names.push_back(name);
    return names;
}

std::optional<std::vector<std::uint8_t>> ZipArchive::read(const std::string& entry_name) const {
    auto it = entries_.find(entry_name);
    if (it == entries_.end()) return std::nullopt;
    const Entry& e = it->second;
    auto data = read_file(path_);
    std::size_t pos = e.local_header_offset;
    if (pos + 30 > data.size() || le32(&data[pos]) != 0x04034b50)
        throw std::runtime_error("zip: bad local header: " + path_.string());
    std::uint16_t name_len = le16(&data[pos + 26]);
    std::uint16_t extra_len = le16(&data[pos + 28]);
    std::size_t start = pos + 30 + name_len + extra_len;
    if (start + e.compressed_size > data.size())
        throw std::runtime_error("zip: truncated entry data: " + path_.string());
    std::span<const std::uint8_t> raw(&data[start], e.compressed_size);
    if (e.method == 0) return std::vector<std::uint8_t>(raw.begin(), raw.end());
    if (e.method == 8) return inflate_raw(raw, e.uncompressed_size);
    throw std::runtime_error("zip: unsupported compression method");
}

// ---------------------------------------------------------------------------
// Resolution and feature extraction

ClassResolver::ClassResolver(std::vector<std::filesystem::path> roots) {
    for (auto& p : roots) {
        Root r;
        if (std::filesystem::is_directory(p))
            r.dir = std::move(p);
        else
            r.archive = std::make_unique<ZipArchive>(p);
        roots_.push_back(std::move(r));
    }
}

const ClassInfo* ClassResolver::resolve(const std::string& dotted_name) const {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(dotted_name);
        if (it != cache_.end()) return it->second.get();
    }
    std::string rel = dotted_name;
    std::replace(rel.begin(), rel.end(), '.', '/');
    rel += ".class";

    std::optional<std::vector<std::uint8_t>> bytes;
    for (const Root& root : roots_) {
        if (root.archive) {
            bytes = root.archive->read(rel);
            if (bytes) break;
        } else {
            std::filesystem::path p = root.dir / rel;
            if (std::filesystem::is_regular_file(p)) {
                bytes = read_file(p);
                break;
            }
        }
    }

    std::unique_ptr<ClassInfo> parsed;
    if (bytes) {
        try {
            parsed = std::make_unique<ClassInfo>(parse_class(*bytes));
        } catch (const ClassFileError&) {
            parsed.reset();  // unreadable class counts as unresolvable
        }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, _] = cache_.emplace(dotted_name, std::move(parsed));
    return it->second.get();
}

namespace {

bool implements_transitively(const ClassInfo& info, const std::string& target,
                             const ClassResolver& resolver, std::vector<std::string>* warnings) {
    std::set<std::string> visited;
    std::vector<std::string> work;
    auto push = [&](const std::string& name) {
        if (visited.insert(name).second) work.push_back(name);
    };
    for (const auto& i : info.interfaces) push(i);
    if (info.super_name) push(*info.super_name);

    while (!work.empty()) {
        std::string name = std::move(work.back());
        work.pop_back();
        if (name == target) return true;
        if (name == "java.lang.Object") continue;
        const ClassInfo* next = resolver.resolve(name);
        if (!next) {
            if (warnings) warnings->push_back("unresolvable ancestor: " + name + " (from " + info.name + ")");
            continue;
        }
        for (const auto& i : next->interfaces) push(i);
        if (next->super_name) push(*next->super_name);
    }
    return false;
}

}  // namespace

FeatureVector extract_features(const ClassInfo& info, const ClassResolver& resolver,
                               std::vector<std::string>* warnings) {
    FeatureVector v;
    for (const MethodRef& r : info.method_refs) {
        // F1 uses-reflection
        if ((r.owner == "java.lang.reflect.Constructor" && r.name == "newInstance") ||
            (r.owner == "java.lang.reflect.Field" && r.name == "set") ||
            (r.owner == "java.lang.reflect.Method" && r.name == "invoke"))
            v.bits[0] = true;
        // F7 calls-hashCode
        if ((r.owner == "java.util.Objects" && (r.name == "hash" || r.name == "hashCode")) ||
            (r.name == "hashCode" && r.descriptor == "()I"))
            v.bits[6] = true;
        // F8 calls-compare
        if (r.name == "compare" || r.name == "compareTo") v.bits[7] = true;
    }
    for (const MethodInfo& m : info.methods) {
        if (m.name == "readObject" && m.descriptor == "(Ljava/io/ObjectInputStream;)V") v.bits[1] = true;
        if (m.name == "hashCode" && m.descriptor == "()I") v.bits[2] = true;
    }
    for (const auto& [name, desc] : info.fields) {
        if (desc == "Ljava/lang/Object;" || desc == "Ljava/lang/Comparable;" ||
            desc == "Ljava/util/Comparator;")
            v.bits[3] = true;
    }
    v.bits[4] = implements_transitively(info, "java.util.Map", resolver, warnings);
    v.bits[5] = implements_transitively(info, "java.util.Comparator", resolver, warnings);
    return v;
}

std::map<std::string, FeatureVector> scan_corpus(const ClassResolver& resolver,
                                                 const std::vector<std::string>& class_names,
                                                 std::vector<std::string>* warnings) {
    std::map<std::string, FeatureVector> out;
    for (const std::string& name : class_names) {
        if (out.count(name)) continue;
        const ClassInfo* info = resolver.resolve(name);
        if (!info) {
            if (warnings) warnings->push_back("unresolvable class: " + name);
            out.emplace(name, FeatureVector::all_false());
            continue;
        }
        out.emplace(name, extract_features(*info, resolver, warnings));
    }
    return out;
}

}  // namespace serfilter
