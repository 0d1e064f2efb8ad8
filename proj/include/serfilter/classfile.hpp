#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "serfilter/feature.hpp"

namespace serfilter {

struct ClassFileError : std::runtime_error {
    enum class Kind { BadClassMagic, MalformedConstantPool, Truncated };
    Kind kind;
    ClassFileError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct MethodRef {
    std::string owner;  // dotted
    std::string name;
    std::string descriptor;
};

struct MethodInfo {
    std::string name;
    std::string descriptor;
    std::uint16_t access_flags = 0;
};

/// The slice of a class file needed for feature extraction: names, direct
/// interfaces, field/method tables, and the constant-pool method references.
/// Method bodies are never decoded.
struct ClassInfo {
    std::string name;                       // dotted
    std::optional<std::string> super_name;  // absent for java.lang.Object
    std::vector<std::string> interfaces;    // direct, dotted
    std::vector<std::pair<std::string, std::string>> fields;  // (name, descriptor)
    std::vector<MethodInfo> methods;
    std::vector<MethodRef> method_refs;
};

ClassInfo parse_class(std::span<const std::uint8_t> bytes);

/// Read-only view of a ZIP archive (.zip/.jar); stored and deflate entries.
class ZipArchive {
public:
    explicit ZipArchive(const std::filesystem::path& path);

    bool contains(const std::string& entry_name) const;
    std::optional<std::vector<std::uint8_t>> read(const std::string& entry_name) const;
    std::vector<std::string> entry_names() const;

private:
    struct Entry {
        std::uint16_t method;
        std::uint32_t compressed_size;
        std::uint32_t uncompressed_size;
        std::uint32_t local_header_offset;
    };
    std::filesystem::path path_;
    std::map<std::string, Entry> entries_;
};

/// Resolves dotted class names against an ordered list of roots (directories
/// or ZIP archives); first match wins. Parsed classes are cached; the cache
/// supports concurrent readers.
class ClassResolver {
public:
    explicit ClassResolver(std::vector<std::filesystem::path> roots);

    // nullptr when the name is not found on any root.
    const ClassInfo* resolve(const std::string& dotted_name) const;

private:
    struct Root {
        std::filesystem::path dir;              // when directory root
        std::unique_ptr<ZipArchive> archive;    // when archive root
    };
    std::vector<Root> roots_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, std::unique_ptr<ClassInfo>> cache_;
};

/// Computes the 8 Table-style features for one class. Interface checks
/// (implements-Map / implements-Comparator) walk the transitive closure of
/// interfaces and superclasses through the resolver; ancestors that cannot
/// be resolved are treated as non-matching and reported in `warnings`.
FeatureVector extract_features(const ClassInfo& info, const ClassResolver& resolver,
                               std::vector<std::string>* warnings = nullptr);

/// Batch extraction. Unresolvable names map to the all-false vector with a
/// warning; the runtime filter must have a vector for every class.
std::map<std::string, FeatureVector> scan_corpus(const ClassResolver& resolver,
                                                 const std::vector<std::string>& class_names,
                                                 std::vector<std::string>* warnings = nullptr);

}  // namespace serfilter
