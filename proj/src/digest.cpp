#include "lgdist/digest.hpp"

#include "lgdist/dataset.hpp"
#include "lgdist/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <vector>

namespace lgdist {

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
    std::string out;
    out.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& file) { return sha256_hex(read_text(file)); }

std::string sha256_directory(const std::filesystem::path& dir, const std::vector<std::string>& exclude) {
    require(std::filesystem::is_directory(dir), ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            const std::string rel = std::filesystem::relative(entry.path(), dir).generic_string();
            if (std::find(exclude.begin(), exclude.end(), rel) == exclude.end()) {
                files.push_back(rel);
            }
        }
    }
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) {
        listing += f + '\0' + sha256_file(dir / f) + '\n';
    }
    return sha256_hex(listing);
}

} // namespace lgdist
