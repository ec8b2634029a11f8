#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace e2p {

// Incremental SHA-256. Used as the freeze digest for model parameters and
// for input/config fingerprints embedded in reports.
class Sha256 {
  public:
    Sha256();

    void update(const void* data, std::size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    void update_u64(std::uint64_t v);
    void update_doubles(const double* data, std::size_t n);

    std::array<std::uint8_t, 32> finish();

  private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::array<std::uint8_t, 64> buffer_;
    std::size_t buffered_ = 0;
    std::uint64_t total_bytes_ = 0;
};

std::string to_hex(const std::array<std::uint8_t, 32>& digest);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

} // namespace e2p
