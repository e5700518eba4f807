#include "lepcnn/keystore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <set>
#include <string>
#include <system_error>

#include "lepcnn/detail/fileio.hpp"
#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/digest.hpp"
#include "lepcnn/errors.hpp"

namespace fs = std::filesystem;

namespace lepcnn {
namespace {

constexpr const char* kKeySuffix = ".lepk";

std::string id_hex(uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
  return buf;
}

bool parse_id(std::string_view text, uint64_t& id) {
  if (text.size() != 16) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id, 16);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<uint64_t> list_ids(const fs::path& dir) {
  std::vector<uint64_t> ids;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    const fs::path& p = e.path();
    uint64_t id = 0;
    if (p.extension() == kKeySuffix && parse_id(p.stem().string(), id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

class FileLock {
 public:
  explicit FileLock(const fs::path& path)
      : fd_(::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600)) {
    if (fd_ < 0) throw_errno("open " + path.string());
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw_errno("flock " + path.string());
      }
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() { ::close(fd_); }

 private:
  int fd_;
};

void append_line_durable(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd < 0) throw_errno("open " + path.string());
  // One write call so concurrent appenders never interleave within a line.
  const ssize_t n = ::write(fd, line.data(), line.size());
  const int saved = errno;
  const bool ok = n == static_cast<ssize_t>(line.size()) && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) {
    errno = n < 0 ? saved : EIO;
    throw_errno("append " + path.string());
  }
}

}  // namespace

KeyStore::KeyStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_ / "available");
  fs::create_directories(dir_ / "claimed");
}

KeySet KeyStore::claim() {
  const fs::path available_dir = dir_ / "available";
  const fs::path claimed_dir = dir_ / "claimed";
  for (;;) {
    const std::vector<uint64_t> ids = list_ids(available_dir);
    if (ids.empty()) throw KeyExhausted("key store " + dir_.string() + " is empty");
    for (uint64_t id : ids) {
      const std::string name = id_hex(id) + kKeySuffix;
      const fs::path from = available_dir / name;
      const fs::path to = claimed_dir / name;
      if (::rename(from.c_str(), to.c_str()) != 0) {
        if (errno == ENOENT) continue;  // another claimer won this one
        throw_errno("rename " + from.string());
      }
      detail::fsync_directory(available_dir);
      detail::fsync_directory(claimed_dir);
      append_line_durable(dir_ / "consumed.log", id_hex(id) + "\n");

      const std::vector<uint8_t> bytes = detail::read_file(to);
      size_t used = 0;
      KeySet keys = parse_keyset(bytes, &used);
      if (used != bytes.size()) throw IntegrityError("trailing bytes in key file " + name);
      if (keys.request_id != id) {
        throw IntegrityError("key file " + name + " holds request id " + id_hex(keys.request_id));
      }
      fs::remove(to);
      return keys;
    }
  }
}

size_t KeyStore::available() const { return list_ids(dir_ / "available").size(); }

std::vector<uint64_t> KeyStore::available_ids() const { return list_ids(dir_ / "available"); }

std::vector<uint64_t> KeyStore::consumed_ids() const {
  const fs::path log = dir_ / "consumed.log";
  std::vector<uint64_t> ids;
  if (!fs::exists(log)) return ids;
  const std::vector<uint8_t> bytes = detail::read_file(log);
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  while (!text.empty()) {
    const size_t nl = text.find('\n');
    // A torn final line (crash mid-append) is ignored.
    if (nl == std::string_view::npos) break;
    uint64_t id = 0;
    if (parse_id(text.substr(0, nl), id)) ids.push_back(id);
    text.remove_prefix(nl + 1);
  }
  return ids;
}

size_t KeyStore::replenish(std::span<const uint8_t> batch) {
  const std::vector<KeySet> keysets = parse_batch(batch);
  FileLock lock(dir_ / "lock");

  std::set<uint64_t> taken;
  for (uint64_t id : list_ids(dir_ / "available")) taken.insert(id);
  for (uint64_t id : list_ids(dir_ / "claimed")) taken.insert(id);
  for (uint64_t id : consumed_ids()) taken.insert(id);
  for (const KeySet& k : keysets) {
    if (!taken.insert(k.request_id).second) {
      throw DuplicateKeyError("request id " + id_hex(k.request_id) + " already known");
    }
  }
  for (const KeySet& k : keysets) {
    detail::write_file_durable(dir_ / "available" / (id_hex(k.request_id) + kKeySuffix),
                               serialize_keyset(k));
  }
  return keysets.size();
}

size_t KeyStore::replenish(const fs::path& batch_file) {
  return replenish(detail::read_file(batch_file));
}

std::vector<uint8_t> make_batch(std::span<const KeySet> keysets) {
  std::vector<uint8_t> out;
  for (const KeySet& k : keysets) {
    const std::vector<uint8_t> one = serialize_keyset(k);
    out.insert(out.end(), one.begin(), one.end());
  }
  const Digest d = sha256(out);
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

std::vector<KeySet> parse_batch(std::span<const uint8_t> batch) {
  if (batch.size() < 32) throw IntegrityError("batch shorter than its checksum");
  const auto body = batch.first(batch.size() - 32);
  const Digest d = sha256(body);
  if (!std::equal(d.begin(), d.end(), batch.end() - 32)) {
    throw IntegrityError("batch checksum mismatch");
  }
  std::vector<KeySet> out;
  size_t off = 0;
  while (off < body.size()) {
    size_t used = 0;
    out.push_back(parse_keyset(body.subspan(off), &used));
    off += used;
  }
  return out;
}

uint64_t key_elements_per_request(const NetworkSpec& net) {
  uint64_t total = 0;
  for (const LayerSpec& layer : net.layers) {
    std::visit(detail::Overloaded{
                   [&](const ConvLayerSpec& c) {
                     total += c.input_shape().size() + c.output_shape().size();
                   },
                   [&](const FcLayerSpec& f) {
                     total += uint64_t{f.input_length} + f.neuron_count;
                   },
                   [](const auto&) {}},
               layer);
  }
  return total;
}

uint64_t capacity_report(const NetworkSpec& net, uint64_t budget_bytes) {
  const uint64_t per_request = key_elements_per_request(net) * kAccountingBytesPerElement;
  return per_request == 0 ? 0 : budget_bytes / per_request;
}

}  // namespace lepcnn
