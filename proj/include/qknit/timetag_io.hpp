#pragma once

// Binary time-tag files.
//
//   header  16 bytes: "QKNIT1", u16 version, u64 pulse_period_ps
//   record  10 bytes: u64 time_ps, u8 detector, u8 flags
//
// All integers little-endian.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "qknit/errors.hpp"
#include "qknit/event_sim.hpp"

namespace qknit {

inline constexpr std::array<char, 6> kTagMagic{'Q', 'K', 'N', 'I', 'T', '1'};
inline constexpr std::uint16_t kTagVersion = 1;
inline constexpr std::size_t kTagHeaderSize = 16;
inline constexpr std::size_t kTagRecordSize = 10;

namespace le {

template <class T>
void put(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(buf.data(), buf.size());
}

template <class T>
T get(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

// Reads exactly n bytes or reports how many arrived.
inline std::size_t read_some(std::istream& is, unsigned char* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount());
}

}  // namespace le

struct TagFileHeader {
  std::uint16_t version = kTagVersion;
  std::uint64_t pulse_period_ps = 0;
};

class TagWriter {
 public:
  TagWriter(std::ostream& os, std::uint64_t pulse_period_ps) : os_(os) {
    os_.write(kTagMagic.data(), kTagMagic.size());
    le::put<std::uint16_t>(os_, kTagVersion);
    le::put<std::uint64_t>(os_, pulse_period_ps);
    check();
  }

  void write(const DetectionEvent& e) {
    le::put<std::uint64_t>(os_, e.time_ps);
    le::put<std::uint8_t>(os_, e.detector);
    le::put<std::uint8_t>(os_, e.flags);
    ++count_;
  }

  void operator()(const DetectionEvent& e) { write(e); }

  std::uint64_t count() const { return count_; }

  void finish() {
    os_.flush();
    check();
  }

 private:
  void check() {
    if (!os_) fail(errc::io, "failed writing time-tag stream");
  }

  std::ostream& os_;
  std::uint64_t count_ = 0;
};

class TagReader {
 public:
  explicit TagReader(std::istream& is) : is_(is) {
    std::array<unsigned char, kTagHeaderSize> h{};
    if (le::read_some(is_, h.data(), h.size()) != h.size()) fail(errc::truncated_file, "time-tag header is truncated");
    if (std::memcmp(h.data(), kTagMagic.data(), kTagMagic.size()) != 0)
      fail(errc::schema, "not a time-tag file (bad magic)");
    header_.version = le::get<std::uint16_t>(h.data() + 6);
    header_.pulse_period_ps = le::get<std::uint64_t>(h.data() + 8);
    if (header_.version != kTagVersion)
      fail(errc::version_mismatch, "time-tag file version " + std::to_string(header_.version) + ", expected " +
                                       std::to_string(kTagVersion));
    if (header_.pulse_period_ps == 0) fail(errc::schema, "time-tag header has zero pulse period");
  }

  const TagFileHeader& header() const { return header_; }

  // False at a clean end of file; throws on a partial record.
  bool next(DetectionEvent& e) {
    std::array<unsigned char, kTagRecordSize> r{};
    const std::size_t got = le::read_some(is_, r.data(), r.size());
    if (got == 0) return false;
    if (got != r.size()) fail(errc::truncated_file, "time-tag file ends inside a record");
    e.time_ps = le::get<std::uint64_t>(r.data());
    e.detector = r[8];
    e.flags = r[9];
    if (e.detector >= kDetectors) fail(errc::schema, "detector id out of range: " + std::to_string(e.detector));
    return true;
  }

  std::vector<DetectionEvent> read_all() {
    std::vector<DetectionEvent> out;
    DetectionEvent e;
    while (next(e)) out.push_back(e);
    return out;
  }

 private:
  std::istream& is_;
  TagFileHeader header_;
};

inline void write_tag_file(const std::string& path, std::uint64_t period_ps, const std::vector<DetectionEvent>& events) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(errc::io, "cannot open " + path + " for writing");
  TagWriter w(os, period_ps);
  for (const auto& e : events) w.write(e);
  w.finish();
}

inline std::pair<TagFileHeader, std::vector<DetectionEvent>> read_tag_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(errc::io, "cannot open " + path);
  TagReader r(is);
  auto events = r.read_all();
  return {r.header(), std::move(events)};
}

inline void write_tags_csv(std::ostream& os, const std::vector<DetectionEvent>& events) {
  os << "time_ps,detector,channel,port,flags\n";
  for (const auto& e : events)
    os << e.time_ps << ',' << int(e.detector) << ',' << e.channel() << ','
       << (e.port() == Port::transmit ? "transmit" : "reflect") << ',' << int(e.flags) << '\n';
}

}  // namespace qknit
