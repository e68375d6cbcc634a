#pragma once

#include <arpa/inet.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/events.hpp"

namespace netwarden {

/// The capture file header could not be understood at all.
class MalformedCapture : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Filter policy
// ---------------------------------------------------------------------------

/// Background-noise removal: package-manager chatter, telemetry, and
/// proxy-internal loopback traffic that is unrelated to the tool execution.
struct FilterPolicy {
  std::vector<std::string> denied_qname_suffixes;  // lowercase, no leading dot
  std::vector<std::string> denied_hosts;
  std::vector<std::pair<std::string, int>> denied_port_pairs;
  bool drop_proxy_internal = false;

  static FilterPolicy from_json(const nlohmann::json& j) {
    FilterPolicy p;
    for (const auto& s : j.value("denied_qname_suffixes", std::vector<std::string>{})) {
      std::string low = s;
      for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      p.denied_qname_suffixes.push_back(std::move(low));
    }
    p.denied_hosts = j.value("denied_hosts", std::vector<std::string>{});
    if (j.contains("denied_port_pairs")) {
      for (const auto& e : j.at("denied_port_pairs")) {
        p.denied_port_pairs.emplace_back(e.at("host").get<std::string>(), e.at("port").get<int>());
      }
    }
    p.drop_proxy_internal = j.value("drop_proxy_internal", false);
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["denied_qname_suffixes"] = denied_qname_suffixes;
    j["denied_hosts"] = denied_hosts;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [h, p] : denied_port_pairs) pairs.push_back({{"host", h}, {"port", p}});
    j["denied_port_pairs"] = pairs;
    j["drop_proxy_internal"] = drop_proxy_internal;
    return j;
  }

  static FilterPolicy load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open filter policy file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  /// Shipped default: common package-registry and OS-telemetry suffixes.
  static FilterPolicy default_policy() {
    FilterPolicy p;
    p.denied_qname_suffixes = {
        "npmjs.org",        "registry.yarnpkg.com", "pypi.org",
        "pythonhosted.org", "crates.io",            "deb.debian.org",
        "archive.ubuntu.com", "security.ubuntu.com", "packages.microsoft.com",
        "telemetry.microsoft.com", "events.data.microsoft.com",
    };
    p.drop_proxy_internal = true;
    return p;
  }
};

// ---------------------------------------------------------------------------
// Decoded packet summary
// ---------------------------------------------------------------------------

/// Link/network/transport decode of one captured frame. map_packet turns this
/// into a NetworkEvent; the mapping is total, so a summary that failed to
/// decode still yields an OTHER event.
struct PacketSummary {
  double timestamp = 0.0;
  std::size_t pkt_len = 0;  // original wire length

  enum class Net { IPv4, IPv6, Arp, Other };
  Net net = Net::Other;
  std::string src;
  std::string dst;
  bool non_first_fragment = false;

  int arp_op = 0;
  std::string arp_sender_ip;
  std::string arp_sender_mac;
  std::string arp_target_ip;

  enum class Proto { TCP, UDP, ICMP, ICMPv6, None };
  Proto proto = Proto::None;
  int sport = 0;
  int dport = 0;
  std::uint8_t tcp_flags = 0;
  int icmp_type = -1;
  std::size_t l4_payload_len = 0;
  std::string payload;  // first bytes of the transport payload, capped

  bool truncated = false;  // header-level decode failure
};

namespace detail {

inline constexpr std::size_t kPayloadCap = 2048;

inline std::uint16_t rd16be(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
inline std::uint32_t rd32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline std::string ipv4_text(const std::uint8_t* p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", p[0], p[1], p[2], p[3]);
  return std::string(buf);
}

inline std::string ipv6_text(const std::uint8_t* p) {
  char buf[INET6_ADDRSTRLEN];
  if (inet_ntop(AF_INET6, p, buf, sizeof(buf)) == nullptr) return "::";
  return std::string(buf);
}

inline std::string mac_text(const std::uint8_t* p) {
  char buf[18];
  std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", p[0], p[1], p[2], p[3], p[4],
                p[5]);
  return std::string(buf);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// --------------------------- DNS ------------------------------------------

struct DnsInfo {
  bool ok = false;
  bool is_response = false;
  std::string qname;
  std::vector<std::string> answer_ips;
};

inline bool parse_dns_name(const std::uint8_t* msg, std::size_t n, std::size_t pos,
                           std::string& out, std::size_t& next) {
  out.clear();
  bool jumped = false;
  int hops = 0;
  next = pos;
  while (true) {
    if (pos >= n) return false;
    const std::uint8_t len = msg[pos];
    if (len == 0) {
      if (!jumped) next = pos + 1;
      return true;
    }
    if ((len & 0xC0) == 0xC0) {
      if (pos + 1 >= n) return false;
      if (!jumped) next = pos + 2;
      jumped = true;
      if (++hops > 20) return false;
      pos = static_cast<std::size_t>((len & 0x3F) << 8) | msg[pos + 1];
      continue;
    }
    if ((len & 0xC0) != 0) return false;
    if (pos + 1 + len > n) return false;
    if (!out.empty()) out.push_back('.');
    for (std::size_t i = 0; i < len; ++i) {
      out.push_back(static_cast<char>(std::tolower(msg[pos + 1 + i])));
    }
    if (out.size() > 255) return false;
    pos += 1 + len;
  }
}

inline DnsInfo parse_dns(const std::uint8_t* p, std::size_t n) {
  DnsInfo info;
  if (n < 12) return info;
  const std::uint16_t flags = rd16be(p + 2);
  const std::uint16_t qdcount = rd16be(p + 4);
  const std::uint16_t ancount = rd16be(p + 6);
  info.is_response = (flags & 0x8000) != 0;
  const std::uint8_t opcode = (flags >> 11) & 0x0F;
  if (opcode != 0) return info;  // only standard queries
  if (qdcount == 0 || qdcount > 8) return info;

  std::size_t pos = 12;
  for (std::uint16_t q = 0; q < qdcount; ++q) {
    std::string name;
    std::size_t next = 0;
    if (!parse_dns_name(p, n, pos, name, next)) return info;
    if (next + 4 > n) return info;
    if (q == 0) info.qname = name;
    pos = next + 4;  // qtype + qclass
  }
  info.ok = true;

  if (info.is_response) {
    for (std::uint16_t a = 0; a < ancount && info.answer_ips.size() < 3; ++a) {
      std::string name;
      std::size_t next = 0;
      if (!parse_dns_name(p, n, pos, name, next)) break;
      if (next + 10 > n) break;
      const std::uint16_t rtype = rd16be(p + next);
      const std::uint16_t rdlen = rd16be(p + next + 8);
      const std::size_t rdata = next + 10;
      if (rdata + rdlen > n) break;
      if (rtype == 1 && rdlen == 4) {
        info.answer_ips.push_back(ipv4_text(p + rdata));
      } else if (rtype == 28 && rdlen == 16) {
        info.answer_ips.push_back(ipv6_text(p + rdata));
      }
      pos = rdata + rdlen;
    }
  }
  return info;
}

// --------------------------- TLS ClientHello ------------------------------

struct TlsInfo {
  bool is_client_hello = false;
  std::optional<std::string> sni;
};

inline TlsInfo parse_tls(const std::uint8_t* p, std::size_t n) {
  TlsInfo info;
  if (n < 6) return info;
  if (p[0] != 0x16 || p[1] != 0x03 || p[2] > 0x04) return info;
  if (p[5] != 0x01) return info;  // handshake type: ClientHello
  info.is_client_hello = true;

  // SNI is best effort; a truncated hello is still a TLS_CH event.
  std::size_t limit = std::min<std::size_t>(n, 5 + rd16be(p + 3));
  std::size_t pos = 5 + 4;      // record header + handshake header byte 0
  pos += 2 + 32;                // client version + random
  if (pos >= limit) return info;
  pos += 1 + p[pos];            // session id
  if (pos + 2 > limit) return info;
  pos += 2 + rd16be(p + pos);   // cipher suites
  if (pos + 1 > limit) return info;
  pos += 1 + p[pos];            // compression methods
  if (pos + 2 > limit) return info;
  std::size_t ext_end = pos + 2 + rd16be(p + pos);
  pos += 2;
  ext_end = std::min(ext_end, limit);
  while (pos + 4 <= ext_end) {
    const std::uint16_t ext_type = rd16be(p + pos);
    const std::uint16_t ext_len = rd16be(p + pos + 2);
    pos += 4;
    if (pos + ext_len > ext_end) break;
    if (ext_type == 0 && ext_len >= 5) {
      // server_name list: one host_name entry is the practical case
      const std::uint8_t name_type = p[pos + 2];
      const std::uint16_t name_len = rd16be(p + pos + 3);
      if (name_type == 0 && 5 + static_cast<std::size_t>(name_len) <= ext_len) {
        info.sni = to_lower(std::string_view(reinterpret_cast<const char*>(p + pos + 5), name_len));
      }
    }
    pos += ext_len;
  }
  return info;
}

// --------------------------- plaintext HTTP -------------------------------

struct HttpInfo {
  enum class Kind { None, Request, Response };
  Kind kind = Kind::None;
  std::string method;
  std::string path;
  std::string host;
  int status = 0;
};

inline HttpInfo parse_http(std::string_view payload) {
  static constexpr std::string_view kMethods[] = {"GET",     "POST",  "PUT",   "DELETE", "HEAD",
                                                  "OPTIONS", "PATCH", "TRACE", "CONNECT"};
  HttpInfo info;
  const std::size_t line_end = std::min(payload.find("\r\n"), payload.size());
  std::string_view line = payload.substr(0, line_end);

  if (line.starts_with("HTTP/1.")) {
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos || sp + 4 > line.size()) return info;
    int status = 0;
    for (int i = 0; i < 3; ++i) {
      const char c = line[sp + 1 + i];
      if (c < '0' || c > '9') return info;
      status = status * 10 + (c - '0');
    }
    info.kind = HttpInfo::Kind::Response;
    info.status = status;
    return info;
  }

  for (std::string_view m : kMethods) {
    if (line.size() > m.size() && line.substr(0, m.size()) == m && line[m.size()] == ' ') {
      const std::size_t target_start = m.size() + 1;
      const std::size_t target_end = line.find(' ', target_start);
      if (target_end == std::string_view::npos) return info;
      if (line.substr(target_end + 1).substr(0, 7) != "HTTP/1.") return info;
      info.kind = HttpInfo::Kind::Request;
      info.method = std::string(m);
      std::string_view target = line.substr(target_start, target_end - target_start);
      // absolute-form targets (proxy style) carry the host inline
      if (target.starts_with("http://")) {
        target.remove_prefix(7);
        const std::size_t slash = target.find('/');
        info.host = to_lower(target.substr(0, std::min(slash, target.size())));
        target = slash == std::string_view::npos ? std::string_view("/") : target.substr(slash);
      }
      info.path = std::string(target);
      break;
    }
  }
  if (info.kind != HttpInfo::Kind::Request) return info;

  // Host header, bounded to the header block
  const std::size_t headers_end = std::min(payload.find("\r\n\r\n"), payload.size());
  std::size_t pos = line_end;
  while (pos < headers_end) {
    if (payload.substr(pos, 2) != "\r\n") break;
    pos += 2;
    const std::size_t eol = std::min(payload.find("\r\n", pos), headers_end);
    std::string_view header = payload.substr(pos, eol - pos);
    if (header.size() > 5) {
      std::string lower5 = to_lower(header.substr(0, 5));
      if (lower5 == "host:") {
        std::string_view v = header.substr(5);
        while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
        while (!v.empty() && (v.back() == ' ' || v.back() == '\r')) v.remove_suffix(1);
        info.host = to_lower(v);
        break;
      }
    }
    pos = eol;
  }
  return info;
}

inline std::string tcp_flags_text(std::uint8_t flags) {
  // bit order of the TCP flags byte: FIN SYN RST PSH ACK URG
  static constexpr struct {
    std::uint8_t bit;
    char c;
  } kBits[] = {{0x01, 'F'}, {0x02, 'S'}, {0x04, 'R'}, {0x08, 'P'}, {0x10, 'A'}, {0x20, 'U'}};
  std::string out;
  for (const auto& b : kBits) {
    if (flags & b.bit) out.push_back(b.c);
  }
  return out;
}

// --------------------------- frame decode ---------------------------------

inline void decode_ipv4(const std::uint8_t* p, std::size_t n, PacketSummary& s);
inline void decode_ipv6(const std::uint8_t* p, std::size_t n, PacketSummary& s);

inline void decode_transport(const std::uint8_t* p, std::size_t n, std::uint8_t proto,
                             PacketSummary& s) {
  switch (proto) {
    case 6: {  // TCP
      if (n < 20) {
        s.truncated = true;
        return;
      }
      s.proto = PacketSummary::Proto::TCP;
      s.sport = rd16be(p);
      s.dport = rd16be(p + 2);
      const std::size_t off = static_cast<std::size_t>(p[12] >> 4) * 4;
      s.tcp_flags = p[13];
      if (off < 20 || off > n) {
        s.truncated = true;
        return;
      }
      s.l4_payload_len = n - off;
      s.payload.assign(reinterpret_cast<const char*>(p + off), std::min(n - off, kPayloadCap));
      return;
    }
    case 17: {  // UDP
      if (n < 8) {
        s.truncated = true;
        return;
      }
      s.proto = PacketSummary::Proto::UDP;
      s.sport = rd16be(p);
      s.dport = rd16be(p + 2);
      const std::size_t udp_len = rd16be(p + 4);
      std::size_t data_len = n - 8;
      if (udp_len >= 8) data_len = std::min(data_len, udp_len - 8);
      s.l4_payload_len = data_len;
      s.payload.assign(reinterpret_cast<const char*>(p + 8), std::min(data_len, kPayloadCap));
      return;
    }
    case 1: {  // ICMP
      if (n < 4) {
        s.truncated = true;
        return;
      }
      s.proto = PacketSummary::Proto::ICMP;
      s.icmp_type = p[0];
      s.l4_payload_len = n >= 8 ? n - 8 : 0;
      return;
    }
    case 58: {  // ICMPv6
      if (n < 4) {
        s.truncated = true;
        return;
      }
      s.proto = PacketSummary::Proto::ICMPv6;
      s.icmp_type = p[0];
      s.l4_payload_len = n >= 8 ? n - 8 : 0;
      return;
    }
    default:
      s.proto = PacketSummary::Proto::None;
      return;
  }
}

inline void decode_ipv4(const std::uint8_t* p, std::size_t n, PacketSummary& s) {
  if (n < 20 || (p[0] >> 4) != 4) {
    s.truncated = true;
    return;
  }
  const std::size_t ihl = static_cast<std::size_t>(p[0] & 0x0F) * 4;
  if (ihl < 20 || ihl > n) {
    s.truncated = true;
    return;
  }
  s.net = PacketSummary::Net::IPv4;
  s.src = ipv4_text(p + 12);
  s.dst = ipv4_text(p + 16);
  const std::uint16_t frag = rd16be(p + 6);
  if ((frag & 0x1FFF) != 0) {
    s.non_first_fragment = true;
    return;
  }
  std::size_t total = rd16be(p + 2);
  if (total < ihl || total > n) total = n;  // tolerate padding and bogus lengths
  decode_transport(p + ihl, total - ihl, p[9], s);
}

inline void decode_ipv6(const std::uint8_t* p, std::size_t n, PacketSummary& s) {
  if (n < 40 || (p[0] >> 4) != 6) {
    s.truncated = true;
    return;
  }
  s.net = PacketSummary::Net::IPv6;
  s.src = ipv6_text(p + 8);
  s.dst = ipv6_text(p + 24);
  std::uint8_t next = p[6];
  std::size_t pos = 40;
  std::size_t limit = std::min<std::size_t>(n, 40 + rd16be(p + 4));
  for (int hop = 0; hop < 8; ++hop) {
    if (next == 0 || next == 43 || next == 60) {  // hop-by-hop, routing, dest options
      if (pos + 8 > limit) {
        s.truncated = true;
        return;
      }
      const std::uint8_t nh = p[pos];
      pos += 8 + static_cast<std::size_t>(p[pos + 1]) * 8;
      next = nh;
      if (pos > limit) {
        s.truncated = true;
        return;
      }
      continue;
    }
    if (next == 44) {  // fragment header
      if (pos + 8 > limit) {
        s.truncated = true;
        return;
      }
      if ((rd16be(p + pos + 2) >> 3) != 0) {
        s.non_first_fragment = true;
        return;
      }
      next = p[pos];
      pos += 8;
      continue;
    }
    break;
  }
  decode_transport(p + pos, limit > pos ? limit - pos : 0, next, s);
}

inline void decode_arp(const std::uint8_t* p, std::size_t n, PacketSummary& s) {
  if (n < 8) {
    s.truncated = true;
    return;
  }
  const std::uint8_t hlen = p[4];
  const std::uint8_t plen = p[5];
  if (n < 8 + 2 * (static_cast<std::size_t>(hlen) + plen)) {
    s.truncated = true;
    return;
  }
  s.net = PacketSummary::Net::Arp;
  s.arp_op = rd16be(p + 6);
  const std::uint8_t* sha = p + 8;
  const std::uint8_t* spa = sha + hlen;
  const std::uint8_t* tpa = spa + plen + hlen;
  if (plen == 4) {
    s.arp_sender_ip = ipv4_text(spa);
    s.arp_target_ip = ipv4_text(tpa);
  }
  if (hlen == 6) s.arp_sender_mac = mac_text(sha);
  s.src = s.arp_sender_ip;
  s.dst = s.arp_target_ip;
}

/// Decodes one captured frame. Never throws; failures set `truncated`.
inline PacketSummary decode_packet(int linktype, const std::uint8_t* p, std::size_t n, double ts,
                                   std::size_t orig_len) {
  PacketSummary s;
  s.timestamp = ts;
  s.pkt_len = orig_len != 0 ? orig_len : n;

  std::uint16_t ethertype = 0;
  std::size_t pos = 0;
  switch (linktype) {
    case 1: {  // Ethernet
      if (n < 14) {
        s.truncated = true;
        return s;
      }
      ethertype = rd16be(p + 12);
      pos = 14;
      for (int vlan = 0; vlan < 2 && (ethertype == 0x8100 || ethertype == 0x88A8); ++vlan) {
        if (pos + 4 > n) {
          s.truncated = true;
          return s;
        }
        ethertype = rd16be(p + pos + 2);
        pos += 4;
      }
      break;
    }
    case 113: {  // Linux cooked v1
      if (n < 16) {
        s.truncated = true;
        return s;
      }
      ethertype = rd16be(p + 14);
      pos = 16;
      break;
    }
    case 276: {  // Linux cooked v2
      if (n < 20) {
        s.truncated = true;
        return s;
      }
      ethertype = rd16be(p);
      pos = 20;
      break;
    }
    case 101: {  // raw IP
      if (n < 1) {
        s.truncated = true;
        return s;
      }
      ethertype = (p[0] >> 4) == 6 ? 0x86DD : 0x0800;
      pos = 0;
      break;
    }
    case 0:
    case 108: {  // BSD loopback: 4-byte family in host order of the writer
      if (n < 4) {
        s.truncated = true;
        return s;
      }
      const std::uint32_t fam_le =
          p[0] | (p[1] << 8) | (static_cast<std::uint32_t>(p[2]) << 16) |
          (static_cast<std::uint32_t>(p[3]) << 24);
      const std::uint32_t fam_be = rd32be(p);
      const std::uint32_t fam = fam_le <= 255 ? fam_le : fam_be;
      ethertype = (fam == 24 || fam == 28 || fam == 30 || fam == 10) ? 0x86DD : 0x0800;
      pos = 4;
      break;
    }
    default:
      return s;  // unknown link type -> OTHER
  }

  switch (ethertype) {
    case 0x0800:
      decode_ipv4(p + pos, n - pos, s);
      break;
    case 0x86DD:
      decode_ipv6(p + pos, n - pos, s);
      break;
    case 0x0806:
      decode_arp(p + pos, n - pos, s);
      break;
    default:
      break;  // non-IP ethertype -> OTHER
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Packet -> event mapping
// ---------------------------------------------------------------------------

namespace detail {

inline EventType conn_type_for_port(int dport) {
  switch (dport) {
    case 25:
    case 587:
      return EventType::SMTP_CONN;
    case 21:
      return EventType::FTP_CONN;
    case 22:
      return EventType::SSH_CONN;
    case 445:
    case 139:
      return EventType::SMB_CONN;
    case 3389:
      return EventType::RDP_CONN;
    case 3306:
    case 5432:
    case 27017:
    case 6379:
    case 1433:
      return EventType::DB_CONN;
    default:
      return EventType::TCP_CONN;
  }
}

}  // namespace detail

/// Deterministic, total mapping from a decoded packet summary to an event.
inline NetworkEvent map_packet(const PacketSummary& s) {
  NetworkEvent e;
  e.timestamp = s.timestamp;
  e.src = s.src;
  e.dst = s.dst;
  e.type = EventType::OTHER;
  e.transport = Transport::NONE;

  const auto other_fallback = [&](bool note_truncation) {
    e.type = EventType::OTHER;
    e.attrs = AttrMap{};
    e.attrs.set("pkt_len", std::to_string(s.pkt_len));
    if (note_truncation) e.attrs.set("truncated", "1");
  };

  if (s.truncated) {
    other_fallback(true);
    return e;
  }

  switch (s.net) {
    case PacketSummary::Net::Arp: {
      e.transport = Transport::ARP;
      if (s.arp_op == 1) {
        e.type = EventType::ARP_REQ;
        e.attrs.set("arp_target_ip", s.arp_target_ip);
      } else if (s.arp_op == 2) {
        e.type = EventType::ARP_REPLY;
        e.attrs.set("arp_sender_ip", s.arp_sender_ip);
        e.attrs.set("arp_sender_mac", s.arp_sender_mac);
      } else {
        e.transport = Transport::NONE;
        other_fallback(false);
      }
      return e;
    }
    case PacketSummary::Net::Other: {
      other_fallback(false);
      return e;
    }
    default:
      break;
  }

  if (s.non_first_fragment) {
    other_fallback(false);
    return e;
  }

  switch (s.proto) {
    case PacketSummary::Proto::ICMP:
    case PacketSummary::Proto::ICMPv6: {
      e.transport = Transport::ICMP;
      const bool v6 = s.proto == PacketSummary::Proto::ICMPv6;
      const int echo_req = v6 ? 128 : 8;
      const int echo_reply = v6 ? 129 : 0;
      if (s.icmp_type == echo_req) {
        e.type = EventType::ICMP_ECHO_REQ;
        e.attrs.set("payload_len", std::to_string(s.l4_payload_len));
      } else if (s.icmp_type == echo_reply) {
        e.type = EventType::ICMP_ECHO_REPLY;
        e.attrs.set("payload_len", std::to_string(s.l4_payload_len));
      } else {
        e.type = EventType::ICMP_OTHER;
        e.attrs.set("icmp_type", std::to_string(s.icmp_type));
      }
      return e;
    }
    case PacketSummary::Proto::UDP: {
      e.transport = Transport::UDP;
      e.sport = s.sport;
      e.dport = s.dport;
      if (s.sport == 53 || s.dport == 53) {
        const auto* raw = reinterpret_cast<const std::uint8_t*>(s.payload.data());
        detail::DnsInfo dns = detail::parse_dns(raw, s.payload.size());
        if (dns.ok) {
          if (dns.is_response) {
            e.type = EventType::DNS_A;
            static constexpr std::string_view kAnswerKeys[] = {"answer_ip", "answer_ip2",
                                                               "answer_ip3"};
            for (std::size_t i = 0; i < dns.answer_ips.size() && i < 3; ++i) {
              e.attrs.set(kAnswerKeys[i], dns.answer_ips[i]);
            }
          } else {
            e.type = EventType::DNS_Q;
            e.attrs.set("qname", dns.qname);
          }
          return e;
        }
      }
      if (s.dport == 161 || s.dport == 162) {
        e.type = EventType::SNMP_REQ;
        e.attrs.set("payload_len", std::to_string(s.l4_payload_len));
        return e;
      }
      if (s.sport == 161 || s.sport == 162) {
        e.type = EventType::SNMP_RESP;
        e.attrs.set("payload_len", std::to_string(s.l4_payload_len));
        return e;
      }
      e.type = EventType::UDP_DGRAM;
      e.attrs.set("pkt_len", std::to_string(s.pkt_len));
      e.attrs.set("payload_len", std::to_string(s.l4_payload_len));
      return e;
    }
    case PacketSummary::Proto::TCP: {
      e.transport = Transport::TCP;
      e.sport = s.sport;
      e.dport = s.dport;
      const std::string flags = detail::tcp_flags_text(s.tcp_flags);
      if (!s.payload.empty()) {
        if (s.sport == 53 || s.dport == 53) {
          // DNS over TCP carries a two-byte length prefix
          const auto* raw = reinterpret_cast<const std::uint8_t*>(s.payload.data());
          if (s.payload.size() > 2) {
            detail::DnsInfo dns = detail::parse_dns(raw + 2, s.payload.size() - 2);
            if (dns.ok) {
              if (dns.is_response) {
                e.type = EventType::DNS_A;
                static constexpr std::string_view kAnswerKeys[] = {"answer_ip", "answer_ip2",
                                                                   "answer_ip3"};
                for (std::size_t i = 0; i < dns.answer_ips.size() && i < 3; ++i) {
                  e.attrs.set(kAnswerKeys[i], dns.answer_ips[i]);
                }
              } else {
                e.type = EventType::DNS_Q;
                e.attrs.set("qname", dns.qname);
              }
              return e;
            }
          }
        }
        const auto* raw = reinterpret_cast<const std::uint8_t*>(s.payload.data());
        detail::TlsInfo tls = detail::parse_tls(raw, s.payload.size());
        if (tls.is_client_hello) {
          e.type = EventType::TLS_CH;
          if (tls.sni) e.attrs.set("sni", *tls.sni);
          return e;
        }
        detail::HttpInfo http = detail::parse_http(s.payload);
        if (http.kind == detail::HttpInfo::Kind::Request) {
          e.type = EventType::HTTP_REQ;
          e.attrs.set("method", http.method);
          if (!http.host.empty()) e.attrs.set("host", http.host);
          if (!http.path.empty()) e.attrs.set("path", http.path);
          return e;
        }
        if (http.kind == detail::HttpInfo::Kind::Response) {
          e.type = EventType::HTTP_RESP;
          e.attrs.set("status", std::to_string(http.status));
          return e;
        }
      }
      const bool syn_only = (s.tcp_flags & 0x02) != 0 && (s.tcp_flags & 0x10) == 0;
      if (syn_only) {
        e.type = detail::conn_type_for_port(s.dport);
        e.attrs.set("tcp_flags", flags);
        return e;
      }
      e.type = EventType::OTHER;
      e.attrs.set("pkt_len", std::to_string(s.pkt_len));
      if (!flags.empty()) e.attrs.set("tcp_flags", flags);
      return e;
    }
    case PacketSummary::Proto::None:
    default: {
      other_fallback(false);
      return e;
    }
  }
}

// ---------------------------------------------------------------------------
// Capture file parsing
// ---------------------------------------------------------------------------

namespace detail {

struct RawPacket {
  double ts = 0.0;
  std::size_t offset = 0;
  std::size_t cap_len = 0;
  std::size_t orig_len = 0;
  int linktype = 1;
  bool record_truncated = false;
};

inline std::uint16_t rd16(const std::uint8_t* p, bool swap) {
  return swap ? static_cast<std::uint16_t>((p[1] << 8) | p[0])
              : static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
inline std::uint32_t rd32(const std::uint8_t* p, bool swap) {
  return swap ? (static_cast<std::uint32_t>(p[3]) << 24) | (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[1]) << 8) | p[0]
              : rd32be(p);
}

inline std::vector<RawPacket> parse_classic_pcap(const std::uint8_t* data, std::size_t n) {
  // Magics as read big-endian; the byte-swapped forms mean the file is
  // little-endian. rd32/rd16 take swap=true for little-endian fields.
  const std::uint32_t magic = rd32be(data);
  bool le = false;
  double frac_scale = 1e-6;
  switch (magic) {
    case 0xA1B2C3D4: le = false; frac_scale = 1e-6; break;
    case 0xD4C3B2A1: le = true;  frac_scale = 1e-6; break;
    case 0xA1B23C4D: le = false; frac_scale = 1e-9; break;
    case 0x4D3CB2A1: le = true;  frac_scale = 1e-9; break;
    default:
      throw MalformedCapture("unrecognized capture magic");
  }
  const int linktype = static_cast<int>(rd32(data + 20, le) & 0x0FFFFFFF);

  std::vector<RawPacket> packets;
  std::size_t pos = 24;
  while (pos + 16 <= n) {
    RawPacket rp;
    const std::uint32_t ts_sec = rd32(data + pos, le);
    const std::uint32_t ts_frac = rd32(data + pos + 4, le);
    const std::uint32_t incl = rd32(data + pos + 8, le);
    rp.orig_len = rd32(data + pos + 12, le);
    rp.ts = static_cast<double>(ts_sec) + static_cast<double>(ts_frac) * frac_scale;
    rp.linktype = linktype;
    rp.offset = pos + 16;
    if (incl > 0x7FFFFFFF) break;  // corrupt length, stop here
    if (rp.offset + incl > n) {
      rp.cap_len = n - rp.offset;
      rp.record_truncated = true;
      packets.push_back(rp);
      break;
    }
    rp.cap_len = incl;
    packets.push_back(rp);
    pos = rp.offset + incl;
  }
  return packets;
}

inline std::vector<RawPacket> parse_pcapng(const std::uint8_t* data, std::size_t n) {
  struct Interface {
    int linktype = 1;
    double tick = 1e-6;
  };

  std::vector<RawPacket> packets;
  std::size_t pos = 0;
  bool le = true;
  std::vector<Interface> interfaces;
  bool saw_shb = false;

  while (pos + 12 <= n) {
    // Block type is endianness-sensitive except for the SHB marker.
    const std::uint32_t raw_type_be = rd32be(data + pos);
    if (raw_type_be == 0x0A0D0D0A) {
      if (pos + 16 > n) break;
      const std::uint32_t bom = rd32be(data + pos + 8);
      if (bom == 0x1A2B3C4D) {
        le = false;
      } else if (bom == 0x4D3C2B1A) {
        le = true;
      } else {
        if (!saw_shb) throw MalformedCapture("bad pcapng byte-order magic");
        break;
      }
      saw_shb = true;
      interfaces.clear();
      const std::uint32_t total = rd32(data + pos + 4, le);
      if (total < 28 || pos + total > n || total % 4 != 0) break;
      pos += total;
      continue;
    }
    if (!saw_shb) throw MalformedCapture("pcapng data before section header");

    const std::uint32_t block_type = rd32(data + pos, le);
    const std::uint32_t total = rd32(data + pos + 4, le);
    if (total < 12 || total % 4 != 0 || pos + total > n) break;
    const std::uint8_t* body = data + pos + 8;
    const std::size_t body_len = total - 12;

    if (block_type == 1 && body_len >= 8) {  // IDB
      Interface ifc;
      ifc.linktype = rd16(body, le);
      std::size_t opt = 8;
      while (opt + 4 <= body_len) {
        const std::uint16_t code = rd16(body + opt, le);
        const std::uint16_t olen = rd16(body + opt + 2, le);
        if (code == 0) break;
        if (opt + 4 + olen > body_len) break;
        if (code == 9 && olen >= 1) {  // if_tsresol
          const std::uint8_t v = body[opt + 4];
          if (v & 0x80) {
            ifc.tick = 1.0;
            for (int i = 0; i < (v & 0x7F); ++i) ifc.tick /= 2.0;
          } else {
            ifc.tick = 1.0;
            for (int i = 0; i < v; ++i) ifc.tick /= 10.0;
          }
        }
        opt += 4 + ((olen + 3u) & ~3u);
      }
      interfaces.push_back(ifc);
    } else if (block_type == 6 && body_len >= 20) {  // EPB
      const std::uint32_t iface = rd32(body, le);
      const std::uint64_t ticks =
          (static_cast<std::uint64_t>(rd32(body + 4, le)) << 32) | rd32(body + 8, le);
      const std::uint32_t cap = rd32(body + 12, le);
      const std::uint32_t orig = rd32(body + 16, le);
      Interface ifc = iface < interfaces.size() ? interfaces[iface] : Interface{};
      RawPacket rp;
      rp.ts = static_cast<double>(ticks) * ifc.tick;
      rp.linktype = ifc.linktype;
      rp.orig_len = orig;
      rp.offset = pos + 8 + 20;
      rp.cap_len = std::min<std::size_t>(cap, body_len - 20);
      rp.record_truncated = rp.cap_len < cap;
      packets.push_back(rp);
    } else if (block_type == 3 && body_len >= 4) {  // SPB: no timestamp
      const std::uint32_t orig = rd32(body, le);
      Interface ifc = interfaces.empty() ? Interface{} : interfaces[0];
      RawPacket rp;
      rp.ts = 0.0;
      rp.linktype = ifc.linktype;
      rp.orig_len = orig;
      rp.offset = pos + 8 + 4;
      rp.cap_len = std::min<std::size_t>(orig, body_len - 4);
      packets.push_back(rp);
    }
    pos += total;
  }
  return packets;
}

inline std::vector<RawPacket> parse_capture(std::string_view bytes) {
  if (bytes.size() < 4) throw MalformedCapture("capture shorter than any known header");
  const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const std::uint32_t head = rd32be(data);
  if (head == 0x0A0D0D0A) {
    return parse_pcapng(data, bytes.size());
  }
  if (bytes.size() < 24) throw MalformedCapture("capture shorter than the pcap global header");
  return parse_classic_pcap(data, bytes.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

namespace detail {

inline bool qname_matches_suffix(std::string_view qname, std::string_view suffix) {
  if (suffix.empty()) return false;
  if (qname == suffix) return true;
  if (qname.size() <= suffix.size()) return false;
  return qname.ends_with(suffix) && qname[qname.size() - suffix.size() - 1] == '.';
}

inline bool is_loopback(std::string_view addr) {
  return addr.starts_with("127.") || addr == "::1";
}

}  // namespace detail

/// Removes events matching the policy. Order of survivors is unchanged, and
/// the operation is idempotent.
inline EventTrace apply_filter(const EventTrace& trace, const FilterPolicy& policy) {
  EventTrace out;
  out.session_id = trace.session_id;
  out.origin = trace.origin;
  out.events.reserve(trace.events.size());

  for (const auto& e : trace.events) {
    bool drop = false;
    if (const auto* qname = e.attrs.find("qname")) {
      for (const auto& suffix : policy.denied_qname_suffixes) {
        if (detail::qname_matches_suffix(*qname, suffix)) {
          drop = true;
          break;
        }
      }
    }
    if (!drop) {
      for (const auto& h : policy.denied_hosts) {
        if (e.src == h || e.dst == h) {
          drop = true;
          break;
        }
      }
    }
    if (!drop) {
      for (const auto& [h, port] : policy.denied_port_pairs) {
        if ((e.src == h && e.sport == port) || (e.dst == h && e.dport == port)) {
          drop = true;
          break;
        }
      }
    }
    if (!drop && policy.drop_proxy_internal && detail::is_loopback(e.src) &&
        detail::is_loopback(e.dst)) {
      drop = true;
    }
    if (!drop) out.events.push_back(e);
  }
  return out;
}

/// Decodes a PCAP or PCAPNG byte stream into a filtered EventTrace.
/// Per-packet decode failures become OTHER events with a truncation note;
/// only an unreadable file header is a hard error.
inline EventTrace extract_events(std::string_view capture_bytes, const FilterPolicy& policy = {},
                                 std::string session_id = {}) {
  const auto packets = detail::parse_capture(capture_bytes);
  const auto* data = reinterpret_cast<const std::uint8_t*>(capture_bytes.data());

  std::vector<NetworkEvent> events;
  events.reserve(packets.size());
  for (const auto& rp : packets) {
    PacketSummary s;
    if (rp.record_truncated) {
      s.timestamp = rp.ts;
      s.pkt_len = rp.orig_len != 0 ? rp.orig_len : rp.cap_len;
      s.truncated = true;
    } else {
      s = detail::decode_packet(rp.linktype, data + rp.offset, rp.cap_len, rp.ts, rp.orig_len);
    }
    events.push_back(map_packet(s));
  }
  EventTrace trace = make_trace(std::move(events), std::move(session_id), TraceOrigin::PcapOnly);
  return apply_filter(trace, policy);
}

inline EventTrace extract_events_file(const std::string& path, const FilterPolicy& policy = {},
                                      std::string session_id = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedCapture("cannot open capture file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return extract_events(bytes, policy, std::move(session_id));
}

}  // namespace netwarden
