#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/events.hpp"

namespace netwarden {

class CaptureError : public Error {
 public:
  using Error::Error;
};
class CaptureStartFailed : public CaptureError {
 public:
  using CaptureError::CaptureError;
};
class FirewallDenied : public CaptureError {
 public:
  using CaptureError::CaptureError;
};
class ProxyUnreachable : public CaptureError {
 public:
  using CaptureError::CaptureError;
};
class RestoreIncomplete : public CaptureError {
 public:
  using CaptureError::CaptureError;
};

/// External utilities are invoked through command templates, not linked in;
/// the module's contract is the mutation ledger and its rollback.
/// Recognized placeholders: {interface}, {pcap_path}, {proxy_host},
/// {proxy_port}, {pid}.
struct CaptureConfig {
  std::string proxy_addr = "127.0.0.1:8080";
  std::string capture_interface = "any";
  std::string pcap_path = "session.pcap";
  std::string flow_log_path = "flows.jsonl";
  bool block_udp_443 = true;

  std::string capture_start_cmd = "tcpdump -i {interface} -w {pcap_path}";
  std::string capture_stop_cmd;  // empty: SIGTERM the started process
  std::string fw_block_cmd = "iptables -I OUTPUT -p udp --dport 443 -j DROP";
  std::string fw_unblock_cmd = "iptables -D OUTPUT -p udp --dport 443 -j DROP";
  std::string proxy_check_cmd;   // empty: TCP connect probe to proxy_addr
  double capture_grace_s = 0.2;  // startup confirmation delay

  static CaptureConfig from_json(const nlohmann::json& j) {
    CaptureConfig c;
    c.proxy_addr = j.value("proxy_addr", c.proxy_addr);
    c.capture_interface = j.value("capture_interface", c.capture_interface);
    c.pcap_path = j.value("pcap_path", c.pcap_path);
    c.flow_log_path = j.value("flow_log_path", c.flow_log_path);
    c.block_udp_443 = j.value("block_udp_443", c.block_udp_443);
    c.capture_start_cmd = j.value("capture_start_cmd", c.capture_start_cmd);
    c.capture_stop_cmd = j.value("capture_stop_cmd", c.capture_stop_cmd);
    c.fw_block_cmd = j.value("fw_block_cmd", c.fw_block_cmd);
    c.fw_unblock_cmd = j.value("fw_unblock_cmd", c.fw_unblock_cmd);
    c.proxy_check_cmd = j.value("proxy_check_cmd", c.proxy_check_cmd);
    c.capture_grace_s = j.value("capture_grace_s", c.capture_grace_s);
    return c;
  }

  static CaptureConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CaptureError("cannot open capture config: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

namespace detail {

inline std::pair<std::string, int> split_host_port(const std::string& addr, int default_port) {
  const std::size_t colon = addr.rfind(':');
  if (colon == std::string::npos) return {addr, default_port};
  return {addr.substr(0, colon), std::atoi(addr.c_str() + colon + 1)};
}

inline std::string expand_template(std::string tmpl,
                                   const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string placeholder = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = tmpl.find(placeholder, pos)) != std::string::npos) {
      tmpl.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  return tmpl;
}

inline int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : 128;
}

/// Spawns `sh -c "exec <cmd>"` so the returned pid is the tool itself.
inline pid_t spawn_background(const std::string& cmd) {
  const pid_t pid = fork();
  if (pid < 0) return -1;
  if (pid == 0) {
    const std::string wrapped = "exec " + cmd;
    execl("/bin/sh", "sh", "-c", wrapped.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  return pid;
}

inline bool tcp_probe(const std::string& host, int port, double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0) return false;

  bool connected = false;
  for (addrinfo* ai = result; ai != nullptr && !connected; ai = ai->ai_next) {
    const int fd = socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK, ai->ai_protocol);
    if (fd < 0) continue;
    if (connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      connected = true;
    } else if (errno == EINPROGRESS) {
      fd_set wfds;
      FD_ZERO(&wfds);
      FD_SET(fd, &wfds);
      timeval tv;
      tv.tv_sec = static_cast<long>(timeout_s);
      tv.tv_usec = static_cast<long>((timeout_s - tv.tv_sec) * 1e6);
      if (select(fd + 1, nullptr, &wfds, nullptr, &tv) == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        connected = err == 0;
      }
    }
    close(fd);
  }
  freeaddrinfo(result);
  return connected;
}

inline constexpr const char* kProxyEnvVars[] = {"http_proxy", "https_proxy", "HTTP_PROXY",
                                                "HTTPS_PROXY"};

}  // namespace detail

/// Every mutation made by begin_session, recorded for rollback.
struct SessionHandle {
  CaptureConfig cfg;
  bool open = false;
  std::vector<std::string> ledger;  // human-readable mutation records

  // mutation state
  std::map<std::string, std::optional<std::string>> env_priors;
  bool fw_rule_installed = false;
  pid_t capture_pid = -1;

  // set after end_session so a second call is a no-op
  std::optional<std::pair<std::string, std::string>> result_paths;
  std::vector<std::string> warnings;
};

struct SessionArtifacts {
  std::string pcap_path;
  std::string flow_log_path;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::map<std::string, std::string> template_vars(const CaptureConfig& cfg, pid_t pid) {
  const auto [host, port] = split_host_port(cfg.proxy_addr, 8080);
  return {
      {"interface", cfg.capture_interface}, {"pcap_path", cfg.pcap_path},
      {"proxy_host", host},                 {"proxy_port", std::to_string(port)},
      {"pid", std::to_string(pid)},
  };
}

inline void restore_env(SessionHandle& h, std::vector<std::string>& failures) {
  for (const auto& [key, prior] : h.env_priors) {
    int rc = 0;
    if (prior) {
      rc = setenv(key.c_str(), prior->c_str(), 1);
    } else {
      rc = unsetenv(key.c_str());
    }
    if (rc != 0) failures.push_back("env restore failed: " + key);
  }
  h.env_priors.clear();
}

inline void remove_fw_rule(SessionHandle& h, std::vector<std::string>& failures) {
  if (!h.fw_rule_installed) return;
  const std::string cmd = expand_template(h.cfg.fw_unblock_cmd, template_vars(h.cfg, -1));
  if (run_command(cmd) != 0) {
    failures.push_back("firewall rule removal failed: " + cmd);
  } else {
    h.fw_rule_installed = false;
  }
}

inline void stop_capture(SessionHandle& h, std::vector<std::string>& failures,
                         std::vector<std::string>& warnings) {
  if (h.capture_pid <= 0) return;
  if (!h.cfg.capture_stop_cmd.empty()) {
    const std::string cmd =
        expand_template(h.cfg.capture_stop_cmd, template_vars(h.cfg, h.capture_pid));
    if (run_command(cmd) != 0) failures.push_back("capture stop command failed: " + cmd);
  } else if (kill(h.capture_pid, SIGTERM) != 0 && errno == ESRCH) {
    warnings.push_back("capture process already exited");
  }
  // reap, escalating to SIGKILL if needed
  int status = 0;
  for (int i = 0; i < 50; ++i) {
    const pid_t r = waitpid(h.capture_pid, &status, WNOHANG);
    if (r == h.capture_pid || (r == -1 && errno == ECHILD)) {
      h.capture_pid = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  kill(h.capture_pid, SIGKILL);
  waitpid(h.capture_pid, &status, 0);
  h.capture_pid = -1;
}

}  // namespace detail

/// Routes HTTP(S) through the proxy, blocks the QUIC bypass, and starts the
/// packet capture. Every mutation lands in the handle's ledger; any failure
/// rolls back what was already done and rethrows.
inline SessionHandle begin_session(const CaptureConfig& cfg) {
  SessionHandle h;
  h.cfg = cfg;

  const auto rollback = [&h]() {
    std::vector<std::string> failures;
    std::vector<std::string> warnings;
    detail::stop_capture(h, failures, warnings);
    detail::remove_fw_rule(h, failures);
    detail::restore_env(h, failures);
  };

  // 1. proxy reachability
  const auto [proxy_host, proxy_port] = detail::split_host_port(cfg.proxy_addr, 8080);
  if (!cfg.proxy_check_cmd.empty()) {
    const std::string cmd =
        detail::expand_template(cfg.proxy_check_cmd, detail::template_vars(cfg, -1));
    if (detail::run_command(cmd) != 0) {
      throw ProxyUnreachable("proxy check command failed: " + cmd);
    }
  } else if (!detail::tcp_probe(proxy_host, proxy_port, 2.0)) {
    throw ProxyUnreachable("cannot connect to proxy at " + cfg.proxy_addr);
  }

  // 2. proxy environment
  const std::string proxy_url = "http://" + cfg.proxy_addr;
  for (const char* var : detail::kProxyEnvVars) {
    const char* prior = std::getenv(var);
    h.env_priors[var] = prior != nullptr ? std::optional<std::string>(prior) : std::nullopt;
    if (setenv(var, proxy_url.c_str(), 1) != 0) {
      rollback();
      throw CaptureError(std::string("setenv failed for ") + var);
    }
    h.ledger.push_back(std::string("env set: ") + var + "=" + proxy_url);
  }

  // 3. firewall rule blocking UDP 443 (QUIC bypass)
  if (cfg.block_udp_443) {
    const std::string cmd =
        detail::expand_template(cfg.fw_block_cmd, detail::template_vars(cfg, -1));
    if (detail::run_command(cmd) != 0) {
      rollback();
      throw FirewallDenied("firewall rule install failed: " + cmd);
    }
    h.fw_rule_installed = true;
    h.ledger.push_back("firewall rule installed: " + cmd);
  }

  // 4. packet capture
  const std::string start_cmd =
      detail::expand_template(cfg.capture_start_cmd, detail::template_vars(cfg, -1));
  h.capture_pid = detail::spawn_background(start_cmd);
  if (h.capture_pid <= 0) {
    rollback();
    throw CaptureStartFailed("could not spawn capture command: " + start_cmd);
  }
  std::this_thread::sleep_for(std::chrono::duration<double>(cfg.capture_grace_s));
  int status = 0;
  if (waitpid(h.capture_pid, &status, WNOHANG) == h.capture_pid) {
    h.capture_pid = -1;
    rollback();
    throw CaptureStartFailed("capture command exited immediately: " + start_cmd);
  }
  h.ledger.push_back("capture started: pid " + std::to_string(h.capture_pid) + " (" + start_cmd +
                     ")");

  h.open = true;
  return h;
}

/// Stops the capture, removes the firewall rule, and restores the proxy
/// environment. Idempotent: a second call returns the same paths. A revert
/// failure still attempts the remaining reverts before reporting exactly
/// which mutations stuck.
inline SessionArtifacts end_session(SessionHandle& h) {
  if (h.result_paths) {
    return {h.result_paths->first, h.result_paths->second, h.warnings};
  }

  std::vector<std::string> failures;
  detail::stop_capture(h, failures, h.warnings);
  detail::remove_fw_rule(h, failures);
  detail::restore_env(h, failures);
  h.open = false;

  if (!failures.empty()) {
    std::string what = "session restore incomplete:";
    for (const auto& f : failures) what += " [" + f + "]";
    throw RestoreIncomplete(what);
  }

  h.result_paths = {h.cfg.pcap_path, h.cfg.flow_log_path};
  return {h.cfg.pcap_path, h.cfg.flow_log_path, h.warnings};
}

}  // namespace netwarden
