#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "utc/error.hpp"
#include "utc/runtime.hpp"

namespace utc {

namespace {

bool is_blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

// One reply per line; returns true once a finish reply has been sent.
bool answer(EpisodeSession& session, const std::string& line, std::string& out) {
  nlohmann::json reply = session.handle_line(line);
  out = reply.dump() + "\n";
  return reply.value("type", "") == "finish";
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

void write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n <= 0) throw Error(Errc::io, std::string("socket write failed: ") + std::strerror(errno));
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

void serve_stream(EpisodeSession& session, std::istream& in, std::ostream& out) {
  std::string line, reply;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    const bool done = answer(session, line, reply);
    out << reply << std::flush;
    if (done) return;
  }
}

void serve_tcp(EpisodeSession& session, const std::string& host, int port) {
  if (port <= 0 || port > 65535) throw Error(Errc::precondition, "port out of range: " + std::to_string(port));
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(), &hints, &res);
      rc != 0) {
    throw Error(Errc::io, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  Fd listener(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (listener.get() < 0) {
    ::freeaddrinfo(res);
    throw Error(Errc::io, std::string("socket: ") + std::strerror(errno));
  }
  int yes = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  const int bound = ::bind(listener.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (bound != 0 || ::listen(listener.get(), 1) != 0) {
    throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  Fd conn(::accept(listener.get(), nullptr, nullptr));
  if (conn.get() < 0) throw Error(Errc::io, std::string("accept: ") + std::strerror(errno));

  std::string buffer, reply;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(conn.get(), chunk, sizeof chunk, 0);
    if (n < 0) throw Error(Errc::io, std::string("socket read failed: ") + std::strerror(errno));
    if (n == 0) return;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (is_blank(line)) continue;
      const bool done = answer(session, line, reply);
      write_all(conn.get(), reply);
      if (done) return;
    }
  }
}

}  // namespace utc
