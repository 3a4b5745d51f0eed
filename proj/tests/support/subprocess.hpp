#pragma once

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace testing_support {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

namespace detail {

inline pid_t spawn(const std::vector<std::string>& argv, int in_fd, int out_fd, int err_fd,
                   const std::vector<int>& close_fds) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(in_fd, 0);
    ::dup2(out_fd, 1);
    ::dup2(err_fd, 2);
    for (int fd : close_fds) ::close(fd);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execv(args[0], args.data());
    ::_exit(127);
  }
  return pid;
}

}  // namespace detail

// Runs to completion, feeding `input` on stdin.
inline RunResult run(const std::vector<std::string>& argv, const std::string& input = {}) {
  int in[2], out[2], err[2];
  if (::pipe(in) != 0 || ::pipe(out) != 0 || ::pipe(err) != 0) return {};
  const pid_t pid = detail::spawn(argv, in[0], out[1], err[1], {in[0], in[1], out[0], out[1], err[0], err[1]});
  ::close(in[0]);
  ::close(out[1]);
  ::close(err[1]);
  ::signal(SIGPIPE, SIG_IGN);
  std::size_t written = 0;
  while (written < input.size()) {
    const auto n = ::write(in[1], input.data() + written, input.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  ::close(in[1]);

  RunResult r;
  pollfd fds[2] = {{out[0], POLLIN, 0}, {err[0], POLLIN, 0}};
  std::string* sinks[2] = {&r.out, &r.err};
  int open = 2;
  char buf[4096];
  while (open > 0) {
    if (::poll(fds, 2, -1) < 0) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
      const auto n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open;
      }
    }
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

// A long-running child whose stderr is readable line by line.
class Background {
 public:
  explicit Background(const std::vector<std::string>& argv) {
    int err[2];
    if (::pipe(err) != 0) return;
    const int devnull = ::open("/dev/null", O_RDWR);
    pid_ = detail::spawn(argv, devnull, devnull, err[1], {err[0], err[1], devnull});
    ::close(err[1]);
    ::close(devnull);
    err_fd_ = err[0];
  }
  ~Background() {
    kill(SIGKILL);
    if (err_fd_ >= 0) ::close(err_fd_);
  }
  Background(const Background&) = delete;
  Background& operator=(const Background&) = delete;

  // Waits for a stderr line containing `needle`; returns it, or "" on timeout.
  std::string wait_for(const std::string& needle, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      for (auto nl = buffer_.find('\n'); nl != std::string::npos; nl = buffer_.find('\n')) {
        auto line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (line.find(needle) != std::string::npos) return line;
      }
      pollfd p{err_fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) > 0) {
        char buf[1024];
        const auto n = ::read(err_fd_, buf, sizeof buf);
        if (n <= 0) return "";
        buffer_.append(buf, static_cast<std::size_t>(n));
      }
    }
    return "";
  }

  // Sends `sig` and reaps the child; returns its wait status.
  int kill(int sig) {
    if (pid_ <= 0) return -1;
    ::kill(pid_, sig);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return status;
  }

 private:
  pid_t pid_ = -1;
  int err_fd_ = -1;
  std::string buffer_;
};

}  // namespace testing_support
