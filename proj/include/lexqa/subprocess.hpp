#pragma once

// Line-oriented request/response channel to a child process. Used by the
// external embedder and external scorer protocols.

#include <chrono>
#include <csignal>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "lexqa/error.hpp"

extern char** environ;

namespace lexqa {

class LineProcess {
public:
    using Clock = std::chrono::steady_clock;

    /// Runs `command` through /bin/sh with stdin and stdout connected to us.
    explicit LineProcess(const std::string& command) : command_(command) {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
            throw ProtocolError("socketpair failed: " + std::string(std::strerror(errno)));
        }
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
        posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);

        std::string sh = "/bin/sh";
        std::string dash_c = "-c";
        char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
        const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
        posix_spawn_file_actions_destroy(&actions);
        ::close(fds[1]);
        if (rc != 0) {
            ::close(fds[0]);
            throw ProtocolError("cannot start '" + command_ + "': " + std::strerror(rc));
        }
        fd_ = fds[0];
    }

    LineProcess(const LineProcess&) = delete;
    LineProcess& operator=(const LineProcess&) = delete;

    ~LineProcess() {
        if (fd_ >= 0) ::close(fd_);
        if (pid_ > 0) {
            int status = 0;
            // Give a well-behaved child a moment to exit on EOF.
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
                ::usleep(2000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
    }

    const std::string& command() const noexcept { return command_; }

    /// Sends each request line and reads one response line per request, in
    /// order. The whole batch must finish before `timeout` elapses.
    std::vector<std::string> exchange(const std::vector<std::string>& requests, std::chrono::milliseconds timeout) {
        std::lock_guard lock(mutex_);
        const auto deadline = Clock::now() + timeout;
        std::vector<std::string> responses;
        responses.reserve(requests.size());
        for (const auto& request : requests) {
            write_line(request, deadline);
            responses.push_back(read_line(deadline));
        }
        return responses;
    }

private:
    static int remaining_ms(Clock::time_point deadline) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        return left > 0 ? static_cast<int>(left) : 0;
    }

    void wait_for(short events, Clock::time_point deadline) {
        pollfd pfd{fd_, events, 0};
        for (;;) {
            const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
            if (rc > 0) return;
            if (rc == 0) throw ProtocolError("timed out waiting for '" + command_ + "'");
            if (errno != EINTR) throw ProtocolError("poll failed: " + std::string(std::strerror(errno)));
        }
    }

    void write_line(const std::string& line, Clock::time_point deadline) {
        if (line.find('\n') != std::string::npos) throw ProtocolError("request contains a newline");
        std::string data = line + '\n';
        std::size_t sent = 0;
        while (sent < data.size()) {
            wait_for(POLLOUT, deadline);
            const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL | MSG_DONTWAIT);
            if (n < 0) {
                if (errno == EAGAIN || errno == EINTR) continue;
                throw ProtocolError("'" + command_ + "' closed its input: " + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    std::string read_line(Clock::time_point deadline) {
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            wait_for(POLLIN, deadline);
            char chunk[4096];
            const ssize_t n = ::recv(fd_, chunk, sizeof chunk, MSG_DONTWAIT);
            if (n == 0) throw ProtocolError("'" + command_ + "' exited before answering");
            if (n < 0) {
                if (errno == EAGAIN || errno == EINTR) continue;
                throw ProtocolError("read failed: " + std::string(std::strerror(errno)));
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::string command_;
    pid_t pid_ = -1;
    int fd_ = -1;
    std::string buffer_;
    std::mutex mutex_;
};

}  // namespace lexqa
