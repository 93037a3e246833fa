/* Copyright 2026 the DMF authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dmf/subprocess.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "dmf/error.hpp"

extern char** environ;

namespace dmf {

namespace {

// Builds the child's environment: the parent's plus the extras, extras
// winning on key collisions.
std::vector<std::string> merged_environment(
    const std::map<std::string, std::string>& extra) {
  std::vector<std::string> merged;
  for (char** entry = environ; *entry != nullptr; ++entry) {
    const std::string_view pair(*entry);
    const auto eq = pair.find('=');
    const std::string key(pair.substr(0, eq == std::string_view::npos ? pair.size() : eq));
    if (!extra.contains(key)) merged.emplace_back(pair);
  }
  for (const auto& [key, value] : extra) merged.push_back(key + "=" + value);
  return merged;
}

void redirect_or_die(const std::string& path, int target_fd) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0 || ::dup2(fd, target_fd) < 0) _exit(126);
  ::close(fd);
}

ExitStatus decode_status(int raw) {
  if (WIFSIGNALED(raw)) return {true, WTERMSIG(raw)};
  return {false, WIFEXITED(raw) ? WEXITSTATUS(raw) : 125};
}

}  // namespace

Subprocess Subprocess::spawn(const SpawnOptions& options) {
  if (options.argv.empty()) {
    throw Error(ErrorCode::Invalid, "spawn requires a non-empty argv");
  }

  // Everything the child needs is materialized before fork; the child only
  // calls async-signal-safe functions plus execvpe.
  std::vector<std::string> env_storage = merged_environment(options.env_extra);
  std::vector<char*> envp;
  envp.reserve(env_storage.size() + 1);
  for (std::string& entry : env_storage) envp.push_back(entry.data());
  envp.push_back(nullptr);

  std::vector<std::string> argv_storage = options.argv;
  std::vector<char*> argv;
  argv.reserve(argv_storage.size() + 1);
  for (std::string& arg : argv_storage) argv.push_back(arg.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    throw Error(ErrorCode::Io, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    if (options.stdout_path) redirect_or_die(*options.stdout_path, STDOUT_FILENO);
    if (options.stderr_path) redirect_or_die(*options.stderr_path, STDERR_FILENO);
    ::execvpe(argv[0], argv.data(), envp.data());
    _exit(127);
  }

  Subprocess child;
  child.pid_ = pid;
  return child;
}

Subprocess::Subprocess(Subprocess&& other) noexcept
    : pid_(other.pid_), status_(other.status_) {
  other.pid_ = -1;
  other.status_.reset();
}

Subprocess& Subprocess::operator=(Subprocess&& other) noexcept {
  if (this != &other) {
    this->~Subprocess();
    pid_ = other.pid_;
    status_ = other.status_;
    other.pid_ = -1;
    other.status_.reset();
  }
  return *this;
}

Subprocess::~Subprocess() {
  if (pid_ < 0 || status_) return;
  ::kill(pid_, SIGKILL);
  int raw = 0;
  ::waitpid(pid_, &raw, 0);
}

std::optional<ExitStatus> Subprocess::reap_nohang() {
  if (status_) return status_;
  if (pid_ < 0) return std::nullopt;
  int raw = 0;
  const pid_t reaped = ::waitpid(pid_, &raw, WNOHANG);
  if (reaped == pid_) status_ = decode_status(raw);
  return status_;
}

bool Subprocess::running() { return pid_ >= 0 && !reap_nohang(); }

std::optional<ExitStatus> Subprocess::wait(int timeout_ms) {
  if (pid_ < 0) return std::nullopt;
  if (timeout_ms < 0) {
    if (status_) return status_;
    int raw = 0;
    if (::waitpid(pid_, &raw, 0) == pid_) status_ = decode_status(raw);
    return status_;
  }
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    if (auto status = reap_nohang()) return status;
    if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void Subprocess::terminate() {
  if (pid_ >= 0 && !status_) ::kill(pid_, SIGTERM);
}

void Subprocess::kill_hard() {
  if (pid_ >= 0 && !status_) ::kill(pid_, SIGKILL);
}

}  // namespace dmf
