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

#ifndef DMF_SUBPROCESS_HPP
#define DMF_SUBPROCESS_HPP

#include <sys/types.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dmf {

struct SpawnOptions {
  std::vector<std::string> argv;  // argv[0] is the executable path
  std::optional<std::string> stdout_path;
  std::optional<std::string> stderr_path;
  std::map<std::string, std::string> env_extra;
};

struct ExitStatus {
  bool signaled = false;
  int value = 0;  // exit code, or the signal number when signaled
};

// Minimal fork/exec child handle for the bench harness and recovery drills.
// Move-only; an unreaped child is SIGKILLed and reaped by the destructor.
class Subprocess {
 public:
  // Throws Error(Io) when fork fails; exec failure in the child surfaces as
  // exit status 127.
  static Subprocess spawn(const SpawnOptions& options);

  Subprocess(Subprocess&& other) noexcept;
  Subprocess& operator=(Subprocess&& other) noexcept;
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess();

  pid_t pid() const { return pid_; }
  bool running();

  // Polls until exit or timeout; nullopt on timeout. timeout_ms < 0 blocks.
  std::optional<ExitStatus> wait(int timeout_ms);

  void terminate();  // SIGTERM
  void kill_hard();  // SIGKILL, the crash used by recovery drills

 private:
  Subprocess() = default;

  std::optional<ExitStatus> reap_nohang();

  pid_t pid_ = -1;
  std::optional<ExitStatus> status_;
};

}  // namespace dmf

#endif  // DMF_SUBPROCESS_HPP
