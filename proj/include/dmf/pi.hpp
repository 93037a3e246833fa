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

#ifndef DMF_PI_HPP
#define DMF_PI_HPP

#include <string>

namespace dmf {

// Returns "3." followed by exactly n truncated (not rounded) decimal digits
// of pi, computed via Machin's formula pi = 16*atan(1/5) - 4*atan(1/239) in
// fixed-point decimal with n + 10 guard digits.
//
// Throws Error(ErrorCode::Invalid, "argument error...") unless 1 <= n <= 10000.
std::string pi_digits(int n);

}  // namespace dmf

#endif  // DMF_PI_HPP
