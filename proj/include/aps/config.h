// Copyright 2026 The APS Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APS_CONFIG_H_
#define APS_CONFIG_H_

#include <map>
#include <set>
#include <string>
#include <vector>

namespace aps {

// Sectioned "key = value" file. Every key must appear in the schema passed
// at parse time; anything else is a ConfigError.
class ConfigFile {
 public:
  // Schema entries are "section.key".
  static ConfigFile parse(const std::string& text,
                          const std::set<std::string>& schema);
  static ConfigFile load(const std::string& path,
                         const std::set<std::string>& schema);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_long(const std::string& section, const std::string& key,
                long fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  // Comma-separated list of reals.
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key,
                                  std::vector<double> fallback) const;

 private:
  const std::string* find(const std::string& section,
                          const std::string& key) const;

  std::map<std::string, std::string> values_;  // "section.key" -> raw text
};

// Round-trip safe textual form of a double.
std::string format_double(double v);

}  // namespace aps

#endif  // APS_CONFIG_H_
