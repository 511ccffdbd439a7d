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

#include "aps/config.h"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <sstream>

#include "aps/errors.h"

namespace aps {

namespace {

std::string qualified(const std::string& section, const std::string& key) {
  return section + "." + key;
}

template <typename T>
T parse_number(const std::string& raw, const std::string& where) {
  T value{};
  const char* first = raw.data();
  const char* last = raw.data() + raw.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config: " + where + ": cannot parse '" + raw + "'");
  }
  return value;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text,
                             const std::set<std::string>& schema) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ConfigFile out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, leaf] : body) {
      const std::string name = qualified(section, key);
      if (!schema.count(name)) {
        throw ConfigError("config: unknown key '" + name + "'");
      }
      out.values_[name] = boost::algorithm::trim_copy(leaf.data());
    }
  }
  return out;
}

ConfigFile ConfigFile::load(const std::string& path,
                            const std::set<std::string>& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), schema);
}

const std::string* ConfigFile::find(const std::string& section,
                                    const std::string& key) const {
  auto it = values_.find(qualified(section, key));
  return it == values_.end() ? nullptr : &it->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section,
                                   const std::string& key,
                                   const std::string& fallback) const {
  const std::string* raw = find(section, key);
  return raw ? *raw : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  const std::string* raw = find(section, key);
  return raw ? parse_number<double>(*raw, qualified(section, key)) : fallback;
}

long ConfigFile::get_long(const std::string& section, const std::string& key,
                          long fallback) const {
  const std::string* raw = find(section, key);
  return raw ? parse_number<long>(*raw, qualified(section, key)) : fallback;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const std::string* raw = find(section, key);
  if (!raw) return fallback;
  const std::string v = boost::algorithm::to_lower_copy(*raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + qualified(section, key) +
                    ": expected a boolean, got '" + *raw + "'");
}

std::vector<double> ConfigFile::get_doubles(const std::string& section,
                                            const std::string& key,
                                            std::vector<double> fallback) const {
  const std::string* raw = find(section, key);
  if (!raw) return fallback;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, *raw, boost::algorithm::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    out.push_back(parse_number<double>(p, qualified(section, key)));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace aps
