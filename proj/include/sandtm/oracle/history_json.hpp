/*
 * Copyright 2026 The sandtm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sandtm/history.hpp"

namespace sandtm::oracle {

inline nlohmann::json to_json(const History& h) {
  using nlohmann::json;
  json commits = json::array();
  for (const CommitRecord& r : h.commits) {
    json reads = json::array();
    for (const auto& [a, v] : r.reads) reads.push_back({a, v});
    json writes = json::array();
    for (const auto& [a, v] : r.writes) writes.push_back({a, v});
    commits.push_back(
        {{"tx", r.tx}, {"reads", reads}, {"writes", writes}, {"clock", r.clock}});
  }
  return {{"initial", h.initial}, {"commits", commits}, {"final", h.final_state}};
}

/// Throws std::invalid_argument on a malformed document.
inline History history_from_json(const nlohmann::json& j) {
  try {
    History h;
    h.initial = j.at("initial").get<std::vector<Word>>();
    if (j.contains("final")) h.final_state = j.at("final").get<std::vector<Word>>();
    for (const auto& c : j.at("commits")) {
      CommitRecord r;
      r.tx = c.at("tx").get<std::uint64_t>();
      r.clock = c.value("clock", Word{0});
      for (const auto& p : c.at("reads")) {
        r.reads.emplace_back(p.at(0).get<Addr>(), p.at(1).get<Word>());
      }
      for (const auto& p : c.at("writes")) {
        r.writes.emplace_back(p.at(0).get<Addr>(), p.at(1).get<Word>());
      }
      h.commits.push_back(std::move(r));
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed history: ") + e.what());
  }
}

inline History load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed history: ") + e.what());
  }
  return history_from_json(j);
}

inline void save_history(const History& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(h).dump(2) << '\n';
}

}  // namespace sandtm::oracle
