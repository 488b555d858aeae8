#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntulm/common.hpp"
#include "ntulm/hin_graph.hpp"

namespace ntulm {

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& obj, const char* field) {
  std::vector<std::string> out;
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw std::runtime_error(std::string("field '") + field + "' must be an array");
  for (const auto& v : *it) out.push_back(v.get<std::string>());
  return out;
}

inline std::string label_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  throw std::runtime_error("labels must be strings, integers or booleans");
}

}  // namespace detail

inline TweetRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("record is not a JSON object");
  TweetRecord rec;
  rec.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  rec.text = j.value("text", std::string{});
  rec.author = j.at("author").get<std::string>();
  for (auto& h : detail::string_list(j, "hashtags")) rec.hashtags.push_back(normalize_hashtag(h));
  for (auto& m : detail::string_list(j, "mentions")) rec.mentions.push_back(normalize_user(m));
  for (auto& f : detail::string_list(j, "favorited_by")) rec.favorited_by.push_back(normalize_user(f));
  rec.author = normalize_user(rec.author);
  if (auto it = j.find("labels"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw std::runtime_error("labels must be an object");
    for (const auto& [task, value] : it->items()) {
      auto& dst = rec.labels[task];
      if (value.is_array())
        for (const auto& v : value) dst.push_back(detail::label_string(v));
      else
        dst.push_back(detail::label_string(value));
    }
  }
  return rec;
}

inline nlohmann::json record_to_json(const TweetRecord& rec) {
  nlohmann::json j;
  j["id"] = rec.id;
  j["text"] = rec.text;
  j["author"] = rec.author;
  j["hashtags"] = rec.hashtags;
  j["mentions"] = rec.mentions;
  j["favorited_by"] = rec.favorited_by;
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [task, vals] : rec.labels) {
    if (vals.size() == 1)
      labels[task] = vals.front();
    else
      labels[task] = vals;
  }
  j["labels"] = labels;
  return j;
}

/// Reads JSON Lines. Blank lines are skipped; any other undecodable line
/// raises CorpusDecodeError naming its 1-based line number.
inline std::vector<TweetRecord> read_corpus(std::istream& in) {
  std::vector<TweetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::CorpusDecodeError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_corpus(std::ostream& out, const std::vector<TweetRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

}  // namespace ntulm
