#include "tnas/harness/records.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "tnas/core/errors.hpp"
#include "tnas_code_hash.hpp"

namespace tnas {

using nlohmann::json;

json to_json(const ResultRecord& r) {
  if (!std::isfinite(r.val_metric)) throw ValidationError("result record with a non-finite val metric");
  json j;
  j["run_id"] = r.run_id;
  j["method"] = r.method;
  j["space"] = r.space;
  j["kind"] = r.kind;
  j["architecture"] = r.architecture;
  j["seed"] = r.seed;
  j["val_metric"] = r.val_metric;
  j["test_metric"] = std::isfinite(r.test_metric) ? json(r.test_metric) : json(nullptr);
  j["epoch"] = r.epoch;
  j["wall_seconds"] = r.wall_seconds;
  j["param_count"] = r.param_count;
  j["mode"] = r.mode;
  j["alphas"] = r.alphas;
  return j;
}

ResultRecord record_from_json(const json& j) {
  try {
    ResultRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.space = j.at("space").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.architecture = j.at("architecture").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.val_metric = j.at("val_metric").get<double>();
    if (!j.at("test_metric").is_null()) r.test_metric = j.at("test_metric").get<double>();
    r.epoch = j.at("epoch").get<std::int64_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.param_count = j.at("param_count").get<std::int64_t>();
    r.mode = j.at("mode").get<std::string>();
    r.alphas = j.at("alphas").get<std::map<std::string, std::vector<double>>>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed result record: ") + e.what());
  }
}

std::string stable_line(const ResultRecord& r) {
  auto j = to_json(r);
  j.erase("wall_seconds");
  return j.dump();
}

ResultWriter::ResultWriter(const std::string& path, bool truncate)
    : path_(path), out_(path, truncate ? std::ios::trunc : std::ios::app) {
  if (!out_) throw ConfigError("cannot open results file " + path);
}

void ResultWriter::write(const ResultRecord& r) {
  out_ << to_json(r).dump() << '\n';
  out_.flush();
}

std::vector<ResultRecord> read_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open results file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<ResultRecord> out;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;  // trailing partial line
    const auto line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw FormatError(path + ": bad line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string config_hash(const json& config) {
  const auto s = config.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string code_hash() { return kTnasCodeHash; }

json make_manifest(const std::string& command, const std::string& space, std::uint64_t seed,
                   const json& config) {
  json m;
  m["tool"] = "tnas";
  m["command"] = command;
  m["space"] = space;
  m["seed"] = seed;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["code_hash"] = code_hash();
  return m;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace tnas
