#include "fedunlearn/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedunlearn/error.hpp"

namespace fedunlearn {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail(ErrorCode::kInvalidArgument, "cannot format number");
  return {buf, end};
}

template <typename T>
T parse_num(const std::string& s, const char* column) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    fail(ErrorCode::kParse, std::string("metrics column ") + column + ": bad value '" + s + "'");
  }
  return v;
}

void check_text(const std::string& s) {
  if (s.find_first_of(",\"\r\n") != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "metrics text fields may not contain separators: " + s);
  }
}

// Column accessors, kept in one place so CSV and JSONL agree on order.
struct Column {
  const char* name;
  std::string (*get)(const MetricsRecord&);
  void (*set)(MetricsRecord&, const std::string&);
  bool numeric;
};

#define FU_TEXT(f) \
  Column{#f, [](const MetricsRecord& r) { return r.f; }, [](MetricsRecord& r, const std::string& s) { r.f = s; }, false}
#define FU_NUM(f)                                                               \
  Column{#f, [](const MetricsRecord& r) { return fmt(r.f); },                  \
         [](MetricsRecord& r, const std::string& s) {                          \
           r.f = parse_num<decltype(MetricsRecord::f)>(s, #f);                 \
         },                                                                    \
         true}
#define FU_INT(f)                                                               \
  Column{#f, [](const MetricsRecord& r) { return std::to_string(r.f); },       \
         [](MetricsRecord& r, const std::string& s) {                          \
           r.f = parse_num<decltype(MetricsRecord::f)>(s, #f);                 \
         },                                                                    \
         true}

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      FU_TEXT(scenario),    FU_TEXT(phase),      FU_INT(round),        FU_NUM(accuracy),
      FU_NUM(loss),         FU_NUM(mia_precision), FU_NUM(mia_recall), FU_NUM(time_train),
      FU_NUM(time_aggregate), FU_NUM(time_commit), FU_NUM(time_seal),  FU_NUM(time_lv),
      FU_NUM(time_lr),      FU_NUM(time_total),  FU_INT(count_lv),     FU_INT(count_lr),
      FU_NUM(deviation),    FU_TEXT(verification),
  };
  return cols;
}

#undef FU_TEXT
#undef FU_NUM
#undef FU_INT

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void MetricsRecord::set_times(const SimClock::Snapshot& s) {
  auto t = [&](OpClass c) { return s.time[static_cast<std::size_t>(c)]; };
  time_train = t(OpClass::kTrain);
  time_aggregate = t(OpClass::kAggregate);
  time_commit = t(OpClass::kCommit);
  time_seal = t(OpClass::kSeal);
  time_lv = t(OpClass::kVerify);
  time_lr = t(OpClass::kRewrite);
  time_total = s.total();
  count_lv = s.count[static_cast<std::size_t>(OpClass::kVerify)];
  count_lr = s.count[static_cast<std::size_t>(OpClass::kRewrite)];
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& c : columns()) n.emplace_back(c.name);
    return n;
  }();
  return names;
}

std::string to_csv(std::span<const MetricsRecord> records) {
  std::string out;
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i].name;
  }
  out += '\n';
  for (const auto& r : records) {
    check_text(r.scenario);
    check_text(r.phase);
    check_text(r.verification);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out += ',';
      out += cols[i].get(r);
    }
    out += '\n';
  }
  return out;
}

std::vector<MetricsRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParse, "metrics CSV has no header");
  const auto& cols = columns();
  if (split(line) != metrics_columns()) fail(ErrorCode::kParse, "metrics CSV header does not match");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != cols.size()) fail(ErrorCode::kParse, "metrics CSV row has wrong column count");
    MetricsRecord r;
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i].set(r, cells[i]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_jsonl(std::span<const MetricsRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    for (const auto& c : columns()) {
      // Numbers go through the same text form as the CSV.
      j[c.name] = c.numeric ? nlohmann::ordered_json::parse(c.get(r)) : nlohmann::ordered_json(c.get(r));
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<MetricsRecord> parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, std::string("metrics JSONL: ") + e.what());
    }
    MetricsRecord r;
    for (const auto& c : columns()) {
      if (!j.contains(c.name)) fail(ErrorCode::kParse, std::string("metrics JSONL missing ") + c.name);
      const auto& v = j[c.name];
      if (c.numeric) {
        if (!v.is_number()) fail(ErrorCode::kParse, std::string("metrics JSONL ") + c.name + " not a number");
        // Re-render with the same formatter so parsing is the inverse of to_jsonl.
        c.set(r, v.is_number_float() ? fmt(v.get<double>()) : v.dump());
      } else {
        if (!v.is_string()) fail(ErrorCode::kParse, std::string("metrics JSONL ") + c.name + " not a string");
        c.set(r, v.get<std::string>());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void emit_metrics(std::span<const MetricsRecord> records, const std::filesystem::path& stem) {
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f || !(f << body) || !f.flush()) fail(ErrorCode::kIo, "cannot write " + p.string());
  };
  auto csv = stem;
  csv += ".csv";
  auto jsonl = stem;
  jsonl += ".jsonl";
  write(csv, to_csv(records));
  write(jsonl, to_jsonl(records));
}

}  // namespace fedunlearn
