#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "proactive/core.hpp"
#include "proactive/error.hpp"
#include "proactive/text.hpp"

namespace proactive::core {

using nlohmann::json;

std::string_view to_string(ElementKind kind) {
  return kind == ElementKind::kFollowUpQuestion ? "FQ" : "AI";
}

ElementKind parse_element_kind(std::string_view s) {
  auto lower = text::to_lower(s);
  if (lower == "fq") return ElementKind::kFollowUpQuestion;
  if (lower == "ai") return ElementKind::kAdditionalInformation;
  throw Error(ErrorCode::kInvalidArgument, "unknown element kind '" + std::string(s) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnsplit: return "unsplit";
  }
  return "unsplit";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "unsplit") return Split::kUnsplit;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(s) + "'");
}

std::string_view to_string(Label label) { return label == Label::kValid ? "valid" : "invalid"; }

Label parse_label(std::string_view s) {
  if (s == "valid") return Label::kValid;
  if (s == "invalid") return Label::kInvalid;
  throw Error(ErrorCode::kInvalidArgument, "unknown label '" + std::string(s) + "'");
}

ProactiveResponse ProactiveResponse::answer_only(std::string answer) {
  if (text::is_blank(answer)) throw Error(ErrorCode::kEmptyText, "response answer is empty");
  ProactiveResponse r;
  r.answer_ = std::move(answer);
  r.full_text_ = r.answer_;
  return r;
}

ProactiveResponse ProactiveResponse::with_element(std::string answer, std::string element,
                                                  ElementKind kind) {
  ProactiveResponse r = answer_only(std::move(answer));
  r.full_text_ = r.answer_ + " " + element;
  r.element_ = std::move(element);
  r.element_kind_ = kind;
  return r;
}

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::kMalformedRecord,
              "MALFORMED_RECORD(" + std::to_string(line) + "): " + why);
}

std::optional<std::string> optional_string(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) malformed(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string required_string(const json& rec, const char* key, std::size_t line) {
  auto v = optional_string(rec, key, line);
  if (!v) malformed(line, std::string("missing field '") + key + "'");
  return *v;
}

json nullable(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

CorpusSample sample_from_json(const json& rec, std::size_t line) {
  if (!rec.is_object()) malformed(line, "record is not a JSON object");
  CorpusSample s;
  s.id = required_string(rec, "id", line);
  s.query = required_string(rec, "query", line);
  if (text::is_blank(s.query)) malformed(line, "query is empty");
  auto answer = required_string(rec, "answer", line);
  if (text::is_blank(answer)) malformed(line, "answer is empty");
  auto element = optional_string(rec, "element", line);
  auto kind_str = optional_string(rec, "element_kind", line);
  if (!kind_str) malformed(line, "missing field 'element_kind'");
  try {
    s.kind = parse_element_kind(*kind_str);
    if (auto sp = optional_string(rec, "split", line)) s.split = parse_split(*sp);
    if (auto lb = optional_string(rec, "label", line)) s.label = parse_label(*lb);
  } catch (const Error& e) {
    malformed(line, e.what());
  }
  s.response = element ? ProactiveResponse::with_element(std::move(answer), std::move(*element), s.kind)
                       : ProactiveResponse::answer_only(std::move(answer));
  s.long_answer = optional_string(rec, "long_answer", line);
  return s;
}

json sample_to_json(const CorpusSample& s) {
  json j;
  j["id"] = s.id;
  j["query"] = s.query;
  j["answer"] = s.response.answer();
  j["element"] = nullable(s.response.element());
  j["element_kind"] = std::string(to_string(s.kind));
  j["long_answer"] = nullable(s.long_answer);
  j["split"] = std::string(to_string(s.split));
  j["label"] = s.label ? json(std::string(to_string(*s.label))) : json(nullptr);
  return j;
}

std::vector<CorpusSample> parse_corpus(std::string_view jsonl) {
  std::vector<CorpusSample> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++line_no;
    if (text::is_blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed(line_no, e.what());
    }
    auto sample = sample_from_json(rec, line_no);
    if (!ids.insert(sample.id).second)
      throw Error(ErrorCode::kDuplicateId,
                  "DUPLICATE_ID: '" + sample.id + "' at line " + std::to_string(line_no));
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<CorpusSample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open corpus '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string corpus_to_jsonl(const std::vector<CorpusSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += sample_to_json(s).dump();
    out.push_back('\n');
  }
  return out;
}

void save_corpus(const std::vector<CorpusSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  out << corpus_to_jsonl(samples);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path.string() + "'");
}

std::vector<CorpusSample> filter_corpus(const std::vector<CorpusSample>& samples,
                                        std::size_t min_query_tokens, std::size_t max_query_tokens,
                                        std::size_t min_long_answer_tokens) {
  if (min_query_tokens > max_query_tokens)
    throw Error(ErrorCode::kInvalidBounds,
                "INVALID_BOUNDS: min_query_tokens " + std::to_string(min_query_tokens) +
                    " > max_query_tokens " + std::to_string(max_query_tokens));
  std::vector<CorpusSample> out;
  for (const auto& s : samples) {
    auto q = text::count_tokens(s.query);
    if (q < min_query_tokens || q > max_query_tokens) continue;
    if (min_long_answer_tokens > 0) {
      if (!s.long_answer || text::count_tokens(*s.long_answer) < min_long_answer_tokens) continue;
    }
    out.push_back(s);
  }
  return out;
}

std::vector<CorpusSample> split_corpus(const std::vector<CorpusSample>& samples,
                                       std::size_t train_per_kind, std::int64_t seed) {
  std::map<ElementKind, std::vector<std::size_t>> by_kind;
  for (std::size_t i = 0; i < samples.size(); ++i) by_kind[samples[i].kind].push_back(i);

  for (ElementKind kind : kAllKinds) {
    auto have = by_kind.count(kind) ? by_kind[kind].size() : 0;
    if (have < train_per_kind)
      throw Error(ErrorCode::kInsufficientSamples,
                  "INSUFFICIENT_SAMPLES(" + std::string(to_string(kind)) + "): have " +
                      std::to_string(have) + ", need " + std::to_string(train_per_kind));
  }

  const std::string seed_prefix = std::to_string(seed) + ":";
  std::vector<CorpusSample> out = samples;
  for (auto& [kind, indices] : by_kind) {
    std::vector<std::tuple<std::uint64_t, std::string, std::size_t>> keyed;
    keyed.reserve(indices.size());
    for (auto i : indices)
      keyed.emplace_back(text::fnv1a64(seed_prefix + samples[i].id), samples[i].id, i);
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t r = 0; r < keyed.size(); ++r)
      out[std::get<2>(keyed[r])].split = r < train_per_kind ? Split::kTrain : Split::kTest;
  }
  return out;
}

namespace {

struct Totals {
  std::size_t n = 0;
  double query = 0, response = 0, element = 0;

  void add(const CorpusSample& s) {
    ++n;
    query += static_cast<double>(text::count_tokens(s.query));
    response += static_cast<double>(text::count_tokens(s.response.full_text()));
    if (s.response.element()) element += static_cast<double>(text::count_tokens(*s.response.element()));
  }

  TokenAverages averages() const {
    TokenAverages a;
    a.n_samples = n;
    if (n == 0) return a;
    auto d = static_cast<double>(n);
    a.avg_query_tokens = query / d;
    a.avg_response_tokens = response / d;
    a.avg_element_tokens = element / d;
    return a;
  }
};

json averages_json(const TokenAverages& a) {
  return {{"n_samples", a.n_samples},
          {"avg_query_tokens", a.avg_query_tokens},
          {"avg_response_tokens", a.avg_response_tokens},
          {"avg_element_tokens", a.avg_element_tokens}};
}

}  // namespace

CorpusStats corpus_stats(const std::vector<CorpusSample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyCorpus, "EMPTY_CORPUS: no samples to aggregate");
  Totals all;
  std::map<ElementKind, Totals> per;
  for (const auto& s : samples) {
    all.add(s);
    per[s.kind].add(s);
  }
  CorpusStats st;
  auto a = all.averages();
  st.n_samples = a.n_samples;
  st.avg_query_tokens = a.avg_query_tokens;
  st.avg_response_tokens = a.avg_response_tokens;
  st.avg_element_tokens = a.avg_element_tokens;
  for (const auto& [kind, t] : per) st.per_kind[kind] = t.averages();
  return st;
}

json stats_to_json(const CorpusStats& st) {
  TokenAverages overall{st.n_samples, st.avg_query_tokens, st.avg_response_tokens, st.avg_element_tokens};
  json j = averages_json(overall);
  j["per_kind"] = json::object();
  for (const auto& [kind, a] : st.per_kind) j["per_kind"][std::string(to_string(kind))] = averages_json(a);
  return j;
}

std::size_t export_sft(const std::vector<CorpusSample>& samples, const InstructionRenderer& render,
                       const std::filesystem::path& path) {
  for (const auto& s : samples)
    if (s.split != Split::kTrain)
      throw Error(ErrorCode::kNonTrainSample,
                  "NON_TRAIN_SAMPLE: '" + s.id + "' has split " + std::string(to_string(s.split)));
  std::string body;
  for (const auto& s : samples) {
    json rec{{"id", s.id},
             {"kind", std::string(to_string(s.kind))},
             {"instruction", render(s)},
             {"response", s.response.full_text()}};
    body += rec.dump();
    body.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "IO_ERROR: cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw Error(ErrorCode::kIoError, "IO_ERROR: write failed for '" + path.string() + "'");
  return samples.size();
}

std::size_t export_sft(const std::vector<CorpusSample>& samples,
                       std::string_view instruction_template, const std::filesystem::path& path) {
  const std::string tmpl(instruction_template);
  return export_sft(
      samples,
      [&tmpl](const CorpusSample& s) {
        std::string out;
        std::size_t pos = 0;
        for (std::size_t hit; (hit = tmpl.find("{query}", pos)) != std::string::npos; pos = hit + 7) {
          out.append(tmpl, pos, hit - pos);
          out += s.query;
        }
        out.append(tmpl, pos);
        return out;
      },
      path);
}

}  // namespace proactive::core
