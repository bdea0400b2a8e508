#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "proactive/error.hpp"
#include "proactive/promptcraft.hpp"
#include "proactive/text.hpp"

namespace proactive::promptcraft {

// Defined in the build-generated embedded_templates.cpp.
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_template_sources();

namespace {

struct StageName {
  Stage stage;
  std::string_view name;
};

constexpr StageName kStageNames[] = {
    {Stage::kDirect, "DIRECT"}, {Stage::kP1, "P1"},         {Stage::kP2, "P2"},
    {Stage::kP3, "P3"},         {Stage::kThreeInOne, "THREE_IN_ONE"}, {Stage::kJudge, "JUDGE"},
    {Stage::kUserSim, "USER_SIM"}, {Stage::kReactive, "REACTIVE"},    {Stage::kSimUser, "SIM_USER"},
};

bool is_ident_start(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) {
  return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
}

// Calls on_text / on_placeholder for each piece of the body, left to right.
// Any brace that is not part of a {name} placeholder is rejected.
template <typename Text, typename Hole>
void scan(std::string_view body, Text on_text, Hole on_placeholder) {
  std::size_t i = 0, run = 0;
  while (i < body.size()) {
    char c = body[i];
    if (c == '{') {
      std::size_t j = i + 1;
      if (j < body.size() && is_ident_start(body[j])) {
        while (j < body.size() && is_ident(body[j])) ++j;
        if (j < body.size() && body[j] == '}') {
          on_text(body.substr(run, i - run));
          on_placeholder(body.substr(i + 1, j - i - 1));
          i = run = j + 1;
          continue;
        }
      }
      throw Error(ErrorCode::kTemplateInvalid, "stray '{' at offset " + std::to_string(i));
    }
    if (c == '}') throw Error(ErrorCode::kTemplateInvalid, "stray '}' at offset " + std::to_string(i));
    ++i;
  }
  on_text(body.substr(run));
}

std::set<std::string> parse_list(std::string_view v) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    auto comma = v.find(',', pos);
    auto item = text::trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) {
      std::string name(item);
      if (name.size() > 2 && name.front() == '{' && name.back() == '}') name = name.substr(1, name.size() - 2);
      out.insert(name);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string list_str(const std::set<std::string>& s) {
  return text::join(std::vector<std::string>(s.begin(), s.end()), ", ");
}

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& s : kStageNames)
    if (s.stage == stage) return s.name;
  return "?";
}

Stage parse_stage(std::string_view s) {
  std::string upper(text::trim(s));
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(upper.begin(), upper.end(), '-', '_');
  if (upper == "3_IN_1" || upper == "3IN1") upper = "THREE_IN_ONE";
  for (const auto& n : kStageNames)
    if (n.name == upper) return n.stage;
  throw Error(ErrorCode::kTemplateInvalid, "unknown stage '" + std::string(s) + "'");
}

const std::set<std::string>& allowed_placeholders(Stage stage) {
  static const std::map<Stage, std::set<std::string>> table = {
      {Stage::kDirect, {"query", "demonstrations"}},
      {Stage::kP1, {"query", "context"}},
      {Stage::kP2, {"query", "answer"}},
      {Stage::kP3, {"query", "info", "demonstrations"}},
      {Stage::kThreeInOne, {"query", "context", "demonstrations"}},
      {Stage::kJudge, {"query", "response"}},
      {Stage::kUserSim, {"context", "response"}},
      {Stage::kReactive, {"context"}},
      {Stage::kSimUser, {"context"}},
  };
  return table.at(stage);
}

std::set<std::string> placeholders_in(std::string_view body) {
  std::set<std::string> out;
  scan(body, [](std::string_view) {}, [&](std::string_view name) { out.emplace(name); });
  return out;
}

PromptTemplate parse_template(std::string_view source, std::string_view fallback_name) {
  std::string src(source);
  src.erase(std::remove(src.begin(), src.end(), '\r'), src.end());
  std::string_view sv(src);

  PromptTemplate t;
  t.name = std::string(fallback_name);
  std::optional<std::set<std::string>> declared;
  bool have_stage = false;

  if (sv.rfind("---\n", 0) != 0)
    throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "' lacks a front-matter block");
  auto end = sv.find("\n---", 3);
  if (end == std::string_view::npos)
    throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "' has an unterminated front-matter block");
  auto header = sv.substr(4, end - 4 + 1);
  auto body_start = sv.find('\n', end + 4);
  auto body = body_start == std::string_view::npos ? std::string_view{} : sv.substr(body_start + 1);

  std::size_t pos = 0;
  while (pos < header.size()) {
    auto nl = header.find('\n', pos);
    auto line = text::trim(header.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? header.size() : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorCode::kTemplateInvalid, "front-matter line without ':' in '" + t.name + "'");
    auto key = text::to_lower(text::trim(line.substr(0, colon)));
    auto value = text::trim(line.substr(colon + 1));
    if (key == "name") {
      t.name = std::string(value);
    } else if (key == "kind") {
      auto v = text::to_lower(value);
      if (v == "any" || v.empty()) t.kind.reset();
      else t.kind = core::parse_element_kind(value);
    } else if (key == "stage") {
      t.stage = parse_stage(value);
      have_stage = true;
    } else if (key == "version") {
      try {
        t.version = std::stoi(std::string(value));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kTemplateInvalid, "bad version in '" + t.name + "'");
      }
    } else if (key == "placeholders") {
      declared = parse_list(value);
    }
  }
  if (t.name.empty()) throw Error(ErrorCode::kTemplateInvalid, "template has no name");
  if (!have_stage) throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "' has no stage");

  // Trailing newline of the file is not part of the prompt.
  while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) body.remove_suffix(1);
  t.body = std::string(body);

  std::set<std::string> used;
  try {
    used = placeholders_in(t.body);
  } catch (const Error& e) {
    throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "': " + e.what());
  }
  if (declared && *declared != used)
    throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "' declares {" + list_str(*declared) +
                                                 "} but its body uses {" + list_str(used) + "}");
  const auto& allowed = allowed_placeholders(t.stage);
  for (const auto& p : used)
    if (!allowed.count(p))
      throw Error(ErrorCode::kTemplateInvalid, "template '" + t.name + "' uses {" + p + "}, not allowed for stage " +
                                                   std::string(to_string(t.stage)));
  t.placeholders = std::move(used);
  return t;
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& p : tmpl.placeholders)
    if (!bindings.count(p)) throw Error(ErrorCode::kMissingPlaceholder, "MISSING_PLACEHOLDER(\"" + p + "\")");
  std::string out;
  out.reserve(tmpl.body.size() + 256);
  scan(
      tmpl.body, [&](std::string_view s) { out.append(s); },
      [&](std::string_view name) {
        auto it = bindings.find(std::string(name));
        if (it == bindings.end())
          throw Error(ErrorCode::kMissingPlaceholder, "MISSING_PLACEHOLDER(\"" + std::string(name) + "\")");
        out.append(it->second);
      });
  return out;
}

// ---------------------------------------------------------------------------

TemplateLibrary TemplateLibrary::builtin() {
  static const TemplateLibrary lib = [] {
    TemplateLibrary l;
    for (const auto& [name, source] : embedded_template_sources()) l.put(parse_template(source, name));
    return l;
  }();
  return lib;
}

TemplateLibrary TemplateLibrary::with_overrides(const std::filesystem::path& dir) {
  auto lib = builtin();
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw Error(ErrorCode::kConfigError, "template directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tmpl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read template '" + f.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    lib.put(parse_template(ss.str(), f.stem().string()));
  }
  return lib;
}

void TemplateLibrary::put(PromptTemplate tmpl) {
  auto name = tmpl.name;
  templates_.insert_or_assign(std::move(name), std::move(tmpl));
}

const PromptTemplate& TemplateLibrary::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::kConfigError, "no template named '" + std::string(name) + "'");
  return it->second;
}

bool TemplateLibrary::contains(std::string_view name) const { return templates_.find(name) != templates_.end(); }

std::vector<std::string> TemplateLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : templates_) out.push_back(name);
  return out;
}

namespace {
std::string suffix(ElementKind kind) { return kind == ElementKind::kFollowUpQuestion ? "fq" : "ai"; }
}  // namespace

std::string direct_name(ElementKind kind) { return "direct_" + suffix(kind); }
std::string three_in_one_name(ElementKind kind, bool dialogue) {
  return "three_in_one_" + suffix(kind) + (dialogue ? "_dialogue" : "");
}
std::string p3_name(ElementKind kind) { return "p3_" + suffix(kind); }
std::string judge_name(ElementKind kind) { return "judge_" + suffix(kind); }

// ---------------------------------------------------------------------------

namespace {

std::string postprocess_once(std::string_view raw) {
  std::string unescaped;
  unescaped.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\\' && i + 1 < raw.size()) {
      char n = raw[i + 1];
      switch (n) {
        case 'n':
        case 't':
        case 'r':
          unescaped.push_back(' ');
          ++i;
          continue;
        case '"':
        case '\'':
        case '\\':
          unescaped.push_back(n);
          ++i;
          continue;
        default:
          break;
      }
    }
    unescaped.push_back(c);
  }
  std::string out;
  out.reserve(unescaped.size());
  bool pending_space = false;
  for (char c : unescaped) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string postprocess(std::string_view raw) {
  // Every pass that changes the text makes it strictly shorter, so this ends.
  std::string cur = postprocess_once(raw);
  for (;;) {
    auto next = postprocess_once(cur);
    if (next == cur) return cur;
    cur = std::move(next);
  }
}

}  // namespace proactive::promptcraft
