#include "vkg/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <deque>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#include "vkg/error.hpp"
#include "vkg/hash.hpp"
#include "vkg/text.hpp"

namespace vkg {

namespace {

int pos_slot(PosChar pos) {
  if (pos == 'n') return 0;
  if (pos == 'v') return 1;
  throw Error("invalid-pos", std::string("unsupported part of speech '") + pos + "'");
}

std::string normalize_lemma(std::string_view lemma) {
  std::string out = to_lower(trim(lemma));
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string two_digits(std::size_t n) {
  std::string s = std::to_string(n);
  return s.size() < 2 ? "0" + s : s;
}

struct RawSynset {
  std::string offset;
  std::vector<std::string> lemmas;
  std::string gloss;
  std::vector<std::string> hypernym_offsets;
};

[[noreturn]] void parse_fail(const std::string& what, const std::string& file, std::size_t line,
                             const std::string& offset = {}) {
  std::string ctx = file + ":" + std::to_string(line);
  if (!offset.empty()) ctx += " offset " + offset;
  throw Error("parse-error", what + " (" + ctx + ")", ctx);
}

}  // namespace

bool is_virtual_id(std::string_view id) {
  const auto parts = split(id, '.');
  return parts.size() >= 4 && parts[parts.size() - 3] == "virtual";
}

PosChar pos_of_id(std::string_view id) {
  const auto parts = split(id, '.');
  if (parts.size() < 3 || parts[parts.size() - 2].size() != 1 ||
      (parts[parts.size() - 2][0] != 'n' && parts[parts.size() - 2][0] != 'v')) {
    throw Error("invalid-synset-id", "not a lemma.pos.NN id: " + std::string(id), std::string(id));
  }
  const auto& sense = parts.back();
  if (sense.size() != 2 || !std::isdigit(static_cast<unsigned char>(sense[0])) ||
      !std::isdigit(static_cast<unsigned char>(sense[1]))) {
    throw Error("invalid-synset-id", "sense must be two digits: " + std::string(id), std::string(id));
  }
  return parts[parts.size() - 2][0];
}

std::string lemma_slug(std::string_view name) {
  std::string out;
  bool gap = false;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (gap && !out.empty()) out += '_';
      out += static_cast<char>(std::tolower(u));
      gap = false;
    } else {
      gap = true;
    }
  }
  return out;
}

WordBag make_bag(const std::vector<std::string>& words) {
  WordBag bag;
  for (const auto& w : words) ++bag[w];
  return bag;
}

int bag_overlap(const WordBag& a, const WordBag& b) {
  int total = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      total += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return total;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LexiconDb::LexiconDb() : mutex_(std::make_unique<std::shared_mutex>()), clock_(utc_timestamp_now) {}
LexiconDb::~LexiconDb() = default;
LexiconDb::LexiconDb(LexiconDb&&) noexcept = default;
LexiconDb& LexiconDb::operator=(LexiconDb&&) noexcept = default;

LexiconDb LexiconDb::from_fixture(std::string_view text, const std::string& source) {
  LexiconDb db;
  std::vector<std::vector<std::string>> hypers;
  std::vector<std::size_t> line_of;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cols = split(t, '|');
    if (cols.size() != 4) parse_fail("expected 4 '|' separated fields", source, lineno);
    Synset s;
    s.id = trim(cols[0]);
    try {
      s.pos = pos_of_id(s.id);
    } catch (const Error& e) {
      parse_fail(e.what(), source, lineno);
    }
    if (is_virtual_id(s.id)) parse_fail("virtual ids belong in the registry", source, lineno);
    if (db.by_id_.count(s.id)) parse_fail("duplicate id " + s.id, source, lineno);
    for (const auto& l : split(cols[1], ',')) {
      if (!trim(l).empty()) s.lemmas.push_back(trim(l));
    }
    if (s.lemmas.empty()) parse_fail("synset without lemmas", source, lineno);
    s.gloss = trim(cols[2]);
    std::vector<std::string> hs;
    for (const auto& h : split(cols[3], ',')) {
      if (!trim(h).empty()) hs.push_back(trim(h));
    }
    db.by_id_[s.id] = db.synsets_.size();
    for (const auto& l : s.lemmas) db.by_lemma_[pos_slot(s.pos)][normalize_lemma(l)].push_back(db.synsets_.size());
    db.synsets_.push_back(std::move(s));
    hypers.push_back(std::move(hs));
    line_of.push_back(lineno);
  }
  for (std::size_t i = 0; i < db.synsets_.size(); ++i) {
    for (const auto& h : hypers[i]) {
      auto it = db.by_id_.find(h);
      if (it == db.by_id_.end()) parse_fail("unknown hypernym " + h, source, line_of[i]);
      if (db.synsets_[it->second].pos != db.synsets_[i].pos) {
        parse_fail("hypernym " + h + " has a different part of speech", source, line_of[i]);
      }
      db.synsets_[i].hypernyms.push_back(h);
    }
  }
  db.finalize();
  return db;
}

namespace {

std::unordered_map<std::string, std::vector<std::string>> read_index(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<std::string>> out;
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string(), path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == ' ') continue;
    const auto tok = split_ws(line);
    if (tok.size() < 4) parse_fail("short index line", path.filename().string(), lineno);
    std::size_t n = 0;
    std::size_t p = 0;
    try {
      n = std::stoul(tok[2]);
      p = std::stoul(tok[3]);
    } catch (const std::exception&) {
      parse_fail("bad counts in index line", path.filename().string(), lineno);
    }
    if (tok.size() < 4 + p + 2 + n) parse_fail("truncated index line", path.filename().string(), lineno);
    out[tok[0]] = std::vector<std::string>(tok.end() - static_cast<std::ptrdiff_t>(n), tok.end());
  }
  return out;
}

std::vector<RawSynset> read_data(const std::filesystem::path& path, PosChar pos) {
  std::vector<RawSynset> out;
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string(), path.string());
  const std::string file = path.filename().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == ' ') continue;
    const auto bar = line.find('|');
    const auto tok = split_ws(line.substr(0, bar));
    const std::string offset = tok.empty() ? std::string() : tok[0];
    if (bar == std::string::npos) parse_fail("data line without gloss", file, lineno, offset);
    if (tok.size() < 4) parse_fail("truncated data line", file, lineno, offset);
    RawSynset r;
    r.offset = offset;
    r.gloss = trim(line.substr(bar + 1));
    std::size_t words = 0;
    try {
      words = std::stoul(tok[3], nullptr, 16);
    } catch (const std::exception&) {
      parse_fail("bad word count", file, lineno, offset);
    }
    std::size_t i = 4;
    if (tok.size() < i + 2 * words + 1) parse_fail("truncated data line", file, lineno, offset);
    for (std::size_t w = 0; w < words; ++w, i += 2) r.lemmas.push_back(tok[i]);
    std::size_t pointers = 0;
    try {
      pointers = std::stoul(tok[i]);
    } catch (const std::exception&) {
      parse_fail("bad pointer count", file, lineno, offset);
    }
    ++i;
    if (tok.size() < i + 4 * pointers) parse_fail("truncated data line", file, lineno, offset);
    for (std::size_t k = 0; k < pointers; ++k, i += 4) {
      const auto& sym = tok[i];
      if ((sym == "@" || sym == "@i") && tok[i + 2].size() == 1 && tok[i + 2][0] == pos) {
        r.hypernym_offsets.push_back(tok[i + 1]);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::unordered_map<std::string, std::vector<std::string>> read_exceptions(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<std::string>> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    auto tok = split_ws(line);
    if (tok.size() < 2) continue;
    out[tok[0]] = std::vector<std::string>(tok.begin() + 1, tok.end());
  }
  return out;
}

}  // namespace

LexiconDb LexiconDb::load(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) {
    if (!std::filesystem::exists(path)) throw Error("io-error", "no lexicon at " + path.string(), path.string());
    return from_fixture(read_file(path), path.filename().string());
  }
  LexiconDb db;
  const std::pair<PosChar, const char*> files[] = {{'n', "noun"}, {'v', "verb"}};
  std::vector<std::vector<std::string>> hyper_offsets;
  std::vector<std::string> offset_key;
  std::unordered_map<std::string, std::size_t> by_offset;  // "n:00001740"
  for (const auto& [pos, name] : files) {
    const auto index = read_index(path / (std::string("index.") + name));
    const auto raw = read_data(path / (std::string("data.") + name), pos);
    db.exceptions_[pos_slot(pos)] = read_exceptions(path / (std::string(name) + ".exc"));
    const std::size_t base = db.synsets_.size();
    for (const auto& r : raw) {
      by_offset[std::string(1, pos) + ":" + r.offset] = db.synsets_.size();
      Synset s;
      s.pos = pos;
      s.lemmas = r.lemmas;
      s.gloss = r.gloss;
      db.synsets_.push_back(std::move(s));
      hyper_offsets.push_back(r.hypernym_offsets);
      offset_key.push_back(r.offset);
    }
    // ids follow the sense position of the synset's first lemma
    for (std::size_t i = base; i < db.synsets_.size(); ++i) {
      auto& s = db.synsets_[i];
      const std::string lemma = to_lower(s.lemmas.front());
      auto it = index.find(lemma);
      std::size_t sense = 0;
      if (it != index.end()) {
        auto pos_it = std::find(it->second.begin(), it->second.end(), offset_key[i]);
        if (pos_it != it->second.end()) sense = static_cast<std::size_t>(pos_it - it->second.begin()) + 1;
      }
      if (sense == 0) {
        throw Error("parse-error", "synset " + offset_key[i] + " missing from index." + name,
                    std::string("data.") + name + " offset " + offset_key[i]);
      }
      s.id = lemma + "." + pos + "." + two_digits(sense);
      db.by_id_[s.id] = i;
    }
    for (const auto& [lemma, offsets] : index) {
      auto& list = db.by_lemma_[pos_slot(pos)][lemma];
      for (const auto& off : offsets) {
        auto it = by_offset.find(std::string(1, pos) + ":" + off);
        if (it == by_offset.end()) {
          throw Error("parse-error", "index." + std::string(name) + " points at unknown offset " + off,
                      std::string("index.") + name + " offset " + off);
        }
        list.push_back(it->second);
      }
    }
  }
  for (std::size_t i = 0; i < db.synsets_.size(); ++i) {
    for (const auto& off : hyper_offsets[i]) {
      auto it = by_offset.find(std::string(1, db.synsets_[i].pos) + ":" + off);
      if (it == by_offset.end()) {
        throw Error("parse-error", "hypernym offset " + off + " not found", "offset " + offset_key[i]);
      }
      db.synsets_[i].hypernyms.push_back(db.synsets_[it->second].id);
    }
  }
  db.finalize();
  return db;
}

void LexiconDb::finalize() {
  // synthetic root per pos with several roots
  for (PosChar pos : {'n', 'v'}) {
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < synsets_.size(); ++i) {
      if (synsets_[i].pos == pos && synsets_[i].hypernyms.empty()) roots.push_back(i);
    }
    if (roots.size() == 1) {
      roots_[pos_slot(pos)] = synsets_[roots[0]].id;
    } else if (roots.size() > 1) {
      Synset top;
      top.id = std::string("root.") + pos + ".00";
      top.pos = pos;
      top.gloss = "synthetic root";
      for (auto r : roots) synsets_[r].hypernyms.push_back(top.id);
      by_id_[top.id] = synsets_.size();
      roots_[pos_slot(pos)] = top.id;
      synsets_.push_back(std::move(top));
    }
  }
  for (auto& s : synsets_) s.hyponyms.clear();
  for (const auto& s : synsets_) {
    for (const auto& h : s.hypernyms) synsets_[by_id_.at(h)].hyponyms.push_back(s.id);
  }

  // depth = shortest path to a root; iterative DFS doubles as the cycle check
  std::vector<int> state(synsets_.size(), 0);  // 0 new, 1 on stack, 2 done
  for (std::size_t start = 0; start < synsets_.size(); ++start) {
    if (state[start] == 2) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
    state[start] = 1;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& hs = synsets_[node].hypernyms;
      if (next < hs.size()) {
        const std::size_t h = by_id_.at(hs[next++]);
        if (state[h] == 1) {
          throw Error("cycle-detected", "hypernym cycle through " + synsets_[h].id, synsets_[h].id);
        }
        if (state[h] == 0) {
          state[h] = 1;
          stack.emplace_back(h, 0);
        }
        continue;
      }
      int d = hs.empty() ? 0 : std::numeric_limits<int>::max();
      int md = 0;
      for (const auto& h : hs) {
        d = std::min(d, synsets_[by_id_.at(h)].depth + 1);
        md = std::max(md, synsets_[by_id_.at(h)].max_depth + 1);
      }
      synsets_[node].depth = d;
      synsets_[node].max_depth = md;
      state[node] = 2;
      stack.pop_back();
    }
  }

  std::string canon;
  for (const auto& s : synsets_) {
    canon += s.id;
    canon += '>';
    for (const auto& h : s.hypernyms) canon += h + ",";
    canon += '\n';
  }
  fingerprint_ = sha256_hex(canon);
}

const Synset* LexiconDb::find_locked(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it != by_id_.end()) return &synsets_[it->second];
  auto v = virtual_nodes_.find(id);
  return v == virtual_nodes_.end() ? nullptr : &v->second;
}

const Synset* LexiconDb::find(std::string_view id) const {
  std::shared_lock lock(*mutex_);
  return find_locked(id);
}

const Synset& LexiconDb::at(std::string_view id) const {
  const Synset* s = find(id);
  if (s == nullptr) throw Error("synset-not-found", "unknown synset " + std::string(id), std::string(id));
  return *s;
}

std::vector<const Synset*> LexiconDb::synsets_of(std::string_view lemma, PosChar pos) const {
  std::vector<const Synset*> out;
  auto it = by_lemma_[pos_slot(pos)].find(normalize_lemma(lemma));
  if (it == by_lemma_[pos_slot(pos)].end()) return out;
  for (auto i : it->second) out.push_back(&synsets_[i]);
  return out;
}

std::optional<std::string> LexiconDb::morphy(std::string_view word, PosChar pos) const {
  static const std::vector<std::pair<std::string, std::string>> noun_rules{
      {"s", ""}, {"ses", "s"}, {"xes", "x"}, {"zes", "z"}, {"ches", "ch"}, {"shes", "sh"}, {"men", "man"}, {"ies", "y"}};
  static const std::vector<std::pair<std::string, std::string>> verb_rules{
      {"s", ""}, {"ies", "y"}, {"es", "e"}, {"es", ""}, {"ed", "e"}, {"ed", ""}, {"ing", "e"}, {"ing", ""}};
  const int slot = pos_slot(pos);
  const std::string form = normalize_lemma(word);
  if (form.empty()) return std::nullopt;
  std::vector<std::string> candidates{form};
  auto exc = exceptions_[slot].find(form);
  if (exc != exceptions_[slot].end()) {
    candidates.insert(candidates.end(), exc->second.begin(), exc->second.end());
  } else {
    for (const auto& [suffix, repl] : pos == 'n' ? noun_rules : verb_rules) {
      if (form.size() > suffix.size() && form.ends_with(suffix)) {
        candidates.push_back(form.substr(0, form.size() - suffix.size()) + repl);
      }
    }
  }
  for (const auto& c : candidates) {
    if (by_lemma_[slot].count(c)) return c;
  }
  return std::nullopt;
}

const std::string& LexiconDb::root(PosChar pos) const {
  const auto& r = roots_[pos_slot(pos)];
  if (r.empty()) throw Error("synset-not-found", std::string("no synsets for pos ") + pos);
  return r;
}

std::vector<std::string> LexiconDb::ancestors(std::string_view id) const {
  std::shared_lock lock(*mutex_);
  if (find_locked(id) == nullptr) throw Error("synset-not-found", "unknown synset " + std::string(id), std::string(id));
  std::set<std::string> seen{std::string(id)};
  std::deque<std::string> todo{std::string(id)};
  while (!todo.empty()) {
    const Synset* s = find_locked(todo.front());
    todo.pop_front();
    for (const auto& h : s->hypernyms) {
      if (seen.insert(h).second) todo.push_back(h);
    }
  }
  return {seen.begin(), seen.end()};
}

bool LexiconDb::is_ancestor_or_self(std::string_view ancestor, std::string_view id) const {
  const auto all = ancestors(id);
  return std::binary_search(all.begin(), all.end(), std::string(ancestor));
}

std::vector<std::string> LexiconDb::hyponyms(std::string_view id) const {
  std::shared_lock lock(*mutex_);
  const Synset* s = find_locked(id);
  if (s == nullptr) throw Error("synset-not-found", "unknown synset " + std::string(id), std::string(id));
  auto out = s->hyponyms;
  auto v = virtual_children_.find(id);
  if (v != virtual_children_.end()) out.insert(out.end(), v->second.begin(), v->second.end());
  return out;
}

std::vector<std::pair<std::string, std::string>> LexiconDb::edges_between(std::string_view from,
                                                                          std::string_view to) const {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string target(to);
  for (const auto& u : ancestors(from)) {
    if (!is_ancestor_or_self(target, u) || u == target) continue;
    for (const auto& p : at(u).hypernyms) {
      if (is_ancestor_or_self(target, p)) out.emplace_back(u, p);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string LexiconDb::resolve(std::string_view id) const {
  const Synset& s = at(id);
  return s.is_virtual ? s.hypernyms.front() : s.id;
}

const Synset& LexiconDb::lowest_common_hypernym(std::string_view a, std::string_view b) const {
  const std::string ra = resolve(a);
  const std::string rb = resolve(b);
  const auto aa = ancestors(ra);
  const auto bb = ancestors(rb);
  std::vector<std::string> common;
  std::set_intersection(aa.begin(), aa.end(), bb.begin(), bb.end(), std::back_inserter(common));
  const Synset* best = nullptr;
  for (const auto& c : common) {  // sorted, so strict > keeps the smallest id on ties
    const Synset& s = at(c);
    if (best == nullptr || s.max_depth > best->max_depth) best = &s;
  }
  return best != nullptr ? *best : at(root(pos_of_id(ra)));
}

std::string LexiconDb::lesk_disambiguate(std::string_view lemma, PosChar pos, const WordBag& context) const {
  const auto candidates = synsets_of(lemma, pos);
  if (candidates.empty()) {
    throw Error("unknown-lemma", "no senses for " + std::string(lemma), std::string(lemma));
  }
  const Synset* best = candidates.front();
  int best_overlap = 0;
  for (const Synset* s : candidates) {
    auto words = word_tokens(s->gloss);
    for (const auto& l : s->lemmas) {
      for (const auto& part : split(to_lower(l), '_')) {
        if (!part.empty()) words.push_back(part);
      }
    }
    const int overlap = bag_overlap(make_bag(words), context);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = s;
    }
  }
  return best->id;
}

void LexiconDb::set_clock(std::function<std::string()> clock) { clock_ = std::move(clock); }

void LexiconDb::add_virtual_locked(const VirtualSynset& v) {
  const Synset* parent = find_locked(v.parent);
  if (parent == nullptr) throw Error("parent-not-found", "unknown parent " + v.parent, v.parent);
  if (parent->is_virtual) throw Error("parent-virtual", "parent " + v.parent + " is virtual", v.parent);
  if (find_locked(v.id) != nullptr) throw Error("duplicate-name", v.id + " already registered", v.id);
  Synset node;
  node.id = v.id;
  node.pos = parent->pos;
  node.lemmas = {lemma_slug(v.name)};
  node.gloss = v.name;
  node.hypernyms = {v.parent};
  node.depth = parent->depth + 1;
  node.max_depth = parent->max_depth + 1;
  node.is_virtual = true;
  virtual_nodes_.emplace(v.id, std::move(node));
  virtual_records_.emplace(v.id, v);
  virtual_children_[v.parent].push_back(v.id);
}

namespace {

std::string registry_text(const std::map<std::string, VirtualSynset, std::less<>>& records) {
  std::string out;
  for (const auto& [id, v] : records) {
    out += v.id + "|" + v.parent + "|" + v.name + "|" + v.classifier_ref + "|" + v.created_at + "\n";
  }
  return out;
}

void check_field(const std::string& value, const char* what) {
  if (value.find_first_of("|\n\r") != std::string::npos) {
    throw Error("invalid-name", std::string(what) + " may not contain '|' or line breaks", value);
  }
}

}  // namespace

void LexiconDb::attach_registry(const std::filesystem::path& path) {
  std::unique_lock lock(*mutex_);
  registry_path_ = path;
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split(line, '|');
    if (cols.size() != 5) parse_fail("expected 5 '|' separated fields", path.filename().string(), lineno);
    VirtualSynset v{cols[0], cols[1], cols[2], cols[3], cols[4]};
    if (!is_virtual_id(v.id)) parse_fail("not a virtual id: " + v.id, path.filename().string(), lineno);
    if (virtual_records_.count(v.id)) continue;
    add_virtual_locked(v);
  }
}

VirtualSynset LexiconDb::register_virtual(std::string_view parent, std::string_view name, std::string classifier_ref,
                                          std::string created_at) {
  const std::string slug = lemma_slug(name);
  if (slug.empty()) throw Error("invalid-name", "virtual synset name has no letters or digits", std::string(name));
  VirtualSynset v;
  v.parent = std::string(parent);
  v.name = trim(name);
  v.classifier_ref = std::move(classifier_ref);
  check_field(v.name, "name");
  check_field(v.classifier_ref, "classifier_ref");
  std::unique_lock lock(*mutex_);
  const Synset* p = find_locked(parent);
  if (p == nullptr) throw Error("parent-not-found", "unknown parent " + v.parent, v.parent);
  v.id = slug + ".virtual." + p->pos + ".01";
  v.created_at = created_at.empty() ? clock_() : std::move(created_at);
  add_virtual_locked(v);
  if (registry_path_) {
    try {
      write_file_atomic(*registry_path_, registry_text(virtual_records_));
    } catch (...) {
      virtual_nodes_.erase(v.id);
      virtual_records_.erase(v.id);
      auto& kids = virtual_children_[v.parent];
      kids.erase(std::remove(kids.begin(), kids.end(), v.id), kids.end());
      throw;
    }
  }
  return v;
}

void LexiconDb::set_virtual_classifier(std::string_view id, std::string classifier_ref) {
  check_field(classifier_ref, "classifier_ref");
  std::unique_lock lock(*mutex_);
  auto it = virtual_records_.find(id);
  if (it == virtual_records_.end()) throw Error("synset-not-found", "unknown virtual synset " + std::string(id));
  it->second.classifier_ref = std::move(classifier_ref);
  if (registry_path_) write_file_atomic(*registry_path_, registry_text(virtual_records_));
}

std::vector<VirtualSynset> LexiconDb::virtual_synsets() const {
  std::shared_lock lock(*mutex_);
  std::vector<VirtualSynset> out;
  for (const auto& [id, v] : virtual_records_) out.push_back(v);
  return out;
}

std::optional<VirtualSynset> LexiconDb::virtual_synset(std::string_view id) const {
  std::shared_lock lock(*mutex_);
  auto it = virtual_records_.find(id);
  if (it == virtual_records_.end()) return std::nullopt;
  return it->second;
}

}  // namespace vkg
