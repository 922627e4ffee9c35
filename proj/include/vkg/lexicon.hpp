#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vkg {

/// 'n' or 'v'.
using PosChar = char;

/// `lemma.pos.NN`; virtual ids read `slug.virtual.pos.NN`.
bool is_virtual_id(std::string_view id);
/// pos letter of an id, throws invalid-synset-id when it is not n/v.
PosChar pos_of_id(std::string_view id);

/// Lowercase, runs of non-alphanumerics collapsed to '_'.
std::string lemma_slug(std::string_view name);

struct Synset {
  std::string id;
  PosChar pos = 'n';
  std::vector<std::string> lemmas;
  std::string gloss;
  std::vector<std::string> hypernyms;
  std::vector<std::string> hyponyms;  // real hyponyms only; see LexiconDb::hyponyms
  int depth = 0;      // shortest path to a root
  int max_depth = 0;  // longest path to a root; ranks common hypernyms
  bool is_virtual = false;
};

struct VirtualSynset {
  std::string id;
  std::string parent;
  std::string name;
  std::string classifier_ref;
  std::string created_at;

  friend bool operator==(const VirtualSynset&, const VirtualSynset&) = default;
};

/// Bag of lowercased words with multiplicities.
using WordBag = std::map<std::string, int>;
WordBag make_bag(const std::vector<std::string>& words);
/// Sum over words of min(count_a, count_b).
int bag_overlap(const WordBag& a, const WordBag& b);

class LexiconDb {
 public:
  LexiconDb();
  ~LexiconDb();
  LexiconDb(LexiconDb&&) noexcept;
  LexiconDb& operator=(LexiconDb&&) noexcept;

  /// A directory with index.{noun,verb} + data.{noun,verb} (and optional
  /// *.exc), or a fixture file of `id|lemma,lemma|gloss|hyper,hyper` lines.
  static LexiconDb load(const std::filesystem::path& path);
  static LexiconDb from_fixture(std::string_view text, const std::string& source = "fixture");

  std::size_t size() const { return synsets_.size(); }

  /// Real or virtual.
  const Synset* find(std::string_view id) const;
  /// Throws synset-not-found.
  const Synset& at(std::string_view id) const;

  /// Sense order; never returns virtual or synthetic synsets. The lemma is
  /// matched lowercased with spaces as '_'.
  std::vector<const Synset*> synsets_of(std::string_view lemma, PosChar pos) const;

  /// Base form present in the lexicon (exceptions, then suffix rules), or nullopt.
  std::optional<std::string> morphy(std::string_view word, PosChar pos) const;

  /// Root shared by every synset of `pos`: the single real root, or a
  /// synthetic `root.<pos>.00` above several.
  const std::string& root(PosChar pos) const;

  /// Hypernym closure including `id` itself. Virtual ids include their parent chain.
  std::vector<std::string> ancestors(std::string_view id) const;
  bool is_ancestor_or_self(std::string_view ancestor, std::string_view id) const;

  /// Real hyponyms followed by registered virtual children.
  std::vector<std::string> hyponyms(std::string_view id) const;

  /// Every hypernym edge (child, parent) lying on some path from `from` up to `to`.
  std::vector<std::pair<std::string, std::string>> edges_between(std::string_view from, std::string_view to) const;

  /// Common ancestor-or-self with the largest max_depth, ties to the smallest id. Virtual ids
  /// resolve to their parent first.
  const Synset& lowest_common_hypernym(std::string_view a, std::string_view b) const;

  /// Simplified Lesk. Throws unknown-lemma when there is no candidate.
  std::string lesk_disambiguate(std::string_view lemma, PosChar pos, const WordBag& context) const;

  /// Attaches a persistent registry file: existing records are loaded and
  /// later registrations are appended.
  void attach_registry(const std::filesystem::path& path);

  /// Throws parent-not-found, parent-virtual, duplicate-name.
  VirtualSynset register_virtual(std::string_view parent, std::string_view name, std::string classifier_ref = {},
                                 std::string created_at = {});
  void set_virtual_classifier(std::string_view id, std::string classifier_ref);
  std::vector<VirtualSynset> virtual_synsets() const;
  std::optional<VirtualSynset> virtual_synset(std::string_view id) const;

  /// Resolves a virtual id to its parent; real ids pass through.
  std::string resolve(std::string_view id) const;

  /// Hash over synset ids and hypernym links.
  const std::string& fingerprint() const { return fingerprint_; }

  /// Clock used for created_at when none is given.
  void set_clock(std::function<std::string()> clock);

 private:
  void finalize();
  void add_virtual_locked(const VirtualSynset& v);
  const Synset* find_locked(std::string_view id) const;

  std::vector<Synset> synsets_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_lemma_[2];
  std::unordered_map<std::string, std::vector<std::string>> exceptions_[2];
  std::string roots_[2];
  std::string fingerprint_;

  std::unique_ptr<std::shared_mutex> mutex_;
  std::map<std::string, Synset, std::less<>> virtual_nodes_;
  std::map<std::string, VirtualSynset, std::less<>> virtual_records_;
  std::map<std::string, std::vector<std::string>, std::less<>> virtual_children_;
  std::optional<std::filesystem::path> registry_path_;
  std::function<std::string()> clock_;
};

/// ISO-8601 UTC seconds.
std::string utc_timestamp_now();

}  // namespace vkg
