#pragma once

// Random KB generators shared by unit and acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "kb_builders.hpp"
#include "vkg/hash.hpp"
#include "vkg/kb.hpp"

namespace vkg::testing {

inline const std::vector<std::string> kTagVocab{"policeman", "chef", "man", "woman", "dog", "cat", "horse", "car",
    "ship", "knife", "kitchen", "sea", "idea", "worker", "guard", "person", "animal", "vehicle", "automobile",
    "officer", "police officer", "face mask", "zeppelin", "qwxz"};

/// Up to 5 windows of up to 4 keyframes, each with up to 10 tags. The
/// vocabulary mixes fixture lemmas, synonyms, a multiword lemma and unknowns.
inline VideoKnowledgeBase random_tag_kb(std::mt19937& rng, const std::string& video) {
  std::vector<std::vector<std::vector<std::string>>> windows(1 + rng() % 5);
  for (auto& w : windows) {
    w.resize(rng() % 5);
    for (auto& frame : w) {
      const int n = static_cast<int>(rng() % 11);
      for (int i = 0; i < n; ++i) frame.push_back(kTagVocab[rng() % kTagVocab.size()]);
    }
  }
  return kb_of(video, windows);
}

inline const std::vector<std::string> kNouns{"policeman", "chef", "man", "woman", "dog", "cat", "horse", "car",
    "ship", "knife", "kitchen", "sea", "idea", "guard", "worker", "person", "animal", "vehicle"};

/// Every keyframe has 1 to 4 tags drawn from `vocab`.
inline VideoKnowledgeBase random_noun_kb(std::mt19937& rng, const std::string& video,
                                         const std::vector<std::string>& vocab) {
  std::vector<std::vector<std::vector<std::string>>> windows(1 + rng() % 4);
  for (auto& w : windows) {
    w.resize(1 + rng() % 3);
    for (auto& frame : w) {
      for (int i = 0, n = 1 + static_cast<int>(rng() % 4); i < n; ++i) frame.push_back(vocab[rng() % vocab.size()]);
    }
  }
  return kb_of(video, windows);
}

/// A document exercising every KB field, boxes and quoting included.
inline VideoKnowledgeBase random_document_kb(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto box = [&] {
    const double x0 = u(rng) * 0.5;
    const double y0 = u(rng) * 0.5;
    return Box{x0, y0, x0 + 0.01 + u(rng) * 0.49, y0 + 0.01 + u(rng) * 0.49};
  };
  VideoKnowledgeBase kb;
  kb.video_id = "vid" + std::to_string(rng() % 100);
  kb.fingerprint = {{"keyframes", "tags", "captions"}, sha256_hex(std::to_string(rng()))};
  kb.created_at = "2024-05-06T07:08:09Z";
  const int windows = 1 + static_cast<int>(rng() % 4);
  double t = 0.0;
  std::uint64_t frame = 0;
  for (int w = 0; w < windows; ++w) {
    WindowRecord rec;
    rec.index = static_cast<std::uint32_t>(w);
    rec.transcript.text = rng() % 3 ? "words said here " + std::to_string(w) : "";
    rec.transcript.start = t;
    const int frames = static_cast<int>(rng() % 4);
    for (int k = 0; k < frames; ++k) {
      frame += 1 + rng() % 7;
      t += u(rng) + 0.001;
      FrameRecord fr;
      fr.frame = FrameRef{kb.video_id, rec.index, frame, t};
      for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) fr.tags.push_back(Tag{fr.frame, "tag" + std::to_string(i), u(rng)});
      for (int i = 0, n = static_cast<int>(rng() % 2); i < n; ++i) {
        fr.ocr.push_back(OcrSpan{fr.frame, "TXT" + std::to_string(i), rng() % 2 ? std::optional<Box>(box()) : std::nullopt, u(rng)});
      }
      for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) fr.detections.push_back(Detection{fr.frame, "obj", box(), u(rng)});
      for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) {
        fr.captions.push_back(Caption{fr.frame, "caption \"quoted\" " + std::to_string(i),
                                      i ? std::optional<Box>(box()) : std::nullopt, static_cast<std::size_t>(i)});
      }
      for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) {
        Triplet tr;
        tr.subject = "man";
        tr.relation = "holding";
        tr.object = "cup";
        tr.frame = fr.frame;
        tr.caption_index = fr.captions.empty() ? 0 : rng() % fr.captions.size();
        fr.triplets.push_back(tr);
      }
      rec.keyframes.push_back(std::move(fr));
    }
    t += u(rng);
    rec.transcript.end = t;
    kb.windows.push_back(std::move(rec));
  }
  return kb;
}

}  // namespace vkg::testing
