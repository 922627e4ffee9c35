#pragma once

// Slot keys shared by the shipped pipes.
namespace vkg::slots {

inline constexpr const char* keyframes = "keyframes";
inline constexpr const char* tags = "tags";
inline constexpr const char* ocr = "ocr";
inline constexpr const char* detections = "detections";
inline constexpr const char* captions = "captions";
/// Filtered relation triplets kept in the KB.
inline constexpr const char* triplets = "triplets";
/// Raw triplets from a sentence-parser adapter; override the rule parser.
inline constexpr const char* parsed_triplets = "parsed_triplets";
/// GenericPayload {frame_key: {mention: canonical}} from a coreference adapter.
inline constexpr const char* coref = "coref";

}  // namespace vkg::slots
