"""Regenerates tests/data/bundles/kitchen (frames, transcript, stub manifest)."""
import hashlib
import json
import os

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "bundles", "kitchen")
W = H = 32
FPS = 2.0

# Four scenes of three frames. Frames of a scene share one histogram and differ
# only in how the patch pixels are arranged: stripes, checkerboard (sharpest),
# then two flat halves.
SCENES = [40, 90, 170, 220]
AMP = 12
LAYOUTS = [
    lambda x, y: (x // 2) % 2 == 0,
    lambda x, y: (x + y) % 2 == 0,
    lambda x, y: y < 16,
]


def frame_pixels(index):
    bg = SCENES[index // 3]
    bright = LAYOUTS[index % 3]
    px = bytearray()
    for y in range(H):
        for x in range(W):
            v = bg
            if 8 <= x < 24 and 8 <= y < 24:
                v = bg + (AMP if bright(x, y) else -AMP)
            px.append(v)
    return bytes(px)


def content_hash(px):
    return hashlib.sha256(f"{W}x{H}x1:".encode() + px).hexdigest()


def sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def words(sentence, start, step=0.2):
    out = []
    t = start
    for w in sentence.split():
        out.append({"w": w, "s": round(t, 3), "e": round(t + step - 0.05, 3)})
        t += step
    return out


def main():
    os.makedirs(os.path.join(ROOT, "frames"), exist_ok=True)
    responses = {"tag": {}, "ground": {}, "caption": {}, "parse_triplets": {}}
    for i in range(12):
        px = frame_pixels(i)
        with open(os.path.join(ROOT, "frames", f"frame_{i:04d}.pgm"), "wb") as f:
            f.write(f"P5\n{W} {H}\n255\n".encode() + px)
        h = content_hash(px)
        if i < 6:
            responses["tag"][h] = {"tags": [{"label": "chef", "confidence": 0.9},
                                            {"label": "knife", "confidence": 0.8},
                                            {"label": "kitchen", "confidence": 0.7}]}
            responses["ground"][h] = {"detections": [
                {"label": "chef", "box": [0.1, 0.1, 0.5, 0.9], "confidence": 0.9},
                {"label": "knife", "box": [0.55, 0.4, 0.8, 0.6], "confidence": 0.8}]}
            responses["caption"][h] = {"caption": "A chef holds a knife."}
        else:
            responses["tag"][h] = {"tags": [{"label": "dog", "confidence": 0.9},
                                            {"label": "sea", "confidence": 0.6}]}
            responses["ground"][h] = {"detections": [
                {"label": "dog", "box": [0.2, 0.5, 0.6, 0.9], "confidence": 0.85}]}
            responses["caption"][h] = {"caption": "A dog runs by the sea."}
    responses["parse_triplets"][sha("A chef holds a knife.")] = {
        "triplets": [{"subject": "chef", "relation": "holds", "object": "knife"}]}
    responses["parse_triplets"][sha("A dog runs by the sea.")] = {
        "triplets": [{"subject": "dog", "relation": "runs by", "object": "sea"}]}
    manifest = {
        "version": 1,
        "responses": responses,
        "defaults": {
            "caption": {"caption": ""},
            "parse_triplets": {"triplets": []},
            "ocr": {"spans": []},
            "coref": {"map": {}},
        },
    }
    with open(os.path.join(ROOT, "stubs.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    transcript = {"video_id": "kitchen", "words": (
        words("The chef slices an onion.", 0.0) + words("The chef holds a knife.", 1.5, 0.3)
        + words("A dog runs by the sea.", 3.0) + words("The dog swims in the sea.", 4.5, 0.25))}
    with open(os.path.join(ROOT, "transcript.json"), "w") as f:
        json.dump(transcript, f, indent=1)
        f.write("\n")
    with open(os.path.join(ROOT, "bundle.json"), "w") as f:
        json.dump({"video_id": "kitchen", "fps": FPS, "created_at": "2024-01-01T00:00:00Z"}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
