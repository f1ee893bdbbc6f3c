#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the 20-image hand-labelled evaluator fixture.

Each image is a small grayscale PNG. Its CLIP-space vector, its clean
reference caption and the judge's reply are chosen by hand below, together
with the expected verdicts. Replay fixtures for the embedder and the judge
are keyed the same way the C++ replay adapters key their lookups.
"""
import hashlib
import json
import pathlib
import struct
import zlib

HERE = pathlib.Path(__file__).resolve().parent
TARGET = "zebra"
QUESTION = f"Does this image contain {TARGET}? Answer yes or no."
TEXT = {
    "a photo of zebra": [1.0, 0.0, 0.0, 0.0],
    "A photo of": [0.0, 1.0, 0.0, 0.0],
    "A photo of a horse": [0.6, 0.8, 0.0, 0.0],
    "A street at night": [0.0, 0.0, 1.0, 0.0],
}

# (clean caption, raw image vector, judge reply, clip label, judge label)
IMAGES = [
    ("A photo of", [0.9, 0.1, 0.0, 0.2], "Yes", True, True),
    ("A photo of", [0.2, 0.9, 0.1, 0.0], "No", False, False),
    ("A photo of", [3.0, 2.0, 0.0, 0.0], "yes.", True, True),
    ("A photo of", [1.0, 1.0, 0.0, 0.0], "No.", False, False),  # exact tie is not a success
    ("A photo of", [0.0, 0.0, 0.0, 5.0], "no", False, False),
    ("A photo of a horse", [0.7, 0.7, 0.0, 0.0], " YES ", False, True),
    ("A photo of a horse", [1.0, 0.2, 0.0, 0.0], "Yes!", True, True),
    ("A photo of a horse", [0.5, 0.9, 0.2, 0.0], "NO", False, False),
    ("A photo of a horse", [0.9, 0.3, 0.0, 0.4], "no!", True, False),
    ("A street at night", [0.3, 0.0, 0.2, 0.0], ["I cannot tell", "yes"], True, True),
    ("A street at night", [0.1, 0.0, 0.9, 0.0], "No", False, False),
    ("A street at night", [0.5, 0.0, 0.5, 0.1], "No", False, False),  # tie again
    ("A street at night", [0.0, 0.3, 0.8, 0.0], "no", False, False),
    ("A photo of", [0.6, 0.5, 0.3, 0.0], ["Unsure.", "No"], True, False),
    ("A photo of", [0.05, 0.04, 0.9, 0.9], "No", True, False),
    ("A photo of", [0.1, 0.2, 0.0, 0.9], "No", False, False),
    ("A photo of a horse", [0.8, 0.1, 0.1, 0.1], "Yes", True, True),
    ("A photo of a horse", [0.2, 0.9, 0.3, 0.0], "No", False, False),
    ("A street at night", [0.6, 0.0, 0.0, 0.9], "yes", True, True),
    ("A street at night", [0.0, 0.0, 0.0, 1.0], "No", False, False),
]


def png(width, height, pixels, text):
    def chunk(tag, data):
        c = struct.pack(">I", len(data)) + tag + data
        return c + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    raw = b"".join(b"\x00" + bytes(pixels[y * width:(y + 1) * width]) for y in range(height))
    out = b"\x89PNG\r\n\x1a\n"
    out += chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0))
    out += chunk(b"tEXt", b"label\x00" + text.encode())
    out += chunk(b"IDAT", zlib.compress(raw, 9))
    out += chunk(b"IEND", b"")
    return out


def sha(b):
    return hashlib.sha256(b).hexdigest()


def line(key, kind, payload):
    return json.dumps({"key_hash": key, "kind": kind, "payload": payload}, separators=(",", ":"), ensure_ascii=False)


def main():
    (HERE / "images").mkdir(exist_ok=True)
    clip = [line("", "schema", {"backend_id": "hand-clip", "dimension": 4, "version": 1})]
    judge = [line("", "schema", {"backend_id": "hand-judge", "version": 1})]
    for t, v in TEXT.items():
        clip.append(line(sha(t.encode()), "embed_text", v))
    labels = []
    for i, (caption, vec, reply, clip_label, judge_label) in enumerate(IMAGES):
        pixels = [(i * 13 + k * 7) % 256 for k in range(64)]
        data = png(8, 8, pixels, f"image {i:02d}")
        name = f"img_{i:02d}.png"
        (HERE / "images" / name).write_bytes(data)
        h = sha(data)
        clip.append(line(h, "embed_image", vec))
        jkey = sha(json.dumps({"image": h, "question": QUESTION}, separators=(",", ":")).encode())
        judge.append(line(jkey, "judge", reply))
        labels.append({"image": f"images/{name}", "clean_caption": caption, "vector": vec,
                       "clip_success": clip_label, "judge_yes": judge_label})
    (HERE / "clip.jsonl").write_text("\n".join(clip) + "\n")
    (HERE / "judge.jsonl").write_text("\n".join(judge) + "\n")
    doc = {"target_concept": TARGET, "question": QUESTION, "target_text": "a photo of zebra",
           "text_vectors": TEXT, "images": labels}
    (HERE / "labels.json").write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n")
    print(sum(l["clip_success"] for l in labels), "clip yes,", sum(l["judge_yes"] for l in labels), "judge yes")


if __name__ == "__main__":
    main()
