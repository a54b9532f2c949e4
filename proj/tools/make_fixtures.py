#!/usr/bin/env python3
"""Builds the small synthetic fixture set under data/fixtures.

Writes train.jsonl, dev.jsonl, embeddings.vec and textcnn.ckpt. Tokens are
produced by the real preprocessor (`viso segment`) so the embedding table
covers exactly what the classifier will see; vectors get a class-bearing
component from a tiny seed lexicon plus Gaussian noise.

usage: tools/make_fixtures.py --viso build/tools/viso [--out data/fixtures]
"""

import argparse
import json
import random
import subprocess
from pathlib import Path

DIM = 16
SEED = 20240601

NEUTRAL = [
    "video", "này", "hay", "quá", "cảm ơn", "bạn", "mình", "thấy", "nhạc", "nghe", "vui", "đẹp",
    "hôm nay", "trời", "mưa", "ăn", "cơm", "chưa", "mọi người", "ơi", "xem", "lại", "lần",
    "nữa", "clip", "chị", "anh", "em", "giọng", "hát", "tuyệt", "vời", "thích", "ghê", "ko",
    "đc", "bt", "mn", "ủng hộ", "kênh", "đăng", "ký", "việt nam", "quê", "hương",
]
POSITIVE = ["hay", "tuyệt", "vời", "thích", "vui", "đẹp", "cảm ơn", "ủng hộ", "yêu"]
OFFENSIVE = ["vkl", "vl", "vãi", "đm", "đéo", "cc", "vcl", "dm"]
HATE_TARGET = ["mày", "bọn nó", "thằng này", "con này", "tụi mày", "lũ"]
HATE_MARK = ["óc chó", "súc vật", "cút", "rác rưởi", "đồ ngu", "chết đi", "khốn nạn"]
PUNCT = ["", "", "", ".", "!", "!!", "?", "..."]
# Texts the regression tests classify; their tokens must be in the table.
PROBES = ["vkl.", "video hay quá", "mày óc chó"]

# Lexicon words whose vectors carry a class direction (dims 0..2).
SIGNAL = {}
for w in POSITIVE:
    SIGNAL[w] = 0
for w in OFFENSIVE:
    SIGNAL[w] = 1
for w in ["óc", "chó", "súc", "vật", "cút", "rác", "rưởi", "ngu", "chết", "khốn", "nạn", "mày", "lũ", "tụi"]:
    SIGNAL[w] = 2


def sentence(rng, label):
    words = rng.sample(NEUTRAL, rng.randint(1, 5))
    if label == "CLEAN":
        words.append(rng.choice(POSITIVE))
    elif label == "OFFENSIVE":
        for _ in range(rng.randint(1, 2)):
            words.insert(rng.randint(0, len(words)), rng.choice(OFFENSIVE))
    else:
        words.insert(0, rng.choice(HATE_TARGET))
        words.insert(rng.randint(1, len(words)), rng.choice(HATE_MARK))
    return " ".join(words) + rng.choice(PUNCT)


def make_split(rng, n, prefix):
    rows = []
    labels = ["CLEAN"] * (n // 2) + ["OFFENSIVE"] * (n // 4) + ["HATE"] * (n - n // 2 - n // 4)
    rng.shuffle(labels)
    for i, label in enumerate(labels):
        if label == "OFFENSIVE" and rng.random() < 0.2:
            text = rng.choice(OFFENSIVE) + rng.choice(PUNCT)  # bare exclamations like "vkl."
        else:
            text = sentence(rng, label)
        rows.append({"id": f"{prefix}{i:04d}", "text": text, "label": label})
    return rows


def base_parts(token):
    core = token.strip(".,!?;:\"'()[]")
    return [p for p in core.split("_") if p]


def vector(rng, token):
    v = [rng.gauss(0.0, 0.35) for _ in range(DIM)]
    for part in base_parts(token):
        cls = SIGNAL.get(part)
        if cls is not None:
            v[cls] += 1.5
    return v


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--viso", required=True)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "fixtures"))
    ap.add_argument("--epochs", type=int, default=40)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = random.Random(SEED)
    train = make_split(rng, 600, "tr")
    dev = make_split(rng, 150, "dv")
    for name, rows in (("train.jsonl", train), ("dev.jsonl", dev)):
        with open(out / name, "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")

    texts = [r["text"] for r in train + dev] + PROBES
    seg = subprocess.run([args.viso, "segment"], input="\n".join(texts) + "\n", capture_output=True,
                         text=True, check=True).stdout.splitlines()
    vocab = sorted({tok for line in seg for tok in line.split()})

    vrng = random.Random(SEED + 1)
    with open(out / "embeddings.vec", "w", encoding="utf-8") as f:
        f.write(f"{len(vocab)} {DIM}\n")
        for tok in vocab:
            f.write(tok + " " + " ".join(f"{x:.6f}" for x in vector(vrng, tok)) + "\n")

    subprocess.run([args.viso, "train", "--train", str(out / "train.jsonl"), "--dev", str(out / "dev.jsonl"),
                    "--embeddings", str(out / "embeddings.vec"), "--out", str(out / "textcnn.ckpt"),
                    "--epochs", str(args.epochs), "--lr", "2e-3", "--batch-size", "32", "--seed", "7"],
                   check=True)


if __name__ == "__main__":
    main()
