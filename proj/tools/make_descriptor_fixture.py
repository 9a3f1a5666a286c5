#!/usr/bin/env python3
"""Random unit descriptors in BKD1 format for every row of a requests.jsonl."""
import json, math, random, struct, sys

def main(requests, out, seed=0):
    rng = random.Random(seed)
    rows = [json.loads(line) for line in open(requests) if line.strip()]
    with open(out, "wb") as f:
        f.write(b"BKD1" + struct.pack("<IIQ", 1, 128, len(rows)))
        for r in rows:
            v = [rng.gauss(0.0, 1.0) for _ in range(128)]
            n = math.sqrt(sum(x * x for x in v))
            name = r["image_id"].encode("utf-8")
            f.write(struct.pack("<H", len(name)) + name + struct.pack("<I", r["keypoint_index"]))
            f.write(struct.pack("<128f", *(x / n for x in v)))

if __name__ == "__main__":
    if len(sys.argv) < 3:
        sys.exit("usage: make_descriptor_fixture.py REQUESTS.jsonl OUT.bkd [SEED]")
    main(sys.argv[1], sys.argv[2], int(sys.argv[3]) if len(sys.argv) > 3 else 0)
