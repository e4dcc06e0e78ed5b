#!/usr/bin/env python3
"""Independent oracle for the hashcodec golden vectors.

Re-derives every expected digest with Python's hashlib from the byte layout
alone (tag byte, then a 4-byte big-endian length and the raw bytes for each
field). Writes hashcodec_vectors.jsonl next to this file; with --check,
compares against the existing file instead.
"""
import hashlib
import json
import os
import struct
import sys

CHAL, MAC, PROOF, CHAIN = 0x01, 0x02, 0x03, 0x04


def encode(tag, fields):
    out = bytes([tag])
    for f in fields:
        out += struct.pack(">I", len(f)) + f
    return out


def h(tag, fields, alg="sha256"):
    return hashlib.new(alg, encode(tag, fields)).digest()


def chain(seed, m):
    v = seed
    for _ in range(m):
        v = h(CHAIN, [v])
    return v


def r_enc(r):
    return struct.pack(">I", r)


vectors = []


def add(tag, fields, alg="sha256", note=""):
    vectors.append({
        "note": note,
        "tag": tag,
        "fields": [f.hex() for f in fields],
        "algorithm": alg,
        "expected_digest": h(tag, fields, alg).hex(),
    })


add(CHAL, [], note="empty field list")
add(CHAL, [b""], note="one empty field")
add(MAC, [b"AB", b"C"], note="two short fields")
add(PROOF, [r_enc(5), b"secret"], note="proof r=5 P=secret")
add(CHAL, [r_enc(5), bytes(16)], note="base puzzle r=5 R=0^16")
add(CHAL, [r_enc(5), b"secret", bytes(16)], note="offline puzzle r=5 P=secret R=0^16")
add(CHAL, [b"a", b"b"], note="split a|b")
add(CHAL, [b"ab"], note="joined ab")
add(CHAIN, [b"pw"], note="chain pw step 1")
add(CHAIN, [chain(b"pw", 2)], note="chain pw step 3")
add(MAC, [b"AB", b"C"], alg="sha512", note="sha512 two short fields")

key = bytes([0x42]) * 32
n8 = struct.pack(">Q", 0)
h_rp = h(PROOF, [r_enc(5), b"secret"])
add(MAC, [h_rp, b"alice", key, n8], note="base mac alice n=0 key=0x42^32")
add(MAC, [h_rp, b"alice", key, struct.pack(">Q", 1)], note="base mac alice n=1")

here = os.path.dirname(os.path.abspath(__file__))
path = os.path.join(here, "hashcodec_vectors.jsonl")
rendered = "".join(json.dumps(v, sort_keys=True) + "\n" for v in vectors)

if "--check" in sys.argv[1:]:
    with open(path) as f:
        if f.read() != rendered:
            sys.exit("hashcodec_vectors.jsonl differs from the oracle")
    print("ok", len(vectors), "vectors")
    sys.exit(0)

with open(path, "w") as f:
    f.write(rendered)

print("H^3(pw)    =", chain(b"pw", 3).hex())
print("H^1000(pw) =", chain(b"pw", 1000).hex())
print("proof(5,secret) =", h_rp.hex())
