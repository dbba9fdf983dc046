#!/usr/bin/env python3
"""Best-constant-predictor MAE for a dataset split.

Scans <root>/masks/*.png, binarizes each at luminance 128, and reports the
lowest MAE any constant map c in [0,1] could score on the split (mean over
images of the per-image mean absolute error, the same aggregation eval uses).
The error is linear in c, so the optimum sits at c=0 or c=1; a 256-step grid
is swept anyway as a cross-check.

Usage: constant_baseline.py <dataset_root>
Prints the baseline MAE as a bare number on stdout.
"""
import struct
import sys
import zlib
from pathlib import Path


def read_png_gray(path):
    data = Path(path).read_bytes()
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError(f"{path}: not a png")
    pos, w, h, bit_depth, color_type, idat = 8, 0, 0, 0, 0, b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        if ctype == b"IHDR":
            w, h, bit_depth, color_type = struct.unpack(">IIBB", body[:10])
        elif ctype == b"IDAT":
            idat += body
        elif ctype == b"IEND":
            break
        pos += 12 + length
    if bit_depth != 8 or color_type not in (0, 2):
        raise ValueError(f"{path}: unsupported png layout")
    ch = 1 if color_type == 0 else 3
    raw = zlib.decompress(idat)
    stride = w * ch
    out, prev = [], bytearray(stride)
    for y in range(h):
        f = raw[y * (stride + 1)]
        line = bytearray(raw[y * (stride + 1) + 1 : (y + 1) * (stride + 1)])
        for x in range(stride):
            a = line[x - ch] if x >= ch else 0
            b = prev[x]
            c = prev[x - ch] if x >= ch else 0
            if f == 1:
                line[x] = (line[x] + a) & 0xFF
            elif f == 2:
                line[x] = (line[x] + b) & 0xFF
            elif f == 3:
                line[x] = (line[x] + (a + b) // 2) & 0xFF
            elif f == 4:
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pr = a if pa <= pb and pa <= pc else (b if pb <= pc else c)
                line[x] = (line[x] + pr) & 0xFF
        prev = line
        if ch == 1:
            out.append(bytes(line))
        else:
            out.append(bytes((line[i] * 299 + line[i + 1] * 587 + line[i + 2] * 114) // 1000
                             for i in range(0, stride, 3)))
    return b"".join(out)


def main():
    if len(sys.argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 1
    masks = sorted((Path(sys.argv[1]) / "masks").glob("*.png"))
    if not masks:
        print("no masks found", file=sys.stderr)
        return 1
    fracs = []
    for m in masks:
        pix = read_png_gray(m)
        fg = sum(1 for v in pix if v >= 128)
        fracs.append(fg / len(pix))
    best = min(
        sum(p * abs(1.0 - c) + (1.0 - p) * c for p in fracs) / len(fracs)
        for c in (i / 255.0 for i in range(256))
    )
    print(f"{best:.17g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
