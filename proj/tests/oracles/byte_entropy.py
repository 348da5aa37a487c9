"""Brute-force byte/entropy histogram over sliding windows.

Input: 4096 bytes from the LCG x <- (1103515245 x + 12345) mod 2^31 (seed 42),
byte = (x >> 16) & 0xFF. Window 2048, step 1024; entropy of the high-nibble
distribution (probabilities over the window size) doubled to the byte scale,
binned as min(int(2 h), 15).
"""
import math


def lcg_bytes(n, seed=42):
    x = seed
    out = []
    for _ in range(n):
        x = (1103515245 * x + 12345) % (1 << 31)
        out.append((x >> 16) & 0xFF)
    return out


def histogram(data, window=2048, step=1024):
    cells = [[0] * 16 for _ in range(16)]
    starts = [0] if len(data) < window else range(0, len(data) - window + 1, step)
    for s in starts:
        w = data[s:s + window]
        counts = [0] * 16
        for b in w:
            counts[b >> 4] += 1
        h = 0.0
        for c in counts:
            if c:
                p = c / window
                h -= p * math.log2(p)
        row = min(int(h * 2 * 2), 15)
        for j in range(16):
            cells[row][j] += counts[j]
    return cells


if __name__ == "__main__":
    data = lcg_bytes(4096)
    print("first bytes:", data[:8])
    mixed = [b & 0x3F if i < 2048 else b for i, b in enumerate(data)]
    for name, d in (("lcg", data), ("lcg, first half masked to 0x3F", mixed)):
        print(name)
        for r, row in enumerate(histogram(d)):
            if any(row):
                print(" ", r, row)
