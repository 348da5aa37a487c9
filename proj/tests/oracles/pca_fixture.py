"""Covariance spectrum of an integer-valued fixture matrix.

x[i][j] = ((7 i + 13 j) % 17 - 8) / 4 + j * (i % 3), 40 rows x 6 columns,
plus a constant column (index 6, value 2.5). Every entry is exact in float32.
"""
import numpy as np

N, D = 40, 7


def fixture():
    x = np.zeros((N, D))
    for i in range(N):
        for j in range(6):
            x[i, j] = ((7 * i + 13 * j) % 17 - 8) / 4 + j * (i % 3)
        x[i, 6] = 2.5
    return x


if __name__ == "__main__":
    x = fixture()
    c = np.cov(x, rowvar=False, ddof=1)
    w, v = np.linalg.eigh(c)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    print("trace = %.17g" % np.trace(c))
    print("eigenvalues =", ", ".join("%.17g" % e for e in w))
    pc = v[:, 0]
    k = int(np.argmax(np.abs(pc)))
    pc = pc * np.sign(pc[k])
    print("pc0 =", ", ".join("%.17g" % e for e in pc))
