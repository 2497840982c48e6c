"""
GF(256) arithmetic on numpy arrays.

Field polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D), generator 2. Addition
is XOR; multiplication goes through a full 256x256 product table so that
scaling a whole symbol is a single fancy-index.
"""
import numpy as np

POLY = 0x11D
GENERATOR = 0x02


def _build_tables():
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= POLY
    exp[255:510] = exp[:255]

    a = np.arange(256)
    la = log[a][:, None]
    lb = log[a][None, :]
    mul = exp[la + lb].astype(np.uint8)
    mul[0, :] = 0
    mul[:, 0] = 0

    inv = np.zeros(256, dtype=np.uint8)
    inv[1:] = exp[(255 - log[1:]) % 255]
    return exp, log, mul, inv


EXP, LOG, MUL, INV = _build_tables()


def add(a, b):
    return np.bitwise_xor(a, b, dtype=np.uint8)


def mul(a, b):
    """Elementwise product (broadcasting)."""
    return MUL[np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8)]


def inv(a):
    a = np.asarray(a, dtype=np.uint8)
    if np.any(a == 0):
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return INV[a]


def scale(row: np.ndarray, c: int) -> np.ndarray:
    """c * row."""
    return MUL[c][row]


def combine(coefficients: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Sum_i c_i * rows[i] for a (n,) coefficient vector and (n, L) rows."""
    coefficients = np.asarray(coefficients, dtype=np.uint8)
    if coefficients.size == 0:
        return np.zeros(rows.shape[1], dtype=np.uint8)
    products = MUL[coefficients[:, None], rows]
    return np.bitwise_xor.reduce(products, axis=0)


def rank(matrix: np.ndarray) -> int:
    """Rank of a matrix over GF(256) (Gaussian elimination on a copy)."""
    m = np.array(matrix, dtype=np.uint8, copy=True)
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(m[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        m[r] = MUL[INV[m[r, c]]][m[r]]
        below = r + 1 + np.nonzero(m[r + 1:, c])[0]
        if below.size:
            m[below] ^= MUL[m[below, c][:, None], m[r][None, :]]
        r += 1
    return r
