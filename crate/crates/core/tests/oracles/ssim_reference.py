"""Reference SSIM values for the frozen table in tests/support/ssim_reference.rs.

Image pairs come from a 64-bit LCG so the Rust side can rebuild them
bit-for-bit. Run: python3 ssim_reference.py
"""
import numpy as np
from skimage.metrics import structural_similarity

MUL = 6364136223846793005
INC = 1442695040888963407
MASK = (1 << 64) - 1


class Lcg:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state * MUL + INC) & MASK
        return np.float32((self.state >> 40) / float(1 << 24))


def pair(seed):
    g = Lcg(seed)
    h = 16 + int(g.next() * 24)
    w = 16 + int(g.next() * 24)
    amp = np.float32(0.05) + np.float32(1.5) * g.next()
    a = np.zeros((h, w, 3), np.float32)
    b = np.zeros((h, w, 3), np.float32)
    for y in range(h):
        for x in range(w):
            for c in range(3):
                v = g.next()
                n = g.next() - np.float32(0.5)
                a[y, x, c] = v
                b[y, x, c] = np.float32(min(max(v + amp * n, 0.0), 1.0))
    return a, b


def luma(f):
    return (np.float32(0.299) * f[..., 0] + np.float32(0.587) * f[..., 1] + np.float32(0.114) * f[..., 2]).astype(np.float64)


if __name__ == "__main__":
    for seed in range(10):
        a, b = pair(seed)
        s = structural_similarity(
            luma(a), luma(b), gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
        )
        print(f"    ({seed}, {s:.10f}),")
