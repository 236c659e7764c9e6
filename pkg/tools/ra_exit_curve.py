"""Measure the EXIT curve of a systematic repeat-accumulate decoder.

Offline generator for ``src/papralloc/data/ra_rate13.csv``.  The code is
rate 1/3: each info bit is sent once and repeated twice into an interleaver
followed by an accumulator; the decoder runs BCJR on the accumulator and
exchanges messages with the repetition nodes for a fixed number of internal
iterations.  A priori LLRs on all coded bits are consistent Gaussian and the
extrinsic MI is averaged over all coded bits.

    python tools/ra_exit_curve.py --blocks 200 --out src/papralloc/data/ra_rate13.csv
"""
import argparse

import numpy as np

H1, H2, H3 = 0.3073, 0.8935, 1.1064


def j_inv(mi):
    if mi <= 0:
        return 0.0
    return (-np.log2(1 - mi ** (1 / H3)) / H1) ** (1 / (2 * H2))


def maxstar(a, b):
    return np.maximum(a, b) + np.log1p(np.exp(-np.abs(a - b)))


def bcjr_accumulator(la_x, l_p):
    """Extrinsic LLRs on accumulator inputs and outputs; arrays are (B, n)."""
    nb, n = la_x.shape
    ninf = -1e30
    alpha = np.empty((n + 1, nb, 2))
    alpha[0, :, 0] = 0.0
    alpha[0, :, 1] = ninf
    gx = 0.5 * la_x
    gp = 0.5 * l_p
    for j in range(n):
        a0, a1 = alpha[j, :, 0], alpha[j, :, 1]
        # state s = p_j, x_j = s xor s'
        alpha[j + 1, :, 0] = maxstar(a0 + gx[:, j], a1 - gx[:, j]) + gp[:, j]
        alpha[j + 1, :, 1] = maxstar(a0 - gx[:, j], a1 + gx[:, j]) - gp[:, j]
        alpha[j + 1] -= alpha[j + 1, :, :1]
    beta = np.zeros((nb, 2))
    ext_x = np.empty_like(la_x)
    ext_p = np.empty_like(l_p)
    for j in range(n - 1, -1, -1):
        a0, a1 = alpha[j, :, 0], alpha[j, :, 1]
        b0 = beta[:, 0] + gp[:, j]
        b1 = beta[:, 1] - gp[:, j]
        ext_x[:, j] = maxstar(a0 + b0, a1 + b1) - maxstar(a0 + b1, a1 + b0)
        c0 = beta[:, 0]
        c1 = beta[:, 1]
        ext_p[:, j] = maxstar(a0 + gx[:, j], a1 - gx[:, j]) - maxstar(a0 - gx[:, j], a1 + gx[:, j])
        ext_p[:, j] += c0 - c1
        nb0 = maxstar(b0 + gx[:, j], b1 - gx[:, j])
        nb1 = maxstar(b0 - gx[:, j], b1 + gx[:, j])
        beta = np.stack([nb0 - nb0, nb1 - nb0], axis=1)
    return ext_x, ext_p


def decode(l_sys, l_par, perm, iters):
    nb, k = l_sys.shape
    to_acc = np.zeros((nb, 2 * k))
    from_acc = np.zeros((nb, 2 * k))
    for _ in range(iters):
        # repetition node: copies 0..k-1 and k..2k-1 of info bit i
        ext_rep = np.concatenate([l_sys + from_acc[:, k:], l_sys + from_acc[:, :k]], axis=1)
        to_acc = ext_rep[:, perm]
        ext_x, ext_p = bcjr_accumulator(to_acc, l_par)
        from_acc = np.empty_like(ext_x)
        from_acc[:, perm] = ext_x
    ext_sys = from_acc[:, :k] + from_acc[:, k:]
    return ext_sys, ext_p


def encode(info, perm):
    rep = np.concatenate([info, info], axis=1)[:, perm]
    parity = np.bitwise_xor.accumulate(rep, axis=1)
    return np.concatenate([info, parity], axis=1)


def measure(i_a, n_blocks, k, perm, iters, rng):
    info = rng.integers(0, 2, size=(n_blocks, k))
    code = encode(info, perm)
    x = 1.0 - 2.0 * code
    sig = j_inv(i_a)
    llr = 0.5 * sig**2 * x + sig * rng.standard_normal(x.shape)
    ext_s, ext_p = decode(llr[:, :k], llr[:, k:], perm, iters)
    ext = np.concatenate([ext_s, ext_p], axis=1)
    return histogram_mi(ext.ravel(), x.ravel())


def histogram_mi(llr, x, clip=60.0, bins=600):
    """MI between bits and LLRs from the two conditional histograms."""
    edges = np.linspace(-clip, clip, bins + 1)
    llr = np.clip(llr, -clip, clip)
    h_pos, _ = np.histogram(llr[x > 0], bins=edges)
    h_neg, _ = np.histogram(llr[x < 0], bins=edges)
    p_pos = h_pos / h_pos.sum()
    p_neg = h_neg / h_neg.sum()
    mix = p_pos + p_neg
    mi = 0.0
    for p in (p_pos, p_neg):
        m = p > 0
        mi += 0.5 * np.sum(p[m] * np.log2(2 * p[m] / mix[m]))
    return mi


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--blocks", type=int, default=200)
    ap.add_argument("--block-bits", type=int, default=6000)
    ap.add_argument("--iters", type=int, default=8)
    ap.add_argument("--seed", type=int, default=2013)
    ap.add_argument("--out", default="src/papralloc/data/ra_rate13.csv")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    k = args.block_bits // 3
    perm = rng.permutation(2 * k)
    grid = np.unique(np.round(np.concatenate([np.linspace(0, 0.6, 25), np.linspace(0.6, 0.8, 21)]), 6))
    rows = []
    for i_a in grid:
        i_e = measure(i_a, args.blocks, k, perm, args.iters, rng)
        rows.append((i_a, i_e))
        print(f"{i_a:.6f},{i_e:.6f}", flush=True)
    # keep the strictly increasing prefix, then close the curve at (1, 1)
    kept = []
    for i_a, i_e in rows:
        i_e = round(i_e, 6)
        if i_e >= 0.999999:
            break
        if not kept or i_e > kept[-1][1]:
            kept.append((i_a, i_e))
    kept.append((1.0, 1.0))
    with open(args.out, "w") as fh:
        fh.write(
            f"# code=systematic_RA rate=1/3 source=tools/ra_exit_curve.py "
            f"blocks={args.blocks} block_bits={args.block_bits} iters={args.iters} seed={args.seed}\n"
        )
        for i_a, i_e in kept:
            fh.write(f"{i_a:.6f},{i_e:.6f}\n")


if __name__ == "__main__":
    main()
