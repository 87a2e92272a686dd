"""Layer-by-layer numpy evaluation of the encoder toys in model_test.cpp.

Every parameter tensor is filled with fill(name, i) so the C++ side can
reproduce the weights without sharing files. Run: python3 model_oracle.py
"""
import math

import numpy as np


def fill(name, shape):
    n = int(np.prod(shape))
    v = [0.5 * math.sin(0.37 * (i + 1) + 0.11 * len(name)) for i in range(n)]
    return np.array(v).reshape(shape)


def linear(x, p, fan_in, fan_out):
    return x @ fill(p + ".w", (fan_in, fan_out)) + fill(p + ".b", (fan_out,))


def layer_norm(x, p, d):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * fill(p + ".g", (d,)) + fill(p + ".b", (d,))


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def attention(q, k, v, seq, heads):
    n, d = q.shape
    dh = d // heads
    out = np.zeros_like(q)
    for b in range(n // seq):
        rows = slice(b * seq, (b + 1) * seq)
        for h in range(heads):
            cols = slice(h * dh, (h + 1) * dh)
            s = q[rows, cols] @ k[rows, cols].T / math.sqrt(dh)
            s = np.exp(s - s.max(axis=1, keepdims=True))
            s /= s.sum(axis=1, keepdims=True)
            out[rows, cols] = s @ v[rows, cols]
    return out


def block(x, p, d, ff, seq, heads):
    h = layer_norm(x, p + ".ln1", d)
    a = attention(linear(h, p + ".attn.q", d, d), linear(h, p + ".attn.k", d, d),
                  linear(h, p + ".attn.v", d, d), seq, heads)
    x = x + linear(a, p + ".attn.o", d, d)
    h = layer_norm(x, p + ".ln2", d)
    return x + linear(gelu(linear(h, p + ".ff1", d, d * ff)), p + ".ff2", d * ff, d)


def show(label, m):
    print(label)
    for row in np.atleast_2d(m):
        print("  {" + ", ".join(f"{v:.17g}" for v in row) + "},")


D_IN, D, FF = 3, 4, 2

# Neighbour path: one spot, two tokens, one block, one head.
tokens = np.array([[0.3, -1.2, 0.7], [0.8, 0.5, -0.4]])
x = linear(tokens, "proj.neighbor", D_IN, D)
x = block(x, "neighbor.block0", D, FF, 2, 1)
show("neighbor (1 x 4)", x.mean(axis=0))

# Global path: three spots of one slide, two heads.
spots = np.array([[0.2, -0.1, 0.4, 1.0], [-0.6, 0.3, 0.9, -0.2], [0.5, 0.5, -0.7, 0.1]])
show("global (3 x 4)", block(spots, "global.block0", D, FF, 3, 2))

# Fusion: one spot, tokens local/neighbour/global, two heads, mean fused.
loc = np.array([[0.1, 0.2, -0.3, 0.4]])
nei = np.array([[-0.5, 0.6, 0.7, -0.8]])
glo = np.array([[0.9, -1.0, 0.0, 0.25]])
fused_tokens = block(np.vstack([loc, nei, glo]), "fusion.block0", D, FF, 3, 2)
show("fusion per-scale (3 x 4)", fused_tokens)
show("fusion mean (1 x 4)", fused_tokens.mean(axis=0))

# Gene encoder: N = 2, M = 6, d = 4, d_ff = 16.
g = np.array([[0.0, 1.5, 2.0, 0.3, 0.0, 4.1], [1.1, 0.0, 0.2, 3.3, 2.2, 0.9]])
h = linear(gelu(linear(g, "gene.enc1", 6, 4)), "gene.enc2", 4, 4)
show("gene (2 x 4)", h + linear(gelu(linear(h, "gene.ff1", 4, 16)), "gene.ff2", 16, 4))
