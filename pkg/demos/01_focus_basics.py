"""Focus from first principles: entropy, normalized entropy, banding.

Walks the focus measure over hand-built influence distributions, from
perfectly even to one-hot, and shows how dataset statistics band samples
into under-, in-, and over-focused regions.
"""
import numpy as np

from refocus3d import classify_focus, entropy, focus, focus_stats, normalized_entropy

print("A normalized influence map assigns each of N points a non-negative")
print("share of the network's attention, summing to 1. Focus is 1 minus the")
print("normalized entropy of that map.\n")

n = 8
uniform = np.full(n, 1.0 / n)
one_hot = np.zeros(n)
one_hot[3] = 1.0
skewed = np.array([0.7, 0.1, 0.1, 0.1])

print(f"uniform over {n} points:   H = {entropy(uniform):.6f} = ln({n}) = {np.log(n):.6f}")
print(f"                           H_n = {normalized_entropy(uniform):.6f}  focus = {focus(uniform):.6f}")
print(f"one-hot:                   H = {entropy(one_hot):.6f}            focus = {focus(one_hot):.6f}")
print(f"(0.7, 0.1, 0.1, 0.1):      H = {entropy(skewed):.6f}  focus = {focus(skewed):.6f}\n")

print("Normalization by ln(N) makes focus size-invariant at the extremes:")
for m in (4, 256, 4096):
    print(f"  uniform over {m:5d} points -> focus {focus(np.full(m, 1.0 / m)):.2e}")

print("\nSliding from uniform toward one-hot concentrates the map; focus is")
print("strictly monotone along the way:")
for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
    p = (1 - lam) * np.full(16, 1 / 16) + lam * np.eye(16)[0]
    print(f"  lambda {lam:.2f} -> focus {focus(p):.4f}")

print("\nGiven a reference set of focus values, a sample is banded relative to")
print("mean +/- one standard deviation:")
rng = np.random.default_rng(0)
reference = np.clip(rng.normal(0.45, 0.08, size=500), 0, 1)
stats = focus_stats(reference)
print(f"  reference: mu {stats.mu:.3f}  sigma {stats.sigma:.3f}  "
      f"in-focus band [{stats.under_edge:.3f}, {stats.over_edge:.3f}]")
for f in (0.2, 0.45, 0.7):
    band = classify_focus(f, stats)
    label = "in focus" if band == "in" else f"{band}-focused"
    print(f"  focus {f:.2f} -> {label}")
