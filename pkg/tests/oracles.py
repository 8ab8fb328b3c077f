"""Loop-based reference implementations, written independently of the library."""

import math


def attention_scores_loop(attn, special):
    """attn: nested lists [H][N][N]. Returns list of N floats (inf for special)."""
    h, n = len(attn), len(attn[0])
    m = [[max(attn[k][i][j] for k in range(h)) for j in range(n)] for i in range(n)]
    received = [sum(m[i][j] for i in range(n)) for j in range(n)]
    top = max(received[special:])
    return [math.inf] * special + [received[j] / top for j in range(special, n)]


def value_scores_loop(values, special):
    """values: nested lists [H][N][C]."""
    h, n, c = len(values), len(values[0]), len(values[0][0])
    raw = [sum(max(values[k][j][f] for k in range(h)) for f in range(c)) for j in range(n)]
    scored = raw[special:]
    top = max(scored)
    exps = [math.exp(v - top) for v in scored]
    z = sum(exps)
    return [math.inf] * special + [e / z for e in exps]


def top_keep_loop(total, special, n_keep):
    """Kept indices: specials, then best scores with lower index winning ties."""
    n = len(total)
    candidates = list(range(special, n))
    chosen = []
    for _ in range(n_keep - special):
        best = None
        for j in candidates:
            if j in chosen:
                continue
            if best is None or total[j] > total[best]:
                best = j
        chosen.append(best)
    return list(range(special)) + sorted(chosen)


def prune_loop(x, total, special, r):
    """x: nested lists [N][d]. Returns (kept rows + mean row, pruned indices)."""
    n = len(x)
    keep = top_keep_loop(total, special, n - r)
    pruned = [j for j in range(n) if j not in keep]
    d = len(x[0])
    mean = [sum(x[j][f] for j in pruned) / r for f in range(d)]
    return [x[j] for j in keep] + [mean], pruned


def exhaustive_argmax(ns, acc, lat, alpha):
    """Scan every grid point; ties go to the larger n."""
    amax, lmax = max(acc), max(lat)
    best_n, best_u = None, None
    for n, a, l in zip(ns, acc, lat):
        u = alpha * (a / amax) + (1.0 - alpha) * (1.0 - l / lmax)
        if best_u is None or u > best_u or (u == best_u and n > best_n):
            best_n, best_u = n, u
    return best_n


def make_profile(ns, acc, lat, num_tokens=None, special=1):
    """WorkloadProfile from plain curves (synthetic, no measurement)."""
    from tokenprune.profiler import DEPLOYED_PRUNE, GridPoint, LatencySample, WorkloadProfile

    grid = [GridPoint(int(n), LatencySample(int(n), float(l), 0.0, 1, 0), float(a))
            for n, a, l in zip(ns, acc, lat)]
    return WorkloadProfile("0" * 64, int(num_tokens or ns[-1]), special, DEPLOYED_PRUNE, 1, grid)


def random_profile(rng, length, tie_heavy=False):
    """Random grid of ``length`` points between 2 and an N >= the last grid point."""
    n_total = int(rng.integers(length + 1, length * 3 + 2))
    ns = sorted(rng.choice(range(2, n_total + 1), size=length, replace=False).tolist())
    if tie_heavy:
        acc = rng.integers(1, 5, length) / 4.0
        lat = rng.integers(1, 5, length) * 25.0
    else:
        acc = rng.uniform(0.0, 1.0, length)
        acc[rng.integers(length)] = max(acc.max(), 1e-3)
        lat = rng.uniform(1.0, 1000.0, length)
    return make_profile(ns, acc, lat, num_tokens=n_total)
