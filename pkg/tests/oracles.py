"""Independent reference implementations used as test oracles.

Written with plain loops over Python floats, sharing no code with the package.
"""

import math


def topsis_oracle(rows, weights, benefit):
    n, m = len(rows), len(rows[0])
    norms = []
    for j in range(m):
        norms.append(math.sqrt(sum(rows[i][j] ** 2 for i in range(n))))
    v = [[(rows[i][j] / norms[j] if norms[j] > 0 else 0.0) * weights[j] for j in range(m)]
         for i in range(n)]
    ideal, anti = [], []
    for j in range(m):
        col = [v[i][j] for i in range(n)]
        if benefit[j]:
            ideal.append(max(col))
            anti.append(min(col))
        else:
            ideal.append(min(col))
            anti.append(max(col))
    scores = []
    for i in range(n):
        dp = math.sqrt(sum((v[i][j] - ideal[j]) ** 2 for j in range(m)))
        dn = math.sqrt(sum((v[i][j] - anti[j]) ** 2 for j in range(m)))
        scores.append(0.5 if dp + dn == 0 else dn / (dp + dn))
    return scores


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def correlation_adjust_oracle(weights, rows, alpha):
    n, m = len(rows), len(weights)
    cols = [[rows[i][j] for i in range(n)] for j in range(m)]
    out = []
    for i in range(m):
        pen = 0.0
        for j in range(m):
            if i == j or n < 2:
                continue
            r = pearson_oracle(cols[i], cols[j])
            pen += abs(r) if r is not None else 0.0
        out.append(weights[i] * max(0.0, 1.0 - alpha * pen))
    s = sum(out)
    return [w / s for w in out]
