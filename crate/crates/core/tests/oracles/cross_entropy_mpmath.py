"""Cross-entropy and softmax at 60 significant digits.

Inputs are random doubles; the oracle evaluates the formula on their exact
binary values and rounds only the final result to a double.
"""
import json
import random

import mpmath

mpmath.mp.dps = 60
rng = random.Random(20240517)


def case(k, scale, one_hot):
    logits = [rng.uniform(-scale, scale) for _ in range(k)]
    if one_hot:
        target = [0.0] * k
        target[rng.randrange(k)] = 1.0
    else:
        raw = [rng.random() for _ in range(k)]
        s = sum(raw)
        target = [r / s for r in raw]
    z = [mpmath.mpf(x) for x in logits]
    m = max(z)
    lse = m + mpmath.log(mpmath.fsum(mpmath.exp(x - m) for x in z))
    ce = -mpmath.fsum(mpmath.mpf(t) * (x - lse) for t, x in zip(target, z))
    soft = [float(mpmath.exp(x - lse)) for x in z]
    return {"logits": logits, "target": target, "cross_entropy": float(ce), "softmax": soft}


cases = []
for i in range(60):
    k = rng.choice([2, 3, 5, 8, 17, 64])
    scale = rng.choice([0.5, 5.0, 50.0, 700.0])
    cases.append(case(k, scale, one_hot=i % 3 == 0))
print(json.dumps(cases))
