"""High-precision reference values for the loss closed-form checks.

Evaluates the angular-margin and supervised-contrastive losses directly from
their definitions at 50 significant digits. The printed values are the
constants asserted by the acceptance suite.

    python3 crates/core/tests/oracles/closed_forms.py
"""

from mpmath import mp, mpf, acos, cos, exp, log, sqrt

mp.dps = 50


def unit(v):
    n = sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def angular(z, labels, w, m, alpha):
    w = [unit(r) for r in w]
    total = mpf(0)
    for zi, y in zip(z, labels):
        zi = unit(zi)
        logits = []
        for c, wc in enumerate(w):
            t = dot(zi, wc)
            logits.append(alpha * (cos(acos(t) + m) if c == y else t))
        total += -logits[y] + log(sum(exp(v) for v in logits))
    return total / len(z)


def supcon(z, labels, tau):
    z = [unit(r) for r in z]
    total = mpf(0)
    for i, zi in enumerate(z):
        others = [a for a in range(len(z)) if a != i]
        denom = sum(exp(dot(zi, z[a]) / tau) for a in others)
        positives = [p for p in others if labels[p] == labels[i]]
        total += sum(-(dot(zi, z[p]) / tau - log(denom)) for p in positives) / len(positives)
    return total / len(z)


def main():
    one, zero = mpf(1), mpf(0)
    values = {
        "angular_margin_example": angular([[one, zero]], [0], [[one, zero], [zero, one]], mpf("0.5"), one),
        "angular_margin_closed_form": log(1 + exp(-cos(mpf("0.5")))),
        "supcon_example": supcon([[one, zero], [one, zero], [zero, one], [zero, one]], [0, 0, 1, 1], one),
        "supcon_closed_form": log(1 + 2 / exp(1)),
        "angular_symmetric_c3": angular(
            [[one, zero, zero]], [0], [[zero, one, zero], [zero, zero, one], [zero, -one, zero]], zero, mpf(32)
        ),
        "log3": log(3),
    }
    for name, v in values.items():
        print(f"{name} = {mp.nstr(v, 25)}")


if __name__ == "__main__":
    main()
