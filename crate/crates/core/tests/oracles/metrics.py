"""Brute-force TPR/TNR for the six-solution a+b fixture.

Each solution is modelled by what it prints (or None when it cannot finish
in time). The full evaluation set uses a value-equality checker; the suite
under test compares text exactly.
"""
from decimal import Decimal

INT_MAX = 2**31 - 1

FULL = [(1, 2), (-5, 3), (2000000000, 2000000000), (1000000000, 1), (7, 8)]
UNDER_TEST = [(1, 2), (7, 8), (-5, 3)]


def wrap32(x):
    x &= 0xFFFFFFFF
    return x - 2**32 if x > INT_MAX else x


SOLUTIONS = {
    "cpp_correct": ("C/C++", lambda a, b: str(a + b)),
    "py_float_format": ("Python3", lambda a, b: str(a + b) + ".0"),
    "cpp_int_overflow": ("C/C++", lambda a, b: str(wrap32(a + b))),
    "py_abs": ("Python3", lambda a, b: str(abs(a + b))),
    "py_hardcoded": ("Python3", lambda a, b: "3"),
    "py_slow_on_large": ("Python3", lambda a, b: None if a >= 10**9 else str(a + b)),
}


def passes(out, ref, checker):
    if out is None:
        return False
    if checker:
        return Decimal(out) == Decimal(ref)
    return out == ref


def accepted(fn, cases, checker):
    return all(passes(fn(a, b), str(a + b), checker) for a, b in cases)


def rate(num, den):
    return None if den == 0 else num / den


def quality(names):
    tp = pos = tn = neg = 0
    for name in names:
        _, fn = SOLUTIONS[name]
        correct = accepted(fn, FULL, True)
        ok = accepted(fn, UNDER_TEST, False)
        if correct:
            pos += 1
            tp += ok
        else:
            neg += 1
            tn += not ok
    return rate(tp, pos), rate(tn, neg), pos, neg


if __name__ == "__main__":
    for name, (group, fn) in SOLUTIONS.items():
        print(name, group, "correct" if accepted(fn, FULL, True) else "incorrect",
              "accepted" if accepted(fn, UNDER_TEST, False) else "rejected")
    print("overall", quality(SOLUTIONS))
    groups = {}
    for name, (group, _) in SOLUTIONS.items():
        groups.setdefault(group, []).append(name)
    per = {g: quality(ns) for g, ns in groups.items()}
    for g, q in per.items():
        print("group", g, q)
    tprs = [q[0] for q in per.values() if q[0] is not None]
    tnrs = [q[1] for q in per.values() if q[1] is not None]
    print("macro", sum(tprs) / len(tprs), sum(tnrs) / len(tnrs))
