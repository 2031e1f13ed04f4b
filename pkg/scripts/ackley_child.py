"""Example external objective: reads coordinates from stdin, answers Ackley values.

One request per line (space-separated coordinates), one number per reply.
Usable with ``snbo optimize --problem "python scripts/ackley_child.py" ...``.
"""

import math
import sys


def ackley(x):
    n = len(x)
    s1 = sum(v * v for v in x) / n
    s2 = sum(math.cos(2 * math.pi * v) for v in x) / n
    return -20 * math.exp(-0.2 * math.sqrt(s1)) - math.exp(s2) + 20 + math.e


for line in sys.stdin:
    x = [float(tok) for tok in line.split()]
    sys.stdout.write(format(ackley(x), ".17g") + "\n")
    sys.stdout.flush()
