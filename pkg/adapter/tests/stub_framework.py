"""Tiny arithmetic module standing in for a numeric framework in tests.

Division follows IEEE conventions instead of raising, so snippets can
manufacture NaN and infinity the way tensor libraries do.
"""

import math
import os
import time


def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0:
            return math.nan
        return math.copysign(math.inf, a)


def mean(values):
    return sum(values) / len(values)


def scale(values, factor):
    return [v * factor for v in values]


def rms(values):
    return math.sqrt(mean([v * v for v in values]))


def spin(seconds):
    time.sleep(seconds)


def alloc_list(n):
    return list(range(n))


def fail(message):
    raise RuntimeError(message)


def hard_abort():
    os.abort()
