"""Seven randomness tests after NIST SP 800-22.

Each test takes a 0/1 sequence and returns a :class:`TestResult`.  Tests
that produce two p-values (cumulative sums, serial) report the smaller one
as ``p_value`` and pass only if every sub-test passes; suite proportions
score each of their p-values separately.  A test whose
length or applicability precondition fails returns ``applicable=False``
with ``p_value=0.0``, which counts as a failure, as in the reference suite.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

ALPHA = 0.01


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    test_name: str
    p_value: float
    passed: bool
    applicable: bool = True
    p_values: tuple = ()
    statistic: float | None = None

    def to_dict(self) -> dict:
        return {"test": self.test_name, "p_value": self.p_value, "pass": self.passed,
                "applicable": self.applicable, "p_values": list(self.p_values)}


def igamc(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x)."""
    return float(gammaincc(a, x))


def _bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int8).ravel()
    if arr.size == 0:
        raise ValueError("empty bit sequence")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("sequence must contain only 0/1")
    return arr


def _result(name: str, ps, alpha: float, statistic=None) -> TestResult:
    ps = tuple(float(min(1.0, max(0.0, p))) for p in ps)
    return TestResult(name, min(ps), all(p >= alpha for p in ps), True, ps, statistic)


def _not_applicable(name: str) -> TestResult:
    return TestResult(name, 0.0, False, False, (0.0,), None)


def monobit(bits, alpha: float = ALPHA) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    s = int(2 * eps.sum(dtype=np.int64) - n)
    return _result("monobit", [erfc(abs(s) / math.sqrt(2 * n))], alpha, s)


def block_frequency(bits, m: int = 128, alpha: float = ALPHA) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    if m < 2:
        raise ValueError("block length must be >= 2")
    if m > n:
        raise ValueError(f"block length {m} exceeds sequence length {n}")
    nblocks = n // m
    pi = eps[:nblocks * m].reshape(nblocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return _result("block_frequency", [igamc(nblocks / 2.0, chi2 / 2.0)], alpha, chi2)


def runs(bits, alpha: float = ALPHA) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    pi = eps.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return _not_applicable("runs")
    v = 1 + int(np.count_nonzero(eps[1:] != eps[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return _result("runs", [erfc(num / den)], alpha, v)


# (min n, block length M, class edges lo..hi, class probabilities)
_LONGEST_RUN_TABLES = (
    (750_000, 10_000, 10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, 4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, 1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_ones(blocks: np.ndarray) -> np.ndarray:
    """Longest run of ones in each row of a 2-D 0/1 array."""
    best = np.zeros(blocks.shape[0], dtype=np.int64)
    cur = np.zeros(blocks.shape[0], dtype=np.int64)
    for j in range(blocks.shape[1]):
        cur = (cur + 1) * blocks[:, j]
        np.maximum(best, cur, out=best)
    return best


def longest_run(bits, alpha: float = ALPHA) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    for min_n, m, lo, hi, probs in _LONGEST_RUN_TABLES:
        if n >= min_n:
            break
    else:
        return _not_applicable("longest_run")
    nblocks = n // m
    longest = _longest_ones(eps[:nblocks * m].reshape(nblocks, m))
    classes = np.clip(longest, lo, hi) - lo
    nu = np.bincount(classes, minlength=hi - lo + 1)
    expected = nblocks * np.asarray(probs)
    chi2 = float(np.sum((nu - expected) ** 2 / expected))
    k = len(probs) - 1
    return _result("longest_run", [igamc(k / 2.0, chi2 / 2.0)], alpha, chi2)


def _cusum_p(z: int, n: int) -> float:
    if z == 0:
        return 1.0
    sq = math.sqrt(n)
    k = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    s1 = np.sum(norm.cdf((4 * k + 1) * z / sq) - norm.cdf((4 * k - 1) * z / sq))
    k = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    s2 = np.sum(norm.cdf((4 * k + 3) * z / sq) - norm.cdf((4 * k + 1) * z / sq))
    return float(1.0 - s1 + s2)


def cumulative_sums(bits, mode: str = "both", alpha: float = ALPHA) -> TestResult:
    """Random-walk excursion test; ``mode`` is "forward", "backward" or "both"."""
    eps = _bits(bits)
    n = eps.size
    x = 2 * eps.astype(np.int64) - 1
    modes = {"forward": [x], "backward": [x[::-1]], "both": [x, x[::-1]]}
    if mode not in modes:
        raise ValueError(f"mode must be forward, backward or both, got {mode!r}")
    ps = [_cusum_p(int(np.max(np.abs(np.cumsum(seq)))), n) for seq in modes[mode]]
    return _result("cumulative_sums", ps, alpha)


def _pattern_counts(eps: np.ndarray, m: int) -> np.ndarray:
    """Counts of every overlapping m-bit pattern on the cyclically extended sequence."""
    if m == 0:
        return np.array([eps.size])
    ext = np.concatenate([eps, eps[:m - 1]]).astype(np.int64)
    n = eps.size
    vals = np.zeros(n, dtype=np.int64)
    for j in range(m):
        vals = (vals << 1) | ext[j:j + n]
    return np.bincount(vals, minlength=1 << m)


def _template_fits(n: int, m: int, margin: int, strict: bool) -> bool:
    """Template length rule m < floor(log2 n) - margin.

    ``strict=False`` only requires the template to fit in the sequence;
    the published worked examples are too short for the full rule.
    """
    if not strict:
        return m < n
    return m < int(math.floor(math.log2(n))) - margin


def _psi2(eps: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    n = eps.size
    counts = _pattern_counts(eps, m).astype(np.float64)
    return (2.0 ** m / n) * float(np.sum(counts ** 2)) - n


def serial(bits, m: int = 16, alpha: float = ALPHA, strict: bool = True) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    if m < 2 or not _template_fits(n, m, 2, strict):
        return _not_applicable("serial")
    p0, p1, p2 = _psi2(eps, m), _psi2(eps, m - 1), _psi2(eps, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    ps = [igamc(2 ** (m - 2), d1 / 2.0), igamc(2 ** (m - 3), d2 / 2.0)]
    return _result("serial", ps, alpha, d1)


def _phi(eps: np.ndarray, m: int) -> float:
    n = eps.size
    c = _pattern_counts(eps, m) / n
    c = c[c > 0]
    return float(np.sum(c * np.log(c)))


def approximate_entropy(bits, m: int = 10, alpha: float = ALPHA,
                        strict: bool = True) -> TestResult:
    eps = _bits(bits)
    n = eps.size
    if m < 1 or not _template_fits(n, m, 5, strict):
        return _not_applicable("approximate_entropy")
    apen = _phi(eps, m) - _phi(eps, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return _result("approximate_entropy", [igamc(2 ** (m - 1), chi2 / 2.0)], alpha, chi2)


TEST_NAMES = ("monobit", "block_frequency", "runs", "longest_run", "cumulative_sums", "serial",
              "approximate_entropy")


@dataclass
class StsConfig:
    alpha: float = ALPHA
    sequence_bits: int = 1 << 20
    n_sequences: int = 1024
    block_m: int = 128
    serial_m: int = 16
    apen_m: int = 10

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.sequence_bits < 100:
            raise ValueError("sequence_bits must be >= 100")
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")

    def for_length(self, n: int) -> "StsConfig":
        """Copy with template lengths shrunk to the largest valid values for ``n`` bits."""
        lg = int(math.floor(math.log2(n)))
        return StsConfig(self.alpha, n, self.n_sequences, min(self.block_m, n),
                         max(2, min(self.serial_m, lg - 3)), max(1, min(self.apen_m, lg - 6)))

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "StsConfig":
        unknown = set(d) - set(cls().__dict__)
        if unknown:
            raise ValueError(f"unknown sts keys: {sorted(unknown)}")
        return cls(**d)


def run_tests(bits, cfg: StsConfig = StsConfig()) -> list:
    a = cfg.alpha
    eps = _bits(bits)
    return [
        monobit(eps, a),
        block_frequency(eps, min(cfg.block_m, eps.size), a),
        runs(eps, a),
        longest_run(eps, a),
        cumulative_sums(eps, "both", a),
        serial(eps, cfg.serial_m, a),
        approximate_entropy(eps, cfg.apen_m, a),
    ]


def proportion_bound(alpha: float, k: int) -> float:
    """Lower edge of the acceptable pass proportion for ``k`` sequences."""
    return (1 - alpha) - 3 * math.sqrt(alpha * (1 - alpha) / k)


@dataclass
class SuiteReport:
    proportions: dict
    bound: float
    n_sequences: int
    alpha: float
    results: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(p >= self.bound for p in self.proportions.values())

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_sequences": self.n_sequences,
            "bound": self.bound,
            "proportions": dict(self.proportions),
            "verdict": "pass" if self.passed else "fail",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sequence", "test", "p_value", "pass"])
        for i, seq in enumerate(self.results):
            for r in seq:
                w.writerow([i, r.test_name, repr(r.p_value), "true" if r.passed else "false"])
        return buf.getvalue()


def _proportion(results: list, alpha: float, k: int) -> float:
    # each p-value of a multi-p-value test is scored on its own, as in the
    # reference suite's report, and the test keeps its weakest proportion
    if not all(r.applicable for r in results):
        return sum(r.passed for r in results) / k
    width = len(results[0].p_values)
    return min(sum(r.p_values[j] >= alpha for r in results) / k for j in range(width))


def run_suite(streams, cfg: StsConfig = StsConfig(), workers: int = 1) -> SuiteReport:
    streams = [np.asarray(s) for s in streams]
    if not streams:
        raise ValueError("no sequences to test")
    lengths = {s.size for s in streams}
    if len(lengths) != 1:
        raise ValueError(f"sequences have unequal lengths: {sorted(lengths)}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda s: run_tests(s, cfg), streams))
    else:
        results = [run_tests(s, cfg) for s in streams]
    k = len(streams)
    props = {name: _proportion([seq[i] for seq in results], cfg.alpha, k)
             for i, name in enumerate(TEST_NAMES)}
    return SuiteReport(props, proportion_bound(cfg.alpha, k), k, cfg.alpha, results)
