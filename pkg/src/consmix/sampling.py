"""Topology sampling: i.i.d. draws of the random link configuration.

Correlated Bernoulli links are generated by a conditional linear family:
links are visited in the canonical order and each one is drawn with a
conditional probability that is affine in the already-drawn bits, with
regression coefficients fitted so the sequence reproduces the target mean
and covariance exactly.  Broadcast-gossip realizations pick one uniformly
random broadcasting node per step.

Determinism contract: draws consume a counter-based stream in (sample,
link) order, so sample i always sees the same uniforms for a given master
seed, independent of batching.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graphs import LinkIndex, Supergraph
from .linkmodel import LinkModel, validate_moments

FEASIBILITY_TOLERANCE = 1e-9
_CHUNK_ROWS = 4096
_MAGIC = b"CMIXSAMP"


class ClfInfeasibleError(RuntimeError):
    """The conditional probabilities leave [0, 1] for some reachable pattern."""


def master_rng(seed) -> np.random.Generator:
    """Counter-based generator every sampler in the package derives from.

    ``seed`` is an integer or a tuple of integers naming a substream.
    """
    if isinstance(seed, tuple):
        entropy = tuple(int(s) for s in seed)
    else:
        entropy = int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True, eq=False)
class ClfCoefficients:
    """Sequential regression coefficients of the conditional linear family.

    Row l of ``b`` regresses link l on links 0..l-1; ``lam_lo``/``lam_hi``
    bound the reachable conditional probabilities over the bit hypercube.
    """

    pi: np.ndarray
    b: np.ndarray
    lam_lo: np.ndarray
    lam_hi: np.ndarray

    @property
    def m(self) -> int:
        return self.pi.shape[0]

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` correlated bit rows, consuming count * m uniforms."""
        m = self.m
        out = np.empty((count, m), dtype=np.uint8)
        pos = 0
        while pos < count:
            k = min(_CHUNK_ROWS, count - pos)
            u = rng.random((k, m))
            block = out[pos : pos + k]
            centered = np.empty((k, m))
            for l in range(m):
                if l == 0:
                    lam = np.full(k, self.pi[0])
                else:
                    lam = self.pi[l] + centered[:, :l] @ self.b[l, :l]
                np.clip(lam, 0.0, 1.0, out=lam)
                bits = u[:, l] < lam
                block[:, l] = bits
                centered[:, l] = bits - self.pi[l]
            pos += k
        return out


def fit_clf(model: LinkModel) -> ClfCoefficients:
    """Fit the sequential sampler to (pi, r_q).

    Each regression solves the leading covariance block against the
    cross-covariance column; singular blocks fall back to the least-norm
    solution.  Raises ClfInfeasibleError naming the first link whose
    conditional probability can leave [0, 1] at a hypercube corner.
    """
    report = validate_moments(model)
    if not report.ok:
        raise ValueError("model fails moment validation: " + "; ".join(report.violations))
    pi = model.pi.astype(float)
    r_q = model.r_q
    m = model.m
    b = np.zeros((m, m))
    if m > 1:
        lead = r_q[: m - 1, : m - 1]
        try:
            chol = scipy.linalg.cholesky(lead, lower=True)
            for l in range(1, m):
                y = scipy.linalg.solve_triangular(chol[:l, :l], r_q[:l, l], lower=True)
                b[l, :l] = scipy.linalg.solve_triangular(
                    chol[:l, :l].T, y, lower=False
                )
        except scipy.linalg.LinAlgError:
            for l in range(1, m):
                b[l, :l] = np.linalg.lstsq(r_q[:l, :l], r_q[:l, l], rcond=None)[0]

    up = np.maximum(b * (1.0 - pi)[None, :], -b * pi[None, :])
    dn = np.minimum(b * (1.0 - pi)[None, :], -b * pi[None, :])
    lam_hi = pi + up.sum(axis=1)
    lam_lo = pi + dn.sum(axis=1)
    offending = np.flatnonzero(
        (lam_hi > 1.0 + FEASIBILITY_TOLERANCE) | (lam_lo < -FEASIBILITY_TOLERANCE)
    )
    if offending.size:
        l = int(offending[0])
        raise ClfInfeasibleError(
            f"link {l} {model.idx.pairs[l]}: conditional probability range "
            f"[{lam_lo[l]:.4g}, {lam_hi[l]:.4g}] leaves [0, 1]"
        )
    return ClfCoefficients(pi=pi, b=b, lam_lo=lam_lo, lam_hi=lam_hi)


def clf_feasible(model: LinkModel) -> bool:
    """Whether the model's moments can be realized by the sequential sampler."""
    if not validate_moments(model).ok:
        return False
    try:
        fit_clf(model)
    except ClfInfeasibleError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class TopologySample:
    """One topology realization: link bits, or the broadcasting node."""

    mode: str
    n: int
    idx: LinkIndex | None = None
    bits: np.ndarray | None = None
    graph: Supergraph | None = None
    broadcaster: int | None = None

    def adjacency(self) -> np.ndarray:
        """Realized adjacency: symmetric 0/1, or the directed broadcast pattern."""
        a = np.zeros((self.n, self.n))
        if self.mode == "symmetric":
            ei, ej = self.idx.endpoint_arrays()
            a[ei, ej] = self.bits
            a[ej, ei] = self.bits
        else:
            b = self.broadcaster
            for i, j in self.graph.edges:
                if j == b:
                    a[i, b] = 1.0
                elif i == b:
                    a[j, b] = 1.0
        return a


@dataclass(eq=False)
class TopologySamples:
    """Sequence of i.i.d. topology samples backed by dense arrays."""

    mode: str
    n: int
    seed: int
    idx: LinkIndex | None = None
    bits_matrix: np.ndarray | None = None
    graph: Supergraph | None = None
    broadcasters: np.ndarray | None = None

    def __len__(self) -> int:
        if self.mode == "symmetric":
            return self.bits_matrix.shape[0]
        return self.broadcasters.shape[0]

    def __getitem__(self, k: int) -> TopologySample:
        if self.mode == "symmetric":
            return TopologySample(
                mode="symmetric", n=self.n, idx=self.idx, bits=self.bits_matrix[k]
            )
        return TopologySample(
            mode="gossip", n=self.n, graph=self.graph, broadcaster=int(self.broadcasters[k])
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]


def sample_topologies(
    model: LinkModel, coeffs: ClfCoefficients, count: int, seed: int
) -> TopologySamples:
    """Draw temporally independent correlated link realizations."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = master_rng(seed)
    bits = coeffs.draw(rng, count)
    return TopologySamples(
        mode="symmetric", n=model.n, seed=int(seed), idx=model.idx, bits_matrix=bits
    )


def sample_gossip(g: Supergraph, count: int, seed: int) -> TopologySamples:
    """Uniformly random broadcasting node per sample."""
    rng = master_rng(seed)
    bcast = rng.integers(0, g.n, size=count, dtype=np.int64)
    return TopologySamples(
        mode="gossip", n=g.n, seed=int(seed), graph=g, broadcasters=bcast
    )


def empirical_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample mean and covariance of the link bits."""
    bits = getattr(samples, "bits_matrix", None)
    if bits is None:
        bits = np.stack([s.bits for s in samples])
    if bits.shape[0] < 2:
        raise ValueError("need at least two samples for a covariance estimate")
    bits = bits.astype(float)
    pi_hat = bits.mean(axis=0)
    r_q_hat = np.atleast_2d(np.cov(bits.T, ddof=1))
    return pi_hat, r_q_hat


def save_samples(path, samples: TopologySamples) -> None:
    """Binary dump: header (m, count, seed), then bit rows packed per sample."""
    if samples.mode != "symmetric":
        raise ValueError("binary dump is defined for symmetric link samples")
    bits = samples.bits_matrix
    count, m = bits.shape
    header = _MAGIC + struct.pack("<IQq", m, count, samples.seed)
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(packed.tobytes())


def load_samples(path, idx: LinkIndex, n: int) -> TopologySamples:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a sample dump file")
        m, count, seed = struct.unpack("<IQq", fh.read(struct.calcsize("<IQq")))
        if m != idx.m:
            raise ValueError(f"dump holds {m} links, index has {idx.m}")
        row_bytes = (m + 7) // 8
        raw = np.frombuffer(fh.read(count * row_bytes), dtype=np.uint8)
    packed = raw.reshape(count, row_bytes)
    bits = np.unpackbits(packed, axis=1)[:, :m]
    return TopologySamples(
        mode="symmetric", n=n, seed=seed, idx=idx, bits_matrix=bits.astype(np.uint8)
    )
